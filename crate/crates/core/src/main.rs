use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use seglab::config::{parse_config, RunConfig, CONFIG_HELP};
use seglab::diagnostics::{decay_probe, default_radii, overlap_measures, AcfOptions};
use seglab::error::{Result, SegError};
use seglab::io::{fmt_f64, load_checkpoint};
use seglab::run::{
    acf_csv, acf_summary, centers, csv_text, exit_code, holder_rows, pohozaev_csvs, pohozaev_rows, resolve_nu, run,
    write_report, ArtifactDir, RunMode, EXIT_CONFIG, EXIT_OK,
};
use seglab::sphere::{search_alpha, SearchOptions};

#[derive(Parser)]
#[command(name = "seglab", version, about = "Partially segregated three-component minimizers and their diagnostics")]
#[command(after_help = CONFIG_HELP)]
struct Cli {
    /// Configuration file (defaults apply when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `[output] dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the compute kernels (0 = all cores).
    #[arg(long, global = true, env = "SEGLAB_WORKERS")]
    workers: Option<usize>,
    /// Checkpoint to start from (solve, sweep) or to inspect (diag).
    #[arg(long, global = true)]
    state: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the continuation and write checkpoints.
    Solve,
    /// Run the continuation with diagnostics after every stage.
    Sweep,
    /// Evaluate one diagnostic on a checkpoint.
    Diag {
        #[arg(value_enum)]
        kind: DiagKind,
    },
    /// Search for the optimal circle partition value.
    Sphere(SphereArgs),
    /// Rebuild the plot-data files of a finished run from its summary.
    Report,
}

#[derive(Clone, Copy, ValueEnum)]
enum DiagKind {
    Acf,
    Pohozaev,
    Holder,
    Overlap,
    Decay,
}

#[derive(Args)]
struct SphereArgs {
    /// Number of components.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Arcs allowed per component.
    #[arg(long, default_value_t = 1)]
    max_arcs: usize,
    /// Cells of the coarse angular lattice.
    #[arg(long, default_value_t = 36)]
    lattice: usize,
    /// Coordinate-descent passes after the lattice search.
    #[arg(long, default_value_t = 20)]
    refine: usize,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => parse_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn write_json<T: Serialize>(out: &ArtifactDir, rel: &str, v: &T) -> Result<()> {
    out.write(rel, &(serde_json::to_string_pretty(v)? + "\n"))
}

fn diag(cli: &Cli, kind: DiagKind) -> Result<i32> {
    let cfg = load_config(cli)?;
    let path = cli
        .state
        .as_deref()
        .ok_or_else(|| SegError::InvalidArgument("diag needs --state <checkpoint>".into()))?;
    let s = load_checkpoint(path)?;
    s.check_invariants()?;
    let out = ArtifactDir::new(&cfg.output_dir)?;
    let d = &cfg.diagnostics;
    match kind {
        DiagKind::Acf => {
            let nu = resolve_nu(&cfg)?;
            let opts = AcfOptions {
                mono_tol: d.mono_tol,
                seg_tol: d.acf_seg_tol,
                dim: 2,
            };
            let mut reports = Vec::new();
            for (m, c) in centers(&cfg, s.grid()).into_iter().enumerate() {
                let rep = seglab::diagnostics::acf_scan(&s.u, c, &default_radii(s.grid(), c)?, nu, &opts)?;
                let rel = format!("acf_c{m}.csv");
                out.write(&rel, &acf_csv(&rep))?;
                println!(
                    "center ({}, {}): {} violations, max drop {}, hypotheses met: {}",
                    fmt_f64(c.0),
                    fmt_f64(c.1),
                    rep.violations.len(),
                    fmt_f64(rep.max_drop),
                    rep.hypotheses_met
                );
                reports.push(acf_summary(&rep, rel));
            }
            write_json(&out, "acf.json", &reports)?;
        }
        DiagKind::Pohozaev => {
            let rows = pohozaev_rows(&s, centers(&cfg, s.grid())[0], &d.pohozaev_radii)?;
            let (fin, lim) = pohozaev_csvs(&rows);
            out.write("pohozaev.csv", &fin)?;
            out.write("pohozaev_limit.csv", &lim)?;
            for r in &rows {
                println!(
                    "r = {}: finite-beta {}, limit {}",
                    fmt_f64(r.r),
                    fmt_f64(r.finite_beta),
                    fmt_f64(r.limit)
                );
            }
            write_json(&out, "pohozaev.json", &rows)?;
        }
        DiagKind::Holder => {
            let rows = holder_rows(&s.u, &d.holder_alphas, cfg.seed)?;
            out.write(
                "holder.csv",
                &csv_text(
                    "component,alpha,value,stride",
                    rows.iter().map(|h| {
                        vec![
                            h.component.to_string(),
                            fmt_f64(h.alpha),
                            fmt_f64(h.value),
                            h.stride.to_string(),
                        ]
                    }),
                ),
            )?;
            for h in &rows {
                println!("u{} alpha {}: {}", h.component, fmt_f64(h.alpha), fmt_f64(h.value));
            }
            write_json(&out, "holder.json", &rows)?;
        }
        DiagKind::Overlap => {
            let norm = s.trace.sup_norm();
            let reps = d
                .eps_factors
                .iter()
                .map(|f| overlap_measures(&s, f * norm))
                .collect::<Result<Vec<_>>>()?;
            out.write(
                "overlap.csv",
                &csv_text(
                    "eps,pair12,pair13,pair23,triple,nodal",
                    reps.iter().map(|o| {
                        [o.eps, o.pair12, o.pair13, o.pair23, o.triple, o.nodal]
                            .iter()
                            .map(|v| fmt_f64(*v))
                            .collect()
                    }),
                ),
            )?;
            for o in &reps {
                println!("eps {}: triple {}", fmt_f64(o.eps), fmt_f64(o.triple));
            }
            write_json(&out, "overlap.json", &reps)?;
        }
        DiagKind::Decay => {
            let center = d
                .decay_center
                .ok_or_else(|| SegError::InvalidArgument("decay needs `decay_center` in [diagnostics]".into()))?;
            let rep = decay_probe(&s.u, s.beta, d.decay_component - 1, center, &d.decay_radii, d.fit_tol)?;
            if rep.applicable {
                println!("u{}: slope {}, pass: {}", rep.component, fmt_f64(rep.slope), rep.pass);
            } else {
                println!("u{}: probe inapplicable (M = 0 on the ball)", rep.component);
            }
            write_json(&out, "decay.json", &rep)?;
        }
    }
    Ok(EXIT_OK)
}

fn sphere(cli: &Cli, a: &SphereArgs) -> Result<i32> {
    let r = search_alpha(
        a.k,
        SearchOptions {
            lattice: a.lattice,
            refine_iterations: a.refine,
            max_arcs: a.max_arcs,
        },
    )?;
    println!("alpha_{} ~ {} ({})", a.k, fmt_f64(r.best_value), seglab::sphere::describe(&r.best));
    if let Some(dir) = &cli.out {
        let out = ArtifactDir::new(dir)?;
        write_json(&out, "sphere.json", &r)?;
        out.write(
            "sphere_trace.csv",
            &csv_text(
                "phase,value,config",
                r.trace
                    .iter()
                    .map(|t| vec![t.phase.to_string(), fmt_f64(t.value), format!("\"{}\"", t.config)]),
            ),
        )?;
    }
    Ok(EXIT_OK)
}

fn report(cli: &Cli) -> Result<i32> {
    let cfg = load_config(cli)?;
    let dir: &Path = &cfg.output_dir;
    let text = std::fs::read_to_string(dir.join("summary.json"))?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    write_report(&v, &ArtifactDir::new(dir)?)?;
    println!("plot data written to {}", dir.join("plots").display());
    Ok(v["exit_code"].as_i64().unwrap_or(0) as i32)
}

fn pipeline(cli: &Cli, mode: RunMode) -> Result<i32> {
    let cfg = load_config(cli)?;
    let warm = cli.state.as_deref().map(load_checkpoint).transpose()?;
    let out = ArtifactDir::new(&cfg.output_dir)?;
    let o = run(&cfg, mode, warm, &out)?;
    for s in &o.summary.stages {
        println!(
            "beta {:>10}  sweeps {:>4}  J {}  interaction {}  triple overlap {}",
            fmt_f64(s.beta),
            s.sweeps,
            fmt_f64(s.energy.total),
            fmt_f64(s.energy.interaction),
            fmt_f64(s.overlap.triple)
        );
    }
    if let Some(m) = &o.summary.message {
        eprintln!("seglab: {m}");
    }
    Ok(o.exit_code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { EXIT_OK as u8 });
        }
    };
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("seglab: cannot set up {n} workers: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    }
    let res = match &cli.cmd {
        Cmd::Solve => pipeline(&cli, RunMode::Solve),
        Cmd::Sweep => pipeline(&cli, RunMode::Sweep),
        Cmd::Diag { kind } => diag(&cli, *kind),
        Cmd::Sphere(a) => sphere(&cli, a),
        Cmd::Report => report(&cli),
    };
    match res {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("seglab: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

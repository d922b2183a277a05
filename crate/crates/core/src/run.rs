//! Pipeline orchestration and artifact emission.
//!
//! Artifact tree of a run:
//!
//! ```text
//! summary.json
//! continuation.csv             beta,interaction,pair12,pair13,pair23,triple,nodal
//! checkpoints/stage_NN.seg
//! acf/stage_NN_cM.csv          r,I1,I2,I3,Jnu,violation
//! pohozaev/stage_NN.csv        r,residual   (finite-β mode)
//! pohozaev/stage_NN_limit.csv  r,residual
//! plots/interaction.csv        beta,interaction
//! plots/jnu.csv                stage,beta,center,r,Jnu
//! plots/holder.csv             beta,component,alpha,value
//! ```
//!
//! Nothing that depends on the worker count or the output location is
//! written, so identical configurations give identical trees.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::Value;

use crate::boundary::{make_preset, validate_partial_segregation, BoundaryTriplet, SegregationCertificate};
use crate::config::{DomainPreset, Init, RunConfig};
use crate::diagnostics::{
    acf_scan, decay_probe, default_radii, holder_seminorm, overlap_measures, pohozaev_residual, AcfOptions,
    AcfReport, DecayReport, OverlapReport, PohozaevMode,
};
use crate::energy::{
    continuation, segregated_competitor, ContinuationSchedule, EnergyBreakdown, StageResult, TripletState,
    ENERGY_SLACK, MAX_PRINCIPLE_TOL, NEGATIVITY_TOL,
};
use crate::error::{Result, SegError};
use crate::grid::{Field, Grid};
use crate::io::{checkpoint_text, fmt_f64};
use crate::sphere::{search_alpha, SearchOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_UNCONVERGED: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;

pub const SUMMARY_SCHEMA: &str = "seglab-summary-v1";

pub fn exit_code(e: &SegError) -> i32 {
    match e {
        SegError::NonConvergence { .. } => EXIT_UNCONVERGED,
        SegError::Invariant(_) | SegError::NonFinite { .. } => EXIT_INVARIANT,
        _ => EXIT_CONFIG,
    }
}

fn status_name(code: i32) -> &'static str {
    match code {
        EXIT_OK => "ok",
        EXIT_UNCONVERGED => "unconverged",
        EXIT_INVARIANT => "invariant_violation",
        _ => "error",
    }
}

/// Writes files below one root, creating directories as needed.
pub struct ArtifactDir {
    root: PathBuf,
}

impl ArtifactDir {
    pub fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(ArtifactDir { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&self, rel: &str, contents: &str) -> Result<()> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(p, contents)?;
        Ok(())
    }
}

pub fn csv_text(header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

pub fn build_grid(cfg: &RunConfig) -> Result<Arc<Grid>> {
    Ok(Arc::new(match cfg.domain.preset {
        DomainPreset::Square => Grid::unit_square(cfg.domain.n)?,
        DomainPreset::Disk => Grid::disk(cfg.domain.n, cfg.domain.radius)?,
    }))
}

pub fn build_trace(cfg: &RunConfig) -> Result<BoundaryTriplet> {
    make_preset(&cfg.boundary.preset, &cfg.boundary.preset_params()?, build_grid(cfg)?)
}

pub fn initial_state(cfg: &RunConfig, trace: BoundaryTriplet) -> Result<TripletState> {
    let beta = cfg.solver.betas[0];
    match cfg.solver.init {
        Init::Harmonic => {
            let mut s = TripletState::harmonic(trace, 0.0, cfg.solver.opts.lin_tol, cfg.solver.opts.max_lin_iter)?;
            s.beta = beta;
            Ok(s)
        }
        Init::Zero => TripletState::from_trace(trace, beta),
    }
}

/// `ν` for the scans: configured, or the optimal three-arc value.
pub fn resolve_nu(cfg: &RunConfig) -> Result<f64> {
    match cfg.diagnostics.nu {
        Some(v) => Ok(v),
        None => Ok(search_alpha(3, SearchOptions::default())?.best_value),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AcfSummary {
    pub center: (f64, f64),
    pub nu: f64,
    pub violations: usize,
    pub max_drop: f64,
    pub hypotheses_met: bool,
    pub max_triple_product: f64,
    pub r_bar: Option<f64>,
    pub radii: Vec<f64>,
    pub j: Vec<f64>,
    pub csv: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct PohozaevRow {
    pub r: f64,
    pub finite_beta: f64,
    pub limit: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct HolderRow {
    pub component: usize,
    pub alpha: f64,
    pub value: f64,
    pub stride: usize,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct StageDiagnostics {
    pub overlap_sweep: Vec<OverlapReport>,
    pub acf: Vec<AcfSummary>,
    pub pohozaev: Vec<PohozaevRow>,
    pub holder: Vec<HolderRow>,
    pub decay: Option<DecayReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StageSummary {
    pub index: usize,
    pub beta: f64,
    pub converged: bool,
    pub sweeps: usize,
    pub energy: EnergyBreakdown,
    pub residual: [f64; 3],
    pub overlap: OverlapReport,
    pub competitor: Option<crate::energy::CompetitorBound>,
    pub worst_energy_rise: f64,
    pub min_value: f64,
    pub max_excess: f64,
    pub checkpoint: String,
    pub diagnostics: StageDiagnostics,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub schema: &'static str,
    pub status: &'static str,
    pub exit_code: i32,
    pub message: Option<String>,
    pub config: RunConfig,
    pub nu: Option<f64>,
    pub segregation: SegregationCertificate,
    pub beta: Vec<f64>,
    pub interaction: Vec<f64>,
    pub total: Vec<f64>,
    pub triple: Vec<f64>,
    pub stages: Vec<StageSummary>,
}

pub fn acf_csv(rep: &AcfReport) -> String {
    let flagged: Vec<f64> = rep.violations.iter().map(|v| v.r_to).collect();
    csv_text(
        "r,I1,I2,I3,Jnu,violation",
        rep.radii.iter().zip(&rep.integrals).zip(&rep.j).map(|((r, i), j)| {
            vec![
                fmt_f64(*r),
                fmt_f64(i[0]),
                fmt_f64(i[1]),
                fmt_f64(i[2]),
                fmt_f64(*j),
                (flagged.contains(r) as u8).to_string(),
            ]
        }),
    )
}

pub fn acf_summary(rep: &AcfReport, csv: String) -> AcfSummary {
    AcfSummary {
        center: rep.center,
        nu: rep.nu,
        violations: rep.violations.len(),
        max_drop: rep.max_drop,
        hypotheses_met: rep.hypotheses_met,
        max_triple_product: rep.max_triple_product,
        r_bar: rep.r_bar,
        radii: rep.radii.clone(),
        j: rep.j.clone(),
        csv,
    }
}

pub fn centers(cfg: &RunConfig, grid: &Grid) -> Vec<(f64, f64)> {
    if cfg.diagnostics.centers.is_empty() {
        vec![grid.center()]
    } else {
        cfg.diagnostics.centers.clone()
    }
}

pub fn holder_rows(u: &[Field; 3], alphas: &[f64], seed: u64) -> Result<Vec<HolderRow>> {
    let mut rows = Vec::new();
    for (c, f) in u.iter().enumerate() {
        for &alpha in alphas {
            let h = holder_seminorm(f, alpha, |_| true, seed)?;
            rows.push(HolderRow {
                component: c + 1,
                alpha,
                value: h.value,
                stride: h.stride,
            });
        }
    }
    Ok(rows)
}

pub fn pohozaev_rows(s: &TripletState, center: (f64, f64), radii: &[f64]) -> Result<Vec<PohozaevRow>> {
    let dist = s.grid().distance_to_boundary(center.0, center.1);
    radii
        .iter()
        .filter(|&&r| r < dist)
        .map(|&r| {
            Ok(PohozaevRow {
                r,
                finite_beta: pohozaev_residual(&s.u, s.beta, center, r, PohozaevMode::FiniteBeta)?.residual,
                limit: pohozaev_residual(&s.u, s.beta, center, r, PohozaevMode::Limit)?.residual,
            })
        })
        .collect()
}

pub fn pohozaev_csvs(rows: &[PohozaevRow]) -> (String, String) {
    (
        csv_text("r,residual", rows.iter().map(|p| vec![fmt_f64(p.r), fmt_f64(p.finite_beta)])),
        csv_text("r,residual", rows.iter().map(|p| vec![fmt_f64(p.r), fmt_f64(p.limit)])),
    )
}

/// Diagnostics selected in the configuration, evaluated on one state.
pub fn stage_diagnostics(
    cfg: &RunConfig,
    s: &TripletState,
    nu: Option<f64>,
    tag: &str,
    out: &ArtifactDir,
) -> Result<StageDiagnostics> {
    let d = &cfg.diagnostics;
    let mut res = StageDiagnostics::default();
    let norm = s.trace.sup_norm();
    if d.overlap {
        for &f in &d.eps_factors {
            res.overlap_sweep.push(overlap_measures(s, f * norm)?);
        }
    }
    let cs = centers(cfg, s.grid());
    if d.acf {
        let opts = AcfOptions {
            mono_tol: d.mono_tol,
            seg_tol: d.acf_seg_tol,
            dim: 2,
        };
        let nu = nu.expect("nu is resolved when the scan is enabled");
        for (m, &c) in cs.iter().enumerate() {
            let radii = default_radii(s.grid(), c)?;
            let rep = acf_scan(&s.u, c, &radii, nu, &opts)?;
            let rel = format!("acf/{tag}_c{m}.csv");
            out.write(&rel, &acf_csv(&rep))?;
            res.acf.push(acf_summary(&rep, rel));
        }
    }
    if d.pohozaev {
        res.pohozaev = pohozaev_rows(s, cs[0], &d.pohozaev_radii)?;
        let (fin, lim) = pohozaev_csvs(&res.pohozaev);
        out.write(&format!("pohozaev/{tag}.csv"), &fin)?;
        out.write(&format!("pohozaev/{tag}_limit.csv"), &lim)?;
    }
    if d.holder {
        res.holder = holder_rows(&s.u, &d.holder_alphas, cfg.seed)?;
    }
    if d.decay {
        if let Some(c) = d.decay_center {
            res.decay = Some(decay_probe(&s.u, s.beta, d.decay_component - 1, c, &d.decay_radii, d.fit_tol)?);
        }
    }
    Ok(res)
}

fn stage_invariants(st: &StageResult, s: &TripletState) -> Result<()> {
    s.check_invariants()?;
    let norm = s.trace.sup_norm();
    if st.worst_energy_rise > ENERGY_SLACK {
        return Err(SegError::Invariant(format!(
            "energy rose by {:e} (relative) at beta = {}",
            st.worst_energy_rise, st.beta
        )));
    }
    if st.min_value < -NEGATIVITY_TOL * norm {
        return Err(SegError::Invariant(format!("negative value {:e} at beta = {}", st.min_value, st.beta)));
    }
    if st.max_excess > MAX_PRINCIPLE_TOL {
        return Err(SegError::Invariant(format!(
            "maximum principle violated by {:e} at beta = {}",
            st.max_excess, st.beta
        )));
    }
    if let Some(c) = st.competitor.as_ref().filter(|_| st.converged) {
        if !c.holds {
            return Err(SegError::Invariant(format!(
                "minimizer energy {} exceeds the segregated competitor's {} at beta = {}",
                c.minimizer_energy, c.competitor_energy, st.beta
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunMode {
    /// Continuation and checkpoints only.
    Solve,
    /// Continuation with the selected diagnostics after every stage.
    Sweep,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub summary: Summary,
}

/// Runs the configured continuation, writing the artifact tree to `out`.
/// With `warm` the schedule starts from that state (its grid and trace
/// replace the configured domain and boundary).
pub fn run(cfg: &RunConfig, mode: RunMode, warm: Option<TripletState>, out: &ArtifactDir) -> Result<RunOutcome> {
    let schedule = ContinuationSchedule::new(cfg.solver.betas.clone(), cfg.solver.opts)?;
    let initial = match warm {
        Some(s) => {
            s.check_invariants()?;
            s
        }
        None => {
            let trace = build_trace(cfg)?;
            initial_state(cfg, trace)?
        }
    };
    let seg_tol = cfg.boundary.seg_tol.unwrap_or_else(|| initial.trace.default_seg_tol());
    let segregation = validate_partial_segregation(&initial.trace, seg_tol);
    let nu = if mode == RunMode::Sweep && cfg.diagnostics.acf {
        Some(resolve_nu(cfg)?)
    } else {
        None
    };
    let competitor = cfg.diagnostics.competitor.then(|| segregated_competitor(&initial.trace));

    let mut stages: Vec<StageSummary> = Vec::new();
    let result = if !segregation.pass {
        Err(SegError::InvalidArgument(format!(
            "boundary data violate partial segregation: product {:e} > {seg_tol:e}",
            segregation.max_product
        )))
    } else {
        continuation(&schedule, initial, competitor.as_ref(), |st, s| {
            let idx = stages.len();
            let tag = format!("stage_{idx:02}");
            let checkpoint = format!("checkpoints/{tag}.seg");
            out.write(&checkpoint, &checkpoint_text(s)?)?;
            let diagnostics = if mode == RunMode::Sweep && st.converged {
                stage_diagnostics(cfg, s, nu, &tag, out)?
            } else {
                StageDiagnostics::default()
            };
            stages.push(StageSummary {
                index: idx,
                beta: st.beta,
                converged: st.converged,
                sweeps: st.sweeps,
                energy: st.energy,
                residual: st.residual,
                overlap: st.overlap.clone(),
                competitor: st.competitor.clone(),
                worst_energy_rise: st.worst_energy_rise,
                min_value: st.min_value,
                max_excess: st.max_excess,
                checkpoint,
                diagnostics,
            });
            stage_invariants(st, s)
        })
        .map(|(rep, _)| rep)
    };
    let (code, message) = match &result {
        Ok(rep) if rep.truncated => {
            let last = rep.stages.last().expect("truncated run has a stage");
            (
                EXIT_UNCONVERGED,
                Some(format!("stage at beta = {} did not converge in {} sweeps", last.beta, last.sweeps)),
            )
        }
        Ok(_) => (EXIT_OK, None),
        Err(e) => (exit_code(e), Some(e.to_string())),
    };
    let summary = Summary {
        schema: SUMMARY_SCHEMA,
        status: status_name(code),
        exit_code: code,
        message,
        config: cfg.clone(),
        nu,
        segregation,
        beta: stages.iter().map(|s| s.beta).collect(),
        interaction: stages.iter().map(|s| s.energy.interaction).collect(),
        total: stages.iter().map(|s| s.energy.total).collect(),
        triple: stages.iter().map(|s| s.overlap.triple).collect(),
        stages,
    };
    out.write(
        "continuation.csv",
        &csv_text(
            "beta,interaction,pair12,pair13,pair23,triple,nodal",
            summary.stages.iter().map(|s| {
                let o = &s.overlap;
                vec![
                    fmt_f64(s.beta),
                    fmt_f64(s.energy.interaction),
                    fmt_f64(o.pair12),
                    fmt_f64(o.pair13),
                    fmt_f64(o.pair23),
                    fmt_f64(o.triple),
                    fmt_f64(o.nodal),
                ]
            }),
        ),
    )?;
    let value = serde_json::to_value(&summary)?;
    out.write("summary.json", &(serde_json::to_string_pretty(&value)? + "\n"))?;
    write_report(&value, out)?;
    Ok(RunOutcome { exit_code: code, summary })
}

fn num(v: &Value) -> String {
    v.as_f64().map(fmt_f64).unwrap_or_else(|| "nan".into())
}

/// Plot-data files derived from a summary document.
pub fn write_report(summary: &Value, out: &ArtifactDir) -> Result<()> {
    let bad = |what: &str| SegError::Format(format!("summary lacks `{what}`"));
    if summary.get("schema").and_then(Value::as_str) != Some(SUMMARY_SCHEMA) {
        return Err(bad("schema"));
    }
    let stages = summary.get("stages").and_then(Value::as_array).ok_or_else(|| bad("stages"))?;
    let mut inter = String::from("beta,interaction\n");
    let mut jnu = String::from("stage,beta,center,r,Jnu\n");
    let mut holder = String::from("beta,component,alpha,value\n");
    for st in stages {
        let beta = num(&st["beta"]);
        let _ = writeln!(inter, "{beta},{}", num(&st["energy"]["interaction"]));
        let idx = st["index"].as_u64().ok_or_else(|| bad("index"))?;
        if let Some(acf) = st["diagnostics"]["acf"].as_array() {
            for (m, a) in acf.iter().enumerate() {
                let radii = a["radii"].as_array().ok_or_else(|| bad("radii"))?;
                let j = a["j"].as_array().ok_or_else(|| bad("j"))?;
                for (r, v) in radii.iter().zip(j) {
                    let _ = writeln!(jnu, "{idx},{beta},{m},{},{}", num(r), num(v));
                }
            }
        }
        if let Some(rows) = st["diagnostics"]["holder"].as_array() {
            for h in rows {
                let _ = writeln!(
                    holder,
                    "{beta},{},{},{}",
                    h["component"],
                    num(&h["alpha"]),
                    num(&h["value"])
                );
            }
        }
    }
    out.write("plots/interaction.csv", &inter)?;
    out.write("plots/jnu.csv", &jnu)?;
    out.write("plots/holder.csv", &holder)?;
    Ok(())
}

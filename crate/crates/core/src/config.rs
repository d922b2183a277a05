//! Run configuration.
//!
//! Line-based `key = value` pairs grouped by `[section]` headers; a header
//! line may also carry `key=value` tokens (`[domain] preset=square n=65`).
//! `#` starts a comment. Unknown sections and keys are rejected, and every
//! error carries the offending line number.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::boundary::{read_table, PresetParams, PRESET_NAMES};
use crate::energy::MinimizeOptions;
use crate::error::{Result, SegError};
use crate::grid::DISK_RADIUS;

/// Key reference printed by `--help`.
pub const CONFIG_HELP: &str = "\
Config file keys (defaults in parentheses):
  [domain]       preset (disk) = square | disk; n (129); radius (0.45)
  [boundary]     preset (symmetric_sine) = symmetric_sine | halfcap | two_phase | custom;
                 c (1); a (1); b (1); m (0.5); table (path, custom only); seg_tol (preset default)
  [solver]       beta_schedule (1,10,100,1000,10000,100000,1000000); sweep_tol (1e-12);
                 max_sweeps (500); lin_tol (1e-10); max_lin_iter (20000);
                 init (harmonic) = harmonic | zero
  [diagnostics]  acf (true); pohozaev (true); holder (true); overlap (true); decay (false);
                 competitor (true); centers (domain center, `x:y;x:y`); nu (auto = sphere search, k=3);
                 eps_factors (0.1,0.01,0.001); mono_tol (1e-3); acf_seg_tol (inf);
                 pohozaev_radii (0.1,0.2,0.3); holder_alphas (0.5,0.75,0.9);
                 decay_center (x:y); decay_component (3); decay_radii (comma list); fit_tol (0.1)
  [output]       dir (out)
  [run]          seed (0)";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainPreset {
    Square,
    Disk,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Harmonic,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DomainConfig {
    pub preset: DomainPreset,
    pub n: usize,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundaryConfig {
    pub preset: String,
    pub c: f64,
    pub a: f64,
    pub b: f64,
    pub m: f64,
    pub table: Option<PathBuf>,
    pub seg_tol: Option<f64>,
}

impl BoundaryConfig {
    /// Preset parameters, with the custom table read from disk.
    pub fn preset_params(&self) -> Result<PresetParams> {
        Ok(PresetParams {
            c: self.c,
            a: self.a,
            b: self.b,
            m: self.m,
            table: self.table.as_deref().map(read_table).transpose()?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverConfig {
    pub betas: Vec<f64>,
    pub opts: MinimizeOptions,
    pub init: Init,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticsConfig {
    pub acf: bool,
    pub pohozaev: bool,
    pub holder: bool,
    pub overlap: bool,
    pub decay: bool,
    pub competitor: bool,
    /// Empty means the domain center.
    pub centers: Vec<(f64, f64)>,
    /// `None` means the sphere-partition search value for three components.
    pub nu: Option<f64>,
    pub eps_factors: Vec<f64>,
    pub mono_tol: f64,
    pub acf_seg_tol: f64,
    pub pohozaev_radii: Vec<f64>,
    pub holder_alphas: Vec<f64>,
    pub decay_center: Option<(f64, f64)>,
    /// 1-based.
    pub decay_component: usize,
    pub decay_radii: Vec<f64>,
    pub fit_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub boundary: BoundaryConfig,
    pub solver: SolverConfig,
    pub diagnostics: DiagnosticsConfig,
    /// Not serialized: artifact trees must not depend on where they live.
    #[serde(skip)]
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            domain: DomainConfig {
                preset: DomainPreset::Disk,
                n: 129,
                radius: DISK_RADIUS,
            },
            boundary: {
                let p = PresetParams::default();
                BoundaryConfig {
                    preset: "symmetric_sine".into(),
                    c: p.c,
                    a: p.a,
                    b: p.b,
                    m: p.m,
                    table: None,
                    seg_tol: None,
                }
            },
            solver: SolverConfig {
                betas: (0..=6).map(|e| 10f64.powi(e)).collect(),
                opts: MinimizeOptions::default(),
                init: Init::Harmonic,
            },
            diagnostics: DiagnosticsConfig {
                acf: true,
                pohozaev: true,
                holder: true,
                overlap: true,
                decay: false,
                competitor: true,
                centers: Vec::new(),
                nu: None,
                eps_factors: vec![1e-1, 1e-2, 1e-3],
                mono_tol: 1e-3,
                acf_seg_tol: f64::INFINITY,
                pohozaev_radii: vec![0.1, 0.2, 0.3],
                holder_alphas: vec![0.5, 0.75, 0.9],
                decay_center: None,
                decay_component: 3,
                decay_radii: Vec::new(),
                fit_tol: 0.1,
            },
            output_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

fn perr(line: usize, msg: impl Into<String>) -> SegError {
    SegError::Parse { line, msg: msg.into() }
}

fn num(line: usize, key: &str, v: &str) -> Result<f64> {
    let x: f64 = v
        .parse()
        .map_err(|_| perr(line, format!("`{key}`: `{v}` is not a number")))?;
    if x.is_nan() {
        return Err(perr(line, format!("`{key}` must not be NaN")));
    }
    Ok(x)
}

fn positive(line: usize, key: &str, v: &str) -> Result<f64> {
    let x = num(line, key, v)?;
    if !(x > 0.0) {
        return Err(perr(line, format!("`{key}` must be > 0, got {v}")));
    }
    Ok(x)
}

fn count(line: usize, key: &str, v: &str) -> Result<usize> {
    let n: usize = v
        .parse()
        .map_err(|_| perr(line, format!("`{key}`: `{v}` is not a non-negative integer")))?;
    if n == 0 {
        return Err(perr(line, format!("`{key}` must be > 0")));
    }
    Ok(n)
}

fn boolean(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(perr(line, format!("`{key}`: `{v}` is not a boolean"))),
    }
}

fn list(line: usize, key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(line, key, s))
        .collect()
}

fn point(line: usize, key: &str, v: &str) -> Result<(f64, f64)> {
    let (x, y) = v
        .split_once(':')
        .ok_or_else(|| perr(line, format!("`{key}`: expected `x:y`, got `{v}`")))?;
    Ok((num(line, key, x.trim())?, num(line, key, y.trim())?))
}

fn increasing(line: usize, key: &str, xs: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(perr(line, format!("`{key}` is empty")));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(perr(line, format!("`{key}` must be strictly increasing")));
    }
    Ok(())
}

/// Parses configuration text; `base` resolves relative table paths.
pub fn parse_config_str(text: &str, base: &Path) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut section: Option<String> = None;
    let mut seen = HashSet::new();
    let mut preset_line = 0;
    let mut table_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut pairs: Vec<(String, String)> = Vec::new();
        if let Some(rest) = content.strip_prefix('[') {
            let (name, tail) = rest
                .split_once(']')
                .ok_or_else(|| perr(line, format!("unterminated section header `{content}`")))?;
            let name = name.trim();
            if !["domain", "boundary", "solver", "diagnostics", "output", "run"].contains(&name) {
                return Err(perr(line, format!("unknown section `[{name}]`")));
            }
            section = Some(name.to_string());
            for tok in tail.split_whitespace() {
                let (k, v) = tok
                    .split_once('=')
                    .ok_or_else(|| perr(line, format!("expected `key=value`, got `{tok}`")))?;
                pairs.push((k.trim().into(), v.trim().into()));
            }
        } else {
            let (k, v) = content
                .split_once('=')
                .ok_or_else(|| perr(line, format!("expected `key = value`, got `{content}`")))?;
            pairs.push((k.trim().into(), v.trim().into()));
        }
        for (key, v) in pairs {
            let sec = section
                .as_deref()
                .ok_or_else(|| perr(line, format!("`{key}` appears before any [section]")))?;
            if !seen.insert((sec.to_string(), key.clone())) {
                return Err(perr(line, format!("duplicate key `{key}` in [{sec}]")));
            }
            let v = v.as_str();
            let k = key.as_str();
            let d = &mut cfg.diagnostics;
            match (sec, k) {
                ("domain", "preset") => {
                    cfg.domain.preset = match v {
                        "square" => DomainPreset::Square,
                        "disk" => DomainPreset::Disk,
                        _ => return Err(perr(line, format!("unknown domain preset `{v}`; valid: square, disk"))),
                    }
                }
                ("domain", "n") => {
                    let n = count(line, k, v)?;
                    if n < 5 {
                        return Err(perr(line, "`n` must be at least 5"));
                    }
                    cfg.domain.n = n;
                }
                ("domain", "radius") => {
                    let r = positive(line, k, v)?;
                    if r > 0.5 {
                        return Err(perr(line, "`radius` must not exceed 0.5"));
                    }
                    cfg.domain.radius = r;
                }
                ("boundary", "preset") => {
                    if !PRESET_NAMES.split(", ").any(|n| n == v) {
                        return Err(perr(
                            line,
                            format!("unknown boundary preset `{v}`; valid: {}", PRESET_NAMES),
                        ));
                    }
                    preset_line = line;
                    cfg.boundary.preset = v.into();
                }
                ("boundary", "c") => cfg.boundary.c = positive(line, k, v)?,
                ("boundary", "a") => cfg.boundary.a = positive(line, k, v)?,
                ("boundary", "b") => cfg.boundary.b = positive(line, k, v)?,
                ("boundary", "m") => {
                    let m = num(line, k, v)?;
                    if !(0.0..=1.0).contains(&m) {
                        return Err(perr(line, "`m` must lie in [0, 1]"));
                    }
                    cfg.boundary.m = m;
                }
                ("boundary", "table") => {
                    table_line = line;
                    cfg.boundary.table = Some(base.join(v));
                }
                ("boundary", "seg_tol") => {
                    let t = num(line, k, v)?;
                    if t < 0.0 {
                        return Err(perr(line, "`seg_tol` must be >= 0"));
                    }
                    cfg.boundary.seg_tol = Some(t);
                }
                ("solver", "beta_schedule") => {
                    let b = list(line, k, v)?;
                    increasing(line, k, &b)?;
                    if b.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                        return Err(perr(line, "`beta_schedule` entries must be positive and finite"));
                    }
                    cfg.solver.betas = b;
                }
                ("solver", "sweep_tol") => cfg.solver.opts.sweep_tol = positive(line, k, v)?,
                ("solver", "lin_tol") => cfg.solver.opts.lin_tol = positive(line, k, v)?,
                ("solver", "max_sweeps") => cfg.solver.opts.max_sweeps = count(line, k, v)?,
                ("solver", "max_lin_iter") => cfg.solver.opts.max_lin_iter = count(line, k, v)?,
                ("solver", "init") => {
                    cfg.solver.init = match v {
                        "harmonic" => Init::Harmonic,
                        "zero" => Init::Zero,
                        _ => return Err(perr(line, format!("unknown init `{v}`; valid: harmonic, zero"))),
                    }
                }
                ("diagnostics", "acf") => d.acf = boolean(line, k, v)?,
                ("diagnostics", "pohozaev") => d.pohozaev = boolean(line, k, v)?,
                ("diagnostics", "holder") => d.holder = boolean(line, k, v)?,
                ("diagnostics", "overlap") => d.overlap = boolean(line, k, v)?,
                ("diagnostics", "decay") => d.decay = boolean(line, k, v)?,
                ("diagnostics", "competitor") => d.competitor = boolean(line, k, v)?,
                ("diagnostics", "centers") => {
                    d.centers = v
                        .split(';')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|p| point(line, k, p))
                        .collect::<Result<_>>()?;
                }
                ("diagnostics", "nu") => {
                    d.nu = if v == "auto" { None } else { Some(positive(line, k, v)?) };
                }
                ("diagnostics", "eps_factors") => {
                    let e = list(line, k, v)?;
                    if e.is_empty() || e.iter().any(|x| !(*x > 0.0)) {
                        return Err(perr(line, "`eps_factors` must be positive"));
                    }
                    d.eps_factors = e;
                }
                ("diagnostics", "mono_tol") => d.mono_tol = positive(line, k, v)?,
                ("diagnostics", "acf_seg_tol") => d.acf_seg_tol = positive(line, k, v)?,
                ("diagnostics", "pohozaev_radii") => {
                    let r = list(line, k, v)?;
                    increasing(line, k, &r)?;
                    if r[0] <= 0.0 {
                        return Err(perr(line, "`pohozaev_radii` must be positive"));
                    }
                    d.pohozaev_radii = r;
                }
                ("diagnostics", "holder_alphas") => {
                    let a = list(line, k, v)?;
                    if a.is_empty() || a.iter().any(|x| !(*x > 0.0 && *x <= 1.0)) {
                        return Err(perr(line, "`holder_alphas` must lie in (0, 1]"));
                    }
                    d.holder_alphas = a;
                }
                ("diagnostics", "decay_center") => d.decay_center = Some(point(line, k, v)?),
                ("diagnostics", "decay_component") => {
                    let c = count(line, k, v)?;
                    if c > 3 {
                        return Err(perr(line, "`decay_component` must be 1, 2 or 3"));
                    }
                    d.decay_component = c;
                }
                ("diagnostics", "decay_radii") => {
                    let r = list(line, k, v)?;
                    increasing(line, k, &r)?;
                    if r.len() < 3 || r[0] <= 0.0 {
                        return Err(perr(line, "`decay_radii` needs at least 3 positive radii"));
                    }
                    d.decay_radii = r;
                }
                ("diagnostics", "fit_tol") => d.fit_tol = positive(line, k, v)?,
                ("output", "dir") => cfg.output_dir = base.join(v),
                ("run", "seed") => {
                    cfg.seed = v
                        .parse()
                        .map_err(|_| perr(line, format!("`seed`: `{v}` is not an unsigned integer")))?
                }
                _ => return Err(perr(line, format!("unknown key `{k}` in [{sec}]"))),
            }
        }
    }
    if cfg.boundary.preset == "custom" && cfg.boundary.table.is_none() {
        return Err(perr(preset_line, "preset `custom` needs `table = <csv path>`"));
    }
    if cfg.boundary.preset != "custom" && cfg.boundary.table.is_some() {
        return Err(perr(table_line, "`table` is only used by preset `custom`"));
    }
    if cfg.diagnostics.decay && (cfg.diagnostics.decay_center.is_none() || cfg.diagnostics.decay_radii.is_empty()) {
        return Err(perr(0, "decay probe needs `decay_center` and `decay_radii`"));
    }
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text, path.parent().unwrap_or(Path::new(".")))
}

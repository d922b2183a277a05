//! Boundary traces `(ψ₁, ψ₂, ψ₃)` on the domain frontier and their
//! partial-segregation certificate `ψ₁ψ₂ψ₃ = 0`.
//!
//! Every preset is a function of the boundary angle returned by
//! [`Grid::boundary_angle`], so the same profile can be painted on the disk
//! or on the square, and evaluated along any ray from the domain center.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SegError};
use crate::grid::{wrap_angle, Grid};

pub const PRESET_NAMES: &str = "symmetric_sine, halfcap, two_phase, custom";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub theta: f64,
    pub psi1: f64,
    pub psi2: f64,
    pub psi3: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TraceProfile {
    /// `ψ_i(θ) = sin(¾ φ)` for `φ = (θ - 2π(i-1)/3) mod 2π ∈ [0, 4π/3]`.
    SymmetricSine,
    /// `ψ₁ = (cos θ)⁺`, `ψ₂ = (cos θ)⁻`, `ψ₃ ≡ c`.
    HalfCap { c: f64 },
    /// `ψ₁ = a(1 + m cos θ)`, `ψ₂ = b(1 - m cos θ)`, `ψ₃ ≡ 0`.
    TwoPhase { a: f64, b: f64, m: f64 },
    /// Periodic piecewise-linear table in θ.
    Custom { rows: Vec<TableRow> },
}

impl TraceProfile {
    pub fn name(&self) -> &'static str {
        match self {
            TraceProfile::SymmetricSine => "symmetric_sine",
            TraceProfile::HalfCap { .. } => "halfcap",
            TraceProfile::TwoPhase { .. } => "two_phase",
            TraceProfile::Custom { .. } => "custom",
        }
    }

    pub fn eval(&self, theta: f64) -> [f64; 3] {
        let theta = wrap_angle(theta);
        match self {
            TraceProfile::SymmetricSine => {
                let support = 4.0 * PI / 3.0;
                let mut out = [0.0; 3];
                for (i, v) in out.iter_mut().enumerate() {
                    let phi = (theta - 2.0 * PI * i as f64 / 3.0).rem_euclid(2.0 * PI);
                    // endpoints are snapped to zero so that no rounding noise
                    // can leave three components positive
                    if phi > 1e-12 && phi < support - 1e-12 {
                        *v = (0.75 * phi).sin();
                    }
                }
                out
            }
            TraceProfile::HalfCap { c } => {
                let cs = theta.cos();
                [cs.max(0.0), (-cs).max(0.0), *c]
            }
            TraceProfile::TwoPhase { a, b, m } => {
                let cs = theta.cos();
                [a * (1.0 + m * cs), b * (1.0 - m * cs), 0.0]
            }
            TraceProfile::Custom { rows } => interpolate_table(rows, theta),
        }
    }

    /// Lipschitz constant in θ of the profile.
    pub fn lipschitz_in_angle(&self) -> f64 {
        match self {
            TraceProfile::SymmetricSine => 0.75,
            TraceProfile::HalfCap { .. } => 1.0,
            TraceProfile::TwoPhase { a, b, m } => a.max(*b) * m.abs(),
            TraceProfile::Custom { rows } => {
                let n = rows.len();
                (0..n)
                    .map(|q| {
                        let (r0, r1) = (&rows[q], &rows[(q + 1) % n]);
                        let mut dt = r1.theta - r0.theta;
                        if q + 1 == n {
                            dt += 2.0 * PI;
                        }
                        [r1.psi1 - r0.psi1, r1.psi2 - r0.psi2, r1.psi3 - r0.psi3]
                            .iter()
                            .map(|d| d.abs() / dt)
                            .fold(0.0, f64::max)
                    })
                    .fold(0.0, f64::max)
            }
        }
    }

    /// Default tolerance of the segregation certificate.
    pub fn default_seg_tol(&self) -> f64 {
        match self {
            TraceProfile::Custom { .. } => 1e-12,
            _ => 0.0,
        }
    }
}

fn interpolate_table(rows: &[TableRow], theta: f64) -> [f64; 3] {
    let n = rows.len();
    if n == 1 {
        let r = &rows[0];
        return [r.psi1, r.psi2, r.psi3];
    }
    // first row with theta > query; the segment (q-1, q) wraps at both ends
    let q = rows.partition_point(|r| r.theta <= theta);
    let (r0, r1, t0, t1) = if q == 0 {
        let r0 = &rows[n - 1];
        (r0, &rows[0], r0.theta - 2.0 * PI, rows[0].theta)
    } else if q == n {
        let r1 = &rows[0];
        (&rows[n - 1], r1, rows[n - 1].theta, r1.theta + 2.0 * PI)
    } else {
        (&rows[q - 1], &rows[q], rows[q - 1].theta, rows[q].theta)
    };
    let s = if t1 > t0 { (theta - t0) / (t1 - t0) } else { 0.0 };
    let lerp = |a: f64, b: f64| a + s * (b - a);
    [lerp(r0.psi1, r1.psi1), lerp(r0.psi2, r1.psi2), lerp(r0.psi3, r1.psi3)]
}

/// Reads a `theta,psi1,psi2,psi3` table with strictly increasing θ in
/// `[0, 2π)` and nonnegative values.
pub fn read_table(path: &Path) -> Result<Vec<TableRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let rows: Vec<TableRow> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
    validate_table(&rows)?;
    Ok(rows)
}

pub fn validate_table(rows: &[TableRow]) -> Result<()> {
    if rows.is_empty() {
        return Err(SegError::InvalidArgument("boundary table is empty".into()));
    }
    for (q, r) in rows.iter().enumerate() {
        if !(r.theta >= 0.0 && r.theta < 2.0 * PI) {
            return Err(SegError::Parse {
                line: q + 2,
                msg: format!("theta {} outside [0, 2π)", r.theta),
            });
        }
        if q > 0 && r.theta <= rows[q - 1].theta {
            return Err(SegError::Parse {
                line: q + 2,
                msg: "theta must be strictly increasing".into(),
            });
        }
        if [r.psi1, r.psi2, r.psi3].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(SegError::Parse {
                line: q + 2,
                msg: "trace values must be finite and nonnegative".into(),
            });
        }
    }
    Ok(())
}

/// Boundary values of the three components on a grid.
#[derive(Clone, Debug)]
pub struct BoundaryTriplet {
    grid: Arc<Grid>,
    profile: TraceProfile,
    /// Per-component values on the full node array; zero off the boundary.
    values: [Vec<f64>; 3],
    lipschitz_bound: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SegregationCertificate {
    pub max_product: f64,
    /// Node index attaining the maximum (the first boundary node when all
    /// products vanish); `None` when the grid has no boundary nodes.
    pub argmax_node: Option<usize>,
    pub pass: bool,
}

impl BoundaryTriplet {
    pub fn from_profile(grid: Arc<Grid>, profile: TraceProfile) -> Result<Self> {
        let n = grid.len();
        let mut values = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for &k in grid.boundary_nodes() {
            let (x, y) = grid.coords(k);
            let psi = profile.eval(grid.boundary_angle(x, y));
            for c in 0..3 {
                if !(psi[c].is_finite() && psi[c] >= 0.0) {
                    let (i, j) = grid.ij(k);
                    return Err(SegError::InvalidArgument(format!(
                        "trace {} is {} at boundary node ({i}, {j}); traces must be nonnegative",
                        c + 1,
                        psi[c]
                    )));
                }
                values[c][k] = psi[c];
            }
        }
        let lipschitz_bound = estimate_lipschitz(&grid, &values);
        Ok(BoundaryTriplet {
            grid,
            profile,
            values,
            lipschitz_bound,
        })
    }

    /// Builds a trace from raw boundary values (e.g. read back from a
    /// checkpoint). The profile is recorded as a custom table sampled at the
    /// boundary nodes.
    pub fn from_boundary_values(grid: Arc<Grid>, values: [Vec<f64>; 3]) -> Result<Self> {
        let mut rows: Vec<TableRow> = grid
            .boundary_nodes()
            .iter()
            .map(|&k| {
                let (x, y) = grid.coords(k);
                TableRow {
                    theta: grid.boundary_angle(x, y),
                    psi1: values[0][k],
                    psi2: values[1][k],
                    psi3: values[2][k],
                }
            })
            .collect();
        rows.sort_by(|a, b| a.theta.total_cmp(&b.theta));
        rows.dedup_by(|a, b| a.theta == b.theta);
        let mut clean = [vec![0.0; grid.len()], vec![0.0; grid.len()], vec![0.0; grid.len()]];
        for &k in grid.boundary_nodes() {
            for c in 0..3 {
                clean[c][k] = values[c][k];
            }
        }
        let lipschitz_bound = estimate_lipschitz(&grid, &clean);
        Ok(BoundaryTriplet {
            grid,
            profile: TraceProfile::Custom { rows },
            values: clean,
            lipschitz_bound,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    pub fn profile(&self) -> &TraceProfile {
        &self.profile
    }
    pub fn preset_name(&self) -> &'static str {
        self.profile.name()
    }
    pub fn values(&self, component: usize) -> &[f64] {
        &self.values[component]
    }
    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    /// `sup ψ_i` over the boundary.
    pub fn sup(&self, component: usize) -> f64 {
        self.grid
            .boundary_nodes()
            .iter()
            .map(|&k| self.values[component][k])
            .fold(0.0, f64::max)
    }

    /// `‖ψ‖_∞` over all three components.
    pub fn sup_norm(&self) -> f64 {
        (0..3).map(|c| self.sup(c)).fold(0.0, f64::max)
    }

    pub fn default_seg_tol(&self) -> f64 {
        self.profile.default_seg_tol()
    }
}

/// Largest slope `|Δψ| / Δθ` between boundary nodes adjacent in angle.
fn estimate_lipschitz(grid: &Grid, values: &[Vec<f64>; 3]) -> f64 {
    let mut nodes: Vec<(f64, usize)> = grid
        .boundary_nodes()
        .iter()
        .map(|&k| {
            let (x, y) = grid.coords(k);
            (grid.boundary_angle(x, y), k)
        })
        .collect();
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = nodes.len();
    let mut best: f64 = 0.0;
    for q in 0..n {
        let (t0, k0) = nodes[q];
        let (t1, k1) = nodes[(q + 1) % n];
        let mut dt = t1 - t0;
        if q + 1 == n {
            dt += 2.0 * PI;
        }
        if dt <= 1e-12 {
            continue;
        }
        for v in values {
            best = best.max((v[k1] - v[k0]).abs() / dt);
        }
    }
    best
}

/// Preset parameters read from a configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct PresetParams {
    pub c: f64,
    pub a: f64,
    pub b: f64,
    pub m: f64,
    pub table: Option<Vec<TableRow>>,
}

impl Default for PresetParams {
    fn default() -> Self {
        PresetParams {
            c: 1.0,
            a: 1.0,
            b: 1.0,
            m: 0.5,
            table: None,
        }
    }
}

pub fn make_preset(name: &str, params: &PresetParams, grid: Arc<Grid>) -> Result<BoundaryTriplet> {
    let profile = match name {
        "symmetric_sine" => TraceProfile::SymmetricSine,
        "halfcap" => {
            if !(params.c > 0.0) {
                return Err(SegError::InvalidArgument(format!(
                    "halfcap needs c > 0, got {}",
                    params.c
                )));
            }
            TraceProfile::HalfCap { c: params.c }
        }
        "two_phase" => {
            if !(params.a >= 0.0 && params.b >= 0.0 && (0.0..=1.0).contains(&params.m)) {
                return Err(SegError::InvalidArgument(
                    "two_phase needs a, b >= 0 and m in [0, 1]".into(),
                ));
            }
            TraceProfile::TwoPhase {
                a: params.a,
                b: params.b,
                m: params.m,
            }
        }
        "custom" => {
            let rows = params
                .table
                .clone()
                .ok_or_else(|| SegError::InvalidArgument("custom preset needs a table".into()))?;
            validate_table(&rows)?;
            TraceProfile::Custom { rows }
        }
        other => {
            return Err(SegError::UnknownPreset {
                name: other.to_string(),
                valid: PRESET_NAMES.to_string(),
            })
        }
    };
    BoundaryTriplet::from_profile(grid, profile)
}

pub fn validate_partial_segregation(t: &BoundaryTriplet, seg_tol: f64) -> SegregationCertificate {
    let mut max_product = 0.0;
    let mut argmax = t.grid.boundary_nodes().first().copied();
    for &k in t.grid.boundary_nodes() {
        let p = t.values[0][k] * t.values[1][k] * t.values[2][k];
        if p > max_product {
            max_product = p;
            argmax = Some(k);
        }
    }
    SegregationCertificate {
        max_product,
        argmax_node: argmax,
        pass: max_product <= seg_tol,
    }
}

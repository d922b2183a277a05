//! The segregation energy
//!
//! ```text
//! J_β(u) = Σ_i ∫ |∇u_i|² + β ∫ u₁² u₂² u₃²
//! ```
//!
//! and its minimization over triplets with fixed boundary traces by cyclic
//! block relaxation. Freezing two components makes `J_β` a convex quadratic
//! in the third, whose minimizer solves the screened Poisson problem
//! `-Δu_i + c u_i = 0`, `c = β Π_{j≠i} u_j²`, with Dirichlet data `ψ_i`.
//! Each block is solved by Jacobi-preconditioned conjugate gradients.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::boundary::BoundaryTriplet;
use crate::diagnostics::{overlap_measures, OverlapReport};
use crate::error::{Result, SegError};
use crate::grid::{apply_laplacian, dirichlet_energy_full, Field, Grid, NodeKind};
use crate::par::{chunked_max, chunked_sum};

/// Slack on per-relaxation energy monotonicity, relative to `|J|`.
pub const ENERGY_SLACK: f64 = 1e-13;
/// Allowed negativity, relative to `‖ψ‖_∞`.
pub const NEGATIVITY_TOL: f64 = 1e-12;
/// Allowed excess over `sup ψ_i`.
pub const MAX_PRINCIPLE_TOL: f64 = 1e-10;
/// Slack of the competitor bound `J_β(u_β) ≤ J_β(v)`.
pub const COMPETITOR_SLACK: f64 = 1e-10;

/// Rows per parallel task in the stencil sweeps.
const PAR_MIN_NODES: usize = 1 << 15;

#[derive(Clone, Debug)]
pub struct TripletState {
    pub u: [Field; 3],
    pub beta: f64,
    pub trace: BoundaryTriplet,
    pub sweeps: usize,
    pub last_decrement: f64,
    pub converged: bool,
}

impl TripletState {
    /// Boundary nodes carry the trace, everything else is zero.
    pub fn from_trace(trace: BoundaryTriplet, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        let grid = trace.grid().clone();
        let u = std::array::from_fn(|c| {
            let mut f = Field::zeros(grid.clone());
            for &k in grid.boundary_nodes() {
                f.values_mut()[k] = trace.values(c)[k];
            }
            f
        });
        Ok(TripletState {
            u,
            beta,
            trace,
            sweeps: 0,
            last_decrement: f64::INFINITY,
            converged: false,
        })
    }

    /// Harmonic extension of each trace (the `β = 0` minimizer), carrying
    /// the requested `β`.
    pub fn harmonic(trace: BoundaryTriplet, beta: f64, lin_tol: f64, max_iter: usize) -> Result<Self> {
        let mut s = TripletState::from_trace(trace, 0.0)?;
        for i in 0..3 {
            relax_component(&mut s, i, lin_tol, max_iter)?;
        }
        s.beta = beta;
        check_beta(beta)?;
        Ok(s)
    }

    /// Wraps existing fields. Boundary values define the trace.
    pub fn from_fields(u: [Field; 3], beta: f64) -> Result<Self> {
        check_beta(beta)?;
        let grid = u[0].grid().clone();
        for f in &u {
            if !Arc::ptr_eq(f.grid(), &grid) && **f.grid() != *grid {
                return Err(SegError::InvalidArgument("components live on different grids".into()));
            }
            f.check_finite()?;
        }
        let values = std::array::from_fn(|c| u[c].values().to_vec());
        let trace = BoundaryTriplet::from_boundary_values(grid, values)?;
        Ok(TripletState {
            u,
            beta,
            trace,
            sweeps: 0,
            last_decrement: f64::INFINITY,
            converged: false,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.u[0].grid()
    }

    /// Checks nonnegativity, boundary agreement and the maximum principle.
    pub fn check_invariants(&self) -> Result<()> {
        let g = self.grid();
        let norm = self.trace.sup_norm();
        for c in 0..3 {
            self.u[c].check_finite()?;
            let min = self.u[c].min();
            if min < -NEGATIVITY_TOL * norm.max(f64::MIN_POSITIVE) && min < 0.0 {
                return Err(SegError::Invariant(format!(
                    "component {} has negative value {min:e}",
                    c + 1
                )));
            }
            let sup = self.trace.sup(c);
            let max = self.u[c].max();
            if max > sup + MAX_PRINCIPLE_TOL {
                return Err(SegError::Invariant(format!(
                    "component {} exceeds its boundary supremum: {max} > {sup}",
                    c + 1
                )));
            }
            for &k in g.boundary_nodes() {
                if self.u[c].values()[k] != self.trace.values(c)[k] {
                    let (i, j) = g.ij(k);
                    return Err(SegError::Invariant(format!(
                        "component {} departs from its trace at boundary node ({i}, {j})",
                        c + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(SegError::InvalidArgument(format!("beta must be finite and >= 0, got {beta}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    pub dirichlet: [f64; 3],
    pub interaction: f64,
    pub total: f64,
}

/// `β Σ_k w_k u₁²u₂²u₃² hx hy` with dual-cell weights `w_k`.
pub fn interaction_energy(u: &[Field; 3], beta: f64) -> f64 {
    let g = u[0].grid();
    let (a, b, c) = (u[0].values(), u[1].values(), u[2].values());
    let sum = chunked_sum(g.len(), |k| {
        let w = g.node_weight(k);
        if w == 0.0 {
            0.0
        } else {
            let p = a[k] * b[k] * c[k];
            w * p * p
        }
    });
    beta * sum * g.cell_area()
}

pub fn energy_of(u: &[Field; 3], beta: f64) -> EnergyBreakdown {
    let dirichlet = [
        dirichlet_energy_full(&u[0]),
        dirichlet_energy_full(&u[1]),
        dirichlet_energy_full(&u[2]),
    ];
    let interaction = interaction_energy(u, beta);
    EnergyBreakdown {
        dirichlet,
        interaction,
        total: dirichlet[0] + dirichlet[1] + dirichlet[2] + interaction,
    }
}

pub fn energy(s: &TripletState) -> EnergyBreakdown {
    energy_of(&s.u, s.beta)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RelaxInfo {
    pub iterations: usize,
    /// Final `‖b - A x‖₂ / ‖b‖₂` (0 when the data vanish).
    pub relative_residual: f64,
    /// Largest amount removed by the projection onto `[0, sup ψ_i]`.
    pub clipped: f64,
}

/// Screening coefficient `β Π_{j≠i} u_j²` on the node array.
fn screening(s: &TripletState, i: usize) -> Vec<f64> {
    let (j, k) = match i {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let (a, b) = (s.u[j].values(), s.u[k].values());
    a.iter().zip(b).map(|(x, y)| s.beta * x * x * y * y).collect()
}

/// Applies `A = -Δ + diag(c)` restricted to interior nodes; `p` vanishes
/// off the interior.
fn apply_operator(grid: &Grid, c: &[f64], p: &[f64], out: &mut [f64]) {
    let nx = grid.nx();
    let (ihx2, ihy2) = (1.0 / (grid.hx() * grid.hx()), 1.0 / (grid.hy() * grid.hy()));
    let diag0 = 2.0 * (ihx2 + ihy2);
    let mask = grid.mask();
    let row = |j: usize, out_row: &mut [f64]| {
        if j == 0 || j + 1 == grid.ny() {
            out_row.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        for (i, o) in out_row.iter_mut().enumerate() {
            let k = j * nx + i;
            *o = if mask[k] == NodeKind::Interior {
                (diag0 + c[k]) * p[k] - (p[k - 1] + p[k + 1]) * ihx2 - (p[k - nx] + p[k + nx]) * ihy2
            } else {
                0.0
            };
        }
    };
    if grid.len() >= PAR_MIN_NODES {
        out.par_chunks_mut(nx).enumerate().for_each(|(j, r)| row(j, r));
    } else {
        out.chunks_mut(nx).enumerate().for_each(|(j, r)| row(j, r));
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    chunked_sum(a.len(), |k| a[k] * b[k])
}

/// Replaces `u_i` by the minimizer of `J_β` in that block, holding the other
/// two components fixed.
pub fn relax_component(s: &mut TripletState, i: usize, lin_tol: f64, max_iter: usize) -> Result<RelaxInfo> {
    if i > 2 {
        return Err(SegError::InvalidArgument(format!("component index {i} out of range")));
    }
    let grid = s.grid().clone();
    let n = grid.len();
    let nx = grid.nx();
    let (ihx2, ihy2) = (1.0 / (grid.hx() * grid.hx()), 1.0 / (grid.hy() * grid.hy()));
    let c = screening(s, i);
    let interior = grid.interior_nodes();

    // right-hand side: boundary neighbours moved across
    let u = s.u[i].values();
    let mut b = vec![0.0; n];
    for &k in interior {
        let mut acc = 0.0;
        for (nb, w) in [(k - 1, ihx2), (k + 1, ihx2), (k - nx, ihy2), (k + nx, ihy2)] {
            if grid.kind(nb) == NodeKind::Boundary {
                acc += w * u[nb];
            }
        }
        b[k] = acc;
    }
    let bnorm = dot(&b, &b).sqrt();
    let mut x = vec![0.0; n];
    for &k in interior {
        x[k] = u[k];
    }

    let mut iterations = 0;
    let mut rel = 0.0;
    if bnorm == 0.0 {
        // zero data: the unique solution vanishes
        x.iter_mut().for_each(|v| *v = 0.0);
    } else {
        let diag0 = 2.0 * (ihx2 + ihy2);
        let inv_diag: Vec<f64> = (0..n)
            .map(|k| if grid.kind(k) == NodeKind::Interior { 1.0 / (diag0 + c[k]) } else { 0.0 })
            .collect();
        let mut ax = vec![0.0; n];
        apply_operator(&grid, &c, &x, &mut ax);
        let mut r: Vec<f64> = (0..n)
            .map(|k| if grid.kind(k) == NodeKind::Interior { b[k] - ax[k] } else { 0.0 })
            .collect();
        let target = lin_tol * bnorm;
        let mut rnorm = dot(&r, &r).sqrt();
        if rnorm > target {
            let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
            let mut p = z.clone();
            let mut rz = dot(&r, &z);
            let mut ap = vec![0.0; n];
            loop {
                if iterations >= max_iter {
                    return Err(SegError::NonConvergence {
                        component: i + 1,
                        residual: rnorm / bnorm,
                        iterations,
                    });
                }
                apply_operator(&grid, &c, &p, &mut ap);
                let pap = dot(&p, &ap);
                if !(pap > 0.0) {
                    break;
                }
                let alpha = rz / pap;
                for k in 0..n {
                    x[k] += alpha * p[k];
                    r[k] -= alpha * ap[k];
                }
                iterations += 1;
                rnorm = dot(&r, &r).sqrt();
                if rnorm <= target {
                    break;
                }
                for k in 0..n {
                    z[k] = r[k] * inv_diag[k];
                }
                let rz_new = dot(&r, &z);
                let beta_cg = rz_new / rz;
                rz = rz_new;
                for k in 0..n {
                    p[k] = z[k] + beta_cg * p[k];
                }
            }
        }
        rel = rnorm / bnorm;
    }

    // The exact block minimizer lies in [0, sup ψ_i]; the projection is
    // non-expansive on every edge and never raises the block energy.
    let upper = s.trace.sup(i);
    let mut clipped: f64 = 0.0;
    let vals = s.u[i].values_mut();
    for &k in interior {
        let v = x[k];
        let p = v.clamp(0.0, upper);
        clipped = clipped.max((p - v).abs());
        vals[k] = p;
    }
    Ok(RelaxInfo {
        iterations,
        relative_residual: rel,
        clipped,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MinimizeOptions {
    pub sweep_tol: f64,
    pub max_sweeps: usize,
    pub lin_tol: f64,
    pub max_lin_iter: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            sweep_tol: 1e-12,
            max_sweeps: 500,
            lin_tol: 1e-10,
            max_lin_iter: 20_000,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MinimizeReport {
    pub converged: bool,
    pub sweeps: usize,
    /// Total energy after every block relaxation, starting with the
    /// initial state.
    pub energy_history: Vec<f64>,
    pub final_energy: EnergyBreakdown,
    pub residual: [f64; 3],
    pub max_clipped: f64,
    pub linear_iterations: usize,
}

/// Cyclic block relaxation until the energy decrement over one full sweep
/// drops below `sweep_tol · max(1, |J|)`.
pub fn minimize(s: &mut TripletState, opts: &MinimizeOptions) -> Result<MinimizeReport> {
    validate_options(opts)?;
    let mut e = energy(s).total;
    let mut history = vec![e];
    let mut converged = false;
    let mut max_clipped: f64 = 0.0;
    let mut linear_iterations = 0;
    let mut sweeps = 0;
    while sweeps < opts.max_sweeps {
        let start = e;
        for i in 0..3 {
            let info = relax_component(s, i, opts.lin_tol, opts.max_lin_iter)?;
            max_clipped = max_clipped.max(info.clipped);
            linear_iterations += info.iterations;
            let next = energy(s).total;
            if next > e + ENERGY_SLACK * e.abs() {
                return Err(SegError::Invariant(format!(
                    "energy increased from {e} to {next} relaxing component {} in sweep {}",
                    i + 1,
                    sweeps + 1
                )));
            }
            e = next;
            history.push(e);
        }
        sweeps += 1;
        s.last_decrement = start - e;
        if start - e <= opts.sweep_tol * e.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    s.sweeps += sweeps;
    s.converged = converged;
    s.check_invariants()?;
    Ok(MinimizeReport {
        converged,
        sweeps,
        energy_history: history,
        final_energy: energy(s),
        residual: pde_residual(s),
        max_clipped,
        linear_iterations,
    })
}

fn validate_options(opts: &MinimizeOptions) -> Result<()> {
    if !(opts.sweep_tol > 0.0 && opts.lin_tol > 0.0) || opts.max_sweeps == 0 || opts.max_lin_iter == 0 {
        return Err(SegError::InvalidArgument(
            "solver tolerances must be positive and iteration limits nonzero".into(),
        ));
    }
    Ok(())
}

/// `max_interior |Δu_i - β u_i Π_{j≠i} u_j²| / (1 + β ‖u‖³_∞)` per component.
pub fn pde_residual(s: &TripletState) -> [f64; 3] {
    let norm = (0..3).map(|c| s.u[c].max_abs()).fold(0.0, f64::max);
    let scale = 1.0 + s.beta * norm.powi(3);
    let grid = s.grid();
    std::array::from_fn(|i| {
        let lap = match apply_laplacian(&s.u[i]) {
            Ok(l) => l,
            Err(_) => return f64::NAN,
        };
        let c = screening(s, i);
        let u = s.u[i].values();
        let l = lap.values();
        let interior = grid.interior_nodes();
        chunked_max(interior.len(), |q| {
            let k = interior[q];
            (l[k] - c[k] * u[k]).abs()
        })
        .max(0.0)
            / scale
    })
}

/// Exactly segregated admissible triplet with the traces of `trace`: the
/// boundary profile is carried along rays from the domain center and scaled
/// linearly to zero at the center.
pub fn segregated_competitor(trace: &BoundaryTriplet) -> [Field; 3] {
    let grid = trace.grid().clone();
    let profile = trace.profile().clone();
    let mut out: [Field; 3] = std::array::from_fn(|_| Field::zeros(grid.clone()));
    for k in 0..grid.len() {
        match grid.kind(k) {
            NodeKind::Exterior => {}
            NodeKind::Boundary => {
                for c in 0..3 {
                    out[c].values_mut()[k] = trace.values(c)[k];
                }
            }
            NodeKind::Interior => {
                let (x, y) = grid.coords(k);
                let psi = profile.eval(grid.boundary_angle(x, y));
                let t = grid.radial_fraction(x, y).min(1.0);
                for c in 0..3 {
                    out[c].values_mut()[k] = psi[c] * t;
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContinuationSchedule {
    pub betas: Vec<f64>,
    pub opts: MinimizeOptions,
}

impl ContinuationSchedule {
    pub fn new(betas: Vec<f64>, opts: MinimizeOptions) -> Result<Self> {
        if betas.is_empty() {
            return Err(SegError::InvalidArgument("beta schedule is empty".into()));
        }
        for w in betas.windows(2) {
            if !(w[1] > w[0]) {
                return Err(SegError::InvalidArgument(format!(
                    "beta schedule must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        if !(betas[0] > 0.0) || betas.iter().any(|b| !b.is_finite()) {
            return Err(SegError::InvalidArgument("beta values must be positive and finite".into()));
        }
        validate_options(&opts)?;
        Ok(ContinuationSchedule { betas, opts })
    }

    /// `10^0, 10^1, ..., 10^6`.
    pub fn geometric(from_exp: i32, to_exp: i32, opts: MinimizeOptions) -> Result<Self> {
        ContinuationSchedule::new((from_exp..=to_exp).map(|e| 10f64.powi(e)).collect(), opts)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CompetitorBound {
    pub minimizer_energy: f64,
    pub competitor_energy: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct StageResult {
    pub beta: f64,
    pub converged: bool,
    pub sweeps: usize,
    pub energy: EnergyBreakdown,
    pub residual: [f64; 3],
    pub overlap: OverlapReport,
    pub competitor: Option<CompetitorBound>,
    /// Largest per-relaxation energy increase relative to `|J|` (negative or
    /// zero when the history is monotone).
    pub worst_energy_rise: f64,
    pub min_value: f64,
    pub max_excess: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuationReport {
    pub stages: Vec<StageResult>,
    /// Set when a stage failed to converge and the schedule was cut short.
    pub truncated: bool,
}

/// Default support threshold `1e-2 ‖ψ‖_∞`.
pub fn default_eps(trace: &BoundaryTriplet) -> f64 {
    1e-2 * trace.sup_norm()
}

/// Follows the minimizers along the schedule, warm-starting every stage
/// from the previous one. `on_stage` sees each converged state (for
/// checkpoints and diagnostics) before the next stage starts.
pub fn continuation(
    schedule: &ContinuationSchedule,
    initial: TripletState,
    competitor: Option<&[Field; 3]>,
    mut on_stage: impl FnMut(&StageResult, &TripletState) -> Result<()>,
) -> Result<(ContinuationReport, TripletState)> {
    let mut state = initial;
    let mut stages = Vec::new();
    let mut truncated = false;
    for &beta in &schedule.betas {
        state.beta = beta;
        state.converged = false;
        let rep = minimize(&mut state, &schedule.opts)?;
        let worst_energy_rise = rep
            .energy_history
            .windows(2)
            .map(|w| (w[1] - w[0]) / w[0].abs().max(f64::MIN_POSITIVE))
            .fold(f64::NEG_INFINITY, f64::max);
        let min_value = (0..3).map(|c| state.u[c].min()).fold(f64::INFINITY, f64::min);
        let max_excess = (0..3)
            .map(|c| state.u[c].max() - state.trace.sup(c))
            .fold(f64::NEG_INFINITY, f64::max);
        let competitor = competitor.map(|v| {
            let ce = energy_of(v, beta).total;
            CompetitorBound {
                minimizer_energy: rep.final_energy.total,
                competitor_energy: ce,
                holds: rep.final_energy.total <= ce + COMPETITOR_SLACK,
            }
        });
        let overlap = overlap_measures(&state, default_eps(&state.trace))?;
        let stage = StageResult {
            beta,
            converged: rep.converged,
            sweeps: rep.sweeps,
            energy: rep.final_energy,
            residual: rep.residual,
            overlap,
            competitor,
            worst_energy_rise,
            min_value,
            max_excess,
        };
        on_stage(&stage, &state)?;
        let ok = stage.converged;
        stages.push(stage);
        if !ok {
            truncated = true;
            break;
        }
    }
    Ok((ContinuationReport { stages, truncated }, state))
}

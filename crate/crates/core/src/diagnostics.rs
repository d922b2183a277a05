//! Measurements on computed (or analytic) triplets: ACF-type monotonicity
//! scans, the eigenvalue lower bound on circles, Pohozaev residuals, Hölder
//! seminorms, overlap areas and exponential decay rates.
//!
//! Ball integrals of gradients are assembled from circle integrals
//! ([`integrate_ball_polar`]) so that the sphere and ball terms of each
//! identity share one quadrature. Gradients on circles are those of the
//! bilinear interpolant.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::energy::{TripletState, NEGATIVITY_TOL};
use crate::error::{Result, SegError};
use crate::grid::{circle_quadrature, integrate_ball_polar, BallSpec, BallWeight, Field, Grid, CIRCLE_OFFSET};
use crate::sphere::{gamma, Arc as CircleArc};

/// Angular samples on every circle.
pub const CIRCLE_SAMPLES: usize = 720;
/// Relative drop of `J_ν` between consecutive radii that counts as a
/// violation.
pub const MONO_TOL: f64 = 1e-3;
pub const DEFAULT_RADII: usize = 32;

/// 32 logarithmically spaced radii in `[4h, dist(x0, ∂Ω)/2]`.
pub fn default_radii(grid: &Grid, x0: (f64, f64)) -> Result<Vec<f64>> {
    let lo = 4.0 * grid.h();
    let hi = 0.5 * grid.distance_to_boundary(x0.0, x0.1);
    if !(hi > lo) {
        return Err(SegError::InvalidArgument(format!(
            "center ({}, {}) is too close to the boundary for a radius scan",
            x0.0, x0.1
        )));
    }
    Ok(log_radii(lo, hi, DEFAULT_RADII))
}

pub fn log_radii(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    (0..n)
        .map(|q| lo * (hi / lo).powf(q as f64 / (n - 1) as f64))
        .collect()
}

fn shells_for(grid: &Grid, r: f64) -> usize {
    ((2.0 * r / grid.h()).ceil() as usize).max(4)
}

/// `∫_{B_r(x0)} g · w` with `g` evaluated pointwise.
fn ball_integral(
    grid: &Grid,
    x0: (f64, f64),
    r: f64,
    weight: BallWeight,
    g: impl FnMut(f64, f64) -> Result<f64>,
) -> Result<f64> {
    let ball = BallSpec {
        center: x0,
        radius: r,
        delta: 2.0 * grid.h(),
    };
    integrate_ball_polar(&ball, weight, shells_for(grid, r), CIRCLE_SAMPLES, g)
}

fn grad_sq(f: &Field, x: f64, y: f64) -> Result<f64> {
    let (gx, gy) = f.gradient(x, y)?;
    Ok(gx * gx + gy * gy)
}

/// `I(u, x0, r) = ∫_{B_r} |∇u|² |x - x0|^{2-N}`.
pub fn acf_integral(u: &Field, x0: (f64, f64), r: f64, dim: usize) -> Result<f64> {
    ball_integral(u.grid(), x0, r, BallWeight::Acf { dim }, |x, y| grad_sq(u, x, y))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub r_from: f64,
    pub r_to: f64,
    pub relative_drop: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AcfReport {
    pub center: (f64, f64),
    pub nu: f64,
    pub radii: Vec<f64>,
    /// `I_j(r)` (or `Ĩ_j(r)` for the perturbed scan) per radius.
    pub integrals: Vec<[f64; 3]>,
    /// `J_ν(r)` (or `J̃_{ν-ε}(r)`).
    pub j: Vec<f64>,
    pub violations: Vec<Violation>,
    /// Largest relative decrease between consecutive radii (0 if none).
    pub max_drop: f64,
    pub hypotheses_met: bool,
    pub max_triple_product: f64,
    /// Smallest scanned radius beyond which no violation occurs.
    pub r_bar: Option<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct AcfOptions {
    pub mono_tol: f64,
    /// Largest admissible `u₁u₂u₃` on the scanned ball (components must
    /// also be nonnegative there).
    pub seg_tol: f64,
    pub dim: usize,
}

impl Default for AcfOptions {
    fn default() -> Self {
        AcfOptions {
            mono_tol: MONO_TOL,
            seg_tol: 0.0,
            dim: 2,
        }
    }
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(SegError::InvalidArgument("radii must be positive".into()));
    }
    if radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(SegError::InvalidArgument("radii must be strictly increasing".into()));
    }
    Ok(())
}

/// Largest `u₁u₂u₃` and smallest component value on the closed ball.
fn ball_extremes(u: &[Field; 3], x0: (f64, f64), r: f64) -> (f64, f64) {
    let g = u[0].grid();
    let mut out = (0.0, f64::INFINITY);
    for k in 0..g.len() {
        let (x, y) = g.coords(k);
        if g.kind(k).is_active() && (x - x0.0).powi(2) + (y - x0.1).powi(2) <= r * r {
            let v = [u[0].values()[k], u[1].values()[k], u[2].values()[k]];
            out.0 = f64::max(out.0, v[0] * v[1] * v[2]);
            out.1 = out.1.min(v[0]).min(v[1]).min(v[2]);
        }
    }
    out
}

fn hypotheses(u: &[Field; 3], x0: (f64, f64), r: f64, seg_tol: f64) -> (bool, f64) {
    let (prod, min) = ball_extremes(u, x0, r);
    let scale = u.iter().map(Field::max_abs).fold(0.0, f64::max);
    (prod <= seg_tol && min >= -NEGATIVITY_TOL * scale, prod)
}

fn assemble(
    x0: (f64, f64),
    nu_eff: f64,
    nu: f64,
    radii: &[f64],
    integrals: Vec<[f64; 3]>,
    opts: &AcfOptions,
    (hypotheses_met, max_prod): (bool, f64),
) -> AcfReport {
    let j: Vec<f64> = radii
        .iter()
        .zip(&integrals)
        .map(|(r, i)| r.powf(-2.0 * nu_eff) * i[0] * i[1] * i[2])
        .collect();
    let mut violations = Vec::new();
    let mut max_drop: f64 = 0.0;
    let mut last_bad = None;
    for q in 0..j.len().saturating_sub(1) {
        if j[q] > 0.0 && j[q + 1] < j[q] {
            let drop = (j[q] - j[q + 1]) / j[q];
            max_drop = max_drop.max(drop);
            if drop > opts.mono_tol {
                violations.push(Violation {
                    r_from: radii[q],
                    r_to: radii[q + 1],
                    relative_drop: drop,
                });
                last_bad = Some(q + 1);
            }
        }
    }
    let r_bar = match last_bad {
        None => radii.first().copied(),
        Some(q) => radii.get(q).copied().filter(|_| q + 1 < radii.len()),
    };
    AcfReport {
        center: x0,
        nu,
        radii: radii.to_vec(),
        integrals,
        j,
        violations,
        max_drop,
        hypotheses_met,
        max_triple_product: max_prod,
        r_bar,
    }
}

/// `J_ν(r) = r^{-2ν} Π_j I(u_j, x0, r)` over the given radii.
pub fn acf_scan(u: &[Field; 3], x0: (f64, f64), radii: &[f64], nu: f64, opts: &AcfOptions) -> Result<AcfReport> {
    check_radii(radii)?;
    let integrals = radii
        .par_iter()
        .map(|&r| -> Result<[f64; 3]> {
            Ok([
                acf_integral(&u[0], x0, r, opts.dim)?,
                acf_integral(&u[1], x0, r, opts.dim)?,
                acf_integral(&u[2], x0, r, opts.dim)?,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let hyp = hypotheses(u, x0, *radii.last().unwrap(), opts.seg_tol);
    Ok(assemble(x0, nu, nu, radii, integrals, opts, hyp))
}

/// `J̃_{ν-ε}(r) = r^{-2(ν-ε)} Π_j Ĩ_j(r)` with
/// `Ĩ_i = ∫_{B_r} (|∇u_i|² + β u_i² Π_{j≠i} u_j²) |x - x0|^{2-N}`.
pub fn acf_perturbed_scan(
    s: &TripletState,
    x0: (f64, f64),
    radii: &[f64],
    nu: f64,
    eps: f64,
    opts: &AcfOptions,
) -> Result<AcfReport> {
    check_radii(radii)?;
    let u = &s.u;
    let beta = s.beta;
    let grid = s.grid().clone();
    let integrals = radii
        .par_iter()
        .map(|&r| -> Result<[f64; 3]> {
            let mut out = [0.0; 3];
            for (i, o) in out.iter_mut().enumerate() {
                *o = ball_integral(&grid, x0, r, BallWeight::Acf { dim: opts.dim }, |x, y| {
                    let g2 = grad_sq(&u[i], x, y)?;
                    if beta == 0.0 {
                        return Ok(g2);
                    }
                    let p = u[0].interpolate(x, y)? * u[1].interpolate(x, y)? * u[2].interpolate(x, y)?;
                    Ok(g2 + beta * p * p)
                })?;
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    // the perturbed formula has no segregation hypothesis
    let hyp = hypotheses(u, x0, *radii.last().unwrap(), f64::INFINITY);
    Ok(assemble(x0, nu - eps, nu, radii, integrals, opts, hyp))
}

/// Samples of the three components on one circle.
#[derive(Clone, Debug, Serialize)]
pub struct CircleTrace {
    pub r: f64,
    pub samples: [Vec<f64>; 3],
    pub eps: f64,
}

pub fn circle_trace(u: &[Field; 3], x0: (f64, f64), r: f64, m: usize, eps: f64) -> Result<CircleTrace> {
    if m < 16 {
        return Err(SegError::InvalidArgument(format!("circle trace needs m >= 16, got {m}")));
    }
    let mut samples: [Vec<f64>; 3] = std::array::from_fn(|_| Vec::with_capacity(m));
    for q in 0..m {
        let th = (q as f64 + CIRCLE_OFFSET) * 2.0 * PI / m as f64;
        let (x, y) = (x0.0 + r * th.cos(), x0.1 + r * th.sin());
        for c in 0..3 {
            samples[c].push(u[c].interpolate(x, y)?);
        }
    }
    Ok(CircleTrace { r, samples, eps })
}

#[derive(Clone, Debug, Serialize)]
pub struct LambdaArcs {
    /// `+∞` is serialized as `null`.
    pub lambda: f64,
    pub arcs: Vec<CircleArc>,
}

/// Support `{u > ε}` of one sampled component as arcs (each sample stands
/// for an angular cell of width `2π/m`) and its eigenvalue `(π/L_max)²`.
pub fn lambda_arcs(samples: &[f64], eps: f64) -> LambdaArcs {
    let m = samples.len();
    let cell = 2.0 * PI / m as f64;
    let above: Vec<bool> = samples.iter().map(|&v| v > eps).collect();
    if above.iter().all(|&a| a) {
        return LambdaArcs {
            lambda: 0.0,
            arcs: Vec::new(),
        };
    }
    if !above.iter().any(|&a| a) {
        return LambdaArcs {
            lambda: f64::INFINITY,
            arcs: Vec::new(),
        };
    }
    // start scanning right after a gap so runs never wrap
    let start = above.iter().position(|&a| !a).unwrap();
    let mut arcs = Vec::new();
    let mut run: Option<(usize, usize)> = None;
    for step in 1..=m {
        let q = (start + step) % m;
        if above[q] {
            run = Some(match run {
                None => (step, 1),
                Some((s, n)) => (s, n + 1),
            });
        } else if let Some((s, n)) = run.take() {
            let first = (start + s) % m;
            arcs.push(CircleArc::from_start(first as f64 * cell, n as f64 * cell));
        }
    }
    let longest = arcs.iter().map(|a| a.length).fold(0.0, f64::max);
    LambdaArcs {
        lambda: (PI / longest).powi(2),
        arcs,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LowerBoundReport {
    pub r: f64,
    pub lhs: f64,
    pub ball_integral: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub rhs: f64,
    pub residual: f64,
    pub pass: bool,
}

/// `∫_{S_r} |∇f|² - (2γ(λ(f_{x0,r}))/r) ∫_{B_r} |∇f|²` in two dimensions.
pub fn acf_lower_bound_check(f: &Field, x0: (f64, f64), r: f64, eps: f64, check_tol: f64) -> Result<LowerBoundReport> {
    let lhs = circle_quadrature(x0, r, CIRCLE_SAMPLES, CIRCLE_OFFSET, |x, y, _| grad_sq(f, x, y))?;
    let ball = acf_integral(f, x0, r, 2)?;
    let zero = Field::zeros(f.grid().clone());
    let tr = circle_trace(&[f.clone(), zero.clone(), zero], x0, r, CIRCLE_SAMPLES, eps)?;
    let lambda = lambda_arcs(&tr.samples[0], eps).lambda;
    let gam = gamma(lambda, 2)?;
    let rhs = if ball == 0.0 { 0.0 } else { 2.0 * gam / r * ball };
    let residual = lhs - rhs;
    Ok(LowerBoundReport {
        r,
        lhs,
        ball_integral: ball,
        lambda,
        gamma: gam,
        rhs,
        residual,
        pass: residual >= -check_tol,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PohozaevMode {
    FiniteBeta,
    Limit,
}

#[derive(Clone, Debug, Serialize)]
pub struct PohozaevReport {
    pub r: f64,
    pub sphere_gradient: f64,
    pub sphere_interaction: f64,
    pub ball_gradient: f64,
    pub ball_interaction: f64,
    pub sphere_normal: f64,
    pub residual: f64,
}

/// Scaled defect of
/// `r∫_S(Σ|∇u_i|² + β Πu_j²) = (N-2)∫_B Σ|∇u_i|² + N∫_B β Πu_j² + 2r∫_S Σ(∂_ν u_i)²`
/// with `N = 2`; the limit mode drops the `β` terms.
pub fn pohozaev_residual(u: &[Field; 3], beta: f64, x0: (f64, f64), r: f64, mode: PohozaevMode) -> Result<PohozaevReport> {
    let dim = 2.0;
    let grid = u[0].grid().clone();
    let beta = match mode {
        PohozaevMode::FiniteBeta => beta,
        PohozaevMode::Limit => 0.0,
    };
    let product_sq = |x: f64, y: f64| -> Result<f64> {
        let p = u[0].interpolate(x, y)? * u[1].interpolate(x, y)? * u[2].interpolate(x, y)?;
        Ok(p * p)
    };
    let sphere_gradient = circle_quadrature(x0, r, CIRCLE_SAMPLES, CIRCLE_OFFSET, |x, y, _| {
        Ok(grad_sq(&u[0], x, y)? + grad_sq(&u[1], x, y)? + grad_sq(&u[2], x, y)?)
    })?;
    let sphere_normal = circle_quadrature(x0, r, CIRCLE_SAMPLES, CIRCLE_OFFSET, |x, y, th| {
        let (c, s) = (th.cos(), th.sin());
        let mut acc = 0.0;
        for f in u {
            let (gx, gy) = f.gradient(x, y)?;
            let dn = gx * c + gy * s;
            acc += dn * dn;
        }
        Ok(acc)
    })?;
    let (sphere_interaction, ball_interaction) = if beta == 0.0 {
        (0.0, 0.0)
    } else {
        (
            beta * circle_quadrature(x0, r, CIRCLE_SAMPLES, CIRCLE_OFFSET, |x, y, _| product_sq(x, y))?,
            beta * ball_integral(&grid, x0, r, BallWeight::Unit, product_sq)?,
        )
    };
    // (N - 2) vanishes in two dimensions; the term is kept for the report
    let ball_gradient = ball_integral(&grid, x0, r, BallWeight::Unit, |x, y| {
        Ok(grad_sq(&u[0], x, y)? + grad_sq(&u[1], x, y)? + grad_sq(&u[2], x, y)?)
    })?;
    let defect = r * (sphere_gradient + sphere_interaction)
        - (dim - 2.0) * ball_gradient
        - dim * ball_interaction
        - 2.0 * r * sphere_normal;
    let residual = defect.abs() / (r * sphere_gradient + 1e-300);
    Ok(PohozaevReport {
        r,
        sphere_gradient,
        sphere_interaction,
        ball_gradient,
        ball_interaction,
        sphere_normal,
        residual,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct HolderReport {
    pub alpha: f64,
    pub value: f64,
    pub argmax: Option<(usize, usize)>,
    /// 1 when all pairs were compared.
    pub stride: usize,
}

/// Node pairs compared exhaustively below this many region nodes.
pub const HOLDER_EXACT_LIMIT: usize = 4096;

/// `max |f(x) - f(y)| / |x - y|^α` over node pairs of the region; strided
/// subsampling with a seeded offset above [`HOLDER_EXACT_LIMIT`] nodes.
pub fn holder_seminorm(f: &Field, alpha: f64, region: impl Fn(usize) -> bool, seed: u64) -> Result<HolderReport> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(SegError::InvalidArgument(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let g = f.grid();
    let all: Vec<usize> = (0..g.len()).filter(|&k| g.kind(k).is_active() && region(k)).collect();
    if all.is_empty() {
        return Err(SegError::InvalidArgument("Hölder region is empty".into()));
    }
    let (nodes, stride) = if all.len() <= HOLDER_EXACT_LIMIT {
        (all, 1)
    } else {
        let stride = ((all.len() as f64 / HOLDER_EXACT_LIMIT as f64).sqrt().ceil() as usize).max(2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (oi, oj) = (rng.gen_range(0..stride), rng.gen_range(0..stride));
        let picked = all
            .into_iter()
            .filter(|&k| {
                let (i, j) = g.ij(k);
                i % stride == oi && j % stride == oj
            })
            .collect();
        (picked, stride)
    };
    let v = f.values();
    let pts: Vec<(f64, f64)> = nodes.iter().map(|&k| g.coords(k)).collect();
    // each row reduced in index order, rows combined in order
    let rows: Vec<(f64, Option<(usize, usize)>)> = (0..nodes.len())
        .into_par_iter()
        .map(|a| {
            let mut best = (0.0, None);
            for b in a + 1..nodes.len() {
                let d = ((pts[a].0 - pts[b].0).powi(2) + (pts[a].1 - pts[b].1).powi(2)).sqrt();
                let q = (v[nodes[a]] - v[nodes[b]]).abs() / d.powf(alpha);
                if q > best.0 {
                    best = (q, Some((nodes[a], nodes[b])));
                }
            }
            best
        })
        .collect();
    let mut best = (0.0, None);
    for r in rows {
        if r.0 > best.0 {
            best = r;
        }
    }
    Ok(HolderReport {
        alpha,
        value: best.0,
        argmax: best.1,
        stride,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OverlapReport {
    pub eps: f64,
    pub pair12: f64,
    pub pair13: f64,
    pub pair23: f64,
    pub triple: f64,
    /// Area where at least two components lie below `ε`.
    pub nodal: f64,
}

/// Areas of super-level overlaps, counted with the dual-cell weights.
pub fn overlap_measures(s: &TripletState, eps: f64) -> Result<OverlapReport> {
    overlap_of(&s.u, eps)
}

pub fn overlap_of(u: &[Field; 3], eps: f64) -> Result<OverlapReport> {
    if !(eps > 0.0) {
        return Err(SegError::InvalidArgument(format!("overlap threshold must be positive, got {eps}")));
    }
    let g = u[0].grid();
    let mut acc = [0.0; 5];
    for k in 0..g.len() {
        let w = g.node_weight(k);
        if w == 0.0 {
            continue;
        }
        let on = [u[0].values()[k] > eps, u[1].values()[k] > eps, u[2].values()[k] > eps];
        if on[0] && on[1] {
            acc[0] += w;
        }
        if on[0] && on[2] {
            acc[1] += w;
        }
        if on[1] && on[2] {
            acc[2] += w;
        }
        if on[0] && on[1] && on[2] {
            acc[3] += w;
        }
        if on.iter().filter(|&&b| !b).count() >= 2 {
            acc[4] += w;
        }
    }
    let a = g.cell_area();
    Ok(OverlapReport {
        eps,
        pair12: acc[0] * a,
        pair13: acc[1] * a,
        pair23: acc[2] * a,
        triple: acc[3] * a,
        nodal: acc[4] * a,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    pub applicable: bool,
    pub component: usize,
    /// `M = β min_{B_{R}} Π_{j≠i} u_j²` on the outermost ball.
    pub m: f64,
    /// Fit points `(depth·√M, ln sup_{B_ρ} u_i)`, depth = `R - ρ`.
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub pass: bool,
}

/// Least-squares slope of `ln sup_{B_ρ} u_i` against `(R - ρ)√M`, where
/// `R` is the largest radius. Decay at least as fast as `e^{-(R-ρ)√M/2}`
/// gives a slope at most `-1/2`.
pub fn decay_probe(
    u: &[Field; 3],
    beta: f64,
    i: usize,
    center: (f64, f64),
    radii: &[f64],
    fit_tol: f64,
) -> Result<DecayReport> {
    check_radii(radii)?;
    if i > 2 {
        return Err(SegError::InvalidArgument(format!("component index {i} out of range")));
    }
    let g = u[0].grid();
    let outer = *radii.last().unwrap();
    if g.distance_to_boundary(center.0, center.1) < outer {
        return Err(SegError::BallOutside {
            cx: center.0,
            cy: center.1,
            radius: outer,
            x: center.0 + outer,
            y: center.1,
        });
    }
    let others: Vec<usize> = (0..3).filter(|&c| c != i).collect();
    let in_ball = |k: usize, r: f64| {
        let (x, y) = g.coords(k);
        g.kind(k).is_active() && (x - center.0).powi(2) + (y - center.1).powi(2) <= r * r
    };
    let m = beta
        * (0..g.len())
            .filter(|&k| in_ball(k, outer))
            .map(|k| others.iter().map(|&c| u[c].values()[k].powi(2)).product::<f64>())
            .fold(f64::INFINITY, f64::min);
    let inapplicable = DecayReport {
        applicable: false,
        component: i + 1,
        m: if m.is_finite() { m } else { 0.0 },
        points: Vec::new(),
        slope: f64::NAN,
        pass: false,
    };
    if !(m > 0.0 && m.is_finite()) {
        return Ok(inapplicable);
    }
    let sm = m.sqrt();
    let mut points = Vec::new();
    for &rho in &radii[..radii.len() - 1] {
        let sup = (0..g.len())
            .filter(|&k| in_ball(k, rho))
            .map(|k| u[i].values()[k])
            .fold(0.0, f64::max);
        if sup > 0.0 && sup.is_finite() {
            points.push(((outer - rho) * sm, sup.ln()));
        }
    }
    if points.len() < 2 {
        return Ok(inapplicable);
    }
    let slope = fit_slope(&points);
    Ok(DecayReport {
        applicable: true,
        component: i + 1,
        m,
        points,
        slope,
        pass: slope <= -0.5 + fit_tol,
    })
}

pub fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

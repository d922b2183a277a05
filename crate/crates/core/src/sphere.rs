//! Characteristic exponents, arc eigenvalues on the unit circle and an
//! upper-bound search for the optimal overlapping-partition constant
//! `α_{k,2}`.
//!
//! A support on the circle is either the full circle or a union of arcs. For
//! a union of disjoint arcs the first Dirichlet eigenvalue of the
//! Laplace–Beltrami operator is that of its longest arc, `(π / L_max)²`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Result, SegError};
use crate::grid::wrap_angle;

const TWO_PI: f64 = 2.0 * PI;

/// Angular slack for half-open arc membership.
const ANGLE_EPS: f64 = 1e-9;

/// `γ(t) = sqrt(((N-2)/2)² + t) - (N-2)/2`.
pub fn gamma(t: f64, dim: usize) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(SegError::InvalidArgument(format!("gamma needs t >= 0, got {t}")));
    }
    if dim < 2 {
        return Err(SegError::InvalidArgument(format!("gamma needs N >= 2, got {dim}")));
    }
    if t.is_infinite() {
        return Ok(f64::INFINITY);
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let a = 0.5 * (dim as f64 - 2.0);
    // rationalized to avoid cancellation for small t
    Ok(t / ((a * a + t).sqrt() + a))
}

/// Regularized kernel `φ_δ(r)`: `(N/2) δ^{2-N} + ((2-N)/2) δ^{-N} r²` on
/// `[0, δ]`, `r^{2-N}` beyond. Only defined for `N >= 3`.
pub fn phi_delta(r: f64, delta: f64, dim: usize) -> Result<f64> {
    if dim == 2 {
        return Err(SegError::InvalidArgument(
            "phi_delta is defined for N >= 3; use the unit weight in two dimensions".into(),
        ));
    }
    if dim < 2 {
        return Err(SegError::InvalidArgument(format!("phi_delta needs N >= 3, got {dim}")));
    }
    if !(r >= 0.0) || !(delta > 0.0) {
        return Err(SegError::InvalidArgument(format!(
            "phi_delta needs r >= 0 and delta > 0, got r={r} delta={delta}"
        )));
    }
    let n = dim as f64;
    if r <= delta {
        Ok(0.5 * n * delta.powf(2.0 - n) + 0.5 * (2.0 - n) * delta.powf(-n) * r * r)
    } else {
        Ok(r.powf(2.0 - n))
    }
}

/// Arc of the unit circle given by its midpoint angle and angular length.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Arc {
    pub center: f64,
    pub length: f64,
}

impl Arc {
    pub fn from_start(start: f64, length: f64) -> Self {
        Arc {
            center: wrap_angle(start + 0.5 * length),
            length,
        }
    }

    pub fn start(&self) -> f64 {
        wrap_angle(self.center - 0.5 * self.length)
    }

    /// Half-open membership `θ ∈ [start, start + length)`.
    pub fn contains(&self, theta: f64) -> bool {
        let mut d = (theta - self.start()).rem_euclid(TWO_PI);
        if d > TWO_PI - ANGLE_EPS {
            d = 0.0;
        }
        d < self.length - ANGLE_EPS
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", content = "arcs", rename_all = "snake_case")]
pub enum Support {
    FullCircle,
    Arcs(Vec<Arc>),
}

impl Support {
    pub fn contains(&self, theta: f64) -> bool {
        match self {
            Support::FullCircle => true,
            Support::Arcs(arcs) => arcs.iter().any(|a| a.contains(theta)),
        }
    }

    /// Merges overlapping or touching arcs; a union covering the circle
    /// becomes `FullCircle`.
    pub fn normalized(&self) -> Support {
        let arcs = match self {
            Support::FullCircle => return Support::FullCircle,
            Support::Arcs(a) => a,
        };
        let mut iv: Vec<(f64, f64)> = arcs
            .iter()
            .filter(|a| a.length > 0.0)
            .map(|a| {
                if a.length >= TWO_PI {
                    (0.0, TWO_PI)
                } else {
                    let s = a.start();
                    (s, s + a.length)
                }
            })
            .collect();
        if iv.is_empty() {
            return Support::Arcs(Vec::new());
        }
        // unroll wrapping intervals into [0, 2π) pieces
        let mut pieces = Vec::new();
        for (s, e) in iv.drain(..) {
            if e > TWO_PI {
                pieces.push((s, TWO_PI));
                pieces.push((0.0, e - TWO_PI));
            } else {
                pieces.push((s, e));
            }
        }
        pieces.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (s, e) in pieces {
            match merged.last_mut() {
                Some(last) if s <= last.1 + ANGLE_EPS => last.1 = last.1.max(e),
                _ => merged.push((s, e)),
            }
        }
        if merged.len() == 1 && merged[0].0 <= ANGLE_EPS && merged[0].1 >= TWO_PI - ANGLE_EPS {
            return Support::FullCircle;
        }
        // glue the piece ending at 2π to the one starting at 0
        if merged.len() > 1 && merged[0].0 <= ANGLE_EPS && merged.last().unwrap().1 >= TWO_PI - ANGLE_EPS {
            let first = merged.remove(0);
            let last = merged.last_mut().unwrap();
            last.1 = TWO_PI + first.1;
        }
        Support::Arcs(merged.into_iter().map(|(s, e)| Arc::from_start(s, e - s)).collect())
    }

    pub fn longest_arc(&self) -> Option<f64> {
        match self.normalized() {
            Support::FullCircle => Some(TWO_PI),
            Support::Arcs(a) => a.iter().map(|a| a.length).reduce(f64::max),
        }
    }

    pub fn rotated(&self, by: f64) -> Support {
        match self {
            Support::FullCircle => Support::FullCircle,
            Support::Arcs(a) => Support::Arcs(
                a.iter()
                    .map(|a| Arc {
                        center: wrap_angle(a.center + by),
                        length: a.length,
                    })
                    .collect(),
            ),
        }
    }
}

/// First Dirichlet eigenvalue of the Laplace–Beltrami operator on a support
/// of the unit circle: 0 on the full circle, `(π/L_max)²` on a union of
/// arcs, `+∞` on the empty set.
pub fn arc_lambda(support: &Support) -> f64 {
    match support.normalized() {
        Support::FullCircle => 0.0,
        Support::Arcs(arcs) => match arcs.iter().map(|a| a.length).reduce(f64::max) {
            None => f64::INFINITY,
            Some(l) => (PI / l).powi(2),
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArcConfig {
    pub components: Vec<Support>,
}

impl ArcConfig {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// Midpoint of the first gap between arc endpoints that lies in every
    /// support. Coverage is constant between consecutive endpoints, so this
    /// test is exact; common overlaps shorter than the membership slack are
    /// ignored.
    pub fn violating_angle(&self) -> Option<f64> {
        let mut cuts = vec![0.0];
        for c in &self.components {
            if let Support::Arcs(arcs) = c {
                for a in arcs {
                    cuts.push(a.start());
                    cuts.push(wrap_angle(a.start() + a.length));
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.push(TWO_PI);
        cuts.windows(2)
            .filter(|w| w[1] - w[0] > 2.0 * ANGLE_EPS)
            .map(|w| 0.5 * (w[0] + w[1]))
            .find(|&th| self.components.iter().all(|c| c.contains(th)))
    }

    pub fn check_feasible(&self) -> Result<()> {
        match self.violating_angle() {
            None => Ok(()),
            Some(angle) => Err(SegError::Infeasible { angle }),
        }
    }

    pub fn rotated(&self, by: f64) -> ArcConfig {
        ArcConfig {
            components: self.components.iter().map(|c| c.rotated(by)).collect(),
        }
    }

    fn max_arcs(&self) -> usize {
        self.components
            .iter()
            .map(|c| match c {
                Support::FullCircle => 1,
                Support::Arcs(a) => a.len(),
            })
            .max()
            .unwrap_or(0)
    }
}

/// Objective `Σ_j γ(λ(support_j))` in two dimensions.
pub fn config_value(config: &ArcConfig) -> Result<f64> {
    config.check_feasible()?;
    let mut total = 0.0;
    for c in &config.components {
        total += gamma(arc_lambda(c), 2)?;
    }
    Ok(total)
}

/// `x₁⁺, x₁⁻` on two disjoint half circles, full circle for the others.
pub fn halfcap_config(k: usize) -> ArcConfig {
    let mut components = vec![
        Support::Arcs(vec![Arc::from_start(0.0, PI)]),
        Support::Arcs(vec![Arc::from_start(PI, PI)]),
    ];
    components.extend((2..k).map(|_| Support::FullCircle));
    ArcConfig { components }
}

/// `k` arcs of length `2π(k-1)/k`, consecutive ones offset by `2π/k`.
pub fn symmetric_config(k: usize) -> ArcConfig {
    let len = TWO_PI * (k as f64 - 1.0) / k as f64;
    ArcConfig {
        components: (0..k)
            .map(|j| Support::Arcs(vec![Arc::from_start(TWO_PI * j as f64 / k as f64, len)]))
            .collect(),
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SearchOptions {
    /// Number of cells of the angular lattice used by the coarse grid.
    pub lattice: usize,
    pub refine_iterations: usize,
    pub max_arcs: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            lattice: 36,
            refine_iterations: 20,
            max_arcs: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceRow {
    pub phase: &'static str,
    pub value: f64,
    pub config: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SearchResult {
    pub k: usize,
    pub best_value: f64,
    pub best: ArcConfig,
    pub trace: Vec<TraceRow>,
    /// Set when the enumeration budget ran out before the grid was covered.
    pub exhausted: bool,
}

/// Upper bound on `α_{k,2}`: seeded with the two explicit competitors,
/// followed by a branch-and-bound sweep over single-arc/full-circle
/// configurations with endpoints on the angular lattice and a coordinate
/// descent on the arc endpoints.
pub fn search_alpha(k: usize, opts: SearchOptions) -> Result<SearchResult> {
    if k < 2 {
        return Err(SegError::InvalidArgument(format!("search_alpha needs k >= 2, got {k}")));
    }
    if opts.lattice < 4 {
        return Err(SegError::InvalidArgument("lattice needs at least 4 cells".into()));
    }
    let mut trace = Vec::new();
    let mut best: Option<(f64, ArcConfig)> = None;
    for (name, seed) in [("seed", halfcap_config(k)), ("seed", symmetric_config(k))] {
        let v = config_value(&seed)?;
        trace.push(TraceRow {
            phase: name,
            value: v,
            config: describe(&seed),
        });
        if best.as_ref().is_none_or(|(b, c)| less(v, &seed, *b, c)) {
            best = Some((v, seed));
        }
    }
    let (mut best_value, mut best_config) = best.expect("seeds");

    let mut lattice = LatticeSearch::new(k, opts.lattice, best_value);
    lattice.run();
    if let Some(cfg) = lattice.best_config() {
        let v = config_value(&cfg)?;
        if less(v, &cfg, best_value, &best_config) {
            trace.push(TraceRow {
                phase: "grid",
                value: v,
                config: describe(&cfg),
            });
            best_value = v;
            best_config = cfg;
        }
    }

    let mut step = TWO_PI / opts.lattice as f64 / 2.0;
    for _ in 0..opts.refine_iterations {
        match refine_pass(&best_config, best_value, step, opts.max_arcs) {
            Some((v, cfg)) => {
                trace.push(TraceRow {
                    phase: "refine",
                    value: v,
                    config: describe(&cfg),
                });
                best_value = v;
                best_config = cfg;
            }
            None => step *= 0.5,
        }
    }
    debug_assert!(best_config.max_arcs() <= opts.max_arcs.max(1));
    Ok(SearchResult {
        k,
        best_value,
        best: best_config,
        trace,
        exhausted: lattice.exhausted,
    })
}

/// Candidates are ordered by value, then by their textual description.
fn less(v: f64, c: &ArcConfig, bv: f64, bc: &ArcConfig) -> bool {
    v < bv - 1e-15 || ((v - bv).abs() <= 1e-15 && describe(c) < describe(bc))
}

pub fn describe(c: &ArcConfig) -> String {
    c.components
        .iter()
        .map(|s| match s {
            Support::FullCircle => "full".to_string(),
            Support::Arcs(a) => a
                .iter()
                .map(|a| format!("[{:.6}+{:.6}]", a.start(), a.length))
                .collect::<Vec<_>>()
                .join("u"),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Coarse sweep over lattice configurations: each component is the full
/// circle or one arc of `l` consecutive cells. Components are enumerated in
/// non-decreasing order of their objective contribution (relabeling
/// invariance) and the first one is anchored at cell 0 (rotation
/// invariance).
struct LatticeSearch {
    k: usize,
    n: usize,
    /// (value, start, length); length == n means the full circle.
    options: Vec<(f64, usize, usize)>,
    cover: Vec<u16>,
    chosen: Vec<(usize, usize)>,
    best_value: f64,
    best: Option<Vec<(usize, usize)>>,
    visited: u64,
    budget: u64,
    exhausted: bool,
}

impl LatticeSearch {
    fn new(k: usize, n: usize, incumbent: f64) -> Self {
        let mut options = vec![(0.0, 0, n)];
        for l in (1..n).rev() {
            // γ(λ) = π / L with L = 2π l / n
            let v = n as f64 / (2.0 * l as f64);
            for s in 0..n {
                options.push((v, s, l));
            }
        }
        LatticeSearch {
            k,
            n,
            options,
            cover: vec![0; n],
            chosen: Vec::with_capacity(k),
            best_value: incumbent,
            best: None,
            visited: 0,
            budget: 2_000_000_000,
            exhausted: false,
        }
    }

    fn run(&mut self) {
        self.recurse(0, 0.0, 0);
    }

    fn add(&mut self, s: usize, l: usize, delta: i32) {
        if l == self.n {
            for c in self.cover.iter_mut() {
                *c = (*c as i32 + delta) as u16;
            }
        } else {
            for q in 0..l {
                let c = &mut self.cover[(s + q) % self.n];
                *c = (*c as i32 + delta) as u16;
            }
        }
    }

    fn recurse(&mut self, depth: usize, partial: f64, first_option: usize) {
        if self.exhausted {
            return;
        }
        for oi in first_option..self.options.len() {
            let (v, s, l) = self.options[oi];
            if partial + v >= self.best_value - 1e-12 {
                // options are sorted by value
                break;
            }
            if depth == 0 && s != 0 {
                continue;
            }
            self.visited += 1;
            if self.visited > self.budget {
                self.exhausted = true;
                return;
            }
            self.add(s, l, 1);
            self.chosen.push((s, l));
            if depth + 1 == self.k {
                if self.cover.iter().all(|&c| (c as usize) < self.k) {
                    self.best_value = partial + v;
                    self.best = Some(self.chosen.clone());
                }
            } else {
                // next component: same value class or later
                let next = self.options.partition_point(|o| o.0 < v);
                self.recurse(depth + 1, partial + v, next);
            }
            self.chosen.pop();
            self.add(s, l, -1);
        }
    }

    fn best_config(&self) -> Option<ArcConfig> {
        let cell = TWO_PI / self.n as f64;
        self.best.as_ref().map(|chosen| ArcConfig {
            components: chosen
                .iter()
                .map(|&(s, l)| {
                    if l == self.n {
                        Support::FullCircle
                    } else {
                        Support::Arcs(vec![Arc::from_start(s as f64 * cell, l as f64 * cell)])
                    }
                })
                .collect(),
        })
    }
}

/// One pass of coordinate descent over arc midpoints and lengths, plus
/// insertion of extra arcs up to `max_arcs`. Returns the first strict
/// improvement.
fn refine_pass(config: &ArcConfig, value: f64, step: f64, max_arcs: usize) -> Option<(f64, ArcConfig)> {
    let try_candidate = |cand: ArcConfig| -> Option<(f64, ArcConfig)> {
        match config_value(&cand) {
            Ok(v) if v < value - 1e-15 => Some((v, cand)),
            _ => None,
        }
    };
    for (ci, comp) in config.components.iter().enumerate() {
        let arcs = match comp {
            Support::FullCircle => continue,
            Support::Arcs(a) => a,
        };
        for ai in 0..arcs.len() {
            for (dc, dl) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step), (0.5 * step, step), (-0.5 * step, step)] {
                let mut a = arcs[ai];
                a.center = wrap_angle(a.center + dc);
                a.length += dl;
                if !(a.length > 0.0 && a.length < TWO_PI) {
                    continue;
                }
                let mut cand = config.clone();
                if let Support::Arcs(v) = &mut cand.components[ci] {
                    v[ai] = a;
                }
                if let Some(hit) = try_candidate(cand) {
                    return Some(hit);
                }
            }
        }
        if arcs.len() < max_arcs {
            // an extra arc never lowers λ of the union, so this move can only
            // matter for configurations whose longest arc is being replaced
            for q in 0..8 {
                let mut cand = config.clone();
                if let Support::Arcs(v) = &mut cand.components[ci] {
                    v.push(Arc {
                        center: q as f64 * TWO_PI / 8.0,
                        length: step,
                    });
                }
                if let Some(hit) = try_candidate(cand) {
                    return Some(hit);
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_examples() {
        for n in 2..=10 {
            assert_eq!(gamma(0.0, n).unwrap(), 0.0);
            assert!((gamma((n - 1) as f64, n).unwrap() - 1.0).abs() < 1e-12);
        }
        assert!((gamma(9.0 / 16.0, 2).unwrap() - 0.75).abs() < 1e-15);
        assert!(gamma(-1.0, 2).is_err());
    }

    #[test]
    fn gamma_identity_and_monotonicity() {
        for n in 2..=6 {
            let mut prev = -1.0;
            for q in 0..200 {
                let t = q as f64 * 0.37;
                let g = gamma(t, n).unwrap();
                let lhs = g * g + (n as f64 - 2.0) * g;
                assert!((lhs - t).abs() <= 1e-12 * t.max(1.0), "N={n} t={t}");
                assert!(g > prev);
                prev = g;
            }
        }
    }

    #[test]
    fn arc_lambda_examples() {
        let half = Support::Arcs(vec![Arc::from_start(0.3, PI)]);
        assert!((arc_lambda(&half) - 1.0).abs() < 1e-15);
        let big = Support::Arcs(vec![Arc::from_start(1.0, 4.0 * PI / 3.0)]);
        assert!((arc_lambda(&big) - 9.0 / 16.0).abs() < 1e-15);
        assert_eq!(arc_lambda(&Support::FullCircle), 0.0);
        assert_eq!(arc_lambda(&Support::Arcs(vec![])), f64::INFINITY);
        // overlapping arcs merge before λ is taken
        let split = Support::Arcs(vec![Arc::from_start(0.0, 2.0), Arc::from_start(1.5, 1.0)]);
        assert!((arc_lambda(&split) - (PI / 2.5).powi(2)).abs() < 1e-12);
        // arcs covering the whole circle become the full circle
        let cover = Support::Arcs(vec![Arc::from_start(0.0, 4.0), Arc::from_start(3.5, 3.0)]);
        assert_eq!(arc_lambda(&cover), 0.0);
        // wrap-around merge: [5.5, 6.5) and [0.1, 0.6) overlap across 2π
        let wrap = Support::Arcs(vec![Arc::from_start(5.5, 1.0), Arc::from_start(0.1, 0.5)]);
        let l = wrap.longest_arc().unwrap();
        assert!((l - (TWO_PI + 0.6 - 5.5)).abs() < 1e-12, "{l}");
    }

    #[test]
    fn config_value_examples() {
        assert_eq!(config_value(&halfcap_config(3)).unwrap(), 2.0);
        assert!((config_value(&symmetric_config(3)).unwrap() - 2.25).abs() < 1e-12);
        assert!((config_value(&symmetric_config(4)).unwrap() - 8.0 / 3.0).abs() < 1e-12);
        let bad = ArcConfig {
            components: vec![Support::FullCircle, Support::FullCircle, Support::Arcs(vec![Arc::from_start(1.0, 0.5)])],
        };
        match config_value(&bad) {
            Err(SegError::Infeasible { angle }) => assert!((1.0..1.5).contains(&angle)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn config_value_invariant_under_rotation_and_relabeling() {
        let c = symmetric_config(3);
        let base = config_value(&c).unwrap();
        for q in 0..12 {
            let r = c.rotated(q as f64 * 0.523);
            assert!((config_value(&r).unwrap() - base).abs() < 1e-12);
        }
        let mut rev = c.clone();
        rev.components.reverse();
        assert!((config_value(&rev).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn phi_delta_examples() {
        for n in 3..=6 {
            let d = 0.3;
            let nf = n as f64;
            assert!((phi_delta(d, d, n).unwrap() - d.powf(2.0 - nf)).abs() < 1e-12 * d.powf(2.0 - nf));
            assert!((phi_delta(0.0, d, n).unwrap() - 0.5 * nf * d.powf(2.0 - nf)).abs() < 1e-12);
            // one-sided derivatives at δ, both equal to (2-N) δ^{1-N}
            let inner = (2.0 - nf) * d.powf(-nf) * d;
            let outer = (2.0 - nf) * d.powf(1.0 - nf);
            assert!((inner - outer).abs() < 1e-12 * outer.abs());
            let eps = 1e-7;
            let fd_in = (phi_delta(d, d, n).unwrap() - phi_delta(d - eps, d, n).unwrap()) / eps;
            let fd_out = (phi_delta(d + eps, d, n).unwrap() - phi_delta(d, d, n).unwrap()) / eps;
            assert!((fd_in - outer).abs() < 1e-4 * outer.abs());
            assert!((fd_out - outer).abs() < 1e-4 * outer.abs());
        }
        assert!(phi_delta(0.1, 0.2, 2).is_err());
    }

    #[test]
    fn phi_delta_radially_non_increasing() {
        let d = 0.2;
        for n in 3..=5 {
            let mut prev = f64::INFINITY;
            for q in 0..400 {
                let r = q as f64 * 0.002;
                let v = phi_delta(r, d, n).unwrap();
                assert!(v <= prev);
                if r > d {
                    assert_eq!(v, r.powf(2.0 - n as f64));
                }
                prev = v;
            }
        }
    }

    #[test]
    fn overlap_between_probe_angles_is_infeasible() {
        let c = ArcConfig {
            components: vec![
                Support::Arcs(vec![Arc::from_start(0.0, PI + 1e-3)]),
                Support::Arcs(vec![Arc::from_start(PI, PI)]),
            ],
        };
        let th = c.violating_angle().unwrap();
        assert!(th > PI && th < PI + 1e-3);
        assert!(config_value(&c).is_err());
    }

    #[test]
    fn search_two_components() {
        let r = search_alpha(2, SearchOptions::default()).unwrap();
        assert!((r.best_value - 2.0).abs() < 1e-6);
    }

    #[test]
    fn search_three_components_with_two_arcs() {
        let opts = SearchOptions {
            max_arcs: 2,
            ..SearchOptions::default()
        };
        let r = search_alpha(3, opts).unwrap();
        assert!(r.best_value <= 2.0 + 1e-6);
        assert!(r.best_value > 0.1);
    }
}

//! Uniform rectangular lattice with a domain mask, the 5-point Laplacian,
//! edge-based Dirichlet energy, bilinear interpolation and ball/circle
//! quadrature.
//!
//! Node `(i, j)` sits at `(ox + i*hx, oy + j*hy)` and is stored at index
//! `j*nx + i`. Cell `(ci, cj)` is the square with lower-left corner at node
//! `(ci, cj)`; a cell is *valid* when none of its four corners is exterior.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Result, SegError};
use crate::par::{chunked_max, chunked_sum};
use crate::sphere::phi_delta;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Interior,
    Boundary,
    Exterior,
}

impl NodeKind {
    pub fn is_active(self) -> bool {
        self != NodeKind::Exterior
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    /// Every node of the lattice is active; the outer ring is the boundary.
    Rectangle,
    /// Nodes with `|x - c| <= radius` are active.
    Disk { cx: f64, cy: f64, radius: f64 },
}

/// Radius of the disk preset, centered in the unit square.
pub const DISK_RADIUS: f64 = 0.45;

#[derive(Clone, Debug)]
pub struct Grid {
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    ox: f64,
    oy: f64,
    shape: Shape,
    mask: Vec<NodeKind>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
    /// Fraction of the dual cell `hx*hy` attributed to each node.
    node_weight: Vec<f64>,
    /// Weight of the edge `k -> k+1` (x direction).
    edge_wx: Vec<f64>,
    /// Weight of the edge `k -> k+nx` (y direction).
    edge_wy: Vec<f64>,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, hx: f64, hy: f64, ox: f64, oy: f64, shape: Shape) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(SegError::InvalidArgument(format!(
                "grid needs at least 3x3 nodes, got {nx}x{ny}"
            )));
        }
        if !(hx > 0.0 && hy > 0.0 && hx.is_finite() && hy.is_finite()) {
            return Err(SegError::InvalidArgument(format!(
                "spacings must be positive, got hx={hx} hy={hy}"
            )));
        }
        if !(ox.is_finite() && oy.is_finite()) {
            return Err(SegError::InvalidArgument("origin must be finite".into()));
        }
        let inside: Vec<bool> = (0..nx * ny)
            .map(|k| {
                let (i, j) = (k % nx, k / nx);
                match &shape {
                    Shape::Rectangle => true,
                    Shape::Disk { cx, cy, radius } => {
                        let x = ox + i as f64 * hx - cx;
                        let y = oy + j as f64 * hy - cy;
                        (x * x + y * y).sqrt() <= radius * (1.0 + 1e-12)
                    }
                }
            })
            .collect();
        let mut mask = vec![NodeKind::Exterior; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                if !inside[k] {
                    continue;
                }
                let on_edge = i == 0 || j == 0 || i == nx - 1 || j == ny - 1;
                let nbrs_inside =
                    !on_edge && inside[k - 1] && inside[k + 1] && inside[k - nx] && inside[k + nx];
                mask[k] = if nbrs_inside {
                    NodeKind::Interior
                } else {
                    NodeKind::Boundary
                };
            }
        }
        let interior: Vec<usize> = (0..nx * ny).filter(|&k| mask[k] == NodeKind::Interior).collect();
        let boundary: Vec<usize> = (0..nx * ny).filter(|&k| mask[k] == NodeKind::Boundary).collect();
        if interior.is_empty() {
            return Err(SegError::InvalidArgument("domain has no interior nodes".into()));
        }

        let mut grid = Grid {
            nx,
            ny,
            hx,
            hy,
            ox,
            oy,
            shape,
            mask,
            interior,
            boundary,
            node_weight: Vec::new(),
            edge_wx: Vec::new(),
            edge_wy: Vec::new(),
        };
        grid.build_weights();
        Ok(grid)
    }

    pub fn unit_square(n: usize) -> Result<Self> {
        let h = 1.0 / (n.max(2) - 1) as f64;
        Grid::new(n, n, h, h, 0.0, 0.0, Shape::Rectangle)
    }

    /// Disk of the given radius centered at (0.5, 0.5), carved out of the
    /// unit-square lattice with `n` nodes per side.
    pub fn disk(n: usize, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius <= 0.5) {
            return Err(SegError::InvalidArgument(format!(
                "disk radius must lie in (0, 0.5], got {radius}"
            )));
        }
        let h = 1.0 / (n.max(2) - 1) as f64;
        Grid::new(
            n,
            n,
            h,
            h,
            0.0,
            0.0,
            Shape::Disk {
                cx: 0.5,
                cy: 0.5,
                radius,
            },
        )
    }

    fn build_weights(&mut self) {
        let (nx, ny) = (self.nx, self.ny);
        let mut node_weight = vec![0.0; nx * ny];
        let mut wx = vec![0.0; nx * ny];
        let mut wy = vec![0.0; nx * ny];
        let cell_ok = |g: &Grid, ci: isize, cj: isize| -> bool {
            ci >= 0 && cj >= 0 && (ci as usize) < nx - 1 && (cj as usize) < ny - 1 && g.cell_valid(ci as usize, cj as usize)
        };
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                let kind = self.mask[k];
                if kind == NodeKind::Exterior {
                    continue;
                }
                let (ii, jj) = (i as isize, j as isize);
                node_weight[k] = if kind == NodeKind::Interior {
                    1.0
                } else {
                    let cells = [(ii - 1, jj - 1), (ii, jj - 1), (ii - 1, jj), (ii, jj)];
                    cells.iter().filter(|&&(a, b)| cell_ok(self, a, b)).count() as f64 / 4.0
                };
                if i + 1 < nx && self.mask[k + 1].is_active() {
                    wx[k] = if kind == NodeKind::Interior || self.mask[k + 1] == NodeKind::Interior {
                        1.0
                    } else {
                        let cells = [(ii, jj - 1), (ii, jj)];
                        cells.iter().filter(|&&(a, b)| cell_ok(self, a, b)).count() as f64 / 2.0
                    };
                }
                if j + 1 < ny && self.mask[k + nx].is_active() {
                    wy[k] = if kind == NodeKind::Interior || self.mask[k + nx] == NodeKind::Interior {
                        1.0
                    } else {
                        let cells = [(ii - 1, jj), (ii, jj)];
                        cells.iter().filter(|&&(a, b)| cell_ok(self, a, b)).count() as f64 / 2.0
                    };
                }
            }
        }
        self.node_weight = node_weight;
        self.edge_wx = wx;
        self.edge_wy = wy;
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn hx(&self) -> f64 {
        self.hx
    }
    pub fn hy(&self) -> f64 {
        self.hy
    }
    pub fn origin(&self) -> (f64, f64) {
        (self.ox, self.oy)
    }
    pub fn shape(&self) -> &Shape {
        &self.shape
    }
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }
    /// Largest of the two spacings.
    pub fn h(&self) -> f64 {
        self.hx.max(self.hy)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
    #[inline]
    pub fn ij(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }
    #[inline]
    pub fn coords(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.ij(k);
        (self.ox + i as f64 * self.hx, self.oy + j as f64 * self.hy)
    }
    #[inline]
    pub fn kind(&self, k: usize) -> NodeKind {
        self.mask[k]
    }
    pub fn mask(&self) -> &[NodeKind] {
        &self.mask
    }
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }
    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary
    }
    /// Dual-cell weight of node `k` (1 for interior nodes).
    pub fn node_weight(&self, k: usize) -> f64 {
        self.node_weight[k]
    }
    pub fn edge_weights(&self, k: usize) -> (f64, f64) {
        (self.edge_wx[k], self.edge_wy[k])
    }

    #[inline]
    pub fn cell_valid(&self, ci: usize, cj: usize) -> bool {
        let k = self.index(ci, cj);
        self.mask[k].is_active()
            && self.mask[k + 1].is_active()
            && self.mask[k + self.nx].is_active()
            && self.mask[k + self.nx + 1].is_active()
    }

    pub fn cell_center(&self, ci: usize, cj: usize) -> (f64, f64) {
        (
            self.ox + (ci as f64 + 0.5) * self.hx,
            self.oy + (cj as f64 + 0.5) * self.hy,
        )
    }

    /// Area of the discretized domain under the node quadrature.
    pub fn area(&self) -> f64 {
        self.node_weight.iter().sum::<f64>() * self.cell_area()
    }

    /// Geometric center of the domain.
    pub fn center(&self) -> (f64, f64) {
        match self.shape {
            Shape::Disk { cx, cy, .. } => (cx, cy),
            Shape::Rectangle => (
                self.ox + 0.5 * (self.nx - 1) as f64 * self.hx,
                self.oy + 0.5 * (self.ny - 1) as f64 * self.hy,
            ),
        }
    }

    /// Angle in `[0, 2π)` that parametrizes the boundary point reached by
    /// the ray from the domain center through `(x, y)`.
    ///
    /// On the disk this is the polar angle. On the rectangle the perimeter
    /// is parametrized by arc length, starting at the midpoint of the right
    /// side and running counterclockwise, mapped affinely onto `[0, 2π)`.
    pub fn boundary_angle(&self, x: f64, y: f64) -> f64 {
        let (cx, cy) = self.center();
        let (dx, dy) = (x - cx, y - cy);
        match self.shape {
            Shape::Disk { .. } => wrap_angle(dy.atan2(dx)),
            Shape::Rectangle => {
                let a = 0.5 * (self.nx - 1) as f64 * self.hx;
                let b = 0.5 * (self.ny - 1) as f64 * self.hy;
                if dx == 0.0 && dy == 0.0 {
                    return 0.0;
                }
                // exit point of the ray on the rectangle [-a,a]x[-b,b]
                let t = (a / dx.abs()).min(b / dy.abs());
                let (px, py) = (dx * t, dy * t);
                let perimeter = 4.0 * (a + b);
                // arc length counterclockwise from (a, 0)
                let s = if (px - a).abs() <= 1e-12 * a && py >= 0.0 {
                    py
                } else if (py - b).abs() <= 1e-12 * b {
                    b + (a - px)
                } else if (px + a).abs() <= 1e-12 * a {
                    b + 2.0 * a + (b - py)
                } else if (py + b).abs() <= 1e-12 * b {
                    3.0 * b + 2.0 * a + (px + a)
                } else {
                    // right side, below the axis
                    4.0 * b + 4.0 * a + py
                };
                wrap_angle(2.0 * PI * s / perimeter)
            }
        }
    }

    /// Ratio of the distance from the domain center to `(x, y)` and the
    /// distance from the center to the boundary along the same ray.
    pub fn radial_fraction(&self, x: f64, y: f64) -> f64 {
        let (cx, cy) = self.center();
        let (dx, dy) = (x - cx, y - cy);
        match self.shape {
            Shape::Disk { radius, .. } => (dx * dx + dy * dy).sqrt() / radius,
            Shape::Rectangle => {
                let a = 0.5 * (self.nx - 1) as f64 * self.hx;
                let b = 0.5 * (self.ny - 1) as f64 * self.hy;
                (dx.abs() / a).max(dy.abs() / b)
            }
        }
    }

    /// Distance from `(x, y)` to the nearest boundary of the continuous
    /// domain (circle or rectangle sides).
    pub fn distance_to_boundary(&self, x: f64, y: f64) -> f64 {
        match self.shape {
            Shape::Disk { cx, cy, radius } => radius - ((x - cx).powi(2) + (y - cy).powi(2)).sqrt(),
            Shape::Rectangle => {
                let x1 = self.ox + (self.nx - 1) as f64 * self.hx;
                let y1 = self.oy + (self.ny - 1) as f64 * self.hy;
                (x - self.ox).min(x1 - x).min(y - self.oy).min(y1 - y)
            }
        }
    }

    /// Locates the cell containing `(x, y)` and the local coordinates in it.
    fn locate(&self, x: f64, y: f64) -> Option<(usize, usize, f64, f64)> {
        let sx = (x - self.ox) / self.hx;
        let sy = (y - self.oy) / self.hy;
        let eps = 1e-9;
        if !(sx >= -eps && sy >= -eps && sx <= (self.nx - 1) as f64 + eps && sy <= (self.ny - 1) as f64 + eps) {
            return None;
        }
        let ci = (sx.floor().max(0.0) as usize).min(self.nx - 2);
        let cj = (sy.floor().max(0.0) as usize).min(self.ny - 2);
        let s = (sx - ci as f64).clamp(0.0, 1.0);
        let t = (sy - cj as f64).clamp(0.0, 1.0);
        Some((ci, cj, s, t))
    }
}

/// Grids compare equal when lattice parameters and masks agree.
impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.nx() == other.nx()
            && self.ny() == other.ny()
            && self.hx().to_bits() == other.hx().to_bits()
            && self.hy().to_bits() == other.hy().to_bits()
            && self.origin() == other.origin()
            && self.mask() == other.mask()
    }
}

pub fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(2.0 * PI);
    if t >= 2.0 * PI {
        0.0
    } else {
        t
    }
}

/// One scalar density on a masked grid. Exterior values are exactly zero.
#[derive(Clone, Debug)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl Field {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Field {
            grid,
            values: vec![0.0; n],
        }
    }

    /// Samples `f` at every active node.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|k| {
                if grid.kind(k).is_active() {
                    let (x, y) = grid.coords(k);
                    f(x, y)
                } else {
                    0.0
                }
            })
            .collect();
        Field { grid, values }
    }

    pub fn from_values(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(SegError::InvalidArgument(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        let field = Field { grid, values };
        field.check_finite()?;
        if let Some(k) = (0..field.grid.len()).find(|&k| !field.grid.kind(k).is_active() && field.values[k] != 0.0) {
            let (i, j) = field.grid.ij(k);
            return Err(SegError::Invariant(format!(
                "exterior node ({i}, {j}) carries nonzero value {}",
                field.values[k]
            )));
        }
        Ok(field)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(k) => {
                let (i, j) = self.grid.ij(k);
                Err(SegError::NonFinite {
                    i,
                    j,
                    value: self.values[k],
                })
            }
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(k, &v)| if self.grid.kind(k).is_active() { f(v) } else { 0.0 })
            .collect();
        Field {
            grid: self.grid.clone(),
            values,
        }
    }

    pub fn scaled(&self, s: f64) -> Field {
        self.map(|v| s * v)
    }

    pub fn max(&self) -> f64 {
        self.active_values().fold(f64::NEG_INFINITY, f64::max)
    }
    pub fn min(&self) -> f64 {
        self.active_values().fold(f64::INFINITY, f64::min)
    }
    pub fn max_abs(&self) -> f64 {
        self.active_values().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn active_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(k, _)| self.grid.kind(*k).is_active())
            .map(|(_, &v)| v)
    }

    /// Bilinear interpolation from the enclosing cell.
    pub fn interpolate(&self, x: f64, y: f64) -> Result<f64> {
        let g = &*self.grid;
        let (ci, cj, s, t) = g.locate(x, y).ok_or(SegError::OutsideDomain { x, y })?;
        let k = g.index(ci, cj);
        let (f00, f10, f01, f11) = (
            self.values[k],
            self.values[k + 1],
            self.values[k + g.nx],
            self.values[k + g.nx + 1],
        );
        if g.cell_valid(ci, cj) {
            return Ok((1.0 - t) * ((1.0 - s) * f00 + s * f10) + t * ((1.0 - s) * f01 + s * f11));
        }
        // Partially exterior cell: only node- or edge-coincident points of
        // the active set are admissible.
        let active = |kk: usize| g.kind(kk).is_active();
        let on = |v: f64, w: f64| v == w;
        match (s, t) {
            (s, t) if on(t, 0.0) && active(k) && active(k + 1) => Ok((1.0 - s) * f00 + s * f10),
            (s, t) if on(t, 1.0) && active(k + g.nx) && active(k + g.nx + 1) => Ok((1.0 - s) * f01 + s * f11),
            (s, t) if on(s, 0.0) && active(k) && active(k + g.nx) => Ok((1.0 - t) * f00 + t * f01),
            (s, t) if on(s, 1.0) && active(k + 1) && active(k + g.nx + 1) => Ok((1.0 - t) * f10 + t * f11),
            _ => Err(SegError::OutsideDomain { x, y }),
        }
    }

    /// Gradient of the bilinear interpolant, evaluated in the enclosing cell.
    pub fn gradient(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        let g = &*self.grid;
        let (ci, cj, s, t) = g.locate(x, y).ok_or(SegError::OutsideDomain { x, y })?;
        if !g.cell_valid(ci, cj) {
            return Err(SegError::OutsideDomain { x, y });
        }
        let k = g.index(ci, cj);
        let (f00, f10, f01, f11) = (
            self.values[k],
            self.values[k + 1],
            self.values[k + g.nx],
            self.values[k + g.nx + 1],
        );
        let gx = ((1.0 - t) * (f10 - f00) + t * (f11 - f01)) / g.hx;
        let gy = ((1.0 - s) * (f01 - f00) + s * (f11 - f10)) / g.hy;
        Ok((gx, gy))
    }

    /// Value at the center of cell `(ci, cj)` (mean of the corners).
    pub fn cell_mean(&self, ci: usize, cj: usize) -> f64 {
        let g = &*self.grid;
        let k = g.index(ci, cj);
        0.25 * (self.values[k] + self.values[k + 1] + self.values[k + g.nx] + self.values[k + g.nx + 1])
    }

    /// `|∇f|²` at the center of cell `(ci, cj)` from the corner values.
    pub fn cell_grad_sq(&self, ci: usize, cj: usize) -> f64 {
        let g = &*self.grid;
        let k = g.index(ci, cj);
        let (f00, f10, f01, f11) = (
            self.values[k],
            self.values[k + 1],
            self.values[k + g.nx],
            self.values[k + g.nx + 1],
        );
        let gx = 0.5 * ((f10 - f00) + (f11 - f01)) / g.hx;
        let gy = 0.5 * ((f01 - f00) + (f11 - f10)) / g.hy;
        gx * gx + gy * gy
    }
}

/// 5-point Laplacian at interior nodes, zero elsewhere.
pub fn apply_laplacian(f: &Field) -> Result<Field> {
    f.check_finite()?;
    let g = f.grid();
    let (ihx2, ihy2) = (1.0 / (g.hx * g.hx), 1.0 / (g.hy * g.hy));
    let v = f.values();
    let mut out = vec![0.0; g.len()];
    for &k in g.interior_nodes() {
        out[k] = (v[k + 1] + v[k - 1] - 2.0 * v[k]) * ihx2 + (v[k + g.nx] + v[k - g.nx] - 2.0 * v[k]) * ihy2;
    }
    Ok(Field {
        grid: g.clone(),
        values: out,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionEnergy {
    pub value: f64,
    /// Set when the region selected no edge at all.
    pub empty_region: bool,
}

/// Discrete Dirichlet energy `Σ_e w_e (Δ_e f / h_e)² hx hy` over lattice
/// edges whose two endpoints satisfy `region`.
///
/// Edges touching an interior node carry weight 1; boundary-to-boundary
/// edges carry half the number of adjacent valid cells. With these weights
/// the gradient of the energy with respect to an interior value is exactly
/// `-2 hx hy` times the 5-point Laplacian, so the block solves in
/// [`crate::energy`] minimize this functional exactly.
pub fn dirichlet_energy(f: &Field, region: impl Fn(usize) -> bool + Sync) -> RegionEnergy {
    let g = f.grid();
    let v = f.values();
    let (ihx2, ihy2) = (1.0 / (g.hx * g.hx), 1.0 / (g.hy * g.hy));
    let edges = chunked_sum(g.len(), |k| {
        if !region(k) {
            return 0.0;
        }
        let (wx, wy) = g.edge_weights(k);
        let mut n = 0.0;
        if wx > 0.0 && region(k + 1) {
            n += 1.0;
        }
        if wy > 0.0 && region(k + g.nx) {
            n += 1.0;
        }
        n
    });
    let value = chunked_sum(g.len(), |k| {
        if !region(k) {
            return 0.0;
        }
        let (wx, wy) = g.edge_weights(k);
        let mut e = 0.0;
        if wx > 0.0 && region(k + 1) {
            let d = v[k + 1] - v[k];
            e += wx * d * d * ihx2;
        }
        if wy > 0.0 && region(k + g.nx) {
            let d = v[k + g.nx] - v[k];
            e += wy * d * d * ihy2;
        }
        e
    }) * g.cell_area();
    RegionEnergy {
        value,
        empty_region: edges == 0.0,
    }
}

/// Dirichlet energy over the whole active domain.
pub fn dirichlet_energy_full(f: &Field) -> f64 {
    let g = f.grid().clone();
    dirichlet_energy(f, move |k| g.kind(k).is_active()).value
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BallSpec {
    pub center: (f64, f64),
    pub radius: f64,
    /// Regularization radius of the `N >= 3` weight.
    pub delta: f64,
}

impl BallSpec {
    pub fn new(center: (f64, f64), radius: f64) -> Self {
        BallSpec {
            center,
            radius,
            delta: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BallWeight {
    Unit,
    /// `|x - x0|^{2-N}`, regularized by `Φ_δ` for `N >= 3`; identically 1
    /// for `N = 2`.
    Acf { dim: usize },
}

impl BallWeight {
    pub fn eval(&self, ball: &BallSpec, x: f64, y: f64) -> Result<f64> {
        match *self {
            BallWeight::Unit => Ok(1.0),
            BallWeight::Acf { dim } if dim <= 2 => Ok(1.0),
            BallWeight::Acf { dim } => {
                let r = ((x - ball.center.0).powi(2) + (y - ball.center.1).powi(2)).sqrt();
                phi_delta(r, ball.delta, dim)
            }
        }
    }
}

/// Cells whose centers lie in the open ball, after checking that the ball
/// is covered by valid cells.
pub fn ball_cells(grid: &Grid, ball: &BallSpec) -> Result<Vec<(usize, usize)>> {
    let (cx, cy) = ball.center;
    let r = ball.radius;
    if !(r > 0.0 && r.is_finite()) {
        return Err(SegError::InvalidArgument(format!("ball radius must be positive, got {r}")));
    }
    let (x0, y0) = grid.origin();
    let x1 = x0 + (grid.nx - 1) as f64 * grid.hx;
    let y1 = y0 + (grid.ny - 1) as f64 * grid.hy;
    for &(px, py) in &[(cx - r, cy), (cx + r, cy), (cx, cy - r), (cx, cy + r)] {
        if px < x0 || px > x1 || py < y0 || py > y1 {
            return Err(SegError::BallOutside {
                cx,
                cy,
                radius: r,
                x: px,
                y: py,
            });
        }
    }
    let ci_lo = (((cx - r - x0) / grid.hx).floor().max(0.0)) as usize;
    let ci_hi = ((((cx + r - x0) / grid.hx).ceil()) as usize).min(grid.nx - 2);
    let cj_lo = (((cy - r - y0) / grid.hy).floor().max(0.0)) as usize;
    let cj_hi = ((((cy + r - y0) / grid.hy).ceil()) as usize).min(grid.ny - 2);
    let mut cells = Vec::new();
    for cj in cj_lo..=cj_hi {
        for ci in ci_lo..=ci_hi {
            let (x, y) = grid.cell_center(ci, cj);
            if (x - cx).powi(2) + (y - cy).powi(2) < r * r {
                if !grid.cell_valid(ci, cj) {
                    return Err(SegError::BallOutside {
                        cx,
                        cy,
                        radius: r,
                        x,
                        y,
                    });
                }
                cells.push((ci, cj));
            }
        }
    }
    Ok(cells)
}

/// Midpoint rule over the cells whose centers lie in the ball, for an
/// integrand given per cell.
pub fn integrate_ball_cells(
    grid: &Grid,
    ball: &BallSpec,
    weight: BallWeight,
    cell_value: impl Fn(usize, usize) -> f64,
) -> Result<f64> {
    let cells = ball_cells(grid, ball)?;
    let mut sum = 0.0;
    for (ci, cj) in cells {
        let (x, y) = grid.cell_center(ci, cj);
        sum += cell_value(ci, cj) * weight.eval(ball, x, y)?;
    }
    Ok(sum * grid.cell_area())
}

/// Midpoint-rule integral of `f` over the ball; the cell value is the mean
/// of its corners.
pub fn integrate_ball(f: &Field, ball: &BallSpec, weight: BallWeight) -> Result<f64> {
    integrate_ball_cells(f.grid(), ball, weight, |ci, cj| f.cell_mean(ci, cj))
}

/// `∫_B |∇f|² w` by the midpoint rule with cell-centered gradients.
pub fn dirichlet_ball(f: &Field, ball: &BallSpec, weight: BallWeight) -> Result<f64> {
    integrate_ball_cells(f.grid(), ball, weight, |ci, cj| f.cell_grad_sq(ci, cj))
}

/// Sample offset (in units of the angular step) used by default on circles:
/// half a step, so that no sample falls on the axes through the center.
pub const CIRCLE_OFFSET: f64 = 0.5;

/// Trapezoid rule on the circle `|x - c| = r` with `m` samples at angles
/// `(q + offset) 2π/m`.
pub fn circle_quadrature(
    center: (f64, f64),
    r: f64,
    m: usize,
    offset: f64,
    mut g: impl FnMut(f64, f64, f64) -> Result<f64>,
) -> Result<f64> {
    if m < 16 {
        return Err(SegError::InvalidArgument(format!("circle needs at least 16 samples, got {m}")));
    }
    let step = 2.0 * PI / m as f64;
    let mut sum = 0.0;
    for q in 0..m {
        let th = (q as f64 + offset) * step;
        let (x, y) = (center.0 + r * th.cos(), center.1 + r * th.sin());
        sum += g(x, y, th)?;
    }
    Ok(sum * r * step)
}

pub fn integrate_circle(f: &Field, center: (f64, f64), r: f64, m: usize) -> Result<f64> {
    integrate_circle_offset(f, center, r, m, CIRCLE_OFFSET)
}

pub fn integrate_circle_offset(f: &Field, center: (f64, f64), r: f64, m: usize, offset: f64) -> Result<f64> {
    circle_quadrature(center, r, m, offset, |x, y, _| f.interpolate(x, y))
}

/// Ball integral assembled from circle integrals: composite midpoint rule in
/// the radius with `nr` shells, `m` samples per circle.
pub fn integrate_ball_polar(
    ball: &BallSpec,
    weight: BallWeight,
    nr: usize,
    m: usize,
    mut g: impl FnMut(f64, f64) -> Result<f64>,
) -> Result<f64> {
    let dr = ball.radius / nr.max(1) as f64;
    let mut sum = 0.0;
    for q in 0..nr.max(1) {
        let rho = (q as f64 + 0.5) * dr;
        sum += circle_quadrature(ball.center, rho, m, CIRCLE_OFFSET, |x, y, _| {
            Ok(g(x, y)? * weight.eval(ball, x, y)?)
        })?;
    }
    Ok(sum * dr)
}

/// Largest absolute value over active nodes, reduced in fixed order.
pub fn field_max_abs(f: &Field) -> f64 {
    let g = f.grid();
    let v = f.values();
    chunked_max(g.len(), |k| v[k].abs()).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(n: usize) -> Arc<Grid> {
        Arc::new(Grid::unit_square(n).unwrap())
    }

    #[test]
    fn disk_mask_invariants() {
        let g = Grid::disk(65, DISK_RADIUS).unwrap();
        for &k in g.interior_nodes() {
            for nb in [k - 1, k + 1, k - g.nx(), k + g.nx()] {
                assert!(g.kind(nb).is_active());
            }
        }
        for &k in g.boundary_nodes() {
            let (i, j) = g.ij(k);
            let frontier = i == 0
                || j == 0
                || i == g.nx() - 1
                || j == g.ny() - 1
                || [k - 1, k + 1, k - g.nx(), k + g.nx()]
                    .iter()
                    .any(|&nb| g.kind(nb) == NodeKind::Exterior);
            assert!(frontier, "boundary node ({i},{j}) is not on the frontier");
        }
        let area = g.area();
        // valid cells lie inside the circle and cover it up to a band of width √2·h
        let exact = PI * DISK_RADIUS * DISK_RADIUS;
        assert!(area < exact && exact - area < 2.0 * PI * DISK_RADIUS * 2f64.sqrt() * g.h(), "{area}");
    }

    #[test]
    fn laplacian_of_constant_and_affine_vanishes() {
        let g = square(9);
        let c = Field::from_fn(g.clone(), |_, _| 7.0);
        assert!(apply_laplacian(&c).unwrap().values().iter().all(|&v| v == 0.0));
        let a = Field::from_fn(g.clone(), |x, y| x + 2.0 * y);
        let l = apply_laplacian(&a).unwrap();
        for &k in g.interior_nodes() {
            assert!(l.values()[k].abs() < 1e-12, "{}", l.values()[k]);
        }
    }

    #[test]
    fn laplacian_of_x_squared_on_5x5() {
        let g = square(5);
        let f = Field::from_fn(g.clone(), |x, _| x * x);
        let l = apply_laplacian(&f).unwrap();
        // hand evaluation: ((x+h)² + (x-h)² - 2x²)/h² = 2
        for &k in g.interior_nodes() {
            assert!((l.values()[k] - 2.0).abs() < 1e-12);
        }
        for &k in g.boundary_nodes() {
            assert_eq!(l.values()[k], 0.0);
        }
    }

    #[test]
    fn laplacian_rejects_non_finite() {
        let g = square(5);
        let mut f = Field::zeros(g.clone());
        f.values_mut()[g.index(2, 3)] = f64::NAN;
        match apply_laplacian(&f) {
            Err(SegError::NonFinite { i: 2, j: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dirichlet_energy_examples() {
        let g = square(17);
        let c = Field::from_fn(g.clone(), |_, _| 3.0);
        assert_eq!(dirichlet_energy_full(&c), 0.0);
        let x = Field::from_fn(g.clone(), |x, _| x);
        assert!((dirichlet_energy_full(&x) - 1.0).abs() < 1e-13);
        let empty = dirichlet_energy(&x, |_| false);
        assert!(empty.empty_region);
        assert_eq!(empty.value, 0.0);
    }

    #[test]
    fn dirichlet_energy_bump_on_3x3_matches_edge_sum() {
        let g = square(3);
        let mut f = Field::zeros(g.clone());
        f.values_mut()[4] = 1.0;
        // brute force: 12 edges; 4 touch the center node (weight 1), the 8
        // perimeter edges carry weight 1/2 but zero difference.
        let h = 0.5;
        let mut oracle = 0.0;
        let v = f.values();
        for j in 0..3 {
            for i in 0..3 {
                let k = j * 3 + i;
                if i < 2 {
                    let w = if j == 1 { 1.0 } else { 0.5 };
                    oracle += w * ((v[k + 1] - v[k]) / h).powi(2) * h * h;
                }
                if j < 2 {
                    let w = if i == 1 { 1.0 } else { 0.5 };
                    oracle += w * ((v[k + 3] - v[k]) / h).powi(2) * h * h;
                }
            }
        }
        assert_eq!(oracle, 4.0);
        assert!((dirichlet_energy_full(&f) - oracle).abs() < 1e-14);
    }

    #[test]
    fn interpolation_examples() {
        let g = square(5);
        let x = Field::from_fn(g.clone(), |x, _| x);
        assert_eq!(x.interpolate(0.37, 0.9).unwrap(), 0.37);
        let xy = Field::from_fn(g.clone(), |x, y| x * y);
        assert!((xy.interpolate(0.125, 0.375).unwrap() - 0.046875).abs() < 1e-15);
        let k = g.index(3, 1);
        let (px, py) = g.coords(k);
        assert_eq!(xy.interpolate(px, py).unwrap(), xy.values()[k]);
        assert!(x.interpolate(1.2, 0.5).is_err());
    }

    #[test]
    fn ball_area_and_errors() {
        let g = square(129);
        let one = Field::from_fn(g.clone(), |_, _| 1.0);
        let ball = BallSpec::new((0.5, 0.5), 0.3);
        let a = integrate_ball(&one, &ball, BallWeight::Unit).unwrap();
        assert!((a - PI * 0.09).abs() < 4.0 * g.h() * 0.3, "{a}");
        let zero = Field::zeros(g.clone());
        assert_eq!(integrate_ball(&zero, &ball, BallWeight::Unit).unwrap(), 0.0);
        let bad = BallSpec::new((0.9, 0.5), 0.3);
        assert!(matches!(
            integrate_ball(&one, &bad, BallWeight::Unit),
            Err(SegError::BallOutside { .. })
        ));
    }

    #[test]
    fn dirichlet_ball_of_linear_profile() {
        let g = square(129);
        let u = Field::from_fn(g.clone(), |x, _| x);
        let r = 0.25;
        let ball = BallSpec::new((0.5, 0.5), r);
        let i = dirichlet_ball(&u, &ball, BallWeight::Acf { dim: 2 }).unwrap();
        assert!((i - PI * r * r).abs() < 4.0 * g.h() * r, "{i}");
    }

    #[test]
    fn circle_examples() {
        let g = square(129);
        let one = Field::from_fn(g.clone(), |_, _| 1.0);
        let r = 0.3;
        for m in [16, 33, 720] {
            let v = integrate_circle(&one, (0.5, 0.5), r, m).unwrap();
            assert!((v - 2.0 * PI * r).abs() < 1e-12);
        }
        let cos2 = Field::from_fn(g.clone(), |x, y| {
            let (dx, dy) = (x - 0.5, y - 0.5);
            if dx == 0.0 && dy == 0.0 {
                0.0
            } else {
                dx * dx / (dx * dx + dy * dy)
            }
        });
        let v = integrate_circle(&cos2, (0.5, 0.5), r, 720).unwrap();
        assert!((v - PI * r).abs() < 0.05 * g.h() / r + 1e-4, "{v}");
        let zero = Field::zeros(g.clone());
        assert_eq!(integrate_circle(&zero, (0.5, 0.5), r, 64).unwrap(), 0.0);
        assert!(integrate_circle(&one, (0.5, 0.5), 0.6, 64).is_err());
        assert!(integrate_circle(&one, (0.5, 0.5), 0.2, 8).is_err());
    }

    #[test]
    fn square_boundary_angle_is_perimeter_parametrization() {
        let g = Grid::unit_square(9).unwrap();
        assert!((g.boundary_angle(1.0, 0.5) - 0.0).abs() < 1e-14);
        assert!((g.boundary_angle(1.0, 1.0) - PI / 4.0).abs() < 1e-14);
        assert!((g.boundary_angle(0.5, 1.0) - PI / 2.0).abs() < 1e-14);
        assert!((g.boundary_angle(0.0, 0.5) - PI).abs() < 1e-14);
        assert!((g.boundary_angle(0.5, 0.0) - 1.5 * PI).abs() < 1e-14);
        assert!((g.boundary_angle(1.0, 0.25) - 1.875 * PI).abs() < 1e-14);
        // interior points inherit the angle of their ray's exit point
        assert!((g.boundary_angle(0.75, 0.75) - PI / 4.0).abs() < 1e-14);
    }
}

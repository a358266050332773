//! Dyadic tori, lattice fields and the operators linking them to the continuum.
//!
//! The torus is stored as `[0, L)^d`. Site `i` along an axis sits at the
//! centre `(i + 1/2) ε` of its box `[iε, (i+1)ε)`, so boxes of nested dyadic
//! levels nest exactly. Sites are ordered lexicographically with the first
//! axis slowest.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Phi4Error, Result};
use crate::quadrature::{self, GL4_NODES, GL4_WEIGHTS};

const MAX_SITES: usize = 1 << 30;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeGrid {
    d: usize,
    side: f64,
    level: u32,
    eps: f64,
    n: usize,
    sites: usize,
}

/// Build a `d`-dimensional torus of side `side` at dyadic level `level`.
pub fn build_grid(d: usize, side: f64, level: u32) -> Result<LatticeGrid> {
    LatticeGrid::new(d, side, level)
}

impl LatticeGrid {
    pub fn new(d: usize, side: f64, level: u32) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Phi4Error::InvalidGrid(format!("dimension {d} not in 1..=3")));
        }
        if !(side.is_finite() && side > 0.0) {
            return Err(Phi4Error::InvalidGrid(format!("side length {side} must be positive")));
        }
        if level > 40 {
            return Err(Phi4Error::InvalidGrid(format!("level {level} too deep")));
        }
        let eps = (-(level as f64)).exp2();
        let per_axis = side * (level as f64).exp2();
        if per_axis.fract() != 0.0 || per_axis > MAX_SITES as f64 {
            return Err(Phi4Error::InvalidGrid(format!(
                "side {side} is not a dyadic multiple of eps = {eps}"
            )));
        }
        let n = per_axis as usize;
        if n < 4 {
            return Err(Phi4Error::InvalidGrid(format!(
                "sites_per_axis = {n} < 4 (side {side}, level {level})"
            )));
        }
        let sites = n
            .checked_pow(d as u32)
            .filter(|&s| s <= MAX_SITES)
            .ok_or_else(|| Phi4Error::InvalidGrid(format!("site count {n}^{d} overflows")))?;
        Ok(Self { d, side, level, eps, n, sites })
    }

    pub fn dim(&self) -> usize {
        self.d
    }
    pub fn side(&self) -> f64 {
        self.side
    }
    /// Half-extent `M` of the centred torus `[-M, M)^d`.
    pub fn half_extent(&self) -> f64 {
        0.5 * self.side
    }
    pub fn level(&self) -> u32 {
        self.level
    }
    pub fn eps(&self) -> f64 {
        self.eps
    }
    pub fn sites_per_axis(&self) -> usize {
        self.n
    }
    pub fn num_sites(&self) -> usize {
        self.sites
    }
    /// Cell volume `ε^d`.
    pub fn cell_volume(&self) -> f64 {
        self.eps.powi(self.d as i32)
    }
    pub fn volume(&self) -> f64 {
        self.side.powi(self.d as i32)
    }

    /// Same torus at another level.
    pub fn at_level(&self, level: u32) -> Result<Self> {
        Self::new(self.d, self.side, level)
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.n.pow((self.d - 1 - axis) as u32)
    }

    pub fn coords(&self, site: usize) -> [usize; 3] {
        let mut c = [0usize; 3];
        let mut r = site;
        for a in (0..self.d).rev() {
            c[a] = r % self.n;
            r /= self.n;
        }
        c
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords[..self.d].iter().fold(0, |acc, &c| acc * self.n + (c % self.n))
    }

    /// Index of the neighbour of `site` one step along `axis` in direction `forward`.
    pub fn neighbour(&self, site: usize, axis: usize, forward: bool) -> usize {
        let s = self.stride(axis);
        let c = (site / s) % self.n;
        match (forward, c) {
            (true, c) if c == self.n - 1 => site - (self.n - 1) * s,
            (true, _) => site + s,
            (false, 0) => site + (self.n - 1) * s,
            (false, _) => site - s,
        }
    }

    /// Centre of the box of `site` in internal coordinates.
    pub fn site_position(&self, site: usize) -> [f64; 3] {
        let c = self.coords(site);
        let mut x = [0.0; 3];
        for a in 0..self.d {
            x[a] = (c[a] as f64 + 0.5) * self.eps;
        }
        x
    }

    /// Internal coordinate `[0, L)` to the centred convention `[-M, M)`.
    pub fn to_centered(&self, x: f64) -> f64 {
        x - self.half_extent()
    }
    pub fn from_centered(&self, x: f64) -> f64 {
        (x + self.half_extent()).rem_euclid(self.side)
    }

    /// Minimal-image representative of a displacement, in `[-L/2, L/2)`.
    pub fn wrap(&self, dx: f64) -> f64 {
        (dx + 0.5 * self.side).rem_euclid(self.side) - 0.5 * self.side
    }

    pub fn box_cell(&self, site: usize) -> BoxCell {
        BoxCell { center: site, half_width: 0.5 * self.eps }
    }

    /// Number of fine sites per coarse axis cell when `fine` refines `self`.
    pub fn refinement_factor(&self, fine: &LatticeGrid) -> Result<usize> {
        if self.d != fine.d || self.side != fine.side || fine.level < self.level {
            return Err(Phi4Error::GridMismatch(format!(
                "level-{} grid (d={}, L={}) is not a dyadic refinement of level-{} grid (d={}, L={})",
                fine.level, fine.d, fine.side, self.level, self.d, self.side
            )));
        }
        Ok(1usize << (fine.level - self.level))
    }

    /// Lower-left corner of the box of `site`.
    pub fn box_corner(&self, site: usize) -> [f64; 3] {
        let c = self.coords(site);
        let mut x = [0.0; 3];
        for a in 0..self.d {
            x[a] = c[a] as f64 * self.eps;
        }
        x
    }

    fn same(&self, other: &LatticeGrid) -> Result<()> {
        if self != other {
            return Err(Phi4Error::GridMismatch(format!(
                "(d={}, L={}, N={}) vs (d={}, L={}, N={})",
                self.d, self.side, self.level, other.d, other.side, other.level
            )));
        }
        Ok(())
    }
}

/// The closed box `{z : ‖z − y‖_∞ ≤ ε/2}` around a site.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxCell {
    pub center: usize,
    pub half_width: f64,
}

impl BoxCell {
    pub fn contains(&self, grid: &LatticeGrid, x: &[f64]) -> bool {
        let c = grid.site_position(self.center);
        (0..grid.dim()).all(|a| grid.wrap(x[a] - c[a]).abs() <= self.half_width)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: LatticeGrid,
    values: Vec<f64>,
    pub time: f64,
}

impl Field {
    pub fn new(grid: LatticeGrid, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.num_sites() {
            return Err(Phi4Error::GridMismatch(format!(
                "{} values for {} sites",
                values.len(),
                grid.num_sites()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Phi4Error::InvalidParameter(format!("non-finite value at site {i}")));
        }
        Ok(Self { grid, values, time })
    }

    pub fn zeros(grid: LatticeGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: LatticeGrid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.num_sites()], time: 0.0 }
    }

    /// Point samples of `f` at site centres.
    pub fn from_fn<F: FnMut(&[f64]) -> f64>(grid: LatticeGrid, mut f: F) -> Self {
        let d = grid.dim();
        let values = (0..grid.num_sites())
            .map(|s| f(&grid.site_position(s)[..d]))
            .collect();
        Self { grid, values, time: 0.0 }
    }

    pub fn grid(&self) -> &LatticeGrid {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }
}

/// `ε^{-2} Σ_i [f(x+εe_i) + f(x−εe_i) − 2f(x)]` with periodic wraparound.
pub fn discrete_laplacian(f: &Field) -> Field {
    let mut out = Field::zeros(f.grid);
    out.time = f.time;
    laplacian_into(f, &mut out.values);
    out
}

pub fn laplacian_into(f: &Field, out: &mut [f64]) {
    let g = &f.grid;
    let n = g.n;
    let inv = 1.0 / (g.eps * g.eps);
    let v = &f.values;
    out.iter_mut().for_each(|o| *o = 0.0);
    for a in 0..g.d {
        let s = g.stride(a);
        let block = s * n;
        for start in (0..g.sites).step_by(block) {
            for c in 0..n {
                let up = if c + 1 == n { 0 } else { c + 1 };
                let down = if c == 0 { n - 1 } else { c - 1 };
                for r in 0..s {
                    let i = start + c * s + r;
                    out[i] += v[start + up * s + r] + v[start + down * s + r] - 2.0 * v[i];
                }
            }
        }
    }
    out.iter_mut().for_each(|o| *o *= inv);
}

/// Shape profiles on `R^d`, evaluated at displacements from a base point.
pub trait Profile {
    fn eval(&self, y: &[f64]) -> f64;
    /// Sup-norm radius of the support, if compact.
    fn support_radius(&self) -> Option<f64> {
        None
    }
}

impl<F: Fn(&[f64]) -> f64> Profile for F {
    fn eval(&self, y: &[f64]) -> f64 {
        self(y)
    }
}

/// `b(s) = exp(1 − 1/(1 − s²))` on `(-1, 1)`, zero outside; `b(0) = 1`.
pub fn bump(s: f64) -> f64 {
    let q = 1.0 - s * s;
    if q <= 0.0 {
        0.0
    } else {
        (1.0 - 1.0 / q).exp()
    }
}

pub fn bump_derivative(s: f64) -> f64 {
    let q = 1.0 - s * s;
    if q <= 0.0 {
        0.0
    } else {
        -2.0 * s / (q * q) * bump(s)
    }
}

/// Certified upper bound on `sup |b'|`, from a dense scan plus a margin
/// covering the scan spacing times `sup |b''|` (< 20).
pub fn bump_slope_bound() -> f64 {
    static CELL: OnceLock<f64> = OnceLock::new();
    *CELL.get_or_init(|| {
        let m = 200_000;
        let h = 1.0 / m as f64;
        let mut best = 0.0f64;
        for i in 0..m {
            best = best.max(bump_derivative(i as f64 * h).abs());
        }
        best + 20.0 * h
    })
}

/// `∫_{-1}^{1} b`.
pub fn bump_integral() -> f64 {
    static CELL: OnceLock<f64> = OnceLock::new();
    *CELL.get_or_init(|| quadrature::composite_1d(-1.0, 1.0, 4096, bump))
}

/// Smooth tensor-product bump `a · Π_i b((x_i − c_i)/r)` on the torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    center: [f64; 3],
    d: usize,
    radius: f64,
    amplitude: f64,
}

impl TestFunction {
    /// Bump centred at `center` (internal coordinates). Rejects amplitudes
    /// whose sup-norm or gradient certificate exceeds 1.
    pub fn new(center: &[f64], radius: f64, amplitude: f64) -> Result<Self> {
        let d = center.len();
        if !(1..=3).contains(&d) || !(radius > 0.0) || !amplitude.is_finite() {
            return Err(Phi4Error::InvalidParameter(format!(
                "bump needs 1 ≤ d ≤ 3, radius > 0 (got d={d}, r={radius})"
            )));
        }
        let mut c = [0.0; 3];
        c[..d].copy_from_slice(center);
        let t = Self { center: c, d, radius, amplitude };
        if t.sup_bound() > 1.0 || t.gradient_bound() > 1.0 + 1e-15 {
            return Err(Phi4Error::InvalidParameter(format!(
                "bump violates ‖ψ‖∞ ≤ 1, ‖Dψ‖∞ ≤ 1 (sup {}, grad {})",
                t.sup_bound(),
                t.gradient_bound()
            )));
        }
        Ok(t)
    }

    /// Largest admissible amplitude for the given radius.
    pub fn normalised(center: &[f64], radius: f64) -> Result<Self> {
        let d = center.len().max(1) as f64;
        let amp = (radius / (d.sqrt() * bump_slope_bound())).min(1.0);
        Self::new(center, radius, amp)
    }

    pub fn dim(&self) -> usize {
        self.d
    }
    pub fn center(&self) -> &[f64] {
        &self.center[..self.d]
    }
    pub fn radius(&self) -> f64 {
        self.radius
    }
    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }
    pub fn sup_bound(&self) -> f64 {
        self.amplitude.abs()
    }
    pub fn gradient_bound(&self) -> f64 {
        self.amplitude.abs() * (self.d as f64).sqrt() * bump_slope_bound() / self.radius
    }
    /// `∫ψ` over `R^d`.
    pub fn integral(&self) -> f64 {
        self.amplitude * (self.radius * bump_integral()).powi(self.d as i32)
    }

    pub fn check_support(&self, grid: &LatticeGrid) -> Result<()> {
        if grid.dim() != self.d {
            return Err(Phi4Error::GridMismatch(format!(
                "test function in d={} on a d={} grid",
                self.d,
                grid.dim()
            )));
        }
        if 2.0 * self.radius > grid.side() {
            return Err(Phi4Error::Support(format!(
                "diameter {} exceeds side {}",
                2.0 * self.radius,
                grid.side()
            )));
        }
        Ok(())
    }

    /// Value at displacement `y` from the centre (no wrapping).
    pub fn eval_displacement(&self, y: &[f64]) -> f64 {
        let mut v = self.amplitude;
        for &ya in y.iter().take(self.d) {
            v *= bump(ya / self.radius);
            if v == 0.0 {
                break;
            }
        }
        v
    }

    /// Periodised value at internal coordinate `x`.
    pub fn eval(&self, grid: &LatticeGrid, x: &[f64]) -> f64 {
        let mut y = [0.0; 3];
        for a in 0..self.d {
            y[a] = grid.wrap(x[a] - self.center[a]);
        }
        self.eval_displacement(&y[..self.d])
    }
}

impl Profile for TestFunction {
    fn eval(&self, y: &[f64]) -> f64 {
        self.eval_displacement(y)
    }
    fn support_radius(&self) -> Option<f64> {
        Some(self.radius)
    }
}

/// `Σ_y f(y) ∫_{□_y} φ^λ_z` with `φ^λ_z(x) = λ^{-d} φ((x − z)/λ)` periodised.
pub fn embed_pair(f: &Field, phi: &dyn Profile, z: &[f64], lambda: f64) -> Result<f64> {
    let g = f.grid;
    let d = g.dim();
    if !(lambda > 0.0 && lambda <= g.side()) {
        return Err(Phi4Error::InvalidParameter(format!(
            "scale λ = {lambda} outside (0, L]"
        )));
    }
    if let Some(r) = phi.support_radius() {
        if r * lambda > g.half_extent() {
            return Err(Phi4Error::Support(format!(
                "scaled support radius {} exceeds L/2",
                r * lambda
            )));
        }
    }
    let norm = lambda.powi(-(d as i32));
    let reach = phi.support_radius().map(|r| r * lambda + g.eps());
    let mut acc = 0.0;
    for (site, &fv) in f.values.iter().enumerate() {
        if fv == 0.0 {
            continue;
        }
        let corner = g.box_corner(site);
        if let Some(reach) = reach {
            let c = g.site_position(site);
            if (0..d).any(|a| g.wrap(c[a] - z[a]).abs() > reach) {
                continue;
            }
        }
        let integral = quadrature::box_integral(&corner[..d], g.eps(), |x| {
            let mut y = [0.0; 3];
            for a in 0..d {
                y[a] = g.wrap(x[a] - z[a]) / lambda;
            }
            norm * phi.eval(&y[..d])
        });
        acc += fv * integral;
    }
    if !acc.is_finite() {
        return Err(Phi4Error::Quadrature("non-finite box integral".into()));
    }
    Ok(acc)
}

fn pairwise_sum(buf: &mut [f64]) -> f64 {
    let mut len = buf.len();
    while len > 1 {
        let half = len / 2;
        for i in 0..half {
            buf[i] = buf[2 * i] + buf[2 * i + 1];
        }
        if len % 2 == 1 {
            buf[half] = buf[len - 1];
            len = half + 1;
        } else {
            len = half;
        }
    }
    buf.first().copied().unwrap_or(0.0)
}

/// Block average of a dyadically finer field onto `grid`.
///
/// Blocks are reduced pairwise, so averaging `2^{dk}` equal values is exact.
pub fn project(fine: &Field, grid: &LatticeGrid) -> Result<Field> {
    let r = grid.refinement_factor(&fine.grid)?;
    let d = grid.dim();
    let block = r.pow(d as u32);
    let mut buf = vec![0.0; block];
    let mut out = Vec::with_capacity(grid.num_sites());
    for site in 0..grid.num_sites() {
        let c = grid.coords(site);
        for (k, slot) in buf.iter_mut().enumerate() {
            let mut fc = [0usize; 3];
            let mut rem = k;
            for a in (0..d).rev() {
                fc[a] = c[a] * r + rem % r;
                rem /= r;
            }
            *slot = fine.values[fine.grid.index(&fc[..d])];
        }
        out.push(pairwise_sum(&mut buf) / block as f64);
    }
    Ok(Field { grid: *grid, values: out, time: fine.time })
}

/// `ε^{-d} ∫_{□_x} ζ` for an evaluable function, by order-4 Gauss–Legendre.
pub fn project_fn<F: Fn(&[f64]) -> f64>(grid: &LatticeGrid, zeta: F) -> Field {
    let d = grid.dim();
    let inv = 1.0 / grid.cell_volume();
    let values = (0..grid.num_sites())
        .map(|s| {
            let corner = grid.box_corner(s);
            inv * quadrature::box_integral(&corner[..d], grid.eps(), &zeta)
        })
        .collect();
    Field { grid: *grid, values, time: 0.0 }
}

/// Piecewise-constant extension of `f` restricted to the sites of `fine`.
pub fn iota_refine(f: &Field, fine: &LatticeGrid) -> Result<Field> {
    let r = f.grid.refinement_factor(fine)?;
    let d = fine.dim();
    let values = (0..fine.num_sites())
        .map(|s| {
            let c = fine.coords(s);
            let mut cc = [0usize; 3];
            for a in 0..d {
                cc[a] = c[a] / r;
            }
            f.values[f.grid.index(&cc[..d])]
        })
        .collect();
    Ok(Field { grid: *fine, values, time: f.time })
}

/// `Σ_y f(y) g(y)` (no cell weight).
pub fn discrete_pairing(f: &Field, g: &Field) -> Result<f64> {
    f.grid.same(&g.grid)?;
    Ok(f.values.iter().zip(&g.values).map(|(a, b)| a * b).sum())
}

/// `ε^d Σ_y f(y) g(y)`, the pairing consistent with the piecewise-constant embedding.
pub fn weighted_pairing(f: &Field, g: &Field) -> Result<f64> {
    Ok(f.grid.cell_volume() * discrete_pairing(f, g)?)
}

fn axis_box_averages(psi: &TestFunction, grid: &LatticeGrid, axis: usize) -> Vec<f64> {
    let n = grid.sites_per_axis();
    let eps = grid.eps();
    let r = psi.radius;
    (0..n)
        .map(|i| {
            let lo = i as f64 * eps;
            let mut acc = 0.0;
            for q in 0..4 {
                let x = lo + 0.5 * eps * (1.0 + GL4_NODES[q]);
                acc += 0.5 * GL4_WEIGHTS[q] * bump(grid.wrap(x - psi.center[axis]) / r);
            }
            acc
        })
        .collect()
}

/// `ψ^ε(y) = ε^{-d} ∫_{□_y} ψ`, by the tensor order-4 rule (computed axis by
/// axis, which is identical to the tensor rule for a product function).
pub fn sample_test_function(psi: &TestFunction, grid: &LatticeGrid) -> Result<Field> {
    psi.check_support(grid)?;
    let d = grid.dim();
    let per_axis: Vec<Vec<f64>> = (0..d).map(|a| axis_box_averages(psi, grid, a)).collect();
    let values = (0..grid.num_sites())
        .map(|s| {
            let c = grid.coords(s);
            (0..d).fold(psi.amplitude, |acc, a| acc * per_axis[a][c[a]])
        })
        .collect();
    Ok(Field { grid: *grid, values, time: 0.0 })
}

/// Coordinate box on the torus, closed, in internal coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    center: [f64; 3],
    half_width: [f64; 3],
    empty: bool,
}

impl BoxRegion {
    pub fn new(center: &[f64], half_width: &[f64]) -> Self {
        let mut c = [0.0; 3];
        let mut h = [0.0; 3];
        c[..center.len()].copy_from_slice(center);
        h[..half_width.len()].copy_from_slice(half_width);
        Self { center: c, half_width: h, empty: half_width.iter().any(|&w| w < 0.0) }
    }
    pub fn whole(grid: &LatticeGrid) -> Self {
        let h = [grid.side(); 3];
        Self::new(&[0.0; 3][..grid.dim()], &h[..grid.dim()])
    }
    pub fn empty() -> Self {
        Self { center: [0.0; 3], half_width: [-1.0; 3], empty: true }
    }
    /// The box `[-h, h]^d` in the centred convention.
    pub fn centered_cube(grid: &LatticeGrid, h: f64) -> Self {
        let c = [grid.half_extent(); 3];
        Self::new(&c[..grid.dim()], &[h; 3][..grid.dim()])
    }
    pub fn contains(&self, grid: &LatticeGrid, x: &[f64]) -> bool {
        !self.empty
            && (0..grid.dim()).all(|a| grid.wrap(x[a] - self.center[a]).abs() <= self.half_width[a])
    }
    pub fn contains_site(&self, grid: &LatticeGrid, site: usize) -> bool {
        self.contains(grid, &grid.site_position(site)[..grid.dim()])
    }
    pub fn mask(&self, grid: &LatticeGrid) -> Vec<bool> {
        (0..grid.num_sites()).map(|s| self.contains_site(grid, s)).collect()
    }
}

/// Multiplication by the indicator of `region`.
pub fn localize(f: &Field, region: &BoxRegion) -> Field {
    let mut out = f.clone();
    for (s, v) in out.values.iter_mut().enumerate() {
        if !region.contains_site(&f.grid, s) {
            *v = 0.0;
        }
    }
    out
}

/// Discrete Laplacian symbol `μ_ε(k) = (4/ε²) Σ_i sin²(π k_i / n)`, per site index.
pub fn laplacian_symbol(grid: &LatticeGrid) -> Vec<f64> {
    let n = grid.sites_per_axis();
    let e2 = grid.eps() * grid.eps();
    let axis: Vec<f64> = (0..n)
        .map(|k| 4.0 / e2 * (std::f64::consts::PI * k as f64 / n as f64).sin().powi(2))
        .collect();
    (0..grid.num_sites())
        .map(|s| {
            let c = grid.coords(s);
            (0..grid.dim()).map(|a| axis[c[a]]).sum()
        })
        .collect()
}

/// Signed integer frequency of a Fourier index along one axis.
pub fn signed_frequency(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_examples() {
        let g = build_grid(1, 1.0, 3).unwrap();
        assert_eq!(g.num_sites(), 8);
        assert_eq!(g.eps(), 0.125);
        assert_eq!(build_grid(3, 1.0, 4).unwrap().num_sites(), 4096);
        assert_eq!(build_grid(2, 3.0, 2).unwrap().sites_per_axis(), 12);
        assert!(build_grid(2, 1.0, 1).is_err());
        assert!(build_grid(1, 0.3, 3).is_err());
        assert!(build_grid(3, 1.0, 12).is_err());
        assert!(build_grid(4, 1.0, 3).is_err());
    }

    #[test]
    fn neighbours_wrap() {
        let g = build_grid(2, 1.0, 2).unwrap();
        assert_eq!(g.neighbour(3, 1, true), 0);
        assert_eq!(g.neighbour(0, 0, false), 12);
        assert_eq!(g.neighbour(5, 0, true), 9);
    }

    #[test]
    fn laplacian_hand_value() {
        let g = build_grid(1, 1.0, 2).unwrap();
        let f = Field::new(g, vec![1.0, 0.0, 0.0, 0.0], 0.0).unwrap();
        let l = discrete_laplacian(&f);
        assert_eq!(l.values(), &[-32.0, 16.0, 0.0, 16.0]);
    }

    #[test]
    fn laplacian_plane_wave_eigenvalue() {
        let g = build_grid(2, 1.0, 3).unwrap();
        let mu = laplacian_symbol(&g);
        for &(k1, k2) in &[(1usize, 0usize), (2, 3), (4, 4), (7, 1)] {
            let f = Field::from_fn(g, |x| {
                (2.0 * std::f64::consts::PI * (k1 as f64 * x[0] + k2 as f64 * x[1])).cos()
            });
            let l = discrete_laplacian(&f);
            let m = mu[g.index(&[k1, k2])];
            let e2 = g.eps() * g.eps();
            let s = |k: usize| (std::f64::consts::PI * k as f64 * g.eps()).sin().powi(2);
            assert!((m - 4.0 / e2 * (s(k1) + s(k2))).abs() < 1e-9);
            for (a, b) in l.values().iter().zip(f.values()) {
                assert!((a + m * b).abs() < 1e-9 * m.max(1.0));
            }
        }
    }

    #[test]
    fn projection_block_means() {
        let fine_g = build_grid(1, 2.0, 2).unwrap();
        let coarse_g = build_grid(1, 2.0, 1).unwrap();
        let fine = Field::new(fine_g, (0..8).map(|i| (2 * i + 1) as f64).collect(), 0.0).unwrap();
        let c = project(&fine, &coarse_g).unwrap();
        assert_eq!(c.values(), &[2.0, 6.0, 10.0, 14.0]);
        assert!(project(&c, &fine_g).is_err());
    }

    #[test]
    fn box_volume_and_constant_pairing() {
        let g = build_grid(2, 1.0, 2).unwrap();
        let mut f = Field::zeros(g);
        f.values_mut()[5] = 1.0;
        let one = |_: &[f64]| 1.0;
        let v = embed_pair(&f, &one, &[0.5, 0.5], 0.5).unwrap();
        // λ^{-d} = 4, box volume 1/16
        assert!((v - 4.0 / 16.0).abs() < 1e-15);
        let ones = Field::constant(g, 1.0);
        assert_eq!(discrete_pairing(&ones, &ones).unwrap(), 16.0);
        assert_eq!(weighted_pairing(&ones, &ones).unwrap(), 1.0);
    }

    #[test]
    fn embed_of_constant_is_constant() {
        let g = build_grid(2, 1.0, 4).unwrap();
        let psi = TestFunction::normalised(&[0.3, 0.6], 0.3).unwrap();
        let f = Field::constant(g, 2.5);
        let s = psi.integral();
        let v = embed_pair(&f, &psi, psi.center(), 1.0).unwrap();
        assert!((v - 2.5 * s).abs() < 1e-4 * s, "{v} vs {}", 2.5 * s);
    }

    #[test]
    fn sampled_test_function_matches_embedding() {
        let g = build_grid(2, 1.0, 4).unwrap();
        let psi = TestFunction::normalised(&[0.41, 0.52], 0.27).unwrap();
        let pe = sample_test_function(&psi, &g).unwrap();
        let f = Field::from_fn(g, |x| (x[0] * 7.0).sin() + x[1]);
        let a = weighted_pairing(&f, &pe).unwrap();
        let b = embed_pair(&f, &psi, psi.center(), 1.0).unwrap();
        assert!((a - b).abs() < 1e-13);
        assert!(pe.sup_norm() <= psi.sup_bound());
    }

    #[test]
    fn bump_constants() {
        assert!((bump_integral() - 1.206_900_322_437_877).abs() < 1e-9);
        let b = bump_slope_bound();
        assert!(b > 2.170_357 && b < 2.171);
        assert!(TestFunction::new(&[0.5], 0.5, 1.0).is_err());
    }

    #[test]
    fn localize_examples() {
        let g = build_grid(2, 1.0, 3).unwrap();
        let f = Field::from_fn(g, |x| x[0] - 2.0 * x[1]);
        assert_eq!(localize(&f, &BoxRegion::whole(&g)), f);
        assert_eq!(localize(&f, &BoxRegion::empty()).sup_norm(), 0.0);
        let half = BoxRegion::new(&[0.25, 0.5], &[0.25, 0.5]);
        let l = localize(&f, &half);
        for s in 0..g.num_sites() {
            let x = g.site_position(s);
            let expect = if x[0] < 0.5 { f.values()[s] } else { 0.0 };
            assert_eq!(l.values()[s], expect);
        }
    }
}

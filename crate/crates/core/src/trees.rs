//! Stochastic trees driven by the chain's noise, and their seminorms.
//!
//! `🌲₁` solves the linear equation with the same linear-implicit step as the
//! chain (operator `−Δ^ε + m2`); `🌲₂`, `🌲₃` are its Wick powers; `🌲₂₀`,
//! `🌲₃₀` solve the heat equation with those sources from zero data. The
//! kernels `φ_T` are lattice heat kernels `e^{T²Δ^ε}` at length scales
//! `T = 2^{-j}`, evaluated at a single time.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Phi4Error, Result};
use crate::holder::LittlewoodPaley;
use crate::lattice::{laplacian_symbol, BoxRegion, Field, LatticeGrid};
use crate::noise::{NoiseIncrement, NoiseStream};
use crate::renorm::RenormConstants;
use crate::spectral::Spectral;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tree {
    One,
    Two,
    Three,
    TwoZero,
    ThreeZero,
    TwoTwo,
    ThreeOne,
    ThreeTwo,
}

impl Tree {
    pub const ALL: [Tree; 8] = [
        Tree::One,
        Tree::Two,
        Tree::Three,
        Tree::TwoZero,
        Tree::ThreeZero,
        Tree::TwoTwo,
        Tree::ThreeOne,
        Tree::ThreeTwo,
    ];

    /// Regularity degree in three dimensions.
    pub fn degree(self) -> f64 {
        match self {
            Tree::One => -0.5,
            Tree::Two => -1.0,
            Tree::Three => -1.5,
            Tree::TwoZero => 1.0,
            Tree::ThreeZero => 0.5,
            Tree::TwoTwo => 0.0,
            Tree::ThreeOne => 0.0,
            Tree::ThreeTwo => -0.5,
        }
    }

    /// Number of noise leaves `n_τ`.
    pub fn leaves(self) -> u32 {
        match self {
            Tree::One => 1,
            Tree::Two | Tree::TwoZero => 2,
            Tree::Three | Tree::ThreeZero => 3,
            Tree::TwoTwo | Tree::ThreeOne => 4,
            Tree::ThreeTwo => 5,
        }
    }

    /// Power of `T` multiplying the tested quantity: `−(deg − κ)`.
    pub fn scale_exponent(self, kappa: f64) -> f64 {
        -(self.degree() - kappa)
    }

    pub fn label(self) -> &'static str {
        match self {
            Tree::One => "1",
            Tree::Two => "2",
            Tree::Three => "3",
            Tree::TwoZero => "20",
            Tree::ThreeZero => "30",
            Tree::TwoTwo => "22",
            Tree::ThreeOne => "31",
            Tree::ThreeTwo => "32",
        }
    }

    pub fn parse(s: &str) -> Option<Tree> {
        Tree::ALL.iter().copied().find(|t| t.label() == s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub grid: LatticeGrid,
    pub dt: f64,
    pub steps: u64,
    /// Store fields every this many steps (time 0 is always stored).
    pub store_every: u64,
    /// Wick constants; `c1` and `c2` are used, the counterterm is not.
    pub rc: RenormConstants,
    /// Start `🌲₁` from an exact stationary sample instead of 0.
    pub stationary_start: bool,
    /// Seed of the stationary initial sample.
    pub init_seed: u64,
    /// Multiplies every noise increment (and the stationary sample).
    pub noise_scale: f64,
}

impl TreeConfig {
    pub fn new(rc: RenormConstants, dt: f64, t_end: f64, store_every: u64, init_seed: u64) -> Self {
        Self {
            grid: rc.grid,
            dt,
            steps: (t_end / dt).round() as u64,
            store_every: store_every.max(1),
            rc,
            stationary_start: true,
            init_seed,
            noise_scale: 1.0,
        }
    }

    /// Wick constants after noise scaling.
    pub fn wick(&self) -> (f64, f64) {
        let s2 = self.noise_scale * self.noise_scale;
        (self.rc.c1 * s2, self.rc.c2 * s2 * s2)
    }
}

/// Stored tree trajectories. Wick powers are formed on demand from `🌲₁`.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeEnsemble {
    pub grid: LatticeGrid,
    pub c1: f64,
    pub c2: f64,
    pub times: Vec<f64>,
    pub t1: Vec<Field>,
    pub t20: Vec<Field>,
    pub t30: Vec<Field>,
}

pub fn wick2(t1: &Field, c1: f64) -> Field {
    let mut out = t1.clone();
    out.values_mut().iter_mut().for_each(|x| *x = *x * *x - c1);
    out
}

pub fn wick3(t1: &Field, c1: f64) -> Field {
    let mut out = t1.clone();
    out.values_mut().iter_mut().for_each(|x| *x = *x * *x * *x - 3.0 * c1 * *x);
    out
}

impl TreeEnsemble {
    pub fn from_parts(
        grid: LatticeGrid,
        c1: f64,
        c2: f64,
        times: Vec<f64>,
        t1: Vec<Field>,
        t20: Vec<Field>,
        t30: Vec<Field>,
    ) -> Result<Self> {
        if t1.len() != times.len() || t20.len() != times.len() || t30.len() != times.len() {
            return Err(Phi4Error::InvalidParameter("tree trajectories of unequal length".into()));
        }
        Ok(Self { grid, c1, c2, times, t1, t20, t30 })
    }

    pub fn t2(&self, m: usize) -> Field {
        wick2(&self.t1[m], self.c1)
    }

    pub fn t3(&self, m: usize) -> Field {
        wick3(&self.t1[m], self.c1)
    }

    /// `🌲₂₀·🌲₂`, `🌲₃₀·🌲₁`, `🌲₃₀·🌲₂ − 3c2·🌲₁` at stored time `m`.
    pub fn products(&self, m: usize) -> [Field; 3] {
        let t1 = &self.t1[m];
        let t2 = self.t2(m);
        let mut p22 = self.t20[m].clone();
        let mut p31 = self.t30[m].clone();
        let mut p32 = self.t30[m].clone();
        for (i, v) in p22.values_mut().iter_mut().enumerate() {
            *v *= t2.values()[i];
        }
        for (i, v) in p31.values_mut().iter_mut().enumerate() {
            *v *= t1.values()[i];
        }
        for (i, v) in p32.values_mut().iter_mut().enumerate() {
            *v = *v * t2.values()[i] - 3.0 * self.c2 * t1.values()[i];
        }
        [p22, p31, p32]
    }

    /// Sign-flipped ensemble (`🌲₁ → −🌲₁`): odd trees change sign.
    pub fn negated(&self) -> Self {
        let mut out = self.clone();
        out.t1 = self.t1.iter().map(|f| f.scaled(-1.0)).collect();
        out.t30 = self.t30.iter().map(|f| f.scaled(-1.0)).collect();
        out
    }
}

/// Exact stationary law of the linear scheme: per-mode variance
/// `ε^{-d}/(a(2 + dt·a))`, `a = μ + m2`.
pub fn stationary_linear_sample(grid: &LatticeGrid, m2: f64, dt: f64, seed: u64, scale: f64) -> Field {
    let mut z = vec![0.0; grid.num_sites()];
    crate::noise::standard_normals(seed, 0, 0, &mut z);
    let ev = grid.cell_volume().recip();
    let m: Vec<f64> = laplacian_symbol(grid)
        .into_iter()
        .map(|mu| {
            let a = mu + m2;
            scale * (ev / (a * (2.0 + dt * a))).sqrt()
        })
        .collect();
    let mut out = vec![0.0; z.len()];
    Spectral::new(grid).apply_multiplier(&z, &m, &mut out);
    Field::new(*grid, out, 0.0).expect("finite stationary sample")
}

/// Steps the tree system one noise increment at a time.
pub struct TreeEvolver {
    cfg: TreeConfig,
    resolvent: Vec<f64>,
    spectral: Spectral,
    buf: Vec<Complex64>,
    t1: Field,
    t20: Field,
    t30: Field,
    step: u64,
    ens: TreeEnsemble,
}

impl TreeEvolver {
    pub fn new(cfg: &TreeConfig) -> Result<Self> {
        if !(cfg.dt > 0.0) {
            return Err(Phi4Error::InvalidParameter(format!("dt = {} must be positive", cfg.dt)));
        }
        let g = cfg.grid;
        let resolvent = laplacian_symbol(&g)
            .into_iter()
            .map(|mu| 1.0 / (1.0 + cfg.dt * (mu + cfg.rc.m2)))
            .collect();
        let t1 = if cfg.stationary_start {
            stationary_linear_sample(&g, cfg.rc.m2, cfg.dt, cfg.init_seed, cfg.noise_scale)
        } else {
            Field::zeros(g)
        };
        let (c1, c2) = cfg.wick();
        let ens = TreeEnsemble {
            grid: g,
            c1,
            c2,
            times: vec![0.0],
            t1: vec![t1.clone()],
            t20: vec![Field::zeros(g)],
            t30: vec![Field::zeros(g)],
        };
        Ok(Self {
            cfg: cfg.clone(),
            resolvent,
            spectral: Spectral::new(&g),
            buf: vec![Complex64::default(); g.num_sites()],
            t1,
            t20: Field::zeros(g),
            t30: Field::zeros(g),
            step: 0,
            ens,
        })
    }

    fn solve(&mut self, f: &mut Field, source: &[f64], weight: f64) {
        for ((b, &u), &s) in self.buf.iter_mut().zip(f.values()).zip(source) {
            *b = Complex64::new(u + weight * s, 0.0);
        }
        self.spectral.forward(&mut self.buf);
        for (b, &r) in self.buf.iter_mut().zip(&self.resolvent) {
            *b *= r;
        }
        self.spectral.inverse(&mut self.buf);
        let inv = 1.0 / self.buf.len() as f64;
        for (u, b) in f.values_mut().iter_mut().zip(&self.buf) {
            *u = b.re * inv;
        }
    }

    /// Current `(🌲₁, 🌲₂₀, 🌲₃₀)`.
    pub fn current(&self) -> (&Field, &Field, &Field) {
        (&self.t1, &self.t20, &self.t30)
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    /// One step with an (already scaled) increment.
    pub fn advance(&mut self, inc: &NoiseIncrement) -> Result<()> {
        let (c1, _) = self.cfg.wick();
        let s2 = wick2(&self.t1, c1);
        let s3 = wick3(&self.t1, c1);
        let dt = self.cfg.dt;
        let mut t1 = std::mem::replace(&mut self.t1, Field::zeros(self.cfg.grid));
        let mut t20 = std::mem::replace(&mut self.t20, Field::zeros(self.cfg.grid));
        let mut t30 = std::mem::replace(&mut self.t30, Field::zeros(self.cfg.grid));
        self.solve(&mut t1, &inc.values, 1.0);
        self.solve(&mut t20, s2.values(), dt);
        self.solve(&mut t30, s3.values(), dt);
        self.step += 1;
        let time = self.step as f64 * dt;
        for f in [&mut t1, &mut t20, &mut t30] {
            f.time = time;
        }
        if !(t20.is_finite() && t30.is_finite() && t1.is_finite()) {
            return Err(Phi4Error::BlowUp { step: self.step, detail: "tree overflow".into() });
        }
        self.t1 = t1;
        self.t20 = t20;
        self.t30 = t30;
        if self.step.is_multiple_of(self.cfg.store_every) {
            self.ens.times.push(time);
            self.ens.t1.push(self.t1.clone());
            self.ens.t20.push(self.t20.clone());
            self.ens.t30.push(self.t30.clone());
        }
        Ok(())
    }

    pub fn finish(self) -> TreeEnsemble {
        self.ens
    }
}

/// Evolve the trees for `cfg.steps` increments of `stream`.
pub fn evolve_trees(stream: &mut NoiseStream, cfg: &TreeConfig) -> Result<TreeEnsemble> {
    let mut ev = TreeEvolver::new(cfg)?;
    for _ in 0..cfg.steps {
        let mut inc = stream.draw_increment(cfg.dt)?;
        if cfg.noise_scale != 1.0 {
            inc.scale(cfg.noise_scale);
        }
        ev.advance(&inc)?;
    }
    Ok(ev.finish())
}

/// Heat kernels `φ_T = e^{T²Δ^ε}δ` at `T = 2^{-j}`, `j = 1, …` down to `ε`.
pub struct DyadicKernelFamily {
    grid: LatticeGrid,
    scales: Vec<f64>,
    multipliers: Vec<Vec<f64>>,
}

impl DyadicKernelFamily {
    pub fn new(grid: &LatticeGrid) -> Self {
        let mut scales = Vec::new();
        let mut j = 1;
        while (-(j as f64)).exp2() >= grid.eps() {
            scales.push((-(j as f64)).exp2());
            j += 1;
        }
        Self::with_scales(grid, scales)
    }

    pub fn with_scales(grid: &LatticeGrid, scales: Vec<f64>) -> Self {
        let mu = laplacian_symbol(grid);
        let multipliers = scales
            .iter()
            .map(|t| mu.iter().map(|m| (-t * t * m).exp()).collect())
            .collect();
        Self { grid: *grid, scales, multipliers }
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn multiplier(&self, j: usize) -> &[f64] {
        &self.multipliers[j]
    }

    /// Real-space kernel `K_T(z)` with `Σ_z K_T(z) = 1` (so `ε^d Σ φ_T = 1`).
    pub fn kernel(&self, j: usize) -> Vec<f64> {
        let mut delta = vec![0.0; self.grid.num_sites()];
        delta[0] = 1.0;
        let mut out = vec![0.0; delta.len()];
        Spectral::new(&self.grid).apply_multiplier(&delta, &self.multipliers[j], &mut out);
        out
    }
}

/// Base points and times over which seminorm suprema are taken.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    /// Times strictly above `t_min` and up to `t_max`.
    pub t_min: f64,
    pub t_max: f64,
    pub region: Option<BoxRegion>,
    pub site_stride: usize,
    pub time_stride: usize,
}

impl Domain {
    /// `P = (0, 1) × 𝕋` with the default decimation.
    pub fn full() -> Self {
        Self { t_min: 0.0, t_max: 1.0, region: None, site_stride: 2, time_stride: 4 }
    }

    pub fn localised(region: BoxRegion) -> Self {
        Self { region: Some(region), ..Self::full() }
    }

    pub fn exhaustive(mut self) -> Self {
        self.site_stride = 1;
        self.time_stride = 1;
        self
    }

    pub fn label(&self) -> &'static str {
        if self.region.is_some() {
            "local"
        } else {
            "full"
        }
    }

    fn time_indices(&self, times: &[f64]) -> Result<Vec<usize>> {
        let last = times.last().copied().unwrap_or(0.0);
        if last + 1e-9 < self.t_max {
            return Err(Phi4Error::InsufficientData(format!(
                "ensemble ends at t = {last}, window needs t = {}",
                self.t_max
            )));
        }
        let inside: Vec<usize> = (0..times.len())
            .filter(|&m| times[m] > self.t_min && times[m] <= self.t_max + 1e-12)
            .collect();
        Ok(inside.into_iter().step_by(self.time_stride.max(1)).collect())
    }

    fn sites(&self, grid: &LatticeGrid) -> Vec<usize> {
        let st = self.site_stride.max(1);
        (0..grid.num_sites())
            .filter(|&s| {
                let c = grid.coords(s);
                (0..grid.dim()).all(|a| c[a].is_multiple_of(st))
            })
            .filter(|&s| self.region.as_ref().is_none_or(|r| r.contains_site(grid, s)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeminormEntry {
    pub tree: Tree,
    pub leaves: u32,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeminormReport {
    pub kappa: f64,
    pub domain: String,
    pub entries: Vec<SeminormEntry>,
    /// `sup_t ‖🌲₁(t)‖_{C^{-1/2-κ}}` over the window (Littlewood–Paley proxy).
    pub holder_one: f64,
}

impl SeminormReport {
    pub fn get(&self, tree: Tree) -> f64 {
        self.entries.iter().find(|e| e.tree == tree).map(|e| e.value).unwrap_or(0.0)
    }

    /// `max_τ [τ]^{2/(n_τ(1−κ))}`, with `[🌲₁]` taken in the stronger Hölder norm.
    pub fn bound_term(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| {
                let v = if e.tree == Tree::One { self.holder_one } else { e.value };
                v.powf(2.0 / (e.leaves as f64 * (1.0 - self.kappa)))
            })
            .fold(0.0, f64::max)
    }
}

/// Per-scale suprema `sup_{(t,x)} T^{-(deg−κ)} |…|` for every tree.
pub fn seminorm_profiles(
    ens: &TreeEnsemble,
    kernels: &DyadicKernelFamily,
    kappa: f64,
    domain: &Domain,
) -> Result<Vec<(Tree, Vec<f64>)>> {
    if !(kappa > 0.0 && kappa < 0.25) {
        return Err(Phi4Error::InvalidParameter(format!("kappa = {kappa} outside (0, 1/4)")));
    }
    let g = ens.grid;
    let times = domain.time_indices(&ens.times)?;
    let sites = domain.sites(&g);
    let nj = kernels.scales().len();
    let mut sp = Spectral::new(&g);
    let ms: Vec<&[f64]> = (0..nj).map(|j| kernels.multiplier(j)).collect();
    let mut prof: Vec<Vec<f64>> = vec![vec![0.0; nj]; Tree::ALL.len()];
    let mut conv = |f: &Field| -> Vec<Vec<f64>> {
        let mut outs = vec![Vec::new(); nj];
        sp.apply_multipliers(f.values(), &ms, &mut outs);
        outs
    };
    for &m in &times {
        let t1 = &ens.t1[m];
        let t2 = ens.t2(m);
        let t3 = ens.t3(m);
        let t20 = &ens.t20[m];
        let t30 = &ens.t30[m];
        let [p22, p31, p32] = ens.products(m);
        let c1 = conv(t1);
        let c2f = conv(&t2);
        let c3 = conv(&t3);
        let c20 = conv(t20);
        let c30 = conv(t30);
        let c22 = conv(&p22);
        let c31 = conv(&p31);
        let c32 = conv(&p32);
        for j in 0..nj {
            let t = kernels.scales()[j];
            for (ti, tree) in Tree::ALL.iter().enumerate() {
                let w = t.powf(tree.scale_exponent(kappa));
                let mut best = prof[ti][j];
                for &x in &sites {
                    let v = match tree {
                        Tree::One => c1[j][x],
                        Tree::Two => c2f[j][x],
                        Tree::Three => c3[j][x],
                        Tree::TwoZero => c20[j][x] - t20.values()[x],
                        Tree::ThreeZero => c30[j][x] - t30.values()[x],
                        Tree::TwoTwo => c22[j][x] - ens.c2 - t20.values()[x] * c2f[j][x],
                        Tree::ThreeOne => c31[j][x] - t30.values()[x] * c1[j][x],
                        Tree::ThreeTwo => c32[j][x] - t30.values()[x] * c2f[j][x],
                    };
                    best = best.max(w * v.abs());
                }
                prof[ti][j] = best;
            }
        }
    }
    Ok(Tree::ALL.iter().copied().zip(prof).collect())
}

/// `[τ]_κ` for every tree plus the Hölder norm of `🌲₁`.
pub fn seminorms(ens: &TreeEnsemble, kernels: &DyadicKernelFamily, kappa: f64, domain: &Domain) -> Result<SeminormReport> {
    let prof = seminorm_profiles(ens, kernels, kappa, domain)?;
    let entries = prof
        .into_iter()
        .map(|(tree, p)| SeminormEntry { tree, leaves: tree.leaves(), value: p.iter().cloned().fold(0.0, f64::max) })
        .collect();
    let times = domain.time_indices(&ens.times)?;
    let mut lp = LittlewoodPaley::new(&ens.grid);
    let mask = domain.region.as_ref().map(|r| r.mask(&ens.grid));
    let holder_one = times
        .iter()
        .map(|&m| match &mask {
            Some(k) => lp.norm_masked(&ens.t1[m], -0.5 - kappa, k),
            None => lp.norm(&ens.t1[m], -0.5 - kappa),
        })
        .fold(0.0, f64::max);
    Ok(SeminormReport { kappa, domain: domain.label().into(), entries, holder_one })
}

/// `[τ]_κ` for a single tree.
pub fn seminorm(tree: Tree, ens: &TreeEnsemble, kernels: &DyadicKernelFamily, kappa: f64, domain: &Domain) -> Result<f64> {
    let prof = seminorm_profiles(ens, kernels, kappa, domain)?;
    Ok(prof
        .into_iter()
        .find(|(t, _)| *t == tree)
        .map(|(_, p)| p.into_iter().fold(0.0, f64::max))
        .unwrap_or(0.0))
}

/// Monte-Carlo estimate of the sunset constant: stationary mean of
/// `🌲₂₀·🌲₂` computed with `c2 = 0`, with its batch-means standard error.
pub fn estimate_c2_mc(rc: &RenormConstants, dt: f64, seed: u64, burn_steps: u64, steps: u64) -> Result<(f64, f64)> {
    let g = rc.grid;
    let cfg = TreeConfig {
        grid: g,
        dt,
        steps: burn_steps + steps,
        store_every: u64::MAX,
        rc: RenormConstants::from_values(&g, rc.m2, Some(dt), rc.c1, 0.0),
        stationary_start: true,
        init_seed: crate::noise::derive_seed(seed, &[1]),
        noise_scale: 1.0,
    };
    let mut ev = TreeEvolver::new(&cfg)?;
    let mut stream = NoiseStream::new(seed, g);
    let mut means = Vec::with_capacity(steps as usize);
    for s in 0..burn_steps + steps {
        let inc = stream.draw_increment(dt)?;
        if s >= burn_steps {
            let (t1, t20, _) = ev.current();
            let m: f64 = t1
                .values()
                .iter()
                .zip(t20.values())
                .map(|(a, b)| (a * a - rc.c1) * b)
                .sum::<f64>()
                / g.num_sites() as f64;
            means.push(m);
        }
        ev.advance(&inc)?;
    }
    let (mean, se) = crate::stats::batch_means(&means, 32)?;
    Ok((mean, se))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_grid;

    #[test]
    fn kernels_normalised_and_semigroup() {
        let g = build_grid(2, 1.0, 4).unwrap();
        let k = DyadicKernelFamily::new(&g);
        assert_eq!(k.scales().len(), 4);
        for j in 0..k.scales().len() {
            let s: f64 = k.kernel(j).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_noise_gives_zero_trees() {
        let g = build_grid(1, 1.0, 3).unwrap();
        let rc = RenormConstants::from_values(&g, 1.0, Some(0.01), 0.0, 0.0);
        let mut cfg = TreeConfig::new(rc, 0.01, 0.1, 1, 3);
        cfg.noise_scale = 0.0;
        let mut st = NoiseStream::new(1, g);
        let ens = evolve_trees(&mut st, &cfg).unwrap();
        for m in 0..ens.times.len() {
            assert_eq!(ens.t1[m].sup_norm(), 0.0);
            assert_eq!(ens.t20[m].sup_norm(), 0.0);
            assert_eq!(ens.t30[m].sup_norm(), 0.0);
        }
    }

    #[test]
    fn constant_tree_two() {
        let g = build_grid(1, 1.0, 3).unwrap();
        let times: Vec<f64> = (0..=8).map(|i| i as f64 / 8.0).collect();
        let ones = vec![Field::constant(g, 1.0); times.len()];
        let zeros = vec![Field::zeros(g); times.len()];
        let ens = TreeEnsemble::from_parts(g, 0.0, 0.0, times, ones, zeros.clone(), zeros).unwrap();
        let k = DyadicKernelFamily::new(&g);
        let kappa = 0.1;
        let v = seminorm(Tree::Two, &ens, &k, kappa, &Domain::full()).unwrap();
        let oracle = k.scales().iter().map(|t| t.powf(1.0 + kappa)).fold(0.0, f64::max);
        assert!((v - oracle).abs() < 1e-12);
    }
}

//! Verification harnesses: maximum principle, a priori bounds against tree
//! seminorms, coupled-level convergence and the initial-data rate.

use serde::{Deserialize, Serialize};

use crate::dynamics::{cubic_flow, SimConfig, Stepper};
use crate::error::{Phi4Error, Result};
use crate::holder::LittlewoodPaley;
use crate::lattice::{
    bump, bump_derivative, bump_slope_bound, iota_refine, laplacian_symbol, project_fn, sample_test_function,
    weighted_pairing, BoxRegion, Field, LatticeGrid, TestFunction,
};
use crate::noise::{coarsen_to, derive_seed, NoiseIncrement, NoiseStream};
use crate::potential::TruncatedPotential;
use crate::quadrature::{composite_1d, GL4_NODES, GL4_WEIGHTS};
use crate::renorm::RenormConstants;
use crate::spectral::Spectral;
use crate::trees::{seminorms, Domain, DyadicKernelFamily, SeminormReport, TreeConfig, TreeEnsemble, TreeEvolver};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryEntry {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub lhs: f64,
    pub rhs: f64,
    /// Smallest `C` with `lhs ≤ C·rhs` over every entry.
    pub constant_fit: f64,
    pub c_max: f64,
    pub pass: bool,
    pub entries: Vec<BatteryEntry>,
}

impl BoundReport {
    pub fn from_entries(entries: Vec<BatteryEntry>, c_max: f64) -> Self {
        let worst = entries
            .iter()
            .cloned()
            .fold(None::<BatteryEntry>, |b, e| match b {
                Some(b) if b.ratio >= e.ratio => Some(b),
                _ => Some(e),
            });
        let (lhs, rhs, constant_fit) = worst.map(|e| (e.lhs, e.rhs, e.ratio)).unwrap_or((0.0, 1.0, 0.0));
        let pass = entries.iter().all(|e| e.lhs <= c_max * e.rhs);
        Self { lhs, rhs, constant_fit, c_max, pass, entries }
    }

    /// Union of two batteries.
    pub fn merge(&self, other: &BoundReport) -> Self {
        let mut e = self.entries.clone();
        e.extend(other.entries.iter().cloned());
        Self::from_entries(e, self.c_max.min(other.c_max))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleConfig {
    pub dt: f64,
    pub t_end: f64,
    pub c_max: f64,
}

impl Default for MaxPrincipleConfig {
    fn default() -> Self {
        Self { dt: 1e-4, t_end: 1.0, c_max: 2.0 }
    }
}

/// Solve `(∂_t − Δ^ε)u = −u³ + g(t, x, u)` without noise and compare
/// `sup_x |u(t)|` with `max{t^{-1/2}, ‖g‖^{1/3}}` at every step.
pub fn check_max_principle<G: Fn(f64, &[f64], f64) -> f64>(
    u0: &Field,
    g: G,
    g_sup: f64,
    cfg: &MaxPrincipleConfig,
) -> Result<BoundReport> {
    let grid = *u0.grid();
    let d = grid.dim();
    if !(cfg.t_end > 0.0 && cfg.t_end <= 1.0 && cfg.dt > 0.0) {
        return Err(Phi4Error::InvalidParameter("need 0 < t_end ≤ 1 and dt > 0".into()));
    }
    let steps = (cfg.t_end / cfg.dt).round() as u64;
    let resolvent: Vec<f64> = laplacian_symbol(&grid).iter().map(|mu| 1.0 / (1.0 + cfg.dt * mu)).collect();
    let mut sp = Spectral::new(&grid);
    let pos: Vec<[f64; 3]> = (0..grid.num_sites()).map(|s| grid.site_position(s)).collect();
    let mut u = u0.values().to_vec();
    let mut next = vec![0.0; u.len()];
    let mut worst = BatteryEntry { label: String::new(), lhs: 0.0, rhs: 1.0, ratio: 0.0 };
    for m in 0..steps {
        let t = m as f64 * cfg.dt;
        for (s, v) in u.iter_mut().enumerate() {
            let gv = g(t, &pos[s][..d], *v);
            if gv.abs() > g_sup * (1.0 + 1e-12) {
                return Err(Phi4Error::InvalidParameter(format!("|g| = {} exceeds declared bound {g_sup}", gv.abs())));
            }
            *v = cubic_flow(*v, 0.0, cfg.dt) + cfg.dt * gv;
        }
        sp.apply_multiplier(&u, &resolvent, &mut next);
        std::mem::swap(&mut u, &mut next);
        let sup = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if !sup.is_finite() {
            return Err(Phi4Error::BlowUp { step: m + 1, detail: "deterministic flow".into() });
        }
        let tt = (m + 1) as f64 * cfg.dt;
        let rhs = tt.powf(-0.5).max(g_sup.cbrt());
        if sup / rhs > worst.ratio {
            worst = BatteryEntry { label: format!("t={tt:.6}"), lhs: sup, rhs, ratio: sup / rhs };
        }
    }
    Ok(BoundReport::from_entries(vec![worst], cfg.c_max))
}

/// Chain and trees advanced with the same noise increments, stored on a
/// common time grid.
#[derive(Clone, Debug)]
pub struct CoupledRun {
    pub times: Vec<f64>,
    pub u: Vec<Field>,
    pub ens: TreeEnsemble,
    pub seed: u64,
    pub dt: f64,
}

pub fn tree_config_for(cfg: &SimConfig, store_every: u64) -> TreeConfig {
    TreeConfig {
        grid: cfg.grid,
        dt: cfg.dt,
        steps: cfg.steps(),
        store_every: store_every.max(1),
        rc: cfg.renorm,
        stationary_start: true,
        init_seed: derive_seed(cfg.seed, &[0x7431]),
        noise_scale: cfg.noise_scale,
    }
}

/// Run the chain from `u0` together with the tree ensemble up to `cfg.t_end`.
pub fn run_coupled(cfg: &SimConfig, u0: Field, store_every: u64) -> Result<CoupledRun> {
    let mut stepper = Stepper::new(cfg)?;
    let tcfg = tree_config_for(cfg, store_every);
    let mut trees = TreeEvolver::new(&tcfg)?;
    let mut stream = NoiseStream::new(cfg.seed, cfg.grid);
    let mut u = u0;
    u.time = 0.0;
    let mut times = vec![0.0];
    let mut us = vec![u.clone()];
    let mut inc = NoiseIncrement::zeros(cfg.grid, cfg.dt);
    for step in 0..cfg.steps() {
        stream.draw_into(cfg.dt, &mut inc)?;
        if cfg.noise_scale != 1.0 {
            inc.scale(cfg.noise_scale);
        }
        stepper.advance(&mut u, &inc, step)?;
        trees.advance(&inc)?;
        if (step + 1) % tcfg.store_every == 0 {
            times.push(u.time);
            us.push(u.clone());
        }
    }
    Ok(CoupledRun { times, u: us, ens: trees.finish(), seed: cfg.seed, dt: cfg.dt })
}

fn sup_v(run: &CoupledRun, t_min: f64, region: Option<&BoxRegion>) -> f64 {
    let g = run.ens.grid;
    let mask = region.map(|r| r.mask(&g));
    let mut best = 0.0f64;
    for (m, &t) in run.times.iter().enumerate() {
        if t <= t_min {
            continue;
        }
        for (s, (a, b)) in run.u[m].values().iter().zip(run.ens.t1[m].values()).enumerate() {
            if mask.as_ref().is_none_or(|k| k[s]) {
                best = best.max((a - b).abs());
            }
        }
    }
    best
}

/// Right-hand side `max{R^{-1}, [τ]^{2/(n_τ(1−κ))}}` of the a priori bound.
pub fn apriori_rhs(report: &SeminormReport, r: f64) -> f64 {
    r.recip().max(report.bound_term())
}

/// `‖u − 🌲₁‖` over `P_R = (R², 1) × 𝕋` against the tree bound.
pub fn check_apriori(run: &CoupledRun, r: f64, kappa: f64, c_max: f64) -> Result<(BoundReport, SeminormReport)> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Phi4Error::InvalidParameter(format!("R = {r} outside (0, 1)")));
    }
    let kernels = DyadicKernelFamily::new(&run.ens.grid);
    let sem = seminorms(&run.ens, &kernels, kappa, &Domain::full())?;
    let lhs = sup_v(run, r * r, None);
    let rhs = apriori_rhs(&sem, r);
    let entry = BatteryEntry { label: format!("seed={}", run.seed), lhs, rhs, ratio: lhs / rhs };
    Ok((BoundReport::from_entries(vec![entry], c_max), sem))
}

/// Largest admissible `R` for a localised check: `N_box − (|c| + r)` in sup norm.
pub fn localisation_margin(grid: &LatticeGrid, psi: &TestFunction, n_box: f64) -> f64 {
    let reach = psi
        .center()
        .iter()
        .map(|&c| grid.to_centered(c).abs() + psi.radius())
        .fold(0.0, f64::max);
    n_box - reach
}

/// The a priori bound on `Q_R = (R², 1) × [−N+R, N−R]^d` with seminorms restricted to `[−N, N]^d`.
pub fn check_apriori_localised(
    run: &CoupledRun,
    r: f64,
    kappa: f64,
    n_box: f64,
    psi: &TestFunction,
    c_max: f64,
) -> Result<(BoundReport, SeminormReport)> {
    let g = run.ens.grid;
    if g.side() < 2.0 * n_box {
        return Err(Phi4Error::Support(format!("torus side {} < 2·N_box = {}", g.side(), 2.0 * n_box)));
    }
    let c0 = localisation_margin(&g, psi, n_box);
    if !(r > 0.0 && r < c0) {
        return Err(Phi4Error::Support(format!("R = {r} must lie in (0, c0) with c0 = {c0}")));
    }
    let kernels = DyadicKernelFamily::new(&g);
    let outer = BoxRegion::centered_cube(&g, n_box);
    let inner = BoxRegion::centered_cube(&g, n_box - r);
    let sem = seminorms(&run.ens, &kernels, kappa, &Domain::localised(outer))?;
    let lhs = sup_v(run, r * r, Some(&inner));
    let rhs = apriori_rhs(&sem, r);
    let entry = BatteryEntry { label: format!("seed={} local", run.seed), lhs, rhs, ratio: lhs / rhs };
    Ok((BoundReport::from_entries(vec![entry], c_max), sem))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    pub d: usize,
    pub side: f64,
    pub levels: Vec<u32>,
    pub ref_level: u32,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub m2: f64,
    pub potential: Option<TruncatedPotential>,
    pub beta: f64,
    pub psi: Option<TestFunction>,
    /// Quadratic test mode (no cubic term, no counterterm).
    pub linear: bool,
    pub kappa: f64,
    pub store_every: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceRow {
    pub level: u32,
    /// `sup_t ‖ι^ε Φ^ε(t) − Φ^{ref}(t)‖_{C^{-1/2-κ}}` (Littlewood–Paley proxy).
    pub holder_distance: f64,
    /// `sup_t |⟨ι^ε Φ^ε(t) − Φ^{ref}(t), ψ⟩|`.
    pub observable_distance: f64,
    pub blew_up: bool,
}

fn level_config(c: &ConvergenceConfig, level: u32) -> Result<SimConfig> {
    let grid = LatticeGrid::new(c.d, c.side, level)?;
    let rc = if c.linear { RenormConstants::zero(&grid, c.m2) } else { RenormConstants::new(&grid, c.m2, Some(c.dt))? };
    let mut s = SimConfig::phi(grid, c.dt, c.t_end, rc, c.seed);
    s.potential = c.potential;
    s.beta = c.beta;
    s.psi = c.psi.clone();
    s.quadratic_only = c.linear;
    Ok(s)
}

/// Run every level on noise coarsened from the reference level, from
/// box-averaged initial data, and measure distances to the reference.
pub fn convergence_study<F: Fn(&[f64]) -> f64>(c: &ConvergenceConfig, init: F) -> Result<Vec<DistanceRow>> {
    if c.levels.iter().any(|&l| l > c.ref_level) {
        return Err(Phi4Error::GridMismatch("levels must not exceed the reference level".into()));
    }
    let ref_cfg = level_config(c, c.ref_level)?;
    let ref_grid = ref_cfg.grid;
    let mut ref_step = Stepper::new(&ref_cfg)?;
    let mut ref_u = project_fn(&ref_grid, &init);
    let mut cfgs = Vec::new();
    for &l in &c.levels {
        let cfg = level_config(c, l)?;
        let st = Stepper::new(&cfg)?;
        let u = project_fn(&cfg.grid, &init);
        cfgs.push((cfg, st, u, false));
    }
    let psi_ref = match &c.psi {
        Some(p) => Some(sample_test_function(p, &ref_grid)?),
        None => None,
    };
    let mut lp = LittlewoodPaley::new(&ref_grid);
    let alpha = -0.5 - c.kappa;
    let mut rows: Vec<DistanceRow> = c
        .levels
        .iter()
        .map(|&level| DistanceRow { level, holder_distance: 0.0, observable_distance: 0.0, blew_up: false })
        .collect();
    let mut stream = NoiseStream::new(c.seed, ref_grid);
    let mut inc = NoiseIncrement::zeros(ref_grid, c.dt);
    let store = c.store_every.max(1);
    let measure = |rows: &mut Vec<DistanceRow>,
                   cfgs: &Vec<(SimConfig, Stepper, Field, bool)>,
                   ref_u: &Field,
                   lp: &mut LittlewoodPaley|
     -> Result<()> {
        for (i, (_, _, u, dead)) in cfgs.iter().enumerate() {
            if *dead {
                continue;
            }
            let emb = iota_refine(u, &ref_grid)?;
            let mut diff = emb.clone();
            for (a, b) in diff.values_mut().iter_mut().zip(ref_u.values()) {
                *a -= b;
            }
            rows[i].holder_distance = rows[i].holder_distance.max(lp.norm(&diff, alpha));
            if let Some(pe) = &psi_ref {
                let o = weighted_pairing(&diff, pe)?.abs();
                rows[i].observable_distance = rows[i].observable_distance.max(o);
            }
        }
        Ok(())
    };
    measure(&mut rows, &cfgs, &ref_u, &mut lp)?;
    for step in 0..ref_cfg.steps() {
        stream.draw_into(c.dt, &mut inc)?;
        ref_step.advance(&mut ref_u, &inc, step)?;
        for (i, (cfg, st, u, dead)) in cfgs.iter_mut().enumerate() {
            if *dead {
                continue;
            }
            let coarse = coarsen_to(&inc, &cfg.grid)?;
            if st.advance(u, &coarse, step).is_err() {
                *dead = true;
                rows[i].blew_up = true;
            }
        }
        if (step + 1) % store == 0 {
            measure(&mut rows, &cfgs, &ref_u, &mut lp)?;
        }
    }
    Ok(rows)
}

/// Per-axis `Σ_{r<R} e^{2πi k r / n_f}` squared modulus.
fn block_sum_sq(k: usize, n_f: usize, r: usize) -> f64 {
    let th = std::f64::consts::TAU * k as f64 / n_f as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for j in 0..r {
        re += (th * j as f64).cos();
        im += (th * j as f64).sin();
    }
    re * re + im * im
}

/// Weights `(1 + μ(k))^{α}` on the fine grid.
pub fn sobolev_distance_weights(fine: &LatticeGrid, alpha: f64) -> Vec<f64> {
    laplacian_symbol(fine).into_iter().map(|mu| (1.0 + mu).powf(alpha)).collect()
}

/// Exact stationary `E[ε_f^d Σ_k w_k |D̂_k|²]` for the quadratic scheme,
/// `D = ι u_c − u_f`, with coarse noise the block mean of the fine noise.
pub fn linear_coupling_error(coarse: &LatticeGrid, fine: &LatticeGrid, dt: f64, m2: f64, alpha: f64) -> Result<f64> {
    let r = coarse.refinement_factor(fine)?;
    let d = fine.dim();
    let b = r.pow(d as u32) as f64;
    let n_f = fine.sites_per_axis();
    let n_c = coarse.sites_per_axis();
    let mu_f = laplacian_symbol(fine);
    let mu_c = laplacian_symbol(coarse);
    let w = sobolev_distance_weights(fine, alpha);
    let axis_s: Vec<f64> = (0..n_f).map(|k| block_sum_sq(k, n_f, r)).collect();
    let sigma2 = dt / fine.cell_volume();
    let mut total = 0.0;
    for k in 0..fine.num_sites() {
        let kc = fine.coords(k);
        let mut qc = [0usize; 3];
        let mut s2 = 1.0;
        for a in 0..d {
            qc[a] = kc[a] % n_c;
            s2 *= axis_s[kc[a]];
        }
        let q = coarse.index(&qc[..d]);
        let rf = 1.0 / (1.0 + dt * (mu_f[k] + m2));
        let rc = 1.0 / (1.0 + dt * (mu_c[q] + m2));
        let s = s2 / (b * b);
        let e = s * rc * rc / (1.0 - rc * rc) - 2.0 * s * rf * rc / (1.0 - rf * rc) + rf * rf / (1.0 - rf * rf);
        total += w[k] * e;
    }
    Ok(fine.cell_volume() * sigma2 * total)
}

/// Monte-Carlo estimate of [`linear_coupling_error`] from a coupled run
/// started from the exact stationary law of each level (independently).
pub fn linear_coupling_mc(
    coarse: &LatticeGrid,
    fine: &LatticeGrid,
    dt: f64,
    m2: f64,
    alpha: f64,
    seed: u64,
    burn_steps: u64,
    steps: u64,
) -> Result<(f64, f64)> {
    let mk = |g: &LatticeGrid| {
        let mut s = SimConfig::phi(*g, dt, 1.0, RenormConstants::zero(g, m2), seed);
        s.quadratic_only = true;
        s
    };
    let cf = mk(fine);
    let cc = mk(coarse);
    let mut sf = Stepper::new(&cf)?;
    let mut sc = Stepper::new(&cc)?;
    let mut uf = Field::zeros(*fine);
    let mut uc = Field::zeros(*coarse);
    let w = sobolev_distance_weights(fine, alpha);
    let mut sp = Spectral::new(fine);
    let mut stream = NoiseStream::new(seed, *fine);
    let mut inc = NoiseIncrement::zeros(*fine, dt);
    let mut samples = Vec::with_capacity(steps as usize);
    let inv_n = 1.0 / fine.num_sites() as f64;
    for step in 0..burn_steps + steps {
        stream.draw_into(dt, &mut inc)?;
        let ci = coarsen_to(&inc, coarse)?;
        sf.advance(&mut uf, &inc, step)?;
        sc.advance(&mut uc, &ci, step)?;
        if step >= burn_steps {
            let emb = iota_refine(&uc, fine)?;
            let diff: Vec<f64> = emb.values().iter().zip(uf.values()).map(|(a, b)| a - b).collect();
            let spec = sp.forward_real(&diff);
            let s: f64 = spec.iter().zip(&w).map(|(c, wk)| c.norm_sqr() * inv_n * wk).sum();
            samples.push(fine.cell_volume() * s);
        }
    }
    crate::stats::batch_means(&samples, 50)
}

/// Explicit rough function on the one-dimensional unit torus:
/// `mean + Σ a_j cos(2π f_j x + θ_j)` with integer frequencies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoughFunction {
    pub mean: f64,
    pub terms: Vec<(f64, f64, f64)>,
}

impl RoughFunction {
    /// `Σ_{j=1}^{J} 2^{-j(α′ + 1/2)} s_j cos(2π 2^j x + θ_j)` with
    /// `α′ = −1/2 − κ/2`, signs and phases frozen by `seed`.
    pub fn lacunary(kappa: f64, j_max: u32, seed: u64) -> Self {
        let alpha_p = -0.5 - 0.5 * kappa;
        let mut z = vec![0.0; 2 * j_max as usize];
        crate::noise::standard_normals(derive_seed(seed, &[0x1ac]), 0, 0, &mut z);
        let terms = (1..=j_max)
            .map(|j| {
                let i = 2 * (j as usize - 1);
                let sign = if z[i] >= 0.0 { 1.0 } else { -1.0 };
                let phase = std::f64::consts::TAU * unit_from_normal(z[i + 1]);
                ((j as f64).exp2(), sign * (-(j as f64) * (alpha_p + 0.5)).exp2(), phase)
            })
            .collect();
        Self { mean: 0.0, terms }
    }

    pub fn single_mode(freq: u32, amp: f64) -> Self {
        Self { mean: 0.0, terms: vec![(freq as f64, amp, 0.0)] }
    }

    pub fn constant(c: f64) -> Self {
        Self { mean: c, terms: Vec::new() }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.mean
            + self
                .terms
                .iter()
                .map(|&(f, a, th)| a * (std::f64::consts::TAU * f * x + th).cos())
                .sum::<f64>()
    }

    /// Exact mean over `[lo, lo + w]`.
    pub fn box_average(&self, lo: f64, w: f64) -> f64 {
        self.mean
            + self
                .terms
                .iter()
                .map(|&(f, a, th)| {
                    let k = std::f64::consts::TAU * f;
                    a * ((k * (lo + w) + th).sin() - (k * lo + th).sin()) / (k * w)
                })
                .sum::<f64>()
    }
}

/// Map a standard normal draw to `[0, 1)` through `tanh`.
fn unit_from_normal(z: f64) -> f64 {
    (0.5 * (1.0 + z.tanh())).min(1.0 - 1e-12)
}

/// Test-function dictionary on `[-1/2, 1/2]`: `b(2z)` and `b'(2z)/sup|b'|`.
fn dictionary(which: usize, z: f64) -> f64 {
    match which {
        0 => bump(2.0 * z),
        _ => bump_derivative(2.0 * z) / bump_slope_bound(),
    }
}

/// `∫ φ(z) e^{2πiξz} dz` for the dictionary element (real part for the even
/// element, imaginary part for the odd one).
fn dictionary_transform(which: usize, xi: f64) -> (f64, f64) {
    let panels = (256.0 + 8.0 * xi.abs()).min(40_000.0) as usize;
    let k = std::f64::consts::TAU * xi;
    let re = composite_1d(-0.5, 0.5, panels, |z| dictionary(which, z) * (k * z).cos());
    let im = composite_1d(-0.5, 0.5, panels, |z| dictionary(which, z) * (k * z).sin());
    (re, im)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// `(level, ε, distance)`.
    pub distances: Vec<(u32, f64, f64)>,
}

/// `sup_{x, λ, φ} λ^{1/2+κ} |⟨ζ − ι^ε𝔉P_ε ζ, φ^λ_x⟩|` at each level, and the
/// least-squares slope of `log distance` against `log ε`.
pub fn init_discretisation_rate(zeta: &RoughFunction, kappa: f64, kappa_bar: f64, levels: &[u32]) -> Result<RateFit> {
    if !(kappa_bar < 0.5 * kappa && kappa > 0.0) {
        return Err(Phi4Error::InvalidParameter(format!("need 0 < κ̄ < κ/2 (κ = {kappa}, κ̄ = {kappa_bar})")));
    }
    let mut distances = Vec::new();
    for &level in levels {
        let grid = LatticeGrid::new(1, 1.0, level)?;
        let eps = grid.eps();
        let n = grid.sites_per_axis();
        let zbar: Vec<f64> = (0..n).map(|i| zeta.box_average(i as f64 * eps, eps)).collect();
        let mut best = 0.0f64;
        let mut lambda = 1.0;
        while lambda > eps * (1.0 + 1e-12) {
            let scale = lambda.powf(0.5 + kappa);
            let subs = ((128.0 * eps / lambda).ceil() as usize).max(2);
            for which in 0..2 {
                let hats: Vec<(f64, f64)> = zeta.terms.iter().map(|&(f, _, _)| dictionary_transform(which, lambda * f)).collect();
                let mass = dictionary_transform(which, 0.0).0;
                let n_x = 2 * n;
                for ix in 0..n_x {
                    let x = (ix as f64 + 0.25) * eps / 2.0;
                    // continuum pairing from the Fourier side
                    let mut cont = zeta.mean * mass;
                    for (&(f, a, th), &(hr, hi)) in zeta.terms.iter().zip(&hats) {
                        let ph = std::f64::consts::TAU * f * x + th;
                        cont += a * (ph.cos() * hr - ph.sin() * hi);
                    }
                    // lattice pairing: boxes meeting the support
                    let mut disc = 0.0;
                    let first = ((x - 0.5 * lambda) / eps).floor() as i64;
                    let last = ((x + 0.5 * lambda) / eps).floor() as i64;
                    for b in first..=last {
                        let i = b.rem_euclid(n as i64) as usize;
                        let lo = b as f64 * eps;
                        let mut integral = 0.0;
                        let h = eps / subs as f64;
                        for sub in 0..subs {
                            let slo = lo + sub as f64 * h;
                            for q in 0..4 {
                                let y = slo + 0.5 * h * (1.0 + GL4_NODES[q]);
                                integral += GL4_WEIGHTS[q] * 0.5 * h * dictionary(which, (y - x) / lambda) / lambda;
                            }
                        }
                        disc += zbar[i] * integral;
                    }
                    best = best.max(scale * (cont - disc).abs());
                }
            }
            lambda *= 0.5;
        }
        distances.push((level, eps, best));
    }
    let pts: Vec<(f64, f64)> = distances
        .iter()
        .filter(|(_, _, d)| *d > 0.0)
        .map(|&(_, e, d)| (e.ln(), d.ln()))
        .collect();
    let (slope, intercept) = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        (sxy / sxx, my - sxy / sxx * mx)
    } else {
        (f64::INFINITY, f64::NEG_INFINITY)
    };
    Ok(RateFit { slope, intercept, distances })
}

//! Estimators for chain output: autocorrelation, block bootstrap,
//! reweighted partition functions, tail exponents and the density relation.

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Phi4Error, Result};
use crate::potential::TruncatedPotential;

/// Effective sample size below which estimates are flagged unreliable.
pub const MIN_ESS: f64 = 100.0;

/// Longest prefix used for the FFT autocorrelation.
const ACF_MAX_LEN: usize = 1 << 21;

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Mergeable count/mean/second-moment accumulator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        let n = (self.count + other.count) as f64;
        let d = other.mean - self.mean;
        self.m2 += other.m2 + d * d * self.count as f64 * other.count as f64 / n;
        self.mean += d * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }
}

/// Normalised autocorrelation `ρ(0..=max_lag)` via zero-padded FFT.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    let x = &x[..x.len().min(ACF_MAX_LEN)];
    let n = x.len();
    let m = mean(x);
    let len = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex64> = x.iter().map(|v| Complex64::new(v - m, 0.0)).collect();
    buf.resize(len, Complex64::default());
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    buf.iter_mut().for_each(|c| *c = Complex64::new(c.norm_sqr(), 0.0));
    planner.plan_fft_inverse(len).process(&mut buf);
    let c0 = buf[0].re;
    if c0 <= 0.0 {
        return vec![1.0];
    }
    (0..=max_lag.min(n - 1)).map(|k| buf[k].re / c0).collect()
}

/// Integrated autocorrelation time `τ = 1/2 + Σ_{t=1}^{W} ρ(t)` with the
/// smallest window `W ≥ 5τ(W)`. Returns `(τ, W)`; `τ = 1/2` for iid data.
pub fn integrated_autocorr_time(x: &[f64]) -> (f64, usize) {
    if x.len() < 4 {
        return (0.5, 0);
    }
    let n = x.len().min(ACF_MAX_LEN);
    let rho = autocorrelation(x, n / 2);
    let mut tau = 0.5;
    for w in 1..rho.len() {
        tau += rho[w];
        if w as f64 >= 5.0 * tau {
            return (tau.max(0.5), w);
        }
    }
    (tau.max(0.5), rho.len() - 1)
}

/// Mean and standard error from `n_batches` contiguous batch means.
pub fn batch_means(x: &[f64], n_batches: usize) -> Result<(f64, f64)> {
    if n_batches < 2 || x.len() < 2 * n_batches {
        return Err(Phi4Error::InsufficientData(format!(
            "{} samples for {n_batches} batches",
            x.len()
        )));
    }
    let b = x.len() / n_batches;
    let means: Vec<f64> = (0..n_batches).map(|i| mean(&x[i * b..(i + 1) * b])).collect();
    Ok((mean(&means), (variance(&means) / n_batches as f64).sqrt()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub values: Vec<f64>,
    pub seed: u64,
    pub dt: f64,
    pub burn_in: u64,
    pub thinning: u64,
    pub autocorr_time: f64,
}

impl SampleSet {
    pub fn new(values: Vec<f64>, seed: u64, dt: f64, burn_in: u64, thinning: u64) -> Self {
        let (tau, _) = integrated_autocorr_time(&values);
        Self { values, seed, dt, burn_in, thinning, autocorr_time: tau }
    }

    /// `count / (2τ)`.
    pub fn ess(&self) -> f64 {
        self.values.len() as f64 / (2.0 * self.autocorr_time)
    }

    pub fn block_len(&self) -> usize {
        (2.0 * self.autocorr_time).ceil().max(1.0) as usize
    }
}

/// Block-bootstrap replicates of `stat(column means)`. Columns are
/// resampled jointly in non-overlapping blocks of `block_len`.
pub fn block_bootstrap<F: Fn(&[f64]) -> f64>(
    columns: &[&[f64]],
    block_len: usize,
    reps: usize,
    seed: u64,
    stat: F,
) -> Result<Vec<f64>> {
    let n = columns.first().map(|c| c.len()).unwrap_or(0);
    let block_len = block_len.max(1);
    let nb = n / block_len;
    if nb < 2 {
        return Err(Phi4Error::InsufficientData(format!("{n} samples, block length {block_len}")));
    }
    let sums: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| (0..nb).map(|b| c[b * block_len..(b + 1) * block_len].iter().sum()).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = (nb * block_len) as f64;
    let mut means = vec![0.0; columns.len()];
    let mut out = Vec::with_capacity(reps);
    for _ in 0..reps {
        means.iter_mut().for_each(|m| *m = 0.0);
        for _ in 0..nb {
            let b = (rng.next_u64() % nb as u64) as usize;
            for (m, s) in means.iter_mut().zip(&sums) {
                *m += s[b];
            }
        }
        means.iter_mut().for_each(|m| *m /= count);
        out.push(stat(&means));
    }
    Ok(out)
}

/// Central `level` percentile interval of replicates.
pub fn percentile_interval(reps: &mut [f64], level: f64) -> (f64, f64) {
    reps.sort_by(|a, b| a.total_cmp(b));
    let n = reps.len();
    let lo = ((1.0 - level) / 2.0 * n as f64).floor() as usize;
    let hi = (((1.0 + level) / 2.0 * n as f64).ceil() as usize).min(n) - 1;
    (reps[lo.min(n - 1)], reps[hi])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionEstimate {
    pub n: Option<u32>,
    pub beta: f64,
    pub z_hat: f64,
    pub ci: (f64, f64),
    pub std_err: f64,
    pub ess: f64,
    pub reliable: bool,
}

/// `Ẑ = mean exp(βF_n(X))` over Φ-chain pairings, with a 95% block-bootstrap interval.
pub fn estimate_partition(samples: &SampleSet, p: &TruncatedPotential, beta: f64, seed: u64) -> Result<PartitionEstimate> {
    if samples.values.len() < 4 {
        return Err(Phi4Error::InsufficientData("fewer than 4 samples".into()));
    }
    let w: Vec<f64> = samples.values.iter().map(|&x| (beta * p.eval(x)).exp()).collect();
    let z_hat = mean(&w);
    let (tau_w, _) = integrated_autocorr_time(&w);
    let tau = tau_w.max(samples.autocorr_time);
    let ess = w.len() as f64 / (2.0 * tau);
    let block = (2.0 * tau).ceil() as usize;
    let mut reps = block_bootstrap(&[&w], block, 1000, seed, |m| m[0])?;
    let ci = percentile_interval(&mut reps, 0.95);
    let std_err = (variance(&reps)).sqrt();
    Ok(PartitionEstimate { n: p.n, beta, z_hat, ci, std_err, ess, reliable: ess >= MIN_ESS })
}

/// Exceedance counts on a fixed threshold grid; mergeable across chains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalAccumulator {
    pub thresholds: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: u64,
}

impl SurvivalAccumulator {
    pub fn new(thresholds: Vec<f64>) -> Self {
        let n = thresholds.len();
        Self { thresholds, counts: vec![0; n], total: 0 }
    }

    /// `n` thresholds evenly spaced on `[lo, hi]`.
    pub fn linear(lo: f64, hi: f64, n: usize) -> Self {
        Self::new((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
    }

    pub fn push(&mut self, x: f64) {
        self.total += 1;
        let k = self.thresholds.partition_point(|&t| t < x);
        for c in &mut self.counts[..k] {
            *c += 1;
        }
    }

    pub fn merge(&mut self, other: &SurvivalAccumulator) -> Result<()> {
        if self.thresholds != other.thresholds {
            return Err(Phi4Error::InvalidParameter("threshold grids differ".into()));
        }
        self.total += other.total;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn survival(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.total as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    /// Exponent `s` of the model `−log P(X > K) = a K^s + b log K + c`.
    pub slope: f64,
    pub stderr: f64,
    /// Plain weighted least-squares slope of `log(−log P)` on `log K`.
    pub raw_slope: f64,
    pub raw_stderr: f64,
    /// `(K, survival, −log survival)` over the window.
    pub points: Vec<(f64, f64, f64)>,
}

/// Minimum exceedance count at the window edge.
pub const MIN_EXCEEDANCES: u64 = 50;

/// Tail exponent from sample values over `[k_lo, k_hi]`.
pub fn tail_exponent(samples: &[f64], k_lo: f64, k_hi: f64, n_points: usize, ess: f64) -> Result<TailFit> {
    let mut acc = SurvivalAccumulator::linear(k_lo, k_hi, n_points.max(3));
    samples.iter().for_each(|&x| acc.push(x));
    tail_exponent_from(&acc, ess)
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    if d.abs() < 1e-300 || !d.is_finite() {
        return None;
    }
    let mut out = [0.0; 3];
    for i in 0..3 {
        let mut m = a;
        for r in 0..3 {
            m[r][i] = b[r];
        }
        out[i] = det(m) / d;
    }
    Some(out)
}

/// Weighted residual of the best `(a, b, c)` at exponent `s`.
fn profile_chi2(k: &[f64], y: &[f64], w: &[f64], s: f64) -> f64 {
    let basis = |x: f64| [x.powf(s), x.ln(), 1.0];
    let mut ata = [[0.0; 3]; 3];
    let mut aty = [0.0; 3];
    for ((&x, &yy), &ww) in k.iter().zip(y).zip(w) {
        let f = basis(x);
        for i in 0..3 {
            aty[i] += ww * f[i] * yy;
            for j in 0..3 {
                ata[i][j] += ww * f[i] * f[j];
            }
        }
    }
    let Some(c) = solve3(ata, aty) else { return f64::INFINITY };
    k.iter()
        .zip(y)
        .zip(w)
        .map(|((&x, &yy), &ww)| {
            let f = basis(x);
            let r = c[0] * f[0] + c[1] * f[1] + c[2] - yy;
            ww * r * r
        })
        .sum()
}

/// Tail fit from an accumulated survival histogram. `ess` is the effective
/// sample size used for the binomial weights (pass `total` for iid data).
pub fn tail_exponent_from(acc: &SurvivalAccumulator, ess: f64) -> Result<TailFit> {
    let surv = acc.survival();
    let last = *acc.counts.last().unwrap_or(&0);
    if acc.thresholds.len() < 3 || acc.thresholds[0] <= 0.0 {
        return Err(Phi4Error::InvalidParameter("window needs ≥ 3 positive thresholds".into()));
    }
    if last < MIN_EXCEEDANCES {
        return Err(Phi4Error::InsufficientData(format!(
            "{last} exceedances at K = {} (need {MIN_EXCEEDANCES})",
            acc.thresholds.last().unwrap()
        )));
    }
    if surv[0] >= 1.0 {
        return Err(Phi4Error::InsufficientData("window starts below every sample".into()));
    }
    let k: Vec<f64> = acc.thresholds.clone();
    let y: Vec<f64> = surv.iter().map(|s| -s.ln()).collect();
    // Var(−log Ŝ) ≈ (1 − S)/(ess·S)
    let w: Vec<f64> = surv.iter().map(|&s| ess * s / (1.0 - s)).collect();
    // plain fit of log(−log S) on log K; Var(log y) = Var(y)/y²
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..k.len() {
        let ww = w[i] * y[i] * y[i];
        let lx = k[i].ln();
        let ly = y[i].ln();
        sw += ww;
        sx += ww * lx;
        sy += ww * ly;
        sxx += ww * lx * lx;
        sxy += ww * lx * ly;
    }
    let denom = sw * sxx - sx * sx;
    if !(denom > 0.0) {
        return Err(Phi4Error::InsufficientData("degenerate window".into()));
    }
    let raw_slope = (sw * sxy - sx * sy) / denom;
    let raw_stderr = (sw / denom).sqrt();
    // profile over s: coarse grid, then golden-section refinement
    let grid: Vec<f64> = (0..=300).map(|i| 0.25 + 0.04 * i as f64).collect();
    let chi: Vec<f64> = grid.iter().map(|&s| profile_chi2(&k, &y, &w, s)).collect();
    let (imin, _) = chi
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |b, (i, &c)| if c < b.1 { (i, c) } else { b });
    let (mut a, mut b) = (grid[imin.saturating_sub(1)], grid[(imin + 1).min(grid.len() - 1)]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if profile_chi2(&k, &y, &w, c) < profile_chi2(&k, &y, &w, d) {
            b = d;
        } else {
            a = c;
        }
    }
    let slope = 0.5 * (a + b);
    let chi_min = profile_chi2(&k, &y, &w, slope);
    // Δχ² = 1 half-width
    let crossing = |dir: f64| {
        let mut step = 0.01;
        let mut s = slope;
        for _ in 0..2000 {
            s += dir * step;
            if profile_chi2(&k, &y, &w, s) - chi_min >= 1.0 || s <= 0.05 {
                return (s - slope).abs();
            }
            step *= 1.05;
        }
        f64::INFINITY
    };
    let stderr = 0.5 * (crossing(1.0) + crossing(-1.0));
    let points = k.iter().zip(&surv).zip(&y).map(|((&a, &b), &c)| (a, b, c)).collect();
    if !slope.is_finite() {
        return Err(Phi4Error::InsufficientData("tail fit did not converge".into()));
    }
    Ok(TailFit { slope, stderr, raw_slope, raw_stderr, points })
}

/// Relative density of the Ψ-chain law with respect to the Φ-chain law at
/// unit noise strength: `exp(2βF_n(X))`.
pub fn density_weight(p: &TruncatedPotential, beta: f64, x: f64) -> f64 {
    (2.0 * beta * p.eval(x)).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub a: f64,
    pub a_se: f64,
    pub b: f64,
    pub b_se: f64,
    pub diff: f64,
    pub combined_se: f64,
    pub ess_phi: f64,
    pub ess_psi: f64,
    pub reliable: bool,
}

impl DensityReport {
    pub fn within(&self, sigmas: f64) -> bool {
        self.diff.abs() <= sigmas * self.combined_se
    }
}

/// Standard error of a mean accounting for autocorrelation.
pub fn correlated_se(x: &[f64]) -> f64 {
    let (tau, _) = integrated_autocorr_time(x);
    (variance(x) * 2.0 * tau / x.len() as f64).sqrt()
}

/// `A = mean g` under the Ψ chain versus `B = mean(g·w)/mean(w)` under the Φ
/// chain with `w` the relative density.
pub fn density_cross_check<G: Fn(f64) -> f64>(
    phi: &SampleSet,
    psi: &SampleSet,
    g: G,
    p: &TruncatedPotential,
    beta: f64,
) -> Result<DensityReport> {
    if phi.values.len() < 64 || psi.values.len() < 64 {
        return Err(Phi4Error::InsufficientData("need ≥ 64 samples per chain".into()));
    }
    let ga: Vec<f64> = psi.values.iter().map(|&x| g(x)).collect();
    let a = mean(&ga);
    let a_se = correlated_se(&ga);
    let w: Vec<f64> = phi.values.iter().map(|&x| density_weight(p, beta, x)).collect();
    let gw: Vec<f64> = phi.values.iter().zip(&w).map(|(&x, &ww)| g(x) * ww).collect();
    let mw = mean(&w);
    let b = mean(&gw) / mw;
    // ratio estimator: linearise g·w − b·w
    let lin: Vec<f64> = gw.iter().zip(&w).map(|(gw, w)| (gw - b * w) / mw).collect();
    let b_se = correlated_se(&lin);
    let ess_phi = phi.ess();
    let ess_psi = psi.ess();
    Ok(DensityReport {
        a,
        a_se,
        b,
        b_se,
        diff: a - b,
        combined_se: (a_se * a_se + b_se * b_se).sqrt(),
        ess_phi,
        ess_psi,
        reliable: ess_phi >= MIN_ESS && ess_psi >= MIN_ESS,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauReport {
    pub beta: f64,
    pub estimates: Vec<PartitionEstimate>,
    /// `Ẑ(n)` nondecreasing up to interval overlap.
    pub monotone: bool,
    /// `Ẑ(n_max)/Ẑ(n_max/2)` (or the last two entries).
    pub ratio: f64,
    pub threshold: f64,
    pub plateau: bool,
    /// Adjacent pairs where `Ẑ` decreased beyond interval overlap.
    pub violations: Vec<(u32, u32)>,
}

/// `Ẑ(n)` for every `n` reweighted from one Φ-chain sample set.
pub fn uniform_z_plateau(beta: f64, n_list: &[u32], samples: &SampleSet, threshold: f64, seed: u64) -> Result<PlateauReport> {
    if n_list.len() < 2 {
        return Err(Phi4Error::InvalidParameter("need at least two truncation levels".into()));
    }
    let mut estimates = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let p = TruncatedPotential::finite(n)?;
        estimates.push(estimate_partition(samples, &p, beta, seed)?);
    }
    let mut violations = Vec::new();
    for (i, w) in estimates.windows(2).enumerate() {
        if w[1].z_hat < w[0].z_hat && w[1].ci.1 < w[0].ci.0 {
            violations.push((n_list[i], n_list[i + 1]));
        }
    }
    let n_max = *n_list.last().unwrap();
    let half = n_list.iter().position(|&n| 2 * n == n_max).unwrap_or(n_list.len() - 2);
    let ratio = estimates.last().unwrap().z_hat / estimates[half].z_hat;
    Ok(PlateauReport {
        beta,
        monotone: violations.is_empty(),
        ratio,
        threshold,
        plateau: ratio - 1.0 < threshold,
        violations,
        estimates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normals(seed: u64, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        crate::noise::standard_normals(seed, 0, 0, &mut v);
        v
    }

    #[test]
    fn moments_merge() {
        let x = normals(1, 1000);
        let mut a = Moments::default();
        let mut b = Moments::default();
        x[..300].iter().for_each(|&v| a.push(v));
        x[300..].iter().for_each(|&v| b.push(v));
        a.merge(&b);
        assert!((a.mean - mean(&x)).abs() < 1e-12);
        assert!((a.variance() - variance(&x)).abs() < 1e-12);
    }

    #[test]
    fn ar1_autocorr_time() {
        let z = normals(2, 200_000);
        let phi = 0.8;
        let mut x = vec![0.0; z.len()];
        for i in 1..z.len() {
            x[i] = phi * x[i - 1] + z[i];
        }
        let (tau, _) = integrated_autocorr_time(&x);
        let exact = 0.5 * (1.0 + phi) / (1.0 - phi);
        assert!((tau - exact).abs() < 0.1 * exact, "{tau} vs {exact}");
        let (tau_iid, _) = integrated_autocorr_time(&z);
        assert!((tau_iid - 0.5).abs() < 0.05);
    }

    #[test]
    fn beta_zero_partition_is_one() {
        let s = SampleSet::new(normals(3, 10_000), 3, 0.1, 0, 1);
        let p = TruncatedPotential::finite(3).unwrap();
        let e = estimate_partition(&s, &p, 0.0, 1).unwrap();
        assert_eq!(e.z_hat, 1.0);
        let p1 = TruncatedPotential::finite(1).unwrap();
        let e = estimate_partition(&s, &p1, 0.3, 1).unwrap();
        assert!(e.z_hat <= (1.25f64 * 0.3).exp());
    }

    #[test]
    fn constant_samples_refuse_tail_fit() {
        let x = vec![1.0; 1000];
        assert!(tail_exponent(&x, 0.5, 2.0, 20, 1000.0).is_err());
    }
}

//! Truncated quartic potentials `F_n` and the observables `V`, `W`.

use serde::{Deserialize, Serialize};

use crate::error::{Phi4Error, Result};
use crate::lattice::{laplacian_symbol, sample_test_function, signed_frequency, weighted_pairing, Field, LatticeGrid, TestFunction};
use crate::spectral::Spectral;

/// `F_n`: `x⁴/4` on `|x| ≤ n`, then a cubic blend with `F' = n³(1 − t)²`
/// over `[n, n + 3/n³]`, then the plateau `n⁴/4 + 1`. `n = None` is `F_∞ = x⁴/4`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedPotential {
    pub n: Option<u32>,
}

impl TruncatedPotential {
    pub fn finite(n: u32) -> Result<Self> {
        if n == 0 {
            return Err(Phi4Error::InvalidParameter("truncation n must be positive".into()));
        }
        Ok(Self { n: Some(n) })
    }

    pub fn infinite() -> Self {
        Self { n: None }
    }

    /// Length of the blend interval.
    pub fn blend_width(&self) -> Option<f64> {
        self.n.map(|n| 3.0 / (n as f64).powi(3))
    }

    /// Where the plateau starts.
    pub fn plateau_start(&self) -> Option<f64> {
        self.n.map(|n| n as f64 + 3.0 / (n as f64).powi(3))
    }

    /// Plateau value `n⁴/4 + 1`; `None` for `F_∞`.
    pub fn sup(&self) -> Option<f64> {
        self.n.map(|n| (n as f64).powi(4) / 4.0 + 1.0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let ax = x.abs();
        let Some(n) = self.n else { return 0.25 * ax.powi(4) };
        let nf = n as f64;
        if ax <= nf {
            return 0.25 * ax.powi(4);
        }
        let delta = 3.0 / nf.powi(3);
        let t = (ax - nf) / delta;
        if t >= 1.0 {
            0.25 * nf.powi(4) + 1.0
        } else {
            0.25 * nf.powi(4) + 1.0 - (1.0 - t).powi(3)
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let ax = x.abs();
        let s = x.signum();
        let Some(n) = self.n else { return x * x * x };
        let nf = n as f64;
        if ax <= nf {
            return x * x * x;
        }
        let t = (ax - nf) * nf.powi(3) / 3.0;
        if t >= 1.0 {
            0.0
        } else {
            s * nf.powi(3) * (1.0 - t).powi(2)
        }
    }
}

pub fn eval_f(p: &TruncatedPotential, x: f64) -> f64 {
    p.eval(x)
}

pub fn eval_df(p: &TruncatedPotential, x: f64) -> f64 {
    p.deriv(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObservableKind {
    V,
    W,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    pub kind: ObservableKind,
    pub beta: f64,
    pub psi: Option<TestFunction>,
    pub alpha: f64,
    /// Use `|2πk/L|²` instead of the lattice symbol in `W`.
    pub continuum_symbol: bool,
}

impl Observable {
    pub fn v(beta: f64, psi: TestFunction) -> Result<Self> {
        check_beta(beta)?;
        Ok(Self { kind: ObservableKind::V, beta, psi: Some(psi), alpha: 0.0, continuum_symbol: false })
    }

    pub fn w(beta: f64, alpha: f64) -> Result<Self> {
        check_beta(beta)?;
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Phi4Error::InvalidParameter(format!("alpha = {alpha} must be ≥ 0")));
        }
        Ok(Self { kind: ObservableKind::W, beta, psi: None, alpha, continuum_symbol: false })
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Phi4Error::InvalidParameter(format!("beta = {beta} must be positive")));
    }
    Ok(())
}

/// `(β/4) ⟨f, ψ^ε⟩_w⁴` with the cell-weighted pairing.
pub fn eval_v(obs: &Observable, f: &Field) -> Result<f64> {
    let psi = obs
        .psi
        .as_ref()
        .ok_or_else(|| Phi4Error::InvalidParameter("observable V needs a test function".into()))?;
    let pe = sample_test_function(psi, f.grid())?;
    Ok(0.25 * obs.beta * weighted_pairing(f, &pe)?.powi(4))
}

/// `(β/4)·(ε^d Σ_{k≠0} |f̂(k)|² μ(k)^{-α})²` with `f̂` the unitary DFT.
pub fn eval_w(obs: &Observable, f: &Field) -> Result<f64> {
    let mut sp = Spectral::new(f.grid());
    let weights = sobolev_weights(f.grid(), obs.alpha, obs.continuum_symbol);
    Ok(0.25 * obs.beta * sobolev_sq(&mut sp, f, &weights).powi(2))
}

/// Multiplier `μ(k)^{-α}` with the zero mode set to 0.
pub fn sobolev_weights(grid: &LatticeGrid, alpha: f64, continuum: bool) -> Vec<f64> {
    let mu = if continuum {
        let n = grid.sites_per_axis();
        let tau_l = std::f64::consts::TAU / grid.side();
        (0..grid.num_sites())
            .map(|s| {
                let c = grid.coords(s);
                (0..grid.dim()).map(|a| (tau_l * signed_frequency(c[a], n) as f64).powi(2)).sum()
            })
            .collect()
    } else {
        laplacian_symbol(grid)
    };
    mu.into_iter()
        .enumerate()
        .map(|(i, m)| if i == 0 { 0.0 } else { m.powf(-alpha) })
        .collect()
}

/// `|f|²_{-α} = ε^d Σ_{k≠0} |f̂(k)|² w(k)`.
pub fn sobolev_sq(sp: &mut Spectral, f: &Field, weights: &[f64]) -> f64 {
    let spec = sp.forward_real(f.values());
    let inv = 1.0 / f.grid().num_sites() as f64;
    let s: f64 = spec.iter().zip(weights).map(|(c, w)| c.norm_sqr() * inv * w).sum();
    f.grid().cell_volume() * s
}

/// Cached evaluation of one observable on one grid.
pub struct PreparedObservable {
    pub obs: Observable,
    psi_eps: Option<Field>,
    weights: Vec<f64>,
    spectral: Spectral,
}

impl PreparedObservable {
    pub fn new(obs: Observable, grid: &LatticeGrid) -> Result<Self> {
        let psi_eps = match &obs.psi {
            Some(psi) => Some(sample_test_function(psi, grid)?),
            None => None,
        };
        let weights = sobolev_weights(grid, obs.alpha, obs.continuum_symbol);
        Ok(Self { obs, psi_eps, weights, spectral: Spectral::new(grid) })
    }

    pub fn pairing(&self, f: &Field) -> Result<f64> {
        match &self.psi_eps {
            Some(pe) => weighted_pairing(f, pe),
            None => Err(Phi4Error::InvalidParameter("no test function".into())),
        }
    }

    pub fn v(&self, f: &Field) -> Result<f64> {
        Ok(0.25 * self.obs.beta * self.pairing(f)?.powi(4))
    }

    pub fn w(&mut self, f: &Field) -> f64 {
        0.25 * self.obs.beta * sobolev_sq(&mut self.spectral, f, &self.weights).powi(2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_grid;

    #[test]
    fn reference_values() {
        let f5 = TruncatedPotential::finite(5).unwrap();
        let inf = TruncatedPotential::infinite();
        assert_eq!(f5.eval(2.0), 4.0);
        assert_eq!(inf.eval(2.0), 4.0);
        assert_eq!(f5.eval(10.0), 157.25);
        assert_eq!(f5.deriv(10.0), 0.0);
        assert_eq!(f5.deriv(0.0), 0.0);
        assert_eq!(f5.eval(6.0), 157.25);
    }

    #[test]
    fn blend_is_c1_and_capped() {
        for n in 1..=20u32 {
            let p = TruncatedPotential::finite(n).unwrap();
            let nf = n as f64;
            let cap = nf.powi(3);
            let end = p.plateau_start().unwrap();
            assert!((p.deriv(nf) - cap).abs() < 1e-9 * cap);
            assert!((p.deriv(nf + 1e-12) - cap).abs() < 1e-6 * cap);
            assert!(p.deriv(end - 1e-12).abs() < 1e-6 * cap);
            for i in 0..100_000 {
                let x = -2.0 * (nf + 4.0) + 4.0 * (nf + 4.0) * i as f64 / 100_000.0;
                assert!(p.deriv(x).abs() <= cap * (1.0 + 1e-15));
                assert!(p.eval(x) <= 0.25 * x.powi(4) + 1e-12);
                assert!(p.eval(x) <= 0.25 * x.powi(4) + 1.0);
                assert_eq!(p.eval(x), p.eval(-x));
                assert_eq!(p.deriv(x), -p.deriv(-x));
            }
        }
    }

    #[test]
    fn w_single_nyquist_mode() {
        let g = build_grid(2, 1.0, 3).unwrap();
        let a = 0.7;
        let f = Field::from_fn(g, |x| {
            let i = (x[0] / g.eps()) as i64;
            let j = (x[1] / g.eps()) as i64;
            if (i + j) % 2 == 0 { a } else { -a }
        });
        let mu = 4.0 / (g.eps() * g.eps()) * 2.0;
        let obs = Observable::w(2.0, 0.6).unwrap();
        let oracle = 0.5 * (a * a * mu.powf(-0.6)).powi(2);
        let got = eval_w(&obs, &f).unwrap();
        assert!((got - oracle).abs() < 1e-12 * oracle);
        assert_eq!(eval_w(&obs, &Field::constant(g, 3.0)).unwrap(), 0.0);
    }
}

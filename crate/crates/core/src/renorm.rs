//! Wick (tadpole) and sunset renormalisation constants on the lattice.
//!
//! The linear reference operator is `−Δ^ε + m2`. Two families of constants
//! are provided: the continuous-time values, and the values matched to the
//! linear-implicit time step `dt`, which centre the trees exactly as they
//! are produced by the stepper.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Phi4Error, Result};
use crate::lattice::{laplacian_symbol, LatticeGrid};
use crate::quadrature::{GL4_NODES, GL4_WEIGHTS};
use crate::spectral::Spectral;

/// Largest number of momentum pairs the double sum will visit.
pub const C2_PAIR_BUDGET: u64 = 1 << 31;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenormConstants {
    /// Stationary variance of the linear solution at a site.
    pub c1: f64,
    /// Stationary mean of `🌲₂₀·🌲₂` at a point.
    pub c2: f64,
    /// Mass counterterm entering the drift: `3c1 − 9c2` in d=3, `3c1` in d=2, 0 in d=1.
    pub mass_counterterm: f64,
    pub m2: f64,
    pub grid: LatticeGrid,
    /// Time step the constants are matched to; `None` for continuous time.
    pub dt: Option<f64>,
}

fn check_mass(m2: f64) -> Result<()> {
    if !(m2 > 0.0 && m2.is_finite()) {
        return Err(Phi4Error::InvalidParameter(format!("m2 = {m2} must be positive")));
    }
    Ok(())
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Phi4Error::InvalidParameter(format!("dt = {dt} must be positive")));
    }
    Ok(())
}

fn symbols(grid: &LatticeGrid, m2: f64) -> Vec<f64> {
    laplacian_symbol(grid).into_iter().map(|mu| mu + m2).collect()
}

/// `L^{-d} Σ_k 1/(2(μ_ε(k) + m2))`.
pub fn compute_c1(grid: &LatticeGrid, m2: f64) -> Result<f64> {
    check_mass(m2)?;
    let s: f64 = symbols(grid, m2).iter().map(|a| 0.5 / a).sum();
    Ok(s / grid.volume())
}

/// Stationary site variance of the linear-implicit scheme: `L^{-d} Σ_k 1/(a_k(2 + dt·a_k))`.
pub fn compute_c1_dt(grid: &LatticeGrid, m2: f64, dt: f64) -> Result<f64> {
    check_mass(m2)?;
    check_dt(dt)?;
    let s: f64 = symbols(grid, m2).iter().map(|a| 1.0 / (a * (2.0 + dt * a))).sum();
    Ok(s / grid.volume())
}

/// Visit every pair `(k, q)` with the index of `k + q`.
fn pair_sum<F: FnMut(usize, usize, usize) -> f64>(grid: &LatticeGrid, mut term: F) -> Result<f64> {
    let sites = grid.num_sites() as u64;
    let pairs = sites.saturating_mul(sites);
    if pairs > C2_PAIR_BUDGET {
        return Err(Phi4Error::Budget(format!(
            "{pairs} momentum pairs exceed the budget of {C2_PAIR_BUDGET}"
        )));
    }
    let n = grid.sites_per_axis();
    let d = grid.dim();
    let coords: Vec<[usize; 3]> = (0..grid.num_sites()).map(|s| grid.coords(s)).collect();
    let strides: Vec<usize> = (0..d).map(|a| grid.stride(a)).collect();
    let mut total = 0.0;
    for (k, kc) in coords.iter().enumerate() {
        let mut row = 0.0;
        for (q, qc) in coords.iter().enumerate() {
            let mut p = 0;
            for a in 0..d {
                let s = kc[a] + qc[a];
                p += if s >= n { s - n } else { s } * strides[a];
            }
            row += term(k, q, p);
        }
        total += row;
    }
    Ok(total)
}

/// Sunset constant `(L^{-2d}/2) Σ_{k,q} 1/(a_k a_q (a_k + a_q + a_{k+q}))`.
pub fn compute_c2(grid: &LatticeGrid, m2: f64) -> Result<f64> {
    check_mass(m2)?;
    let a = symbols(grid, m2);
    let inv: Vec<f64> = a.iter().map(|x| 1.0 / x).collect();
    let s = pair_sum(grid, |k, q, p| inv[k] * inv[q] / (a[k] + a[q] + a[p]))?;
    Ok(0.5 * s / grid.volume().powi(2))
}

/// Sunset constant of the linear-implicit scheme with the tree update
/// `w ← r(w + dt·s)`, `r = (1 + dt·a)^{-1}`, and the product taken at equal step.
pub fn compute_c2_dt(grid: &LatticeGrid, m2: f64, dt: f64) -> Result<f64> {
    check_mass(m2)?;
    check_dt(dt)?;
    let a = symbols(grid, m2);
    let v: Vec<f64> = a.iter().map(|x| 1.0 / (x * (2.0 + dt * x))).collect();
    let r: Vec<f64> = a.iter().map(|x| 1.0 / (1.0 + dt * x)).collect();
    let s = pair_sum(grid, |k, q, p| {
        let rho = r[k] * r[q] * r[p];
        v[k] * v[q] * rho / (1.0 - rho)
    })?;
    Ok(2.0 * dt * s / grid.volume().powi(2))
}

/// Continuous-time sunset constant through `1/A = ∫_0^∞ e^{-At} dt` and FFT
/// convolutions; cost `O(sites·log(sites))` per quadrature node.
pub fn compute_c2_spectral(grid: &LatticeGrid, m2: f64, panels: usize) -> Result<f64> {
    check_mass(m2)?;
    let a = symbols(grid, m2);
    let n_sites = grid.num_sites() as f64;
    let mut sp = Spectral::new(grid);
    let e2 = grid.eps() * grid.eps();
    let lo = (1e-6 * e2 / (4.0 * grid.dim() as f64)).ln();
    let hi = (60.0 / m2).ln();
    let h = (hi - lo) / panels as f64;
    let mut buf = vec![Complex64::default(); a.len()];
    let t_lo = lo.exp();
    let mut total = 0.0;
    for p in 0..panels {
        for q in 0..4 {
            let s = lo + h * (p as f64 + 0.5 * (1.0 + GL4_NODES[q]));
            let t = s.exp();
            let w = 0.5 * h * GL4_WEIGHTS[q] * t;
            for (b, &ak) in buf.iter_mut().zip(&a) {
                *b = Complex64::new((-ak * t).exp() / ak, 0.0);
            }
            sp.forward(&mut buf);
            buf.iter_mut().for_each(|b| *b = *b * *b);
            sp.inverse(&mut buf);
            let inner: f64 = buf.iter().zip(&a).map(|(c, &ak)| c.re / n_sites * (-ak * t).exp()).sum();
            total += w * inner;
        }
    }
    // ∫_0^{t_lo}: the integrand is flat there to relative order t_lo·max a.
    let head: f64 = {
        let inv: Vec<f64> = a.iter().map(|x| 1.0 / x).collect();
        for (b, &ik) in buf.iter_mut().zip(&inv) {
            *b = Complex64::new(ik, 0.0);
        }
        sp.forward(&mut buf);
        buf.iter_mut().for_each(|b| *b = *b * *b);
        sp.inverse(&mut buf);
        buf.iter().map(|c| c.re / n_sites).sum::<f64>() * t_lo
    };
    total += head;
    Ok(0.5 * total / grid.volume().powi(2))
}

/// Counterterm per dimension.
pub fn mass_counterterm(d: usize, c1: f64, c2: f64) -> f64 {
    match d {
        3 => 3.0 * c1 - 9.0 * c2,
        2 => 3.0 * c1,
        _ => 0.0,
    }
}

impl RenormConstants {
    /// Constants for a grid; time-step matched when `dt` is given.
    pub fn new(grid: &LatticeGrid, m2: f64, dt: Option<f64>) -> Result<Self> {
        let (c1, c2) = match dt {
            Some(dt) => (compute_c1_dt(grid, m2, dt)?, compute_c2_dt(grid, m2, dt)?),
            None => (compute_c1(grid, m2)?, compute_c2(grid, m2)?),
        };
        Ok(Self::from_values(grid, m2, dt, c1, c2))
    }

    pub fn from_values(grid: &LatticeGrid, m2: f64, dt: Option<f64>, c1: f64, c2: f64) -> Self {
        Self {
            c1,
            c2,
            mass_counterterm: mass_counterterm(grid.dim(), c1, c2),
            m2,
            grid: *grid,
            dt,
        }
    }

    /// Shift both constants by finite offsets.
    pub fn with_offsets(self, c1_offset: f64, c2_offset: f64) -> Self {
        Self::from_values(&self.grid, self.m2, self.dt, self.c1 + c1_offset, self.c2 + c2_offset)
    }

    /// No renormalisation at all (quadratic test mode and deterministic checks).
    pub fn zero(grid: &LatticeGrid, m2: f64) -> Self {
        Self { c1: 0.0, c2: 0.0, mass_counterterm: 0.0, m2, grid: *grid, dt: None }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_grid;

    #[test]
    fn c1_four_mode_hand_sum() {
        // d=1, L=1, N=2: μ = 64·sin²(πk/4) = 0, 32, 64, 32.
        let g = build_grid(1, 1.0, 2).unwrap();
        let oracle = 0.5 * (1.0 / 1.0 + 1.0 / 33.0 + 1.0 / 65.0 + 1.0 / 33.0);
        assert!((compute_c1(&g, 1.0).unwrap() - oracle).abs() < 1e-14);
        assert!(compute_c1(&g, 0.0).is_err());
    }

    #[test]
    fn dt_constants_reduce_to_continuous() {
        let g = build_grid(2, 1.0, 3).unwrap();
        let c1 = compute_c1(&g, 1.0).unwrap();
        let c1d = compute_c1_dt(&g, 1.0, 1e-9).unwrap();
        assert!((c1 - c1d).abs() < 1e-6 * c1);
        let c2 = compute_c2(&g, 1.0).unwrap();
        let c2d = compute_c2_dt(&g, 1.0, 1e-9).unwrap();
        assert!((c2 - c2d).abs() < 1e-5 * c2);
    }

    #[test]
    fn spectral_route_matches_double_sum() {
        for (d, n) in [(1, 5), (2, 3), (3, 2)] {
            let g = build_grid(d, 1.0, n).unwrap();
            let a = compute_c2(&g, 1.0).unwrap();
            let b = compute_c2_spectral(&g, 1.0, 100).unwrap();
            assert!((a - b).abs() < 1e-8 * a, "d={d}: {a} vs {b}");
        }
    }

    #[test]
    fn counterterm_by_dimension() {
        let g3 = build_grid(3, 1.0, 2).unwrap();
        let rc = RenormConstants::from_values(&g3, 1.0, None, 2.0, 0.1);
        assert!((rc.mass_counterterm - 5.1).abs() < 1e-12);
        let g1 = build_grid(1, 1.0, 3).unwrap();
        assert_eq!(RenormConstants::new(&g1, 1.0, None).unwrap().mass_counterterm, 0.0);
    }

    #[test]
    fn budget_error() {
        let g = build_grid(3, 1.0, 6).unwrap();
        assert!(matches!(compute_c2(&g, 1.0), Err(Phi4Error::Budget(_))));
    }
}

//! Littlewood–Paley proxy for negative Hölder–Besov norms.
//!
//! Blocks are smooth dyadic annuli in physical frequency `|k|/L`:
//! `θ_0 = χ(ρ)`, `θ_j = χ(ρ/2^j) − χ(ρ/2^{j−1})`, where `χ = 1` on `[0, 1]`
//! and `χ = 0` on `[2, ∞)`. The norm is `sup_j 2^{jα} ‖Δ_j f‖_∞`.

use crate::lattice::{signed_frequency, Field, LatticeGrid};
use crate::spectral::Spectral;

fn h(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

/// Smooth cutoff, 1 on `[0, 1]`, 0 on `[2, ∞)`.
pub fn cutoff(rho: f64) -> f64 {
    if rho <= 1.0 {
        1.0
    } else if rho >= 2.0 {
        0.0
    } else {
        let s = rho - 1.0;
        h(1.0 - s) / (h(1.0 - s) + h(s))
    }
}

/// Block multiplier `θ_j(ρ)`.
pub fn block_weight(j: usize, rho: f64) -> f64 {
    if j == 0 {
        cutoff(rho)
    } else {
        cutoff(rho / (j as f64).exp2()) - cutoff(rho / ((j - 1) as f64).exp2())
    }
}

pub struct LittlewoodPaley {
    grid: LatticeGrid,
    blocks: Vec<Vec<f64>>,
    spectral: Spectral,
    outs: Vec<Vec<f64>>,
}

/// `|k|/L` for each Fourier index of the grid.
pub fn physical_frequency(grid: &LatticeGrid) -> Vec<f64> {
    let n = grid.sites_per_axis();
    (0..grid.num_sites())
        .map(|s| {
            let c = grid.coords(s);
            let r2: f64 = (0..grid.dim()).map(|a| (signed_frequency(c[a], n) as f64).powi(2)).sum();
            r2.sqrt() / grid.side()
        })
        .collect()
}

impl LittlewoodPaley {
    pub fn new(grid: &LatticeGrid) -> Self {
        let rho = physical_frequency(grid);
        let rho_max = rho.iter().cloned().fold(0.0, f64::max);
        let mut blocks = Vec::new();
        let mut j = 0usize;
        loop {
            let lower = if j == 0 { 0.0 } else { ((j - 1) as f64).exp2() };
            if lower > rho_max {
                break;
            }
            blocks.push(rho.iter().map(|&r| block_weight(j, r)).collect());
            j += 1;
        }
        let outs = vec![Vec::new(); blocks.len()];
        Self { grid: *grid, blocks, spectral: Spectral::new(grid), outs }
    }

    pub fn grid(&self) -> &LatticeGrid {
        &self.grid
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// `‖Δ_j f‖_∞` for every block.
    pub fn block_sups(&mut self, f: &Field) -> Vec<f64> {
        let ms: Vec<&[f64]> = self.blocks.iter().map(|b| b.as_slice()).collect();
        self.spectral.apply_multipliers(f.values(), &ms, &mut self.outs);
        self.outs.iter().map(|o| o.iter().fold(0.0, |m: f64, v| m.max(v.abs()))).collect()
    }

    /// Block suprema taken only over sites with `mask[s]`.
    pub fn block_sups_masked(&mut self, f: &Field, mask: &[bool]) -> Vec<f64> {
        let ms: Vec<&[f64]> = self.blocks.iter().map(|b| b.as_slice()).collect();
        self.spectral.apply_multipliers(f.values(), &ms, &mut self.outs);
        self.outs
            .iter()
            .map(|o| o.iter().zip(mask).filter(|(_, &k)| k).fold(0.0, |m: f64, (v, _)| m.max(v.abs())))
            .collect()
    }

    pub fn norm_masked(&mut self, f: &Field, alpha: f64, mask: &[bool]) -> f64 {
        self.block_sups_masked(f, mask)
            .iter()
            .enumerate()
            .map(|(j, s)| (j as f64 * alpha).exp2() * s)
            .fold(0.0, f64::max)
    }

    pub fn norm(&mut self, f: &Field, alpha: f64) -> f64 {
        self.block_sups(f)
            .iter()
            .enumerate()
            .map(|(j, s)| (j as f64 * alpha).exp2() * s)
            .fold(0.0, f64::max)
    }
}

/// `sup_j 2^{jα} ‖Δ_j f‖_∞`.
pub fn holder_norm_neg(f: &Field, alpha: f64) -> f64 {
    LittlewoodPaley::new(f.grid()).norm(f, alpha)
}

/// `sup_t ‖🌲₁(t)‖_{C^{-1/2-κ}}` over a stored trajectory.
pub fn holder_seminorm_one(trajectory: &[Field], kappa: f64) -> f64 {
    let Some(first) = trajectory.first() else { return 0.0 };
    let mut lp = LittlewoodPaley::new(first.grid());
    trajectory.iter().map(|f| lp.norm(f, -0.5 - kappa)).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_grid;

    #[test]
    fn partition_of_unity() {
        for i in 0..2000 {
            let rho = i as f64 * 0.05;
            let s: f64 = (0..12).map(|j| block_weight(j, rho)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_mode() {
        let g = build_grid(1, 1.0, 6).unwrap();
        let a = 1.3;
        let alpha = -0.6;
        for &(k, j) in &[(4usize, 2usize), (8, 3), (16, 4)] {
            let f = Field::from_fn(g, |x| a * (std::f64::consts::TAU * k as f64 * (x[0] - 0.5 * g.eps())).cos());
            let v = holder_norm_neg(&f, alpha);
            let oracle = a * (j as f64 * alpha).exp2();
            assert!((v - oracle).abs() < 1e-9, "k={k}: {v} vs {oracle}");
        }
        // k = 6 sits where blocks 2 and 3 overlap with weight 1/2 each.
        let f = Field::from_fn(g, |x| a * (std::f64::consts::TAU * 6.0 * (x[0] - 0.5 * g.eps())).cos());
        let v = holder_norm_neg(&f, alpha);
        let oracle = a * (2.0 * alpha).exp2();
        assert!(v <= 2.0 * oracle && v >= 0.5 * oracle * (1.0 - 1e-12));
        assert_eq!(holder_norm_neg(&Field::zeros(g), alpha), 0.0);
    }
}

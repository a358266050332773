//! Multi-dimensional FFTs over the lexicographic site layout.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::lattice::LatticeGrid;

/// Per-grid FFT workspace. Transforms are unnormalised in both directions.
pub struct Spectral {
    grid: LatticeGrid,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    lines: Vec<Complex64>,
    work: Vec<Complex64>,
}

impl Spectral {
    pub fn new(grid: &LatticeGrid) -> Self {
        let n = grid.sites_per_axis();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scratch_len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Self {
            grid: *grid,
            fwd,
            inv,
            scratch: vec![Complex64::default(); scratch_len],
            lines: Vec::new(),
            work: vec![Complex64::default(); grid.num_sites()],
        }
    }

    pub fn grid(&self) -> &LatticeGrid {
        &self.grid
    }

    fn transform(&mut self, data: &mut [Complex64], forward: bool) {
        let g = self.grid;
        let n = g.sites_per_axis();
        let plan = if forward { self.fwd.clone() } else { self.inv.clone() };
        for a in 0..g.dim() {
            let s = g.stride(a);
            if s == 1 {
                plan.process_with_scratch(data, &mut self.scratch);
                continue;
            }
            let block = s * n;
            self.lines.resize(block, Complex64::default());
            for start in (0..data.len()).step_by(block) {
                for c in 0..n {
                    for r in 0..s {
                        self.lines[r * n + c] = data[start + c * s + r];
                    }
                }
                plan.process_with_scratch(&mut self.lines, &mut self.scratch);
                for c in 0..n {
                    for r in 0..s {
                        data[start + c * s + r] = self.lines[r * n + c];
                    }
                }
            }
        }
    }

    pub fn forward(&mut self, data: &mut [Complex64]) {
        self.transform(data, true);
    }

    pub fn inverse(&mut self, data: &mut [Complex64]) {
        self.transform(data, false);
    }

    pub fn forward_real(&mut self, f: &[f64]) -> Vec<Complex64> {
        let mut out: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut out);
        out
    }

    /// `out = F^{-1}(m · F f)` for a real multiplier symmetric under `k → −k`.
    pub fn apply_multiplier(&mut self, f: &[f64], m: &[f64], out: &mut [f64]) {
        let mut work = std::mem::take(&mut self.work);
        for (w, &v) in work.iter_mut().zip(f) {
            *w = Complex64::new(v, 0.0);
        }
        self.forward(&mut work);
        for (w, &mk) in work.iter_mut().zip(m) {
            *w *= mk;
        }
        self.inverse(&mut work);
        let inv = 1.0 / self.grid.num_sites() as f64;
        for (o, w) in out.iter_mut().zip(&work) {
            *o = w.re * inv;
        }
        self.work = work;
    }

    /// Apply several multipliers to the same input, sharing the forward transform.
    pub fn apply_multipliers(&mut self, f: &[f64], ms: &[&[f64]], outs: &mut [Vec<f64>]) {
        let spec = self.forward_real(f);
        let inv = 1.0 / self.grid.num_sites() as f64;
        let mut work = std::mem::take(&mut self.work);
        for (m, out) in ms.iter().zip(outs.iter_mut()) {
            for ((w, s), &mk) in work.iter_mut().zip(&spec).zip(m.iter()) {
                *w = s * mk;
            }
            self.inverse(&mut work);
            out.resize(work.len(), 0.0);
            for (o, w) in out.iter_mut().zip(&work) {
                *o = w.re * inv;
            }
        }
        self.work = work;
    }
}

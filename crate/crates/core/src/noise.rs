//! Counter-based Gaussian white-noise increments on dyadic lattices.
//!
//! Increment `counter` of a stream keyed by `seed` reads ChaCha8 stream
//! `counter` starting at word `4·site`, so every site value is a pure
//! function of `(seed, counter, site)` and can be generated in any order.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Phi4Error, Result};
use crate::lattice::LatticeGrid;

#[derive(Clone, Debug)]
pub struct NoiseStream {
    seed: u64,
    grid: LatticeGrid,
    counter: u64,
    base: ChaCha8Rng,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseIncrement {
    pub grid: LatticeGrid,
    pub dt: f64,
    pub values: Vec<f64>,
}

fn unit_open(x: u64) -> f64 {
    ((x >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal values for sites `first..first + out.len()` of draw `counter`.
pub fn standard_normals(seed: u64, counter: u64, first: usize, out: &mut [f64]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fill_normals(&mut rng, counter, first, out);
}

fn fill_normals(rng: &mut ChaCha8Rng, counter: u64, first: usize, out: &mut [f64]) {
    rng.set_stream(counter);
    rng.set_word_pos(4 * first as u128);
    for o in out.iter_mut() {
        let u1 = unit_open(rng.next_u64());
        let u2 = unit_open(rng.next_u64());
        *o = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
    }
}

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of sub-stream `path` (e.g. `[suite, chain]`) under a root seed.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix64(root), |acc, &p| mix64(acc ^ mix64(p.wrapping_add(0x632B_E59B_D9B4_E019))))
}

impl NoiseStream {
    pub fn new(seed: u64, grid: LatticeGrid) -> Self {
        Self::with_counter(seed, grid, 0)
    }

    pub fn with_counter(seed: u64, grid: LatticeGrid, counter: u64) -> Self {
        Self { seed, grid, counter, base: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn counter(&self) -> u64 {
        self.counter
    }
    pub fn grid(&self) -> &LatticeGrid {
        &self.grid
    }

    /// Per-site `N(0, dt·ε^{-d})` values; advances the counter.
    pub fn draw_increment(&mut self, dt: f64) -> Result<NoiseIncrement> {
        let mut inc = NoiseIncrement { grid: self.grid, dt, values: vec![0.0; self.grid.num_sites()] };
        self.draw_into(dt, &mut inc)?;
        Ok(inc)
    }

    /// As [`draw_increment`](Self::draw_increment), reusing a buffer.
    pub fn draw_into(&mut self, dt: f64, inc: &mut NoiseIncrement) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Phi4Error::InvalidParameter(format!("dt = {dt} must be positive")));
        }
        inc.grid = self.grid;
        inc.dt = dt;
        inc.values.resize(self.grid.num_sites(), 0.0);
        fill_normals(&mut self.base, self.counter, 0, &mut inc.values);
        let sd = (dt / self.grid.cell_volume()).sqrt();
        inc.values.iter_mut().for_each(|v| *v *= sd);
        self.counter += 1;
        Ok(())
    }

    /// Skip `k` increments without generating them.
    pub fn advance(&mut self, k: u64) {
        self.counter += k;
    }
}

impl NoiseIncrement {
    pub fn zeros(grid: LatticeGrid, dt: f64) -> Self {
        Self { grid, dt, values: vec![0.0; grid.num_sites()] }
    }

    pub fn scale(&mut self, c: f64) {
        self.values.iter_mut().for_each(|v| *v *= c);
    }
}

/// Mean of the `2^d` children per coarse box, one level down.
pub fn coarsen(fine: &NoiseIncrement) -> Result<NoiseIncrement> {
    let coarse = fine.grid.at_level(fine.grid.level().checked_sub(1).ok_or_else(|| {
        Phi4Error::GridMismatch("cannot coarsen level 0".into())
    })?)?;
    coarsen_to(fine, &coarse)
}

/// Block means onto any dyadically coarser grid.
pub fn coarsen_to(fine: &NoiseIncrement, coarse: &LatticeGrid) -> Result<NoiseIncrement> {
    let r = coarse.refinement_factor(&fine.grid)?;
    let d = coarse.dim();
    let block = r.pow(d as u32) as f64;
    let mut values = vec![0.0; coarse.num_sites()];
    for (s, &v) in fine.values.iter().enumerate() {
        let c = fine.grid.coords(s);
        let mut cc = [0usize; 3];
        for a in 0..d {
            cc[a] = c[a] / r;
        }
        values[coarse.index(&cc[..d])] += v;
    }
    values.iter_mut().for_each(|v| *v /= block);
    Ok(NoiseIncrement { grid: *coarse, dt: fine.dt, values })
}

//! Time stepping of the renormalised lattice Langevin equations.
//!
//! The default scheme is a splitting: the per-site cubic flow
//! `u̇ = (C + m2)u − u³` is solved exactly, the test-function drift and the
//! noise increment are added explicitly, and `(1 + dt(−Δ^ε + m2))` is
//! inverted in Fourier space. Net drift: `Δ^ε u + C u − u³ (+ β F_n'(X) ψ^ε)`.
//! The noise is additive, so Itô and Stratonovich readings coincide.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Phi4Error, Result};
use crate::holder::LittlewoodPaley;
use crate::lattice::{discrete_laplacian, laplacian_symbol, sample_test_function, weighted_pairing, Field, LatticeGrid, TestFunction};
use crate::noise::{NoiseIncrement, NoiseStream};
use crate::potential::{sobolev_sq, sobolev_weights, TruncatedPotential};
use crate::renorm::RenormConstants;
use crate::spectral::Spectral;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Integrator {
    Imex,
    Explicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub grid: LatticeGrid,
    pub dt: f64,
    pub t_end: f64,
    pub integrator: Integrator,
    /// `None` runs the plain Φ dynamics.
    pub potential: Option<TruncatedPotential>,
    pub beta: f64,
    pub psi: Option<TestFunction>,
    pub renorm: RenormConstants,
    pub seed: u64,
    pub burn_in: u64,
    pub thinning: u64,
    /// Snapshot every this many steps; 0 disables.
    pub snapshot_every: u64,
    /// Drop the cubic term and the counterterm (Gaussian test mode).
    pub quadratic_only: bool,
    /// Multiplies every noise increment.
    pub noise_scale: f64,
    /// Exponent of the Sobolev observable `W`.
    pub alpha: f64,
    /// Regularity of the Hölder proxy recorded per sample; `None` skips it.
    pub holder_alpha: Option<f64>,
}

impl SimConfig {
    /// Φ dynamics with default bookkeeping.
    pub fn phi(grid: LatticeGrid, dt: f64, t_end: f64, renorm: RenormConstants, seed: u64) -> Self {
        Self {
            grid,
            dt,
            t_end,
            integrator: Integrator::Imex,
            potential: None,
            beta: 0.0,
            psi: None,
            renorm,
            seed,
            burn_in: 0,
            thinning: 1,
            snapshot_every: 0,
            quadratic_only: false,
            noise_scale: 1.0,
            alpha: 0.5,
            holder_alpha: None,
        }
    }

    pub fn steps(&self) -> u64 {
        (self.t_end / self.dt).round() as u64
    }

    /// Largest stable step of the explicit scheme.
    pub fn cfl_bound(&self) -> f64 {
        self.grid.eps().powi(2) / (2.0 * self.grid.dim() as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Phi4Error::InvalidParameter(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt = {} must be positive", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end = {} must be nonnegative", self.t_end));
        }
        if self.integrator == Integrator::Explicit && self.dt > self.cfl_bound() {
            return bad(format!(
                "explicit integrator needs dt ≤ eps²/(2d) = {} (got {})",
                self.cfl_bound(),
                self.dt
            ));
        }
        if self.thinning == 0 {
            return bad("thinning must be ≥ 1".into());
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta = {} must be ≥ 0", self.beta));
        }
        if self.potential.is_some() && self.psi.is_none() {
            return bad("a truncated potential needs a test function psi".into());
        }
        if let Some(psi) = &self.psi {
            psi.check_support(&self.grid)?;
        }
        if self.renorm.grid != self.grid {
            return Err(Phi4Error::GridMismatch("renormalisation constants belong to another grid".into()));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad(format!("noise scale {} must be ≥ 0", self.noise_scale));
        }
        Ok(())
    }
}

/// `Δ^ε u + (3c1 − 9c2)u − u³` (counterterm per dimension).
pub fn drift_phi(u: &Field, rc: &RenormConstants) -> Field {
    let mut out = discrete_laplacian(u);
    let c = rc.mass_counterterm;
    for (o, &x) in out.values_mut().iter_mut().zip(u.values()) {
        *o += c * x - x * x * x;
    }
    out
}

/// `drift_phi(u) + β F_n'(⟨u, ψ^ε⟩_w) ψ^ε`.
pub fn drift_psi(
    u: &Field,
    rc: &RenormConstants,
    p: &TruncatedPotential,
    beta: f64,
    psi_eps: &Field,
) -> Result<Field> {
    let mut out = drift_phi(u, rc);
    if beta != 0.0 {
        let x = weighted_pairing(u, psi_eps)?;
        let a = beta * p.deriv(x);
        for (o, &pv) in out.values_mut().iter_mut().zip(psi_eps.values()) {
            *o += a * pv;
        }
    }
    Ok(out)
}

/// Exact solution of `u̇ = c·u − u³` after time `t`.
pub fn cubic_flow(u0: f64, c: f64, t: f64) -> f64 {
    if u0 == 0.0 {
        return 0.0;
    }
    let growth = if c == 0.0 { 2.0 * t } else { (2.0 * c * t).exp_m1() / c };
    let e = (c * t).exp();
    u0 * e / (1.0 + u0 * u0 * growth).sqrt()
}

#[derive(Clone, Debug)]
pub struct ChainState {
    pub field: Field,
    pub step: u64,
    pub stream: NoiseStream,
}

impl ChainState {
    pub fn new(cfg: &SimConfig, mut field: Field) -> Result<Self> {
        if field.grid() != &cfg.grid {
            return Err(Phi4Error::GridMismatch("initial field on another grid".into()));
        }
        field.time = 0.0;
        Ok(Self { field, step: 0, stream: NoiseStream::new(cfg.seed, cfg.grid) })
    }
}

/// Reusable per-chain stepping workspace.
pub struct Stepper {
    cfg: SimConfig,
    psi_eps: Option<Field>,
    resolvent: Vec<f64>,
    spectral: Spectral,
    buf: Vec<Complex64>,
    inc: NoiseIncrement,
}

impl Stepper {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let psi_eps = match &cfg.psi {
            Some(psi) => Some(sample_test_function(psi, &cfg.grid)?),
            None => None,
        };
        let m2 = cfg.renorm.m2;
        let resolvent = laplacian_symbol(&cfg.grid)
            .into_iter()
            .map(|mu| 1.0 / (1.0 + cfg.dt * (mu + m2)))
            .collect();
        Ok(Self {
            cfg: cfg.clone(),
            psi_eps,
            resolvent,
            spectral: Spectral::new(&cfg.grid),
            buf: vec![Complex64::default(); cfg.grid.num_sites()],
            inc: NoiseIncrement::zeros(cfg.grid, cfg.dt),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn psi_eps(&self) -> Option<&Field> {
        self.psi_eps.as_ref()
    }

    /// Per-mode factor `1/(1 + dt(μ + m2))` of the implicit solve.
    pub fn resolvent(&self) -> &[f64] {
        &self.resolvent
    }

    /// Advance `field` by one step with a given increment (`step` labels errors).
    pub fn advance(&mut self, field: &mut Field, inc: &NoiseIncrement, step: u64) -> Result<()> {
        match self.cfg.integrator {
            Integrator::Imex => self.advance_imex(field, inc)?,
            Integrator::Explicit => self.advance_explicit(field, inc)?,
        }
        field.time = (step + 1) as f64 * self.cfg.dt;
        if let Some(i) = field.values().iter().position(|v| !v.is_finite()) {
            return Err(Phi4Error::BlowUp {
                step: step + 1,
                detail: format!("non-finite value at site {i}"),
            });
        }
        Ok(())
    }

    fn psi_forcing(&self, field: &Field) -> Result<Option<f64>> {
        match (&self.cfg.potential, &self.psi_eps) {
            (Some(p), Some(pe)) if self.cfg.beta != 0.0 && !self.cfg.quadratic_only => {
                let x = weighted_pairing(field, pe)?;
                Ok(Some(self.cfg.beta * p.deriv(x)))
            }
            _ => Ok(None),
        }
    }

    fn advance_imex(&mut self, field: &mut Field, inc: &NoiseIncrement) -> Result<()> {
        let dt = self.cfg.dt;
        let forcing = self.psi_forcing(field)?;
        if !self.cfg.quadratic_only {
            let c = self.cfg.renorm.mass_counterterm + self.cfg.renorm.m2;
            field.values_mut().iter_mut().for_each(|u| *u = cubic_flow(*u, c, dt));
        }
        if let (Some(a), Some(pe)) = (forcing, &self.psi_eps) {
            for (u, &p) in field.values_mut().iter_mut().zip(pe.values()) {
                *u += dt * a * p;
            }
        }
        for ((b, &u), &xi) in self.buf.iter_mut().zip(field.values()).zip(&inc.values) {
            *b = Complex64::new(u + xi, 0.0);
        }
        self.spectral.forward(&mut self.buf);
        for (b, &r) in self.buf.iter_mut().zip(&self.resolvent) {
            *b *= r;
        }
        self.spectral.inverse(&mut self.buf);
        let inv = 1.0 / self.buf.len() as f64;
        for (u, b) in field.values_mut().iter_mut().zip(&self.buf) {
            *u = b.re * inv;
        }
        Ok(())
    }

    fn advance_explicit(&mut self, field: &mut Field, inc: &NoiseIncrement) -> Result<()> {
        let dt = self.cfg.dt;
        let forcing = self.psi_forcing(field)?;
        let lap = discrete_laplacian(field);
        let (c, cubic) = if self.cfg.quadratic_only {
            (-self.cfg.renorm.m2, 0.0)
        } else {
            (self.cfg.renorm.mass_counterterm, 1.0)
        };
        for ((u, &l), &xi) in field.values_mut().iter_mut().zip(lap.values()).zip(&inc.values) {
            *u += dt * (l + c * *u - cubic * *u * *u * *u) + xi;
        }
        if let (Some(a), Some(pe)) = (forcing, &self.psi_eps) {
            for (u, &p) in field.values_mut().iter_mut().zip(pe.values()) {
                *u += dt * a * p;
            }
        }
        Ok(())
    }

    /// Draw the next increment from the chain's own stream and advance.
    pub fn step(&mut self, state: &mut ChainState) -> Result<()> {
        let mut inc = std::mem::replace(&mut self.inc, NoiseIncrement::zeros(self.cfg.grid, self.cfg.dt));
        state.stream.draw_into(self.cfg.dt, &mut inc)?;
        if self.cfg.noise_scale != 1.0 {
            inc.scale(self.cfg.noise_scale);
        }
        let r = self.advance(&mut state.field, &inc, state.step);
        self.inc = inc;
        r?;
        state.step += 1;
        Ok(())
    }
}

/// One step with a fresh workspace.
pub fn step(state: &mut ChainState, cfg: &SimConfig) -> Result<()> {
    Stepper::new(cfg)?.step(state)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub step: u64,
    pub time: f64,
    pub pairing: f64,
    pub v: f64,
    pub w: f64,
    pub c_alpha_norm: f64,
}

pub trait ChainSink {
    fn sample(&mut self, row: &SampleRow) -> Result<()>;
    fn snapshot(&mut self, _state: &ChainState) -> Result<()> {
        Ok(())
    }
}

impl ChainSink for Vec<SampleRow> {
    fn sample(&mut self, row: &SampleRow) -> Result<()> {
        self.push(row.clone());
        Ok(())
    }
}

/// Observable recorder for sample rows.
pub struct SampleProbe {
    psi_eps: Option<Field>,
    beta: f64,
    weights: Vec<f64>,
    spectral: Spectral,
    lp: Option<(LittlewoodPaley, f64)>,
}

impl SampleProbe {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        let psi_eps = match &cfg.psi {
            Some(psi) => Some(sample_test_function(psi, &cfg.grid)?),
            None => None,
        };
        Ok(Self {
            psi_eps,
            beta: cfg.beta,
            weights: sobolev_weights(&cfg.grid, cfg.alpha, false),
            spectral: Spectral::new(&cfg.grid),
            lp: cfg.holder_alpha.map(|a| (LittlewoodPaley::new(&cfg.grid), a)),
        })
    }

    pub fn row(&mut self, field: &Field, step: u64) -> Result<SampleRow> {
        let pairing = match &self.psi_eps {
            Some(pe) => weighted_pairing(field, pe)?,
            None => 0.0,
        };
        let s = sobolev_sq(&mut self.spectral, field, &self.weights);
        let c_alpha_norm = match &mut self.lp {
            Some((lp, a)) => lp.norm(field, *a),
            None => 0.0,
        };
        Ok(SampleRow {
            step,
            time: field.time,
            pairing,
            v: 0.25 * self.beta * pairing.powi(4),
            w: 0.25 * self.beta * s * s,
            c_alpha_norm,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub steps: u64,
    pub samples: u64,
    pub final_time: f64,
}

/// Run to `t_end`, starting from `state` (fresh or restored from a snapshot).
pub fn run_chain(cfg: &SimConfig, state: &mut ChainState, sink: &mut dyn ChainSink) -> Result<ChainSummary> {
    let mut stepper = Stepper::new(cfg)?;
    let mut probe = SampleProbe::new(cfg)?;
    let total = cfg.steps();
    let mut samples = 0;
    while state.step < total {
        stepper.step(state)?;
        let s = state.step;
        if s > cfg.burn_in && (s - cfg.burn_in).is_multiple_of(cfg.thinning) {
            sink.sample(&probe.row(&state.field, s)?)?;
            samples += 1;
        }
        if cfg.snapshot_every > 0 && s.is_multiple_of(cfg.snapshot_every) {
            sink.snapshot(state)?;
        }
    }
    Ok(ChainSummary { steps: state.step, samples, final_time: state.field.time })
}

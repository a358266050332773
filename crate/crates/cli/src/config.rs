//! Flat `key = value` configuration files.
//!
//! Keys are grouped by module prefix (`grid.`, `dynamics.`, `potential.`,
//! `observable.`, `init.`, `verify.`, `stats.`, `trees.`). Lines starting
//! with `#` are comments. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use phi4_core::dynamics::{Integrator, SimConfig};
use phi4_core::potential::TruncatedPotential;
use phi4_core::{LatticeGrid, RenormConstants, TestFunction};

use crate::error::{CliError, CliResult};

/// Every recognised key with its default (`None` means required).
pub const KEYS: &[(&str, Option<&str>)] = &[
    ("seed", Some("1")),
    ("grid.d", None),
    ("grid.level", None),
    ("grid.side", Some("1")),
    ("dynamics.dt", Some("0.001")),
    ("dynamics.t_end", Some("1")),
    ("dynamics.integrator", Some("imex")),
    ("dynamics.m2", Some("1")),
    ("dynamics.dt_consistent", Some("true")),
    ("dynamics.burn_in", Some("0")),
    ("dynamics.thinning", Some("1")),
    ("dynamics.snapshot_every", Some("0")),
    ("dynamics.quadratic_only", Some("false")),
    ("dynamics.noise_scale", Some("1")),
    ("potential.n", Some("none")),
    ("observable.beta", Some("0")),
    ("observable.psi.center", Some("")),
    ("observable.psi.radius", Some("0.2")),
    ("observable.alpha", Some("0.5")),
    ("observable.holder_alpha", Some("none")),
    ("init.kind", Some("zero")),
    ("init.value", Some("0")),
    ("verify.r", Some("0.5")),
    ("verify.kappa", Some("0.1")),
    ("verify.c_max", Some("10")),
    ("verify.seeds", Some("5")),
    ("verify.magnitudes", Some("1,1000,1000000")),
    ("verify.n_box", Some("1")),
    ("verify.levels", Some("4,5,6")),
    ("verify.ref_level", Some("8")),
    ("verify.store_every", Some("10")),
    ("verify.kappa_bar", Some("0.05")),
    ("verify.zeta", Some("lacunary")),
    ("verify.battery", Some("20")),
    ("stats.n_list", Some("1,2,4,8,16")),
    ("stats.threshold", Some("0.05")),
    ("stats.k_lo", Some("auto")),
    ("stats.k_hi", Some("auto")),
    ("stats.points", Some("20")),
    ("stats.observable", Some("tanh")),
    ("stats.sigmas", Some("3")),
    ("trees.kappa", Some("0.1")),
    ("trees.store_every", Some("1")),
    ("trees.domain", Some("full")),
    ("trees.n_box", Some("1")),
];

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

fn levenshtein(a: &str, b: &str) -> usize {
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.chars().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, &cb) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(ca != cb)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

/// Closest known key, if reasonably close.
pub fn suggest(key: &str) -> Option<&'static str> {
    KEYS.iter()
        .map(|(k, _)| (*k, levenshtein(key, k)))
        .min_by_key(|&(_, d)| d)
        .filter(|&(k, d)| d <= 3.max(k.len() / 4))
        .map(|(k, _)| k)
}

impl Config {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let k = k.trim().to_string();
            if !KEYS.iter().any(|(known, _)| *known == k) {
                let hint = suggest(&k).map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default();
                return Err(CliError::Config(format!("unknown key `{k}` on line {}{hint}", lineno + 1)));
            }
            if values.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(CliError::Config(format!("key `{k}` given twice")));
            }
        }
        for (k, default) in KEYS {
            match (values.contains_key(*k), default) {
                (false, None) => return Err(CliError::Config(format!("missing required key `{k}`"))),
                (false, Some(d)) => {
                    values.insert(k.to_string(), d.to_string());
                }
                _ => {}
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Canonical text: every key (defaults included) sorted, one per line.
    pub fn canonical(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        if !self.values.contains_key(key) {
            return Err(CliError::Config(format!("unknown key `{key}`")));
        }
        self.values.insert(key.into(), value.into());
        Ok(())
    }

    pub fn str(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("key declared in KEYS")
    }

    fn bad(&self, key: &str, what: &str) -> CliError {
        CliError::Config(format!("`{key} = {}`: expected {what}", self.str(key)))
    }

    pub fn f64(&self, key: &str) -> CliResult<f64> {
        self.str(key).parse::<f64>().map_err(|_| self.bad(key, "a number"))
    }

    pub fn opt_f64(&self, key: &str) -> CliResult<Option<f64>> {
        match self.str(key) {
            "none" | "auto" | "" => Ok(None),
            _ => self.f64(key).map(Some),
        }
    }

    pub fn u64(&self, key: &str) -> CliResult<u64> {
        self.str(key).parse::<u64>().map_err(|_| self.bad(key, "a non-negative integer"))
    }

    pub fn bool(&self, key: &str) -> CliResult<bool> {
        match self.str(key) {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => Err(self.bad(key, "true or false")),
        }
    }

    pub fn list_f64(&self, key: &str) -> CliResult<Vec<f64>> {
        let s = self.str(key);
        if s.is_empty() {
            return Ok(Vec::new());
        }
        s.split(',').map(|p| p.trim().parse::<f64>().map_err(|_| self.bad(key, "a comma-separated list of numbers"))).collect()
    }

    pub fn list_u32(&self, key: &str) -> CliResult<Vec<u32>> {
        self.str(key)
            .split(',')
            .map(|p| p.trim().parse::<u32>().map_err(|_| self.bad(key, "a comma-separated list of integers")))
            .collect()
    }

    pub fn seed(&self) -> CliResult<u64> {
        self.u64("seed")
    }

    pub fn grid(&self) -> CliResult<LatticeGrid> {
        let d = self.u64("grid.d")? as usize;
        let level = self.u64("grid.level")? as u32;
        Ok(LatticeGrid::new(d, self.f64("grid.side")?, level)?)
    }

    pub fn potential(&self) -> CliResult<Option<TruncatedPotential>> {
        match self.str("potential.n") {
            "none" => Ok(None),
            "inf" | "infinite" => Ok(Some(TruncatedPotential::infinite())),
            _ => Ok(Some(TruncatedPotential::finite(self.u64("potential.n")? as u32)?)),
        }
    }

    pub fn psi(&self, grid: &LatticeGrid) -> CliResult<TestFunction> {
        let mut center = self.list_f64("observable.psi.center")?;
        if center.is_empty() {
            center = vec![grid.side() / 2.0; grid.dim()];
        }
        if center.len() != grid.dim() {
            return Err(self.bad("observable.psi.center", &format!("{} coordinates", grid.dim())));
        }
        Ok(TestFunction::normalised(&center, self.f64("observable.psi.radius")?)?)
    }

    /// Fully validated simulation configuration.
    pub fn sim(&self) -> CliResult<SimConfig> {
        let grid = self.grid()?;
        let dt = self.f64("dynamics.dt")?;
        let m2 = self.f64("dynamics.m2")?;
        let quadratic = self.bool("dynamics.quadratic_only")?;
        let rc = if quadratic {
            RenormConstants::zero(&grid, m2)
        } else {
            let dtc = if self.bool("dynamics.dt_consistent")? { Some(dt) } else { None };
            RenormConstants::new(&grid, m2, dtc)?
        };
        let mut c = SimConfig::phi(grid, dt, self.f64("dynamics.t_end")?, rc, self.seed()?);
        c.integrator = match self.str("dynamics.integrator") {
            "imex" => Integrator::Imex,
            "explicit" => Integrator::Explicit,
            _ => return Err(self.bad("dynamics.integrator", "`imex` or `explicit`")),
        };
        c.burn_in = self.u64("dynamics.burn_in")?;
        c.thinning = self.u64("dynamics.thinning")?;
        c.snapshot_every = self.u64("dynamics.snapshot_every")?;
        c.quadratic_only = quadratic;
        c.noise_scale = self.f64("dynamics.noise_scale")?;
        c.potential = self.potential()?;
        c.beta = self.f64("observable.beta")?;
        c.psi = Some(self.psi(&grid)?);
        c.alpha = self.f64("observable.alpha")?;
        c.holder_alpha = self.opt_f64("observable.holder_alpha")?;
        c.validate()?;
        Ok(c)
    }

    /// Initial field from `init.kind` (`zero`, `constant`, `stationary`).
    pub fn initial_field(&self, cfg: &SimConfig) -> CliResult<phi4_core::Field> {
        let g = cfg.grid;
        match self.str("init.kind") {
            "zero" => Ok(phi4_core::Field::zeros(g)),
            "constant" => Ok(phi4_core::Field::constant(g, self.f64("init.value")?)),
            "stationary" => Ok(phi4_core::trees::stationary_linear_sample(
                &g,
                cfg.renorm.m2,
                cfg.dt,
                phi4_core::noise::derive_seed(cfg.seed, &[0x1017]),
                cfg.noise_scale,
            )),
            _ => Err(self.bad("init.kind", "`zero`, `constant` or `stationary`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = Config::parse("grid.d = 1\ngrid.level = 5\n").unwrap();
        let s = c.sim().unwrap();
        assert_eq!(s.grid.sites_per_axis(), 32);
        assert_eq!(s.dt, 0.001);
        assert!(s.potential.is_none());
    }

    #[test]
    fn typo_gets_suggestion() {
        let e = Config::parse("grid.d = 1\ngrid.level = 5\npotental.n = 3\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("potental.n") && msg.contains("potential.n"), "{msg}");
    }

    #[test]
    fn missing_required_key() {
        assert!(Config::parse("grid.d = 1\n").unwrap_err().to_string().contains("grid.level"));
    }

    #[test]
    fn cfl_violation_names_bound() {
        let c = Config::parse("grid.d = 1\ngrid.level = 6\ndynamics.integrator = explicit\ndynamics.dt = 0.01\n").unwrap();
        let msg = c.sim().unwrap_err().to_string();
        assert!(msg.contains("1.22") || msg.contains("0.000122"), "{msg}");
    }
}

//! Command implementations. Each returns whether its acceptance checks passed.

use std::fmt::Write as _;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use phi4_core::dynamics::{run_chain, ChainSink, ChainState, SampleRow, SimConfig};
use phi4_core::noise::{derive_seed, standard_normals, NoiseStream};
use phi4_core::snapshot::Snapshot;
use phi4_core::stats::{
    density_cross_check, estimate_partition, tail_exponent, uniform_z_plateau, variance, SampleSet,
};
use phi4_core::trees::{evolve_trees, seminorms, Domain, DyadicKernelFamily, Tree, TreeConfig};
use phi4_core::verify::{
    check_apriori, check_apriori_localised, check_max_principle, convergence_study, init_discretisation_rate,
    run_coupled, BoundReport, ConvergenceConfig, DistanceRow, MaxPrincipleConfig, RateFit, RoughFunction,
};
use phi4_core::{BoxRegion, Field, LatticeGrid};

use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::manifest::{RunManifest, MANIFEST_NAME};
use crate::pool;

pub const SAMPLES_CSV: &str = "samples.csv";
const SAMPLES_HEADER: &str = "step,time,pairing,v,w,c_alpha_norm\n";
const SNAPSHOT_DIR: &str = "snapshots";

fn prepare_dir(out: &Path, allow_existing: bool) -> CliResult<()> {
    if out.exists() && !allow_existing && std::fs::read_dir(out)?.next().is_some() {
        return Err(CliError::Config(format!(
            "output directory {} is not empty (use a fresh directory or --resume)",
            out.display()
        )));
    }
    std::fs::create_dir_all(out)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> CliResult<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

fn csv_row(r: &SampleRow) -> String {
    format!("{},{},{},{},{},{}\n", r.step, r.time, r.pairing, r.v, r.w, r.c_alpha_norm)
}

struct CsvSink {
    csv: BufWriter<std::fs::File>,
    snap_dir: PathBuf,
    seed: u64,
}

impl ChainSink for CsvSink {
    fn sample(&mut self, row: &SampleRow) -> phi4_core::Result<()> {
        self.csv.write_all(csv_row(row).as_bytes())?;
        Ok(())
    }

    fn snapshot(&mut self, state: &ChainState) -> phi4_core::Result<()> {
        self.csv.flush()?;
        std::fs::create_dir_all(&self.snap_dir)?;
        let snap = Snapshot { field: state.field.clone(), seed: self.seed };
        snap.write(&self.snap_dir.join(format!("step_{:012}.snap", state.step)))
    }
}

/// Latest snapshot whose step is covered by the rows already in the CSV.
fn resume_point(dir: &Path, last_row: Option<u64>) -> CliResult<Option<PathBuf>> {
    let (true, Some(last_row)) = (dir.exists(), last_row) else { return Ok(None) };
    let mut snaps: Vec<(u64, PathBuf)> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter_map(|p| {
            let step = p.file_stem()?.to_str()?.strip_prefix("step_")?.parse().ok()?;
            Some((step, p))
        })
        .filter(|(s, _)| *s <= last_row)
        .collect();
    snaps.sort();
    Ok(snaps.pop().map(|(_, p)| p))
}

fn row_step(line: &str) -> Option<u64> {
    line.split(',').next()?.parse().ok()
}

#[derive(Serialize)]
struct RunSummary {
    steps: u64,
    samples: u64,
    final_time: f64,
    resumed_from_step: Option<u64>,
    c1: f64,
    c2: f64,
    mass_counterterm: f64,
}

/// `phi4 run`: one chain, samples to CSV, periodic snapshots, manifest.
pub fn run(cfg: &Config, out: &Path, resume: bool) -> CliResult<bool> {
    let sim = cfg.sim()?;
    prepare_dir(out, resume)?;
    let _ = std::fs::remove_file(out.join(MANIFEST_NAME));
    let snap_dir = out.join(SNAPSHOT_DIR);
    let csv_path = out.join(SAMPLES_CSV);
    let mut resumed = None;
    let existing = if resume { std::fs::read_to_string(&csv_path).unwrap_or_default() } else { String::new() };
    let last_row = existing.lines().skip(1).filter_map(row_step).last();
    let mut state = match (resume, resume_point(&snap_dir, last_row)?) {
        (true, Some(path)) => {
            let snap = Snapshot::read(&path)?;
            if snap.seed != sim.seed || snap.field.grid() != &sim.grid {
                return Err(CliError::Config(format!("{} belongs to another configuration", path.display())));
            }
            let step = snap.step(sim.dt)?;
            let mut kept = String::from(SAMPLES_HEADER);
            for line in existing.lines().skip(1) {
                if row_step(line).is_some_and(|s| s <= step) {
                    kept.push_str(line);
                    kept.push('\n');
                }
            }
            std::fs::write(&csv_path, kept)?;
            resumed = Some(step);
            ChainState { field: snap.field, step, stream: NoiseStream::with_counter(sim.seed, sim.grid, step) }
        }
        _ => {
            std::fs::write(&csv_path, SAMPLES_HEADER)?;
            if snap_dir.exists() {
                std::fs::remove_dir_all(&snap_dir)?;
            }
            ChainState::new(&sim, cfg.initial_field(&sim)?)?
        }
    };
    for stale in ["summary.json", "final.snap"] {
        let _ = std::fs::remove_file(out.join(stale));
    }
    let file = std::fs::OpenOptions::new().append(true).open(&csv_path)?;
    let mut sink = CsvSink { csv: BufWriter::new(file), snap_dir, seed: sim.seed };
    let summary = run_chain(&sim, &mut state, &mut sink)?;
    sink.csv.flush()?;
    Snapshot { field: state.field.clone(), seed: sim.seed }.write(&out.join("final.snap"))?;
    let samples = std::fs::read_to_string(&csv_path)?.lines().count() as u64 - 1;
    write_json(
        &out.join("summary.json"),
        &RunSummary {
            steps: summary.steps,
            samples,
            final_time: summary.final_time,
            resumed_from_step: resumed,
            c1: sim.renorm.c1,
            c2: sim.renorm.c2,
            mass_counterterm: sim.renorm.mass_counterterm,
        },
    )?;
    RunManifest::finalise(out, cfg, "run", true)?;
    Ok(true)
}

fn finish(out: &Path, cfg: &Config, command: &str, passed: bool) -> CliResult<bool> {
    RunManifest::finalise(out, cfg, command, passed)?;
    Ok(passed)
}

// ------------------------------------------------------------------ verify

#[derive(Serialize)]
struct MaxPrincipleOutput {
    analytic_cubic_decay: BoundReport,
    analytic_balance: BoundReport,
    battery: BoundReport,
    half_battery_constant: f64,
}

fn max_principle(cfg: &Config, sim: &SimConfig) -> CliResult<(bool, serde_json::Value)> {
    let mp = MaxPrincipleConfig { dt: sim.dt, t_end: sim.t_end.min(1.0), c_max: cfg.f64("verify.c_max")? };
    let g = sim.grid;
    let decay = check_max_principle(&Field::constant(g, 1e6), |_, _, _| 0.0, 0.0, &mp)?;
    let balance = check_max_principle(&Field::zeros(g), |_, _, _| 27.0, 27.0, &mp)?;
    let n = cfg.u64("verify.battery")?.max(2) as usize;
    let seed = sim.seed;
    let jobs: Vec<u64> = (0..n as u64).collect();
    let reports = pool::map(&jobs, |&i| -> CliResult<BoundReport> {
        let mut z = vec![0.0; g.num_sites() + 6];
        standard_normals(derive_seed(seed, &[1, i]), 0, 0, &mut z);
        let mag = 10f64.powf(6.0 * (0.5 + 0.5 * z[0].tanh()));
        let amp = 10f64.powf(3.0 * (0.5 + 0.5 * z[1].tanh()));
        let (w, ph) = (1.0 + 20.0 * z[2].abs(), z[5]);
        let k: Vec<f64> = (0..g.dim()).map(|a| (z[3 + a.min(1)] * 3.0).round()).collect();
        let vals = &z[6..];
        let sup = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let u0 = Field::new(g, vals.iter().map(|v| mag * v / sup).collect(), 0.0)?;
        let f = move |t: f64, x: &[f64], u: f64| {
            let kx: f64 = x.iter().zip(&k).map(|(a, b)| a * b).sum();
            amp * (w * t + std::f64::consts::TAU * kx + ph).sin() * u.cos()
        };
        let mut r = check_max_principle(&u0, f, amp, &mp)?;
        r.entries[0].label = format!("pair {i} |u0|={mag:.3e} |g|={amp:.3e}");
        Ok(r)
    });
    let mut entries = Vec::new();
    for r in reports {
        entries.extend(r?.entries);
    }
    let half = BoundReport::from_entries(entries[..n / 2].to_vec(), mp.c_max);
    let battery = BoundReport::from_entries(entries, mp.c_max);
    let pass = battery.pass && decay.constant_fit <= 1.05 && balance.constant_fit <= 1.05;
    let out = MaxPrincipleOutput {
        analytic_cubic_decay: decay,
        analytic_balance: balance,
        half_battery_constant: half.constant_fit,
        battery,
    };
    Ok((pass, serde_json::to_value(out)?))
}

fn apriori(cfg: &Config, sim: &SimConfig, local: bool) -> CliResult<(bool, serde_json::Value)> {
    let r = cfg.f64("verify.r")?;
    let kappa = cfg.f64("verify.kappa")?;
    let c_max = cfg.f64("verify.c_max")?;
    let n_box = cfg.f64("verify.n_box")?;
    let store = cfg.u64("verify.store_every")?;
    let mags = cfg.list_f64("verify.magnitudes")?;
    let seeds = cfg.u64("verify.seeds")?;
    let jobs: Vec<(u64, f64)> = (0..seeds).flat_map(|s| mags.iter().map(move |&m| (s, m))).collect();
    let results = pool::map(&jobs, |&(s, m)| -> CliResult<(BoundReport, phi4_core::trees::SeminormReport)> {
        let mut c = sim.clone();
        c.seed = derive_seed(sim.seed, &[2, s]);
        let run = run_coupled(&c, Field::constant(c.grid, m), store)?;
        let psi = c.psi.as_ref().expect("psi is always configured");
        let (mut rep, sem) = if local {
            check_apriori_localised(&run, r, kappa, n_box, psi, c_max)?
        } else {
            check_apriori(&run, r, kappa, c_max)?
        };
        rep.entries[0].label = format!("seed {s} magnitude {m:e}");
        Ok((rep, sem))
    });
    let mut entries = Vec::new();
    let mut sems = Vec::new();
    for res in results {
        let (rep, sem) = res?;
        entries.extend(rep.entries);
        sems.push(sem);
    }
    let half = BoundReport::from_entries(entries[..(entries.len() / 2).max(1)].to_vec(), c_max);
    let report = BoundReport::from_entries(entries, c_max);
    let ratios: Vec<f64> = report.entries.iter().map(|e| e.ratio).filter(|r| *r > 0.0).collect();
    let spread = ratios.iter().cloned().fold(0.0, f64::max) / ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let stable = ratios.is_empty() || spread <= 10.0;
    let pass = report.pass && stable;
    Ok((
        pass,
        serde_json::json!({
            "report": report,
            "half_battery_constant": half.constant_fit,
            "ratio_spread": spread,
            "constant_stable": stable,
            "seminorms": sems,
        }),
    ))
}

fn convergence(cfg: &Config, sim: &SimConfig) -> CliResult<(bool, serde_json::Value)> {
    let init_value = match cfg.str("init.kind") {
        "zero" => 0.0,
        "constant" => cfg.f64("init.value")?,
        other => return Err(CliError::Config(format!("init.kind = {other} is not supported by the convergence suite"))),
    };
    let base = ConvergenceConfig {
        d: sim.grid.dim(),
        side: sim.grid.side(),
        levels: cfg.list_u32("verify.levels")?,
        ref_level: cfg.u64("verify.ref_level")? as u32,
        dt: sim.dt,
        t_end: sim.t_end,
        seed: sim.seed,
        m2: sim.renorm.m2,
        potential: sim.potential,
        beta: sim.beta,
        psi: sim.psi.clone(),
        linear: sim.quadratic_only,
        kappa: cfg.f64("verify.kappa")?,
        store_every: cfg.u64("verify.store_every")?,
    };
    let seeds: Vec<u64> = (0..cfg.u64("verify.seeds")?).collect();
    let tables = pool::map(&seeds, |&s| -> CliResult<Vec<DistanceRow>> {
        let mut c = base.clone();
        c.seed = derive_seed(sim.seed, &[4, s]);
        Ok(convergence_study(&c, |_| init_value)?)
    });
    let mut pass = true;
    let mut out = Vec::new();
    for (s, t) in seeds.iter().zip(tables) {
        let t = t?;
        let inversions = t.windows(2).filter(|w| w[1].holder_distance > w[0].holder_distance).count();
        pass &= inversions <= 1 && t.iter().all(|r| !r.blew_up);
        out.push(serde_json::json!({ "seed_index": s, "inversions": inversions, "rows": t }));
    }
    Ok((pass, serde_json::json!({ "tables": out })))
}

fn init_rate(cfg: &Config, sim: &SimConfig) -> CliResult<(bool, serde_json::Value)> {
    let kappa = cfg.f64("verify.kappa")?;
    let kappa_bar = cfg.f64("verify.kappa_bar")?;
    let levels = cfg.list_u32("verify.levels")?;
    let max_level = levels.iter().copied().max().unwrap_or(3);
    let (zeta, need) = match cfg.str("verify.zeta") {
        "lacunary" => (RoughFunction::lacunary(kappa, max_level + 6, sim.seed), kappa - 2.0 * kappa_bar - 0.1),
        "smooth" => (RoughFunction::single_mode(1, 1.0), 0.9),
        "constant" => (RoughFunction::constant(1.0), f64::NEG_INFINITY),
        other => return Err(CliError::Config(format!("verify.zeta = {other}: expected lacunary, smooth or constant"))),
    };
    let fit: RateFit = init_discretisation_rate(&zeta, kappa, kappa_bar, &levels)?;
    let pass = if cfg.str("verify.zeta") == "constant" {
        fit.distances.iter().all(|d| d.2 < 1e-12)
    } else {
        fit.slope >= need
    };
    Ok((pass, serde_json::json!({ "fit": fit, "required_slope": need })))
}

/// `phi4 verify --suite …`
pub fn verify(cfg: &Config, suite: &str, out: &Path) -> CliResult<bool> {
    let sim = cfg.sim()?;
    prepare_dir(out, false)?;
    let (pass, value) = match suite {
        "maxprinciple" => max_principle(cfg, &sim)?,
        "apriori" => apriori(cfg, &sim, false)?,
        "apriori-local" => apriori(cfg, &sim, true)?,
        "convergence" => convergence(cfg, &sim)?,
        "initrate" => init_rate(cfg, &sim)?,
        other => return Err(CliError::Config(format!("unknown verify suite `{other}`"))),
    };
    write_json(&out.join(format!("verify_{suite}.json")), &serde_json::json!({ "suite": suite, "pass": pass, "result": value }))?;
    finish(out, cfg, &format!("verify {suite}"), pass)
}

// ------------------------------------------------------------------- stats

fn pairings(sim: &SimConfig) -> CliResult<SampleSet> {
    let mut st = ChainState::new(sim, Field::zeros(sim.grid))?;
    let mut rows: Vec<SampleRow> = Vec::new();
    run_chain(sim, &mut st, &mut rows)?;
    let v = rows.into_iter().map(|r| r.pairing).collect();
    Ok(SampleSet::new(v, sim.seed, sim.dt, sim.burn_in, sim.thinning))
}

fn phi_chain(sim: &SimConfig, suite: u64) -> SimConfig {
    let mut c = sim.clone();
    c.potential = None;
    c.beta = 0.0;
    c.seed = derive_seed(sim.seed, &[suite, 0]);
    c
}

fn observable(name: &str) -> CliResult<fn(f64) -> f64> {
    Ok(match name {
        "tanh" => |x: f64| x.tanh(),
        "tanh2" => |x: f64| x.tanh().powi(2),
        "lorentz" => |x: f64| 1.0 / (1.0 + x * x),
        "one" => |_| 1.0,
        other => return Err(CliError::Config(format!("stats.observable = {other}: expected tanh, tanh2, lorentz or one"))),
    })
}

/// `phi4 stats --suite …`
pub fn stats(cfg: &Config, suite: &str, out: &Path) -> CliResult<bool> {
    let sim = cfg.sim()?;
    prepare_dir(out, false)?;
    let need_p = || sim.potential.ok_or_else(|| CliError::Config("potential.n must be set for this suite".into()));
    let (pass, value) = match suite {
        "partition" => {
            let p = need_p()?;
            let xs = pairings(&phi_chain(&sim, 10))?;
            let est = estimate_partition(&xs, &p, sim.beta, derive_seed(sim.seed, &[10, 2]))?;
            (est.reliable, serde_json::to_value(&est)?)
        }
        "tail" => {
            let xs = pairings(&phi_chain(&sim, 11))?;
            let mut sorted = xs.values.clone();
            sorted.sort_by(|a, b| a.total_cmp(b));
            let k_lo = cfg.opt_f64("stats.k_lo")?.unwrap_or_else(|| variance(&xs.values).sqrt());
            let k_hi = cfg.opt_f64("stats.k_hi")?.unwrap_or_else(|| sorted[sorted.len().saturating_sub(60)]);
            let fit = tail_exponent(&xs.values, k_lo, k_hi, cfg.u64("stats.points")? as usize, xs.ess())?;
            let mut csv = String::from("K,survival,neg_log_survival\n");
            for (k, s, y) in &fit.points {
                let _ = writeln!(csv, "{k},{s},{y}");
            }
            std::fs::write(out.join("tail.csv"), csv)?;
            (true, serde_json::json!({ "fit": fit, "ess": xs.ess(), "window": [k_lo, k_hi] }))
        }
        "density" => {
            let p = need_p()?;
            let g = observable(cfg.str("stats.observable"))?;
            let phi = pairings(&phi_chain(&sim, 12))?;
            let mut psi_cfg = sim.clone();
            psi_cfg.seed = derive_seed(sim.seed, &[12, 1]);
            let psi = pairings(&psi_cfg)?;
            let r = density_cross_check(&phi, &psi, g, &p, sim.beta)?;
            (r.within(cfg.f64("stats.sigmas")?) && r.reliable, serde_json::to_value(&r)?)
        }
        "plateau" => {
            let xs = pairings(&phi_chain(&sim, 13))?;
            let r = uniform_z_plateau(sim.beta, &cfg.list_u32("stats.n_list")?, &xs, cfg.f64("stats.threshold")?, derive_seed(sim.seed, &[13, 2]))?;
            (r.monotone && r.plateau, serde_json::to_value(&r)?)
        }
        other => return Err(CliError::Config(format!("unknown stats suite `{other}`"))),
    };
    write_json(&out.join(format!("stats_{suite}.json")), &serde_json::json!({ "suite": suite, "pass": pass, "result": value }))?;
    finish(out, cfg, &format!("stats {suite}"), pass)
}

// ------------------------------------------------------------------- trees

/// `phi4 trees`: evolve the tree ensemble and tabulate seminorms.
pub fn trees(cfg: &Config, out: &Path) -> CliResult<bool> {
    let sim = cfg.sim()?;
    prepare_dir(out, false)?;
    let kappa = cfg.f64("trees.kappa")?;
    let tc = TreeConfig {
        grid: sim.grid,
        dt: sim.dt,
        steps: sim.steps(),
        store_every: cfg.u64("trees.store_every")?.max(1),
        rc: sim.renorm,
        stationary_start: true,
        init_seed: derive_seed(sim.seed, &[0x7431]),
        noise_scale: sim.noise_scale,
    };
    let mut stream = NoiseStream::new(sim.seed, sim.grid);
    let ens = evolve_trees(&mut stream, &tc)?;
    let kernels = DyadicKernelFamily::new(&sim.grid);
    let domain = match cfg.str("trees.domain") {
        "full" => Domain::full(),
        "local" => Domain::localised(BoxRegion::centered_cube(&sim.grid, cfg.f64("trees.n_box")?)),
        other => return Err(CliError::Config(format!("trees.domain = {other}: expected full or local"))),
    };
    let rep = seminorms(&ens, &kernels, kappa, &domain)?;
    let mut csv = String::from("tau,kappa,domain,seminorm,seed\n");
    for t in Tree::ALL {
        let _ = writeln!(csv, "{},{kappa},{},{},{}", t.label(), rep.domain, rep.get(t), sim.seed);
    }
    let _ = writeln!(csv, "1_holder,{kappa},{},{},{}", rep.domain, rep.holder_one, sim.seed);
    std::fs::write(out.join("trees.csv"), csv)?;
    let mut kt = String::from("j,T,kernel_sum,kernel_origin\n");
    for (j, t) in kernels.scales().iter().enumerate() {
        let k = kernels.kernel(j);
        let _ = writeln!(kt, "{j},{t},{},{}", k.iter().sum::<f64>(), k[0]);
    }
    std::fs::write(out.join("kernels.csv"), kt)?;
    write_json(&out.join("trees.json"), &serde_json::json!({ "report": rep, "bound_term": rep.bound_term() }))?;
    finish(out, cfg, "trees", true)
}

// ---------------------------------------------------------------- snapshot

pub fn snapshot_info(path: &Path) -> CliResult<String> {
    let s = Snapshot::read(path)?;
    let g: &LatticeGrid = s.field.grid();
    Ok(serde_json::to_string_pretty(&serde_json::json!({
        "d": g.dim(),
        "level": g.level(),
        "side": g.side(),
        "sites": g.num_sites(),
        "time": s.field.time,
        "seed": s.seed,
        "sup_norm": s.field.sup_norm(),
        "mean": s.field.mean(),
    }))?)
}

pub fn snapshot_dump(path: &Path) -> CliResult<String> {
    let s = Snapshot::read(path)?;
    let g = *s.field.grid();
    let mut out = String::from("site");
    for a in 0..g.dim() {
        let _ = write!(out, ",x{}", a + 1);
    }
    out.push_str(",value\n");
    for (i, v) in s.field.values().iter().enumerate() {
        let p = g.site_position(i);
        let _ = write!(out, "{i}");
        for x in &p[..g.dim()] {
            let _ = write!(out, ",{x}");
        }
        let _ = writeln!(out, ",{v}");
    }
    Ok(out)
}

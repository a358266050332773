use phi4_core::dynamics::{run_chain, ChainState, Integrator, SampleRow, SimConfig, Stepper};
use phi4_core::holder::holder_norm_neg;
use phi4_core::lattice::{build_grid, TestFunction};
use phi4_core::noise::{coarsen_to, NoiseIncrement, NoiseStream};
use phi4_core::potential::{eval_v, Observable};
use phi4_core::renorm::{compute_c1, compute_c2, compute_c2_spectral};
use phi4_core::stats::Moments;
use phi4_core::{Field, RenormConstants};

const TAU: f64 = std::f64::consts::TAU;

fn variance_within_3_se(m: &Moments, expected: f64) {
    // Var of the sample variance of normals is 2σ⁴/(n−1)
    let se = expected * (2.0 / (m.count - 1) as f64).sqrt();
    let v = m.variance();
    assert!((v - expected).abs() <= 3.0 * se, "variance {v} vs {expected} (se {se})");
}

#[test]
fn noise_site_variance_is_dt_over_cell_volume() {
    // d = 3, ε = 1/2: 0.01 · 8 = 0.08
    let g = build_grid(3, 2.0, 1).unwrap();
    assert_eq!(g.eps(), 0.5);
    let mut s = NoiseStream::new(11, g);
    let mut m = Moments::default();
    while m.count < 1_000_000 {
        s.draw_increment(0.01).unwrap().values.iter().for_each(|&x| m.push(x));
    }
    variance_within_3_se(&m, 0.08);
    assert!(m.mean.abs() < 3.0 * (0.08 / m.count as f64).sqrt());
}

#[test]
fn coarsened_noise_has_coarse_variance() {
    let fine = build_grid(1, 1.0, 6).unwrap();
    let coarse = build_grid(1, 1.0, 5).unwrap();
    let dt = 0.02;
    let mut s = NoiseStream::new(5, fine);
    let mut m = Moments::default();
    while m.count < 1_000_000 {
        let inc = s.draw_increment(dt).unwrap();
        coarsen_to(&inc, &coarse).unwrap().values.iter().for_each(|&x| m.push(x));
    }
    variance_within_3_se(&m, dt / coarse.eps());
}

#[test]
fn c1_diverges_like_inverse_eps_in_three_dimensions() {
    let c = |n| compute_c1(&build_grid(3, 1.0, n).unwrap(), 1.0).unwrap();
    let ratio = c(7) / c(6);
    assert!((ratio - 2.0).abs() <= 0.2, "c1 ratio {ratio}");
}

#[test]
fn c2_is_bounded_in_one_dimension() {
    let vals: Vec<f64> = (2..=8).map(|n| compute_c2(&build_grid(1, 1.0, n).unwrap(), 1.0).unwrap()).collect();
    let incs: Vec<f64> = vals.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    assert!(incs.windows(2).all(|w| w[1] <= w[0]), "{vals:?}");
    assert!(incs.last().unwrap() / vals.last().unwrap() < 1e-3, "{vals:?}");
}

#[test]
fn c2_grows_linearly_in_level_in_three_dimensions() {
    let vals: Vec<f64> = (3..=6)
        .map(|n| compute_c2_spectral(&build_grid(3, 1.0, n).unwrap(), 1.0, 256).unwrap())
        .collect();
    let slopes: Vec<f64> = vals.windows(2).map(|w| w[1] - w[0]).collect();
    let last = slopes[slopes.len() - 1];
    let prev = slopes[slopes.len() - 2];
    assert!(last > 0.0 && ((last - prev) / last).abs() <= 0.2, "{vals:?}");
    // continuum sunset: (1/2)(2π)^{-6}·4π·(π³/3) = 1/(96π²) per unit of log(1/ε)
    let expected = 2f64.ln() / (96.0 * std::f64::consts::PI.powi(2));
    assert!((last - expected).abs() <= 0.2 * expected, "slope {last} vs {expected}");
}

#[test]
fn v_of_constant_field_is_quartic_in_the_mass_of_psi() {
    let g = build_grid(2, 1.0, 6).unwrap();
    let psi = TestFunction::normalised(&[0.5, 0.5], 0.3).unwrap();
    let s = psi.integral();
    let obs = Observable::v(2.0, psi).unwrap();
    let v = eval_v(&obs, &Field::constant(g, 1.0)).unwrap();
    assert!((v - 0.5 * s.powi(4)).abs() <= 1e-7 * v, "{v} vs {}", 0.5 * s.powi(4));
    assert_eq!(eval_v(&obs, &Field::zeros(g)).unwrap(), 0.0);
    let f = Field::from_fn(g, |x| (TAU * x[0]).sin() + 0.3);
    assert_eq!(eval_v(&obs, &f).unwrap(), eval_v(&obs, &f.scaled(-1.0)).unwrap());
}

fn base_config(d: usize, level: u32, dt: f64, t_end: f64) -> SimConfig {
    let g = build_grid(d, 1.0, level).unwrap();
    let rc = RenormConstants::new(&g, 1.0, Some(dt)).unwrap();
    SimConfig::phi(g, dt, t_end, rc, 9)
}

#[test]
fn thinning_yields_floor_of_post_burn_in_steps() {
    for &(burn, thin) in &[(0u64, 1u64), (13, 7), (100, 1000), (250, 3)] {
        let mut cfg = base_config(1, 4, 1e-3, 0.5);
        cfg.burn_in = burn;
        cfg.thinning = thin;
        let mut st = ChainState::new(&cfg, Field::zeros(cfg.grid)).unwrap();
        let mut rows: Vec<SampleRow> = Vec::new();
        let sum = run_chain(&cfg, &mut st, &mut rows).unwrap();
        assert_eq!(sum.steps, 500);
        assert_eq!(rows.len() as u64, (500 - burn) / thin, "burn {burn} thin {thin}");
    }
}

#[test]
fn imex_and_explicit_agree_to_second_order_per_step() {
    let err = |dt: f64| {
        let mut cfg = base_config(1, 4, dt, 1.0);
        let u0 = Field::from_fn(cfg.grid, |x| 0.8 * (TAU * x[0]).cos() + 0.2);
        let inc = NoiseIncrement::zeros(cfg.grid, dt);
        let mut a = u0.clone();
        Stepper::new(&cfg).unwrap().advance(&mut a, &inc, 0).unwrap();
        cfg.integrator = Integrator::Explicit;
        let mut b = u0;
        Stepper::new(&cfg).unwrap().advance(&mut b, &inc, 0).unwrap();
        a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    };
    let (e1, e2) = (err(1e-3), err(5e-4));
    let order = (e1 / e2).log2();
    assert!(e1 > 0.0 && (order - 2.0).abs() < 0.2, "errors {e1} {e2}, order {order}");
}

#[test]
fn restart_mid_run_reproduces_final_state() {
    let mut cfg = base_config(2, 4, 1e-3, 0.4);
    cfg.thinning = 10;
    let init = Field::from_fn(cfg.grid, |x| (TAU * x[1]).sin());
    let mut full = ChainState::new(&cfg, init.clone()).unwrap();
    let mut rows_full: Vec<SampleRow> = Vec::new();
    run_chain(&cfg, &mut full, &mut rows_full).unwrap();

    let mut half_cfg = cfg.clone();
    half_cfg.t_end = 0.2;
    let mut first = ChainState::new(&half_cfg, init).unwrap();
    let mut rows: Vec<SampleRow> = Vec::new();
    run_chain(&half_cfg, &mut first, &mut rows).unwrap();
    let mut resumed = ChainState {
        field: first.field.clone(),
        step: first.step,
        stream: NoiseStream::with_counter(cfg.seed, cfg.grid, first.step),
    };
    run_chain(&cfg, &mut resumed, &mut rows).unwrap();
    assert_eq!(resumed.field, full.field);
    assert_eq!(rows.len(), rows_full.len());
    for (a, b) in rows.iter().zip(&rows_full) {
        assert_eq!((a.step, a.pairing.to_bits()), (b.step, b.pairing.to_bits()));
    }
}

#[test]
fn same_seed_gives_identical_trajectories() {
    let mut cfg = base_config(3, 3, 1e-3, 0.05);
    cfg.thinning = 5;
    let go = || {
        let mut st = ChainState::new(&cfg, Field::zeros(cfg.grid)).unwrap();
        let mut rows: Vec<SampleRow> = Vec::new();
        run_chain(&cfg, &mut st, &mut rows).unwrap();
        (st.field, rows.iter().map(|r| r.pairing.to_bits()).collect::<Vec<_>>())
    };
    assert_eq!(go(), go());
}

#[test]
fn holder_proxy_is_consistent_across_refinement() {
    let f = |x: &[f64]| (TAU * 3.0 * x[0]).cos() + 0.5 * (TAU * (5.0 * x[0] + 2.0 * x[1])).sin() + 0.2;
    for level in 5..=6 {
        let a = holder_norm_neg(&Field::from_fn(build_grid(2, 1.0, level).unwrap(), f), -0.6);
        let b = holder_norm_neg(&Field::from_fn(build_grid(2, 1.0, level + 1).unwrap(), f), -0.6);
        assert!((a / b - 1.0).abs() <= 0.15, "level {level}: {a} vs {b}");
    }
}

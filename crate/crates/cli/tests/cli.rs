use std::path::Path;
use std::process::{Command, Output};

use phi4_cli::RunManifest;

fn phi4(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phi4")).args(args).output().expect("spawn phi4")
}

fn write_cfg(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

fn out_dir(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_owned()
}

const RUN_CFG: &str = "seed = 7
grid.d = 1
grid.level = 5
dynamics.dt = 0.0005
dynamics.t_end = 1
dynamics.snapshot_every = 500
dynamics.thinning = 10
potential.n = 4
observable.beta = 1
";

#[test]
fn run_is_byte_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "a.cfg", RUN_CFG);
    let (a, b) = (out_dir(tmp.path(), "a"), out_dir(tmp.path(), "b"));
    assert!(phi4(&["run", "--config", &cfg, "--out", &a]).status.success());
    assert!(phi4(&["run", "--config", &cfg, "--out", &b]).status.success());
    let ca = std::fs::read(Path::new(&a).join("samples.csv")).unwrap();
    let cb = std::fs::read(Path::new(&b).join("samples.csv")).unwrap();
    assert_eq!(ca, cb);
    assert_eq!(String::from_utf8(ca).unwrap().lines().count(), 201);
    let ma = RunManifest::read(Path::new(&a)).unwrap();
    let mb = RunManifest::read(Path::new(&b)).unwrap();
    assert_eq!(ma.config_hash, mb.config_hash);
    assert_eq!(ma.outputs, mb.outputs);
}

#[test]
fn resume_reproduces_uninterrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "a.cfg", RUN_CFG);
    let full = out_dir(tmp.path(), "full");
    assert!(phi4(&["run", "--config", &cfg, "--out", &full]).status.success());

    // Interrupt after the first snapshot: later snapshot and results gone,
    // CSV cut somewhere past the snapshot step.
    let cut = tmp.path().join("cut");
    std::fs::create_dir_all(cut.join("snapshots")).unwrap();
    let full = Path::new(&full);
    std::fs::copy(full.join("snapshots/step_000000000500.snap"), cut.join("snapshots/step_000000000500.snap")).unwrap();
    let csv = std::fs::read_to_string(full.join("samples.csv")).unwrap();
    let partial: String = csv.lines().take(73).map(|l| format!("{l}\n")).collect();
    std::fs::write(cut.join("samples.csv"), partial).unwrap();

    let o = phi4(&["run", "--config", &cfg, "--out", cut.to_str().unwrap(), "--resume"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["samples.csv", "final.snap"] {
        assert_eq!(std::fs::read(full.join(f)).unwrap(), std::fs::read(cut.join(f)).unwrap(), "{f}");
    }
    let summary = std::fs::read_to_string(cut.join("summary.json")).unwrap();
    assert!(summary.contains("\"resumed_from_step\": 500"));
    RunManifest::audit(&cut).unwrap();
}

#[test]
fn manifest_audits_and_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "a.cfg", RUN_CFG);
    let out = out_dir(tmp.path(), "o");
    assert!(phi4(&["run", "--config", &cfg, "--out", &out]).status.success());
    let out = Path::new(&out);
    let m = RunManifest::audit(out).unwrap();
    assert_eq!(m.seed, 7);
    assert!(m.outputs.iter().any(|f| f.path == "samples.csv"));
    assert!(m.outputs.iter().any(|f| f.path == "snapshots/step_000000001000.snap"));
    let mut csv = std::fs::read(out.join("samples.csv")).unwrap();
    csv.push(b'\n');
    std::fs::write(out.join("samples.csv"), csv).unwrap();
    assert!(RunManifest::audit(out).is_err());
}

#[test]
fn refuses_to_overwrite_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "a.cfg", "grid.d = 1\ngrid.level = 3\ndynamics.t_end = 0.01\n");
    let out = out_dir(tmp.path(), "o");
    assert!(phi4(&["run", "--config", &cfg, "--out", &out]).status.success());
    assert_eq!(phi4(&["run", "--config", &cfg, "--out", &out]).status.code(), Some(2));
}

#[test]
fn forced_blow_up_exits_with_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "bu.cfg",
        "grid.d = 1\ngrid.level = 4\ndynamics.integrator = explicit\ndynamics.dt = 0.0019\ninit.kind = constant\ninit.value = 1000\n",
    );
    let o = phi4(&["run", "--config", &cfg, "--out", &out_dir(tmp.path(), "o")]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("blow-up") && err.contains("step"), "{err}");
}

#[test]
fn typo_in_key_is_an_error_with_suggestion() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "t.cfg", "grid.d = 1\ngrid.level = 4\npotental.n = 3\n");
    let o = phi4(&["run", "--config", &cfg, "--out", &out_dir(tmp.path(), "o")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("did you mean `potential.n`"));
}

#[test]
fn explicit_cfl_violation_names_the_bound() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "c.cfg", "grid.d = 1\ngrid.level = 6\ndynamics.integrator = explicit\n");
    let o = phi4(&["run", "--config", &cfg, "--out", &out_dir(tmp.path(), "o")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("0.0001220703125"));
}

#[test]
fn verify_suites_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "v.cfg",
        "grid.d = 1\ngrid.level = 5\ndynamics.dt = 0.0002\ndynamics.t_end = 1\nverify.seeds = 2\nverify.battery = 6\n",
    );
    for suite in ["maxprinciple", "apriori"] {
        let out = out_dir(tmp.path(), suite);
        let o = phi4(&["verify", "--suite", suite, "--config", &cfg, "--out", &out]);
        assert_eq!(o.status.code(), Some(0), "{suite}: {}", String::from_utf8_lossy(&o.stderr));
        let report = std::fs::read_to_string(Path::new(&out).join(format!("verify_{suite}.json"))).unwrap();
        assert!(report.contains("\"pass\": true"));
        assert!(RunManifest::audit(Path::new(&out)).unwrap().passed);
    }
    let cfg = write_cfg(
        tmp.path(),
        "c.cfg",
        "grid.d = 1\ngrid.level = 4\ndynamics.t_end = 0.5\nverify.seeds = 2\nverify.levels = 4,5,6\nverify.ref_level = 8\nverify.kappa = 0.2\n",
    );
    for suite in ["convergence", "initrate"] {
        let o = phi4(&["verify", "--suite", suite, "--config", &cfg, "--out", &out_dir(tmp.path(), suite)]);
        assert_eq!(o.status.code(), Some(0), "{suite}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn localised_suite_rejects_small_torus() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "v.cfg", "grid.d = 1\ngrid.level = 5\nverify.seeds = 1\n");
    let o = phi4(&["verify", "--suite", "apriori-local", "--config", &cfg, "--out", &out_dir(tmp.path(), "o")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stats_tail_and_trees_write_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "s.cfg",
        "seed = 3\ngrid.d = 1\ngrid.level = 2\ndynamics.dt = 0.002\ndynamics.t_end = 400\ndynamics.burn_in = 500\n\
         dynamics.thinning = 25\npotential.n = 4\nobservable.beta = 1\nobservable.psi.radius = 0.5\nobservable.psi.center = 0.5\n",
    );
    let out = out_dir(tmp.path(), "tail");
    assert!(phi4(&["stats", "--suite", "tail", "--config", &cfg, "--out", &out]).status.success());
    let tail = std::fs::read_to_string(Path::new(&out).join("tail.csv")).unwrap();
    assert!(tail.starts_with("K,survival,neg_log_survival\n"));
    assert_eq!(tail.lines().count(), 21);

    let cfg = write_cfg(tmp.path(), "t.cfg", "grid.d = 2\ngrid.level = 4\ndynamics.t_end = 1\ntrees.store_every = 10\n");
    let out = out_dir(tmp.path(), "trees");
    assert!(phi4(&["trees", "--config", &cfg, "--out", &out]).status.success());
    let t = std::fs::read_to_string(Path::new(&out).join("trees.csv")).unwrap();
    assert!(t.starts_with("tau,kappa,domain,seminorm,seed\n"));
    assert_eq!(t.lines().count(), 10);
    assert!(Path::new(&out).join("kernels.csv").exists());
}

#[test]
fn snapshot_tools_read_final_state() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "a.cfg", "grid.d = 2\ngrid.level = 3\ndynamics.t_end = 0.05\n");
    let out = out_dir(tmp.path(), "o");
    assert!(phi4(&["run", "--config", &cfg, "--out", &out]).status.success());
    let snap = Path::new(&out).join("final.snap");
    let info = phi4(&["snapshot", "info", snap.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_slice(&info.stdout).unwrap();
    assert_eq!(v["sites"], 64);
    assert_eq!(v["time"], 0.05);
    let dump = phi4(&["snapshot", "dump", snap.to_str().unwrap()]);
    let text = String::from_utf8(dump.stdout).unwrap();
    assert!(text.starts_with("site,x1,x2,value\n"));
    assert_eq!(text.lines().count(), 65);
    assert_eq!(phi4(&["snapshot", "info", "/nonexistent.snap"]).status.code(), Some(2));
}

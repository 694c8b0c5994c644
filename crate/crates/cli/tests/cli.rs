use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "base=fig2
name=small
grid.nx=128
grid.nz=256
grid.x_min=-8
grid.x_max=8
grid.z_min=-6
grid.z_max=6
absorber.width_x=1.5
absorber.width_z=1.5
solver.dt=0.001
solver.t_max=0.5
solver.snapshot_stride=5
detection.d=2
ensemble.n_particles=300
";

fn slitflight(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_slitflight"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("TOF_THREADS", t),
        None => cmd.env_remove("TOF_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn write_small(dir: &Path) -> String {
    let path = dir.join("small.cfg");
    std::fs::write(&path, SMALL).unwrap();
    path.to_str().unwrap().to_string()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn unknown_preset_exits_1() {
    let out = slitflight(&["simulate", "--preset", "nope", "--seed", "1"], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown preset"));
}

#[test]
fn half_given_bin_flags_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("o");
    let out = slitflight(
        &["flux", "--preset", "fig2", "--bins-x", "8", "--out", out_dir.to_str().unwrap()],
        None,
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(!out_dir.exists());
    let out = slitflight(&["flux", "--preset", "fig2", "--bins-x", "0", "--bins-t", "4"], None);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_seed_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_small(dir.path());
    for sub in ["simulate", "validate"] {
        let out = slitflight(&[sub, "--config", &cfg], None);
        assert_eq!(out.status.code(), Some(1), "{sub}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
    }
}

#[test]
fn preset_and_config_are_exclusive() {
    let out = slitflight(&["flux", "--preset", "fig2", "--config", "x.cfg"], None);
    assert_eq!(out.status.code(), Some(1));
    let out = slitflight(&["flux"], None);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn invalid_config_exits_1_and_missing_file_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, SMALL.replace("solver.dt=0.001", "solver.dt=-1")).unwrap();
    let out = slitflight(&["simulate", "--config", bad.to_str().unwrap(), "--seed", "1"], None);
    assert_eq!(out.status.code(), Some(1));
    let missing = dir.path().join("absent.cfg");
    let out = slitflight(&["simulate", "--config", missing.to_str().unwrap(), "--seed", "1"], None);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bad_thread_count_exits_1() {
    let out = slitflight(&["flux", "--preset", "fig2"], Some("zero"));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_is_reproducible_across_threads_and_history_reuse() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_small(dir.path());
    let hist = dir.path().join("h.bin");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    let run = |out: &Path, extra: &[&str], threads| {
        let mut args = vec!["simulate", "--config", &cfg, "--seed", "11", "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        let o = slitflight(&args, threads);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    run(&a, &["--dump-history", hist.to_str().unwrap()], Some("1"));
    run(&b, &[], Some("3"));
    run(&c, &["--history", hist.to_str().unwrap()], None);
    for name in ["events.csv", "histogram.csv", "flux.csv", "scenario.cfg"] {
        assert_eq!(read(&a, name), read(&b, name), "{name}");
        assert_eq!(read(&a, name), read(&c, name), "{name}");
    }

    let events = read(&a, "events.csv");
    assert!(events.starts_with("trajectory_id,x0,z0,status,slit,x_hit,t_f\n"));
    assert_eq!(events.lines().count(), 301);
    let manifest: serde_json::Value = serde_json::from_str(&read(&a, "manifest.json")).unwrap();
    assert_eq!(manifest["scenario"], "small");
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["summary"]["n"], 300);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert!(!a.join("manifest.json.tmp").exists());
    let manifest_b: serde_json::Value = serde_json::from_str(&read(&b, "manifest.json")).unwrap();
    assert_eq!(manifest["config_hash"], manifest_b["config_hash"]);

    // A different seed changes the config hash and the events.
    let d = dir.path().join("d");
    let o = slitflight(
        &["simulate", "--config", &cfg, "--seed", "12", "--out", d.to_str().unwrap()],
        None,
    );
    assert!(o.status.success());
    assert_ne!(read(&a, "events.csv"), read(&d, "events.csv"));
    let manifest_d: serde_json::Value = serde_json::from_str(&read(&d, "manifest.json")).unwrap();
    assert_ne!(manifest["config_hash"], manifest_d["config_hash"]);
}

#[test]
fn corrupt_history_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_small(dir.path());
    let hist = dir.path().join("junk.bin");
    std::fs::write(&hist, b"junk").unwrap();
    let out_dir = dir.path().join("o");
    let out = slitflight(
        &[
            "simulate", "--config", &cfg, "--seed", "1", "--history", hist.to_str().unwrap(), "--out",
            out_dir.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn flux_writes_only_flux_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_small(dir.path());
    let out_dir = dir.path().join("o");
    let out = slitflight(
        &["flux", "--config", &cfg, "--bins-x", "16", "--bins-t", "10", "--out", out_dir.to_str().unwrap()],
        None,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut names: Vec<_> = std::fs::read_dir(&out_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["flux.csv", "manifest.json"]);
    let flux = read(&out_dir, "flux.csv");
    assert!(flux.starts_with("# scenario=small seed=none kind=flux\nx_lo,x_hi,t_lo,t_hi,value\n"));
    assert_eq!(flux.lines().count(), 2 + 16 * 10);
}

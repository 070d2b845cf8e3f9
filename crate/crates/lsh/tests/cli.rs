use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lsh_core::feedback::compose;
use lsh_core::LshSystem;
use serde_json::{json, Value};
use tempfile::TempDir;

fn lsh(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lsh"));
    cmd.args(args);
    if let Some(t) = threads {
        cmd.env("LSH_THREADS", t);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn unit_config() -> Value {
    json!({
        "systems": {
            "unit": {"K": 1, "M": 1, "F": 1, "N": 1},
            "half": {"K": 1, "M": 1, "F": 1, "N": 0.5}
        },
        "system": "unit",
        "compose": {"plant": "half", "controller": "half"},
        "simulation": {"T": 2, "dt": 0.01, "paths": 600, "x0": "stationary", "probes": [1, 2]},
        "robust": {"eps": 0.2, "gamma": 1, "monte_carlo": true}
    })
}

fn envelope(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn run_to(cmd: &str, cfg: &Path, out: &Path, threads: Option<&str>) -> (Output, Value) {
    let o = lsh(
        &[cmd, "--config", cfg.to_str().unwrap(), "--seed", "11", "--out", out.to_str().unwrap()],
        threads,
    );
    let env = envelope(&out.with_extension("json"));
    (o, env)
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn stability_example_and_exit_codes() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "unit.json", &unit_config());
    let out = dir.path().join("stab");
    let (o, env) = run_to("stability", &cfg, &out, None);
    assert_eq!(code(&o), 0);
    assert_eq!(env["schema_version"], 1);
    assert_eq!(env["outputs"]["hurwitz"], true);
    assert_eq!(env["outputs"]["eps_window"]["stiffness_bound"].as_f64().unwrap(), 1.0);
    assert!((env["outputs"]["eps_window"]["damping_bound"].as_f64().unwrap() - 0.4).abs() < 1e-15);

    let undamped = write_config(&dir, "undamped.json", &json!({"systems": {"u": {"K": 1, "M": 1, "F": 0, "N": 1}}}));
    let o = lsh(&["stability", "--config", undamped.to_str().unwrap()], None);
    assert_eq!(code(&o), 2);
    let env: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(env["applicable"], false);
    assert!(env["diagnostics"][0].as_str().unwrap().contains("F not positive definite"));
    let o = lsh(&["invariant", "--config", undamped.to_str().unwrap()], None);
    assert_eq!(code(&o), 2);

    assert_eq!(code(&lsh(&["explode", "--config", cfg.to_str().unwrap()], None)), 64);
    assert_eq!(code(&lsh(&["stability"], None)), 64);
    assert_eq!(code(&lsh(&["--help"], None)), 0);

    let bad = write_config(
        &dir,
        "bad.json",
        &json!({"systems": {"b": {"K": 1, "M": -1, "F": 1, "N": 1}}}),
    );
    let o = lsh(&["stability", "--config", bad.to_str().unwrap()], None);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("M not positive definite"));

    let o = lsh(&["simulate", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed required"));

    let missing = dir.path().join("nope.json");
    assert_eq!(code(&lsh(&["stability", "--config", missing.to_str().unwrap()], None)), 1);
}

#[test]
fn invariant_and_compose_examples() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "unit.json", &unit_config());
    let (o, env) = run_to("invariant", &cfg, &dir.path().join("inv"), None);
    assert_eq!(code(&o), 0);
    assert_eq!(env["outputs"]["Pi"], json!([[0.5, 0.0], [0.0, 0.5]]));
    assert_eq!(env["outputs"]["virial"]["mean_kinetic"].as_f64().unwrap(), 0.25);

    let (o, env) = run_to("compose", &cfg, &dir.path().join("loop"), None);
    assert_eq!(code(&o), 0);
    let sg = &env["outputs"]["small_gain"];
    assert_eq!(sg["norm"].as_f64().unwrap(), 0.25);
    assert_eq!(sg["definite"], true);
    assert_eq!(env["outputs"]["hurwitz"], true);
}

#[test]
fn strong_coupling_is_reported_inapplicable() {
    let dir = TempDir::new().unwrap();
    let strong = 1.5f64.sqrt();
    let cfg = write_config(
        &dir,
        "strong.json",
        &json!({
            "systems": {"s": {"K": 1, "M": 1, "F": 1, "N": strong}},
            "compose": {"plant": "s", "controller": "s"}
        }),
    );
    let o = lsh(&["compose", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(code(&o), 2);
    let env: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(env["outputs"]["small_gain"]["definite"], false);
    assert!(env["diagnostics"][0].as_str().unwrap().starts_with("K not positive definite"));
}

#[test]
fn composed_system_round_trips() {
    let dir = TempDir::new().unwrap();
    let mut cfg = unit_config();
    cfg["systems"]["ctrl"] = json!({"K": [[2.0, 0.3], [0.3, 1.0]], "M": [[1.0, 0.1], [0.1, 0.7]], "F": [[0.9, 0.0], [0.0, 0.4]], "N": [[0.3, -0.2]]});
    cfg["systems"]["plant2"] = json!({"K": [[1.5, 0.0], [0.0, 1.0]], "M": [[1.0, 0.0], [0.0, 2.0]], "F": [[0.5, 0.1], [0.1, 0.5]], "N": [[0.25, 0.5]]});
    cfg["compose"] = json!({"plant": "plant2", "controller": "ctrl"});
    let path = write_config(&dir, "pair.json", &cfg);
    let (_, env) = run_to("compose", &path, &dir.path().join("pair_out"), None);
    let emitted = env["outputs"]["closed_loop"].clone();

    let reload = write_config(&dir, "loop.json", &json!({"systems": {"loop": emitted}}));
    let loaded = lsh::ExperimentConfig::load(&reload).unwrap().primary_system().unwrap().1;
    let original = lsh::ExperimentConfig::load(&path).unwrap();
    let direct = compose(
        &original.named_system("plant2").unwrap(),
        &original.named_system("ctrl").unwrap(),
    )
    .unwrap()
    .system;
    let same = |a: &LshSystem, b: &LshSystem| {
        a.stiffness() == b.stiffness()
            && a.mass() == b.mass()
            && a.damping() == b.damping()
            && a.coupling() == b.coupling()
    };
    assert!(same(&loaded, &direct));
}

fn numeric_payload(env: &Value) -> Value {
    let mut v = env.clone();
    v.as_object_mut().unwrap().remove("wall_time");
    v
}

#[test]
fn stochastic_commands_are_deterministic_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "unit.json", &unit_config());
    for cmd in ["simulate", "filter", "robust"] {
        let (o1, a) = run_to(cmd, &cfg, &dir.path().join(format!("{cmd}_a")), Some("1"));
        let (o2, b) = run_to(cmd, &cfg, &dir.path().join(format!("{cmd}_b")), Some("4"));
        assert_eq!(code(&o1), 0, "{}", String::from_utf8_lossy(&o1.stderr));
        assert_eq!(code(&o2), 0);
        assert_eq!(
            serde_json::to_string(&numeric_payload(&a)).unwrap(),
            serde_json::to_string(&numeric_payload(&b)).unwrap(),
            "{cmd}"
        );
        let csv_a = std::fs::read(dir.path().join(format!("{cmd}_a.csv"))).unwrap();
        let csv_b = std::fs::read(dir.path().join(format!("{cmd}_b.csv"))).unwrap();
        assert_eq!(csv_a, csv_b, "{cmd} series");
        assert_eq!(a["seed"], 11);
    }
    let (_, other_seed) = {
        let out = dir.path().join("sim_c");
        let o = lsh(
            &["simulate", "--config", cfg.to_str().unwrap(), "--seed", "12", "--out", out.to_str().unwrap()],
            None,
        );
        (o, envelope(&out.with_extension("json")))
    };
    let (_, base) = run_to("simulate", &cfg, &dir.path().join("sim_d"), None);
    assert_ne!(other_seed["outputs"], base["outputs"]);
}

#[test]
fn series_go_to_csv_and_config_output_path_is_honoured() {
    let dir = TempDir::new().unwrap();
    let mut cfg = unit_config();
    let target = dir.path().join("from_config.json");
    cfg["output"] = json!({"format": "json", "path": target.to_str().unwrap()});
    cfg["simulation"]["seed"] = json!(3);
    let path = write_config(&dir, "c.json", &cfg);
    let o = lsh(&["filter", "--config", path.to_str().unwrap()], None);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
    let env = envelope(&target);
    assert_eq!(env["command"], "filter");
    assert_eq!(env["seed"], 3);
    let csv = std::fs::read_to_string(dir.path().join("from_config.csv")).unwrap();
    assert!(csv.starts_with("t,trace_P,mean_sq_error,se_sq_error\n"));

    cfg["output"] = json!({"format": "csv"});
    let path = write_config(&dir, "d.json", &cfg);
    let o = lsh(&["simulate", "--config", path.to_str().unwrap()], None);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("t,mean_norm_sq,"));
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        lsh::ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 3);
    let out = lsh(&["compose", "--config", dir.join("loop.json").to_str().unwrap()], None);
    assert_eq!(code(&out), 0);
}

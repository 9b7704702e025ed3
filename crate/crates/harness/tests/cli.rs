use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;
use zoac_core::checkpoint::Checkpoint;

fn zoac(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zoac"))
        .args(args)
        .env("ZOAC_OUTPUT_ROOT", root)
        .current_dir(root)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn tune_toy(root: &Path, output: &str, extra: &[&str]) -> Output {
    let out = format!("output={output}");
    let mut args = vec![
        "tune",
        "--task",
        "toy-quadratic",
        "--quiet",
        "--set",
        "zoac.iterations=40",
        "--set",
        "seeds=[1, 2]",
        "--set",
        &out,
    ];
    args.extend_from_slice(extra);
    zoac(root, &args)
}

#[test]
fn tune_writes_complete_logs() {
    let tmp = TempDir::new().unwrap();
    let o = tune_toy(tmp.path(), "toy", &["--set", "zoac.eval_every=5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = tmp.path().join("toy");
    assert!(out.join("config.toml").is_file());
    assert!(out.join("aggregate.csv").is_file());
    for seed in [1, 2] {
        let dir = out.join(format!("seed-{seed}"));
        for f in ["curve.csv", "timing.csv", "summary.json", "checkpoint.bin"] {
            assert!(dir.join(f).is_file(), "{f} missing for seed {seed}");
        }
        assert!(!dir.join("failure.txt").exists());

        let mut rdr = csv::Reader::from_path(dir.join("curve.csv")).unwrap();
        let headers = rdr.headers().unwrap().clone();
        assert_eq!(&headers[0], "iteration");
        assert_eq!(&headers[1], "env_steps");
        assert!(headers.iter().any(|h| h == "theta_x0") && headers.iter().any(|h| h == "mapped_x1"));
        assert!(!headers.iter().any(|h| h.contains("wall")));
        let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 40);
        let mut last_steps = 0u64;
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row[0].parse::<usize>().unwrap(), i + 1);
            let steps: u64 = row[1].parse().unwrap();
            assert!(steps > last_steps);
            last_steps = steps;
            assert_eq!(row[4].is_empty(), (i + 1) % 5 != 0);
        }
        let timing = fs::read_to_string(dir.join("timing.csv")).unwrap();
        assert_eq!(timing.lines().count(), 41);

        let ck = Checkpoint::load(&dir.join("checkpoint.bin")).unwrap();
        assert_eq!(ck.task, "toy-quadratic");
        assert_eq!(ck.param_names, ["x0", "x1"]);
        assert!(ck.critic.is_some());
    }
    let agg = fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert_eq!(agg.lines().count(), 1 + 40 / 5);
    // the saved config resolves back to the same experiment
    let again = zoac_harness::ExperimentConfig::load(Some(&out.join("config.toml")), &[]).unwrap();
    assert_eq!(again.zoac.iterations, 40);
    assert_eq!(again.seeds, vec![1, 2]);
}

#[test]
fn repeated_runs_are_bit_identical() {
    let tmp = TempDir::new().unwrap();
    for name in ["a", "b"] {
        let o = tune_toy(tmp.path(), name, &[]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for file in ["seed-1/curve.csv", "seed-2/curve.csv", "aggregate.csv", "seed-1/checkpoint.bin"] {
        let a = fs::read(tmp.path().join("a").join(file)).unwrap();
        let b = fs::read(tmp.path().join("b").join(file)).unwrap();
        assert!(a == b, "{file} differs");
    }
    let a = fs::read(tmp.path().join("a/seed-1/curve.csv")).unwrap();
    let c = fs::read(tmp.path().join("a/seed-2/curve.csv")).unwrap();
    assert!(a != c, "seeds should differ");
}

#[test]
fn es_method_runs() {
    let tmp = TempDir::new().unwrap();
    let o = tune_toy(tmp.path(), "es", &["--set", "method=es", "--set", "es.iterations=10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("es/seed-1/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["method"], "es");
    assert_eq!(summary["iterations"], 10);
    let ck = Checkpoint::load(&tmp.path().join("es/seed-1/checkpoint.bin")).unwrap();
    assert!(ck.critic.is_none());
}

#[test]
fn config_file_then_overrides() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("exp.toml");
    fs::write(
        &cfg,
        "task = \"toy-quadratic\"\noutput = \"from-file\"\nseeds = [3]\n[zoac]\niterations = 7\nsigma = 0.2\n",
    )
    .unwrap();
    let o = zoac(tmp.path(), &["tune", "-c", cfg.to_str().unwrap(), "--set", "zoac.iterations=4", "--quiet"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let saved = fs::read_to_string(tmp.path().join("from-file/config.toml")).unwrap();
    let t: toml::Table = saved.parse().unwrap();
    assert_eq!(t["zoac"]["iterations"].as_integer(), Some(4));
    assert_eq!(t["zoac"]["sigma"].as_float(), Some(0.2));
    // untouched keys come from the task defaults
    assert_eq!(t["zoac"]["workers"].as_integer(), Some(4));
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let cases: [(&[&str], &str); 5] = [
        (&["tune", "--task", "nope"], "unknown task"),
        (&["tune", "--task", "toy-quadratic", "--set", "zoac.sigma=0"], "sigma"),
        (&["tune", "--task", "toy-quadratic", "--set", "zoac.sigma=\"x\""], "zoac.sigma"),
        (&["tune", "--task", "toy-quadratic", "--set", "zoac.bogus=1"], "zoac"),
        (&["tune", "--task", "acc-pid", "--set", "seeds=[]"], "seeds"),
    ];
    for (args, needle) in cases {
        let o = zoac(tmp.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        assert!(stderr(&o).contains(needle), "{args:?}: {}", stderr(&o));
    }
    let o = zoac(tmp.path(), &["tune"]);
    assert_eq!(o.status.code(), Some(2));
    let o = zoac(tmp.path(), &["evaluate", "--checkpoint", "missing.bin"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("does not exist"));
    let o = zoac(tmp.path(), &["evaluate", "--task", "acc-pid", "--theta", "1,2,3"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = zoac(tmp.path(), &["evaluate", "--task", "acc-pid", "--theta", "1,2,3,11"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn evaluate_landscape_and_compare() {
    let tmp = TempDir::new().unwrap();
    assert!(tune_toy(tmp.path(), "z", &[]).status.success());
    assert!(tune_toy(tmp.path(), "e", &["--set", "method=es"]).status.success());

    let ck = tmp.path().join("z/seed-1/checkpoint.bin");
    let traj = tmp.path().join("traj.csv");
    let report = tmp.path().join("eval.json");
    let o = zoac(
        tmp.path(),
        &[
            "evaluate",
            "--checkpoint",
            ck.to_str().unwrap(),
            "--episodes",
            "3",
            "--trajectory",
            traj.to_str().unwrap(),
            "--out",
            report.to_str().unwrap(),
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["task"], "toy-quadratic");
    assert_eq!(v["report"]["episode_costs"].as_array().unwrap().len(), 3);
    let t = fs::read_to_string(&traj).unwrap();
    assert!(t.starts_with("episode,step,cost,terminated,action_0,action_1"));
    assert_eq!(t.lines().count(), 4);

    let land = tmp.path().join("land.csv");
    let o = zoac(
        tmp.path(),
        &["landscape", "--task", "toy-quadratic", "--dim", "x0", "--points", "5", "--out", land.to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_path(&land).unwrap();
    let costs: Vec<f64> = rdr.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
    assert_eq!(costs.len(), 5);
    // x0 in {-1, -0.5, 0, 0.5, 1} with x1 = 0: (x0 - 0.3)^2 + 0.04
    for (c, x) in costs.iter().zip([-1.0, -0.5, 0.0, 0.5, 1.0]) {
        assert!((c - ((x - 0.3f64).powi(2) + 0.04)).abs() < 1e-12);
    }
    let o = zoac(tmp.path(), &["landscape", "--task", "toy-quadratic", "--dim", "nope"]);
    assert_eq!(o.status.code(), Some(2));

    let cmp = tmp.path().join("cmp.csv");
    let zdir = format!("zoac={}", tmp.path().join("z").display());
    let edir = format!("es={}", tmp.path().join("e").display());
    let o = zoac(
        tmp.path(),
        &["compare", "--run", &zdir, "--run", &edir, "--bootstrap", "200", "--out", cmp.to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = fs::read_to_string(&cmp).unwrap();
    assert!(rows.lines().next().unwrap().starts_with("method,env_steps,median"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(cmp.with_extension("json")).unwrap()).unwrap();
    assert_eq!(summary["methods"], serde_json::json!(["zoac", "es"]));
    let o = zoac(tmp.path(), &["compare", "--run", "broken"]);
    assert_eq!(o.status.code(), Some(2));
}

use std::path::Path;
use std::process::{Command, Output};

fn pcox(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcox")).args(args).current_dir(cwd).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_lists_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let out = pcox(&["--help"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["simulate", "fit", "predict", "diagnose", "study", "bench-samplers"] {
        assert!(text.contains(cmd), "{cmd}");
        assert!(pcox(&[cmd, "--help"], dir.path()).status.success(), "{cmd} --help");
    }
}

#[test]
fn simulate_fit_predict_diagnose_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = pcox(&["simulate", "--setting", "2", "--n", "25", "--seed", "7", "--out", "d"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["events.csv", "covariates.csv", "truth.json"] {
        assert!(d.join("d").join(f).exists(), "{f}");
    }
    let o = pcox(
        &[
            "fit", "--events", "d/events.csv", "--covars", "d/covariates.csv", "--n-iter", "250", "--burn-in", "100",
            "--grid-cells", "15", "--out", "chain",
        ],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["gamma.csv", "beta.csv", "z.csv", "D.csv", "g1.csv", "g2.csv", "hyper.csv", "meta.json", "summary.json", "curves.csv"] {
        assert!(d.join("chain").join(f).exists(), "{f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("chain/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n_draws"], 150);
    // The stored chain loads back through the library.
    let chains = pcox::engine::read_chains(&d.join("chain")).unwrap();
    assert_eq!(chains[0].n_draws(), 150);

    let o = pcox(&["predict", "--chain", "chain", "--x", "0.5", "--window", "0,60", "--out", "p"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let pred: pcox::predict::PredictiveDistribution =
        serde_json::from_str(&std::fs::read_to_string(d.join("p/pred.json")).unwrap()).unwrap();
    let total: f64 = pred.pmf.iter().map(|e| e.prob).sum();
    assert!(total <= 1.0 + 1e-12 && total > 0.999);
    assert!((0.0..=1.0).contains(&pred.disease_free.probability));

    let o = pcox(&["diagnose", "--chain", "chain", "--out", "diag"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(std::fs::read_dir(d.join("diag")).unwrap().count() > 0);
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(pcox(&["simulate", "--setting", "2", "--n", "10", "--out", "d"], d).status.success());
    let o = pcox(
        &["fit", "--events", "d/events.csv", "--covars", "d/covariates.csv", "--n-iter", "10", "--burn-in", "10", "--out", "c"],
        d,
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("burn_in < n_iter violated"));

    std::fs::write(d.join("bad.json"), r#"{"n_iter": 50, "bogus": 1}"#).unwrap();
    let o = pcox(
        &["fit", "--events", "d/events.csv", "--covars", "d/covariates.csv", "--config", "bad.json", "--out", "c"],
        d,
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bogus"));

    let o = pcox(&["fit", "--events", "missing.csv", "--covars", "d/covariates.csv", "--out", "c"], d);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing.csv"));

    let o = pcox(&["predict", "--chain", "nowhere", "--x", "1", "--window", "0,1", "--out", "p"], d);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nowhere"));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("file"), "x").unwrap();
    let o = pcox(&["simulate", "--setting", "1", "--n", "5", "--out", "file/sub"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn library_entry_point_matches_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s").to_string_lossy().into_owned();
    assert_eq!(pcox::cli::run(["pcox", "simulate", "--setting", "3", "--n", "5", "--out", &out]), 0);
    assert_eq!(pcox::cli::run(["pcox", "simulate", "--setting", "3", "--n", "0", "--out", &out]), 1);
}

use std::path::Path;
use std::process::{Command, Output};

use roguewalk::ensemble::{run_ensemble, Execution, RunConfig, StepsRule};
use roguewalk::io;

fn roguewalk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roguewalk"))
        .args(args)
        .env_remove("ROGUEWALK_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn evolve_writes_full_record_and_events() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ev");
    let o = roguewalk(&["evolve", "--sites", "40", "--disorder", "0.1", "--steps", "300", "--seed", "7", "--out-dir", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let record = io::read_record_csv(&out.join("record.csv")).unwrap();
    assert_eq!((record.sites(), record.steps()), (40, 300));
    let text = std::fs::read_to_string(out.join("record.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 40 * 300);
    let events = io::read_events_csv(&out.join("events.csv")).unwrap();
    let summary = json(&out.join("summary.json"));
    assert_eq!(summary["event_count"].as_u64().unwrap() as usize, events.len());
    let p_th = summary["threshold"]["p_th"].as_f64().unwrap();
    assert!(events.iter().all(|e| e.p > 2.0 * p_th && e.p_th == p_th));
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["config"]["seed"], 7);
    assert_eq!(manifest["assumptions"]["excludes_initial_state"], true);
    assert!(manifest["outputs"].as_array().unwrap().iter().any(|v| v == "record.csv"));
}

#[test]
fn config_errors_exit_with_2() {
    let o = roguewalk(&["evolve", "--disorder", "-0.1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--disorder") && stderr(&o).contains("W >= 0"), "{}", stderr(&o));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "sites = 10\nwidth = 3\n").unwrap();
    let o = roguewalk(&["ensemble", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("width"), "{}", stderr(&o));

    let o = roguewalk(&["sweep", "--sizes", "10,20"]);
    assert_eq!(o.status.code(), Some(2));
    let o = roguewalk(&["fit"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = roguewalk(&["fit", "--block-maxima", p(&dir.path().join("missing.csv")), "--out-dir", p(dir.path())]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn ensemble_outputs_match_the_library_and_refit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("en");
    let o = roguewalk(&[
        "ensemble", "--sites", "30", "--steps", "200", "--realizations", "12", "--disorder", "0.2", "--seed", "5",
        "--dump-records", "2", "--events", "--out-dir", p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let mut cfg = RunConfig::new(30, 0.2, 12, 5).with_steps(StepsRule::Fixed(200));
    cfg.extra_multipliers = vec![2.5, 3.0];
    let res = run_ensemble(&cfg, Execution::default()).unwrap();
    let bm = io::read_block_maxima_csv(&out.join("block_maxima.csv")).unwrap();
    assert_eq!(&bm, res.block_maxima.as_ref().unwrap());
    let hist = io::read_histogram_csv(&out.join("histogram.csv")).unwrap();
    assert_eq!(&hist, res.histogram.as_ref().unwrap());
    let rec = io::read_record_csv(&out.join("record_2.csv")).unwrap();
    assert_eq!(rec.sites(), 30);
    let doc = json(&out.join("ensemble.json"));
    assert_eq!(doc["mean_event_fraction"].as_f64().unwrap(), res.mean_event_fraction);

    let fit_dir = dir.path().join("fit");
    let o = roguewalk(&["fit", "--block-maxima", p(&out.join("block_maxima.csv")), "--out-dir", p(&fit_dir)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let fit = json(&fit_dir.join("fit.json"));
    assert_eq!(fit["samples"], 12 * 200);
    let a = fit["mle"]["a"].as_f64().unwrap();
    let beta = fit["mle"]["beta"].as_f64().unwrap();
    assert!((a * beta - 1.0).abs() < 1e-10);
    assert!(fit["least_squares"]["b"].as_f64().unwrap() > 0.0);
    assert!(fit["families"]["best"].is_string());
}

#[test]
fn rerun_from_manifest_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    let o = roguewalk(&[
        "ensemble", "--sites", "24", "--steps", "150", "--realizations", "6", "--disorder", "0.3", "--seed", "11",
        "--workers", "2", "--out-dir", p(&first),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let second = dir.path().join("b");
    let o = roguewalk(&["ensemble", "--config", p(&first.join("manifest.json")), "--workers", "1", "--out-dir", p(&second)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["histogram.csv", "scaled_histogram.csv", "block_maxima.csv", "summaries.csv"] {
        assert_eq!(std::fs::read(first.join(name)).unwrap(), std::fs::read(second.join(name)).unwrap(), "{name}");
    }
    let strip = |mut v: serde_json::Value| {
        v.as_object_mut().unwrap().remove("manifest");
        v
    };
    assert_eq!(strip(json(&first.join("ensemble.json"))), strip(json(&second.join("ensemble.json"))));
}

#[test]
fn size_sweep_reports_scaling_fits() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sw");
    let o = roguewalk(&[
        "sweep", "--sizes", "16,32,64", "--realizations", "6", "--w-grid", "0.002:1:12", "--epsilon", "1e-4",
        "--out-dir", p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc = json(&out.join("sweep.json"));
    let sizes = doc["sizes"]["sizes"].as_array().unwrap();
    assert_eq!(sizes.len(), 3);
    assert!(sizes.iter().all(|s| s["w_max"]["w_max"].as_f64().is_some()));
    assert!(doc["sizes"]["w_max_fit"]["exponent"].as_f64().is_some());
    assert_eq!(doc["manifest"]["assumptions"]["epsilon"], 1e-4);
    let curves = std::fs::read_to_string(out.join("curves.csv")).unwrap();
    assert!(curves.starts_with("sites,steps,w,multiplier,fraction,stderr,mean_events,mean_clusters,fraction_m2.5,fraction_m3.0\n"));
    assert_eq!(curves.lines().count(), 1 + 3 * 12);

    // refit the stored curves at another level
    let refit = dir.path().join("refit");
    let o = roguewalk(&["fit", "--sweep", p(&out.join("sweep.json")), "--epsilon", "1e-3", "--out-dir", p(&refit)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc2 = json(&refit.join("fit.json"));
    assert_eq!(doc2["sizes"]["sizes"][0]["curve"], doc["sizes"]["sizes"][0]["curve"]);
    assert_eq!(doc2["sizes"]["config"]["epsilon"], 1e-3);
}

#[test]
fn single_curve_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("one");
    let o = roguewalk(&["sweep", "--sites", "20", "--realizations", "3", "--w-grid", "0.01:1:6", "--out-dir", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc = json(&out.join("sweep.json"));
    assert_eq!(doc["single"]["curve"]["points"].as_array().unwrap().len(), 6);
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_roguewalk"))
        .args(["evolve", "--sites", "8", "--steps", "10"])
        .env("ROGUEWALK_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn selfcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = roguewalk(&["selfcheck", "--out-dir", p(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().all(|l| l.starts_with("PASS")));
    assert!(dir.path().join("selfcheck.json").exists());
}

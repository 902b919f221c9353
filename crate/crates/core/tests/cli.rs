use std::path::Path;

use carfollow_sr::cli::{main_with_args, RunManifest};
use carfollow_sr::search::SearchReport;

fn cfsr(out: &Path, args: &[&str]) -> i32 {
    let mut v = vec!["cfsr", "--out", out.to_str().unwrap()];
    v.extend_from_slice(args);
    main_with_args(v)
}

#[test]
fn generate_search_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_eq!(cfsr(out, &["generate", "--model", "krauss", "--seed", "7", "--pairs", "100"]), 0);
    let csv = out.join("krauss.csv");
    let manifest = RunManifest::read(&out.join("generate.manifest.json")).unwrap();
    assert!(manifest.outputs.contains(&csv));
    assert_eq!(manifest.seed, 7);

    let data = csv.to_str().unwrap();
    let search = [
        "search", "--data", data, "--method", "vis-dsr-gp", "--sets", "v_f;ds,v_l,v_f", "--epochs", "2", "--batch", "30",
    ];
    assert_eq!(cfsr(out, &search), 0);
    let read = |p: &Path| -> SearchReport { serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap() };
    let first = read(&out.join("search_report.json"));
    assert_eq!(first.trace.len(), 2);
    assert!(first.recovered.is_some());

    // the manifest alone repeats the run
    let rerun_dir = tempfile::tempdir().unwrap();
    let m = rerun_dir.path().join("m.json");
    std::fs::copy(out.join("search.manifest.json"), &m).unwrap();
    assert_eq!(cfsr(rerun_dir.path(), &["rerun", m.to_str().unwrap()]), 0);
    let second = read(&rerun_dir.path().join("search_report.json"));
    assert_eq!(first.canonical_json(), second.canonical_json());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_eq!(cfsr(out, &["generate", "--model", "idm"]), 2);
    assert_eq!(cfsr(out, &["frobnicate"]), 2);
    assert_eq!(cfsr(out, &["generate", "--model", "gm", "--noise", "0.05", "--pairs", "50", "--name", "gm5"]), 0);
    let data = out.join("gm5.csv");
    let data = data.to_str().unwrap();
    assert_eq!(cfsr(out, &["search", "--data", data, "--pool", "missing.json", "--method", "dsr"]), 2);
    assert_eq!(cfsr(out, &["search", "--data", data, "--method", "vis-dsr-gp"]), 2);
    assert_eq!(cfsr(out, &["search", "--data", "absent.csv", "--method", "dsr"]), 2);
    assert_eq!(cfsr(out, &["eval", "--data", data, "--expr", "+ v_f * const - v_l v_f"]), 0);
    let eval: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("eval.json")).unwrap()).unwrap();
    let c = eval["constants"]["3"].as_f64().unwrap();
    assert!((c - 0.368).abs() < 0.02, "{c}");
}

#[test]
fn config_file_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cfg = out.join("cfg.json");
    std::fs::write(&cfg, r#"{"generate": {"n_pairs": 40, "horizon": 3}}"#).unwrap();
    assert_eq!(cfsr(out, &["--config", cfg.to_str().unwrap(), "generate", "--horizon", "4"]), 0);
    let m = RunManifest::read(&out.join("generate.manifest.json")).unwrap();
    assert_eq!(m.config.generate.n_pairs, 40);
    assert_eq!(m.config.generate.horizon, 4);
    let rows = std::fs::read_to_string(out.join("krauss.csv")).unwrap().lines().count() - 1;
    assert_eq!(rows, 160);
    std::fs::write(&cfg, r#"{"generate": {"pairs": 40}}"#).unwrap();
    assert_eq!(cfsr(out, &["--config", cfg.to_str().unwrap(), "generate"]), 2);
}

use std::path::Path;
use std::process::Command;

fn pno(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pno")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn write_config(dir: &Path) -> String {
    let cfg = r#"{
        "name": "smoke",
        "benchmark": {"kind": "portfolio", "n_securities": 4, "lambda": 0.5, "n_samples": 20},
        "method": "smoothed_qp",
        "seeds": [0, 1],
        "epochs": 2,
        "hidden": [8],
        "alpha_reg": 0.01
    }"#;
    let path = dir.join("smoke.json");
    std::fs::write(&path, cfg).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn generate_train_evaluate_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = tmp.path().join("run");
    let out_s = out.to_str().unwrap();

    let gen = pno(&["generate", "--config", &cfg, "--out", out_s]);
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));
    assert!(out.join("portfolio_seed0.json").exists());
    assert!(out.join("portfolio_seed1.json").exists());

    let train = pno(&["train", "--config", &cfg, "--out", out_s]);
    assert!(train.status.success(), "{}", String::from_utf8_lossy(&train.stderr));
    let stdout = String::from_utf8_lossy(&train.stdout);
    assert!(stdout.contains("smoothed_qp on portfolio"), "{stdout}");
    for f in ["metrics.jsonl", "report.json", "summary.csv", "model_seed0.json", "model_seed1.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let lines = std::fs::read_to_string(out.join("metrics.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 4);
    for line in lines.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["val_regret"].as_f64().unwrap() >= 0.0);
    }

    let model = out.join("model_seed1.json");
    let eval = pno(&["evaluate", "--config", &cfg, "--seeds", "1", "--model", model.to_str().unwrap()]);
    assert!(eval.status.success(), "{}", String::from_utf8_lossy(&eval.stderr));
    let v: serde_json::Value = serde_json::from_slice(&eval.stdout).unwrap();
    for split in ["train", "validation", "test"] {
        assert!(v[split]["regret"].as_f64().unwrap() >= 0.0);
    }

    let csv = tmp.path().join("all.csv");
    let rep = pno(&["report", out_s, "--out", csv.to_str().unwrap()]);
    assert!(rep.status.success(), "{}", String::from_utf8_lossy(&rep.stderr));
    let text = std::fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn incompatible_method_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.json");
    std::fs::write(
        &path,
        r#"{"name": "bad", "benchmark": {"kind": "portfolio", "lambda": 0.5, "n_samples": 20}, "method": "spo_plus"}"#,
    )
    .unwrap();
    let out = pno(&["train", "--config", path.to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn unknown_config_field_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("typo.json");
    std::fs::write(
        &path,
        r#"{"name": "t", "benchmark": {"kind": "knapsack"}, "method": "mse", "epoch": 3}"#,
    )
    .unwrap();
    let out = pno(&["train", "--config", path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("epoch"));
}

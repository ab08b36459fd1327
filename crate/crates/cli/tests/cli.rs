use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sentrisk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sentrisk"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn error_kind(dir: &Path) -> String {
    let text = std::fs::read_to_string(dir.join("error.json")).expect("error.json written");
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["kind"].as_str().unwrap().to_string()
}

const SMALL: &str = r#"
[paths]
data = "data.csv"
schema = "schema.txt"
out = "out"

[stage1]
mean_trees = 20
scale_trees = 5
iterations = 120
burn_in = 20

[stage2]
n_lambda = 12
lambda_min_ratio = 0.01
folds = 5

[design]
exclude = ["DISTRICT"]
interactions = [["MONSEX", "Gender"]]
"#;

/// Synthetic data plus a fast config in a fresh directory.
fn small_run(n: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let o = sentrisk(&["synth", "--n", n, "--seed", "5", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    (dir, cfg)
}

#[test]
fn usage_errors() {
    assert_eq!(code(&sentrisk(&["--help"])), 0);
    assert_eq!(code(&sentrisk(&["--version"])), 0);
    assert_eq!(code(&sentrisk(&["no-such-command"])), 2);
    assert_eq!(code(&sentrisk(&["flag", "--alpha", "abc"])), 2);
}

#[test]
fn config_and_data_failures_have_distinct_statuses() {
    let (dir, cfg) = small_run("200");
    let cfg_s = cfg.to_str().unwrap();
    let out = dir.path().join("out");

    let o = sentrisk(&["train-stage1", "--config", dir.path().join("none.toml").to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    let rec: serde_json::Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
    assert_eq!(rec["kind"], "config");

    let o = sentrisk(&["train-stage1", "--config", cfg_s, "--alpha", "1.5"]);
    assert_eq!(code(&o), 3);
    assert_eq!(error_kind(&out), "config");

    let o = sentrisk(&["flag", "--config", cfg_s]);
    assert_eq!(code(&o), 6, "flagging before stage one is an io failure");

    std::fs::rename(dir.path().join("schema.txt"), dir.path().join("schema.bak")).unwrap();
    assert_eq!(code(&sentrisk(&["train-stage1", "--config", cfg_s])), 3);
    std::fs::rename(dir.path().join("schema.bak"), dir.path().join("schema.txt")).unwrap();

    let data = dir.path().join("data.csv");
    let text = std::fs::read_to_string(&data).unwrap();
    std::fs::write(&data, text.replacen("XFOLSOR", "XFOLSOR_RENAMED", 1)).unwrap();
    let o = sentrisk(&["train-stage1", "--config", cfg_s]);
    assert_eq!(code(&o), 4);
    assert_eq!(error_kind(&out), "data");
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn full_pipeline_with_reruns() {
    let (dir, cfg) = small_run("800");
    let cfg_s = cfg.to_str().unwrap();
    let out = dir.path().join("out");
    for stage in ["train-stage1", "flag", "train-stage2", "evaluate"] {
        let o = sentrisk(&[stage, "--config", cfg_s]);
        assert_eq!(code(&o), 0, "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(!out.join("error.json").exists());
    for f in [
        "stage1/model.json",
        "stage1/summary.csv",
        "stage1/trace_f.csv",
        "stage1/trace_s.csv",
        "stage1/r2.csv",
        "flag/flags.csv",
        "flag/flag_rate_by_bin.csv",
        "stage2/model.txt",
        "stage2/coefficients.csv",
        "stage2/cv_curve.csv",
        "eval/roc.csv",
        "eval/roc.svg",
        "eval/risk_bins.csv",
        "eval/risk_bins.svg",
        "eval/auc_summary.csv",
        "eval/geweke.csv",
        "eval/r2.csv",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }

    // retained draws: (120 - 20) / thin
    assert_eq!(read(&out.join("stage1/trace_f.csv")).lines().count(), 101);
    let coefs = read(&out.join("stage2/coefficients.csv"));
    assert!(coefs.starts_with("variable,nonzero_coefficients,min_coefficient,max_coefficient\n"));
    assert!(!coefs.contains("DISTRICT"), "excluded column reported");
    assert!(coefs.contains("MONSEX*Gender"));
    assert_eq!(read(&out.join("eval/risk_bins.csv")).lines().count(), 6);
    let summary = read(&out.join("eval/auc_summary.csv"));
    assert!(summary.starts_with("split,auc,band\ntrain,"));

    let m: serde_json::Value = serde_json::from_str(&read(&out.join("stage1/manifest.json"))).unwrap();
    assert_eq!(m["seeds"]["mcmc"], 2);
    assert_eq!(m["command"], "train-stage1");
    assert_eq!(m["outputs"].as_object().unwrap().len(), 5);
    let summary_key = out.join("stage1/summary.csv").display().to_string();
    let digest = m["outputs"][&summary_key].as_str().unwrap().to_string();

    let first = read(&out.join("stage1/summary.csv"));
    assert_eq!(code(&sentrisk(&["train-stage1", "--config", cfg_s])), 0);
    assert_eq!(read(&out.join("stage1/summary.csv")), first, "rerun changed the summary");
    let m: serde_json::Value = serde_json::from_str(&read(&out.join("stage1/manifest.json"))).unwrap();
    assert_eq!(m["outputs"][&summary_key], digest.as_str());

    assert_eq!(code(&sentrisk(&["train-stage1", "--config", cfg_s, "--seed.mcmc", "99"])), 0);
    assert_ne!(read(&out.join("stage1/summary.csv")), first);

    let flagged = |alpha: &str| -> Vec<bool> {
        assert_eq!(code(&sentrisk(&["flag", "--config", cfg_s, "--alpha", alpha])), 0);
        read(&out.join("flag/flags.csv"))
            .lines()
            .skip(1)
            .map(|l| l.ends_with(",1"))
            .collect()
    };
    let low = flagged("0.05");
    let high = flagged("0.25");
    assert_eq!(low.len(), high.len());
    assert!(low.iter().zip(&high).all(|(&a, &b)| !a || b));
    assert!(high.iter().filter(|&&b| b).count() > low.iter().filter(|&&b| b).count());
}

#[test]
fn stage_two_accepts_external_flags() {
    let (dir, cfg) = small_run("400");
    let flags = dir.path().join("mine.csv");
    let mut text = String::from("row_id,split,label\n");
    for id in 1..=400u64 {
        let split = if id % 5 == 0 { "test" } else { "train" };
        text.push_str(&format!("{id},{split},{}\n", u8::from(id % 3 == 0)));
    }
    std::fs::write(&flags, &text).unwrap();
    let cfg_text = read(&cfg).replace("out = \"out\"", "out = \"out\"\nflags = \"mine.csv\"");
    std::fs::write(&cfg, cfg_text).unwrap();
    let o = sentrisk(&["train-stage2", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("out/stage2/manifest.json"))).unwrap();
    assert_eq!(m["details"]["rows_train"], 320);
    assert_eq!(m["details"]["rows_test"], 80);
}

#[test]
fn synth_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = sentrisk(&["synth", "--kind", "two-region", "--n", "300", "--seed", "8", "--out", d.path().to_str().unwrap()]);
        assert_eq!(code(&o), 0);
    }
    for f in ["data.csv", "truth.csv", "schema.txt", "config.toml"] {
        assert_eq!(read(&a.path().join(f)), read(&b.path().join(f)), "{f}");
    }
    let header = read(&a.path().join("data.csv")).lines().next().unwrap().to_string();
    assert!(header.starts_with("SENTTOT0,X1,"));
    assert!(!header.contains("f0"), "truth leaked into the data file");
}

use std::path::Path;
use std::process::{Command, Output};

fn glnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glnn")).args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: &str = "[model]\nhidden_size = 12\nn_hidden_layers = 2\n[train]\nepochs = 3\nbatch_size = 200\n";

fn setup(dir: &Path, extra: &str) -> std::path::PathBuf {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, format!("{SMALL}{extra}")).unwrap();
    cfg
}

#[test]
fn default_generate_writes_full_sized_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dho.csv");
    let o = glnn(&["generate", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("wrote 8000 pairs"), "{stdout}");
    assert!(stdout.contains("non-increasing along every trajectory: true"));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 8001);

    let cfg = dir.path().join("dp.toml");
    std::fs::write(&cfg, "[system]\nsystem = \"dp\"\n").unwrap();
    let o = glnn(&["generate", "--config", p(&cfg), "--out", p(&dir.path().join("dp.csv"))]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("wrote 10000 pairs"));
}

#[test]
fn train_evaluate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "");
    let data = dir.path().join("d.csv");
    let model = dir.path().join("m.json");
    let curves = dir.path().join("c.csv");
    assert!(glnn(&["generate", "--config", p(&cfg), "--preset", "smoke", "--out", p(&data)]).status.success());
    let o = glnn(&["train", "--config", p(&cfg), "--preset", "smoke", "--data", p(&data), "--out", p(&model)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("m.json.metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["model_kind"], "glnn");
    assert_eq!(metrics["train_loss"].as_array().unwrap().len(), 3);

    // the effective config reproduces the run
    let again = dir.path().join("m2.json");
    let eff = dir.path().join("m.json.config.toml");
    assert!(glnn(&["train", "--config", p(&eff), "--data", p(&data), "--out", p(&again)]).status.success());
    assert_eq!(std::fs::read(&model).unwrap(), std::fs::read(&again).unwrap());

    let o = glnn(&["evaluate", "--config", p(&cfg), "--model", p(&model), "--out", p(&curves)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&curves).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,truth_q0,pred_q0,truth_E,pred_E");
    assert_eq!(text.lines().count(), 1 + 1001);
    let first = std::fs::read(&curves).unwrap();
    assert!(glnn(&["evaluate", "--config", p(&cfg), "--model", p(&model), "--out", p(&curves)]).status.success());
    assert_eq!(first, std::fs::read(&curves).unwrap());
    assert!(dir.path().join("c.csv.summary.json").exists());

    // a one-degree-of-freedom model cannot be evaluated on the pendulum
    let dp = setup(dir.path(), "[system]\nsystem = \"dp\"\n");
    let o = glnn(&["evaluate", "--config", p(&dp), "--model", p(&model), "--out", p(&curves)]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn baseline_metrics_share_the_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("b.toml");
    std::fs::write(&cfg, SMALL.replacen("[model]\n", "[model]\nkind = \"baseline\"\n", 1)).unwrap();
    let data = dir.path().join("d.csv");
    let model = dir.path().join("b.json");
    assert!(glnn(&["generate", "--preset", "smoke", "--out", p(&data)]).status.success());
    let o = glnn(&["train", "--config", p(&cfg), "--preset", "smoke", "--data", p(&data), "--out", p(&model)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("b.json.metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["model_kind"], "baseline");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[datagen]\ninit_low = 1.0\ninit_high = -1.0\n").unwrap();
    let o = glnn(&["generate", "--config", p(&bad), "--out", p(&dir.path().join("x.csv"))]);
    assert_eq!(o.status.code(), Some(1));

    let o = glnn(&["train", "--data", p(&dir.path().join("missing.csv")), "--out", p(&dir.path().join("m.json"))]);
    assert_eq!(o.status.code(), Some(2));

    let o = glnn(&["generate", "--config", p(&dir.path().join("nope.toml")), "--out", p(&dir.path().join("x.csv"))]);
    assert_eq!(o.status.code(), Some(2));

    let o = glnn(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
}

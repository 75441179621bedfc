use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fusent(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fusent"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run fusent")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_SPEC: &str = r#"
seed = 3
counts = [24, 24, 24, 24, 24, 24]
duration_secs = 0.25
"#;

const SMALL_CONFIG: &str = r#"
seed = 5
baselines = ["text", "early"]

[oversample]
targets = [30, 30, 40, 30, 30, 35]

[leaf.gbdt]
n_rounds = 5

[video.gbdt]
n_rounds = 5

[video.stacking]
mode = "out_of_fold"
folds = 3

[train]
epochs = 4
batch_size = 32
"#;

#[test]
fn synth_then_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("spec.toml"), SMALL_SPEC).unwrap();
    fs::write(dir.path().join("config.toml"), SMALL_CONFIG).unwrap();
    let o = fusent(&["synth", "--spec", "spec.toml", "--out", "corpus"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("corpus/manifest.csv").exists());
    assert_eq!(fs::read_dir(dir.path().join("corpus/audio")).unwrap().count(), 144);

    let o = fusent(&["run", "--config", "config.toml"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.starts_with("| Model | Accuracy |"), "{table}");
    for name in ["fused", "text", "early"] {
        assert!(table.contains(&format!("| {name} |")), "{table}");
        let d = dir.path().join("run/models").join(name);
        for f in ["ckpt_best.bin", "report.json", "history.csv", "loss.svg", "confusion.csv"] {
            assert!(d.join(f).exists(), "{name}/{f}");
        }
    }
    assert!(dir.path().join("run/config.resolved.toml").exists());
    assert_eq!(fs::read_to_string(dir.path().join("run/comparison.md")).unwrap(), table);

    let o = fusent(&["evaluate", "--config", "config.toml", "--model", "text"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("text: accuracy"));

    let o = fusent(
        &["compare", "--runs", "run/models/text", "run/models/fused", "--out", "cmp.md"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let cmp = fs::read_to_string(dir.path().join("cmp.md")).unwrap();
    assert_eq!(cmp.lines().count(), 4);
}

#[test]
fn stages_run_individually() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("spec.toml"), SMALL_SPEC).unwrap();
    fs::write(dir.path().join("config.toml"), SMALL_CONFIG).unwrap();
    assert!(fusent(&["synth", "--spec", "spec.toml", "--out", "corpus"], dir.path()).status.success());
    for args in [
        &["prepare", "--config", "config.toml"][..],
        &["featurize", "text", "--config", "config.toml"],
        &["train", "--config", "config.toml", "--model", "text"],
        &["evaluate", "--config", "config.toml", "--model", "text"],
    ] {
        let o = fusent(args, dir.path());
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    }
    assert!(dir.path().join("run/models/text/report.json").exists());
    let o = fusent(&["baseline", "--which", "fused", "--config", "config.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn exit_codes_follow_error_category() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();

    let o = fusent(&["prepare", "--config", "missing.toml"], p);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("fusent: error: "));

    fs::write(p.join("bad.toml"), "[train]\nepochz = 3\n").unwrap();
    let o = fusent(&["prepare", "--config", "bad.toml"], p);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("epochz"), "{}", stderr(&o));

    fs::write(p.join("ok.toml"), "seed = 1\n").unwrap();
    let o = fusent(&["prepare", "--config", "ok.toml"], p);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert_eq!(stderr(&o).lines().filter(|l| l.starts_with("fusent: error")).count(), 1);

    let o = fusent(&["train", "--config", "ok.toml", "--model", "nope"], p);
    assert_eq!(o.status.code(), Some(1));
    let o = fusent(&["frobnicate"], p);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_documents_config_keys() {
    let dir = tempfile::tempdir().unwrap();
    let o = fusent(&["--help"], dir.path());
    assert!(o.status.success());
    let help = String::from_utf8(o.stdout).unwrap();
    for key in ["[oversample]", "targets", "[leaf.gbdt]", "early_stop_patience", "[video.stacking]", "work_dir"] {
        assert!(help.contains(key), "missing {key}");
    }
    let o = fusent(&["defaults"], dir.path());
    assert!(o.status.success());
    assert!(String::from_utf8(o.stdout).unwrap().contains("label_map = [0, 1, 1, 2, 2, 3, 4, 5]"));
}

#[test]
fn shipped_synthetic_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/synthetic.toml");
    let cfg = fusent::config::RunConfig::load(&path).unwrap();
    assert_eq!(
        cfg.oversample.targets.as_slice(),
        fusent::resample::TargetCounts::default().scaled(0.2).as_slice()
    );
}

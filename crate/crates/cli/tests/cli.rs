use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn isac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isac"))
        .args(args)
        .env_remove("ISAC_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn toy_train(out: &Path, extra: &[&str]) -> Output {
    let conf = configs().join("toy.conf");
    let dir = format!("output_dir={}", out.display());
    let mut args = vec!["train", "-c", conf.to_str().unwrap(), "--set", &dir];
    for e in extra {
        args.push("--set");
        args.push(e);
    }
    isac(&args)
}

#[test]
fn toy_training_writes_history_and_checkpoints() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let o = toy_train(&out, &["checkpoint_every=5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 21, "header plus one row per iteration");
    assert!(history.lines().next().unwrap().starts_with("iteration,"));
    for it in [5, 10, 15, 20] {
        assert!(out.join(format!("checkpoint_{it:04}.txt")).is_file(), "checkpoint {it}");
    }
    assert!(!out.join("checkpoint_0004.txt").exists());
    for f in ["model.txt", "split.tsv", "timing.txt"] {
        assert!(out.join(f).is_file(), "{f}");
    }
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(toy_train(&a, &["iterations=5"]).status.success());
    assert!(toy_train(&b, &["iterations=5"]).status.success());
    for f in ["history.csv", "model.txt", "split.tsv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn baselines_train_and_evaluate() {
    let tmp = TempDir::new().unwrap();
    let conf = configs().join("toy.conf");
    for method in ["gae", "vgae"] {
        let out = tmp.path().join(method);
        let o = toy_train(&out, &[&format!("method={method}"), "baseline_epochs=20"]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert_eq!(fs::read_to_string(out.join("loss.csv")).unwrap().lines().count(), 21);
        let ck = out.join("model.txt");
        let o = isac(&["eval", "accuracy", "-c", conf.to_str().unwrap(), "--checkpoint", ck.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        let text = stdout(&o);
        assert!(text.lines().nth(1).unwrap().contains(&format!(",{method},accuracy,")), "{text}");
    }
}

#[test]
fn missing_dataset_exits_2_without_output() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("never");
    let o = isac(&["train", "--set", "dataset=/nonexistent/edges.txt", "--set", &format!("output_dir={}", out.display())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dataset"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn unknown_and_malformed_keys_exit_2() {
    let o = isac(&["train", "--set", "learning_rate=0.1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("learning_rate"));
    let conf = configs().join("toy.conf");
    let o = isac(&["train", "-c", conf.to_str().unwrap(), "--set", "batch_size=many"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("batch_size"));
}

#[test]
fn help_lists_every_key() {
    for sub in ["train", "eval", "report"] {
        let o = isac(&[sub, "--help"]);
        assert!(o.status.success());
        let text = stdout(&o);
        for key in ["dataset", "expert_fraction", "iterations", "decoder_steps", "snr_db", "trials", "output_dir"] {
            assert!(text.contains(key), "{sub} --help misses {key}");
        }
    }
}

#[test]
fn gradcheck_passes() {
    let o = isac(&["eval", "gradcheck"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 6);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",true")), "{text}");
}

#[test]
fn theorem1_matches_optimum() {
    let conf = configs().join("theorem1.conf");
    let o = isac(&["eval", "theorem1", "-c", conf.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let sup: f64 = stderr(&o)
        .lines()
        .find_map(|l| l.strip_prefix("sup_distance "))
        .expect("sup_distance line")
        .trim()
        .parse()
        .unwrap();
    assert!(sup < 0.05, "sup distance {sup}");
    // five nodes: every unordered pair
    assert_eq!(stdout(&o).lines().count(), 11);
}

#[test]
fn ser_rows_follow_snr_list() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    assert!(toy_train(&out, &["iterations=3"]).status.success());
    let conf = configs().join("toy.conf");
    let ck = out.join("model.txt");
    let o = isac(&[
        "eval", "ser", "-c", conf.to_str().unwrap(), "--checkpoint", ck.to_str().unwrap(), "--set", "snr_db=0,2,4,6",
        "--set", "trials=500",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for method in ["isac", "no-inference"] {
        assert_eq!(text.lines().filter(|l| l.contains(&format!(",{method},ser,"))).count(), 4, "{text}");
    }
}

#[test]
fn incompatible_checkpoint_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    assert!(toy_train(&out, &["iterations=2"]).status.success());
    let conf = configs().join("theorem1.conf");
    let ck = out.join("model.txt");
    let o = isac(&["eval", "theorem1", "-c", conf.to_str().unwrap(), "--checkpoint", ck.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("incompatible checkpoint"), "{}", stderr(&o));
}

#[test]
fn symbols_report_reductions() {
    let conf = configs().join("toy.conf");
    let o = isac(&["eval", "symbols", "-c", conf.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains(",isac,symbol_reduction_vs_gae,"), "{text}");
}

#[test]
fn split_and_ingest_roundtrip() {
    let tmp = TempDir::new().unwrap();
    let raw = tmp.path().join("raw.txt");
    fs::write(&raw, "# comment\n0 1\n1 0\n1 1\n1 2\n2 3\n3 0\n").unwrap();
    let clean = tmp.path().join("clean.tsv");
    let o = isac(&["ingest", "--input", raw.to_str().unwrap(), "--output", clean.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("1 self-loops dropped"), "{}", stderr(&o));
    let out = tmp.path().join("split");
    let o = isac(&[
        "split", "--set", &format!("dataset={}", clean.display()), "--set", "expert_fraction=0.5",
        "--set", &format!("output_dir={}", out.display()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("split.tsv").is_file());
}

#[test]
fn output_dir_env_overrides_config() {
    let tmp = TempDir::new().unwrap();
    let conf = configs().join("toy.conf");
    let o = Command::new(env!("CARGO_BIN_EXE_isac"))
        .args(["split", "-c", conf.to_str().unwrap()])
        .env("ISAC_OUTPUT_DIR", tmp.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tmp.path().join("split.tsv").is_file());
}

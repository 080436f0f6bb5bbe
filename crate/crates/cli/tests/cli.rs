use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/scenario")
}

fn bilevel(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bilevel"))
        .args(args)
        .arg("--root")
        .arg(root)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_report_eval_replay() {
    let root = tempfile::tempdir().unwrap();
    let config = scenario().join("config.json");
    let config = config.to_str().unwrap();

    let out = bilevel(root.path(), &["run", "--config", config, "--seed", "7", "--run-id", "demo"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert_eq!(text.lines().next(), Some("demo"));
    assert!(text.contains("final S = 1.000000"));

    let out = bilevel(root.path(), &["report", "--run", "demo"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[2].contains("1.000000"));

    let expert = scenario().join("expert.rwd");
    let out = bilevel(root.path(), &["eval", "--run", "demo", "--expert-score", expert.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).trim(), "S = 1.000000");

    let replayed = root.path().join("replayed");
    let out = bilevel(
        root.path(),
        &["replay", "--run", "demo", "--iteration", "0", "--out", replayed.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let original = root.path().join("demo/iter_0/frames");
    for name in ["frame_0000.ppm", "frame_0100.ppm", "frames.json"] {
        assert_eq!(
            std::fs::read(original.join(name)).unwrap(),
            std::fs::read(replayed.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn config_errors_exit_1() {
    let root = tempfile::tempdir().unwrap();
    let bad = root.path().join("bad.json");
    std::fs::write(&bad, r#"{"iterations": 0}"#).unwrap();
    let out = bilevel(root.path(), &["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("iterations"));

    let out = bilevel(root.path(), &["report", "--run", "missing"]);
    assert_eq!(out.status.code(), Some(1));

    let out = Command::new(env!("CARGO_BIN_EXE_bilevel"))
        .args(["report", "--run", "x", "--bogus"])
        .output()
        .unwrap();
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn aborted_runs_exit_2() {
    let root = tempfile::tempdir().unwrap();
    let lower = root.path().join("lower");
    std::fs::create_dir_all(&lower).unwrap();
    for (i, reply) in ["no code", "still none", "nothing"].iter().enumerate() {
        std::fs::write(lower.join(format!("reply_{i:04}.txt")), reply).unwrap();
    }
    let text = std::fs::read_to_string(scenario().join("config.json")).unwrap();
    let mut config: serde_json::Value = serde_json::from_str(&text).unwrap();
    let s = scenario();
    config["lower"]["fixture_path"] = lower.to_str().unwrap().into();
    config["upper"]["fixture_path"] = s.join("upper").to_str().unwrap().into();
    config["expert_media"] = s.join("expert_media").to_str().unwrap().into();
    config["expert_score_program"] = serde_json::Value::Null;
    config["max_repair_attempts"] = 2.into();
    let path = root.path().join("cfg.json");
    std::fs::write(&path, config.to_string()).unwrap();
    let out = bilevel(root.path(), &["run", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("aborted"));
}

use std::path::Path;
use std::process::{Command, Output};

fn rede(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rede"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn unknown_subcommand_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&rede(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&rede(dir.path(), &[])), 1);
    assert_eq!(code(&rede(dir.path(), &["--help"])), 0);
}

#[test]
fn gen_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let a = rede(dir.path(), &["gen", "--seed", "1", "--out", "a"]);
    let b = rede(dir.path(), &["gen", "--seed", "1", "--out", "b"]);
    assert_eq!((code(&a), code(&b)), (0, 0));
    let x = std::fs::read(dir.path().join("a/scene_1.json")).unwrap();
    let y = std::fs::read(dir.path().join("b/scene_1.json")).unwrap();
    assert!(!x.is_empty());
    assert_eq!(x, y);
    let c = rede(dir.path(), &["gen", "--seed", "2", "--out", "a"]);
    assert_eq!(code(&c), 0);
    assert_ne!(x, std::fs::read(dir.path().join("a/scene_2.json")).unwrap());
}

#[test]
fn solve_reads_a_generated_scene() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&rede(dir.path(), &["gen", "--seed", "3", "--out", "o"])), 0);
    let out = rede(dir.path(), &["solve", "--scene", "o/scene_3.json", "--out", "o"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("o/solve.json")).unwrap()).unwrap();
    assert!(v.to_string().contains("add"));
}

#[test]
fn perfect_predictions_score_one() {
    let dir = tempfile::tempdir().unwrap();
    let pose = serde_json::json!({"quat": [0.9, 0.1, -0.3, 0.2], "t": [0.05, -0.1, 0.6]});
    let input = serde_json::json!({"samples": [
        {"sample_id": 0, "pred": pose, "truth": pose},
        {"sample_id": 1, "pred": {"quat": [1, 0, 0, 0], "t": [0, 0, 0]}, "truth": {"quat": [1, 0, 0, 0], "t": [0, 0, 0]}}
    ]});
    std::fs::write(dir.path().join("in.json"), input.to_string()).unwrap();
    let out = rede(dir.path(), &["eval", "--input", "in.json", "--out", "o"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("o/eval.json")).unwrap()).unwrap();
    assert_eq!(v["auc_add_s"], 1.0);
    assert_eq!(v["auc_add"], 1.0);
    assert_eq!(v["accuracy_2cm"], 1.0);
    assert_eq!(v["accuracy_10pct"], 1.0);
    assert!(dir.path().join("o/eval.csv").exists());
}

#[test]
fn gradcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = rede(dir.path(), &["gradcheck", "--seed", "7", "--count", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn bad_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), r#"{"lambda": -1.0}"#).unwrap();
    std::fs::write(dir.path().join("typo.json"), r#"{"lamda": 0.01}"#).unwrap();
    assert_eq!(code(&rede(dir.path(), &["gen", "--config", "bad.json"])), 2);
    assert_eq!(code(&rede(dir.path(), &["gen", "--config", "typo.json"])), 2);
    assert_eq!(code(&rede(dir.path(), &["gen", "--config", "missing.json"])), 2);
    assert_eq!(code(&rede(dir.path(), &["gen", "--occlusion", "1.5"])), 2);
}

#[test]
fn thread_cap_must_be_positive() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_rede"))
        .current_dir(dir.path())
        .env("REDE_CORE_THREADS", "0")
        .args(["gen", "--seed", "1"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn train_toy_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"model": {"points": 60}, "training": {"iterations": 20}}"#,
    )
    .unwrap();
    let out = rede(
        dir.path(),
        &["train-toy", "--seed", "4", "--config", "cfg.json", "--out", "o"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let trace = std::fs::read_to_string(dir.path().join("o/train_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 22);
}

#[test]
fn ablate_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"samples_per_cell": 4, "model": {"points": 200}}"#,
    )
    .unwrap();
    for o in ["a", "b"] {
        let out = rede(
            dir.path(),
            &["ablate", "--seed", "5", "--config", "cfg.json", "--out", o],
        );
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["ablation.csv", "curve.csv", "summary.json"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{f} differs");
    }
    let csv = std::fs::read_to_string(dir.path().join("a/ablation.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "sample_id,mode,occlusion,noise,add,add_s,correct_2cm,correct_10pct"
    );
}

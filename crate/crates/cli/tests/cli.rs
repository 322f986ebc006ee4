use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flashover"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn config_echo(out: &Output) -> serde_json::Value {
    // the resolved config is the first JSON document on stdout
    let text = String::from_utf8_lossy(&out.stdout);
    let mut stream = serde_json::Deserializer::from_str(&text).into_iter::<serde_json::Value>();
    stream.next().expect("config echoed").expect("valid json")
}

#[test]
fn simulate_analyze_predict_flashover() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = run(&[
        "simulate",
        "--out",
        s(&data),
        "--seed",
        "2",
        "--frames",
        "240",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let echo = config_echo(&out);
    assert_eq!(echo["command"], "simulate");
    assert_eq!(echo["config"]["seed"], 2);
    let manifest = fs::read_to_string(data.join("manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 240);

    let report = dir.path().join("report.csv");
    let out = run(&["analyze", "--in", s(&data), "--report", s(&report)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(&report).unwrap();
    assert_eq!(csv.lines().count(), 241);

    let alert = dir.path().join("alert.json");
    let out = run(&[
        "predict",
        "--report",
        s(&report),
        "--truth",
        "200",
        "--alert",
        s(&alert),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let a: serde_json::Value = serde_json::from_str(&fs::read_to_string(&alert).unwrap()).unwrap();
    let lead = a["lead_time_sec"].as_f64().unwrap();
    assert!(lead >= 40.0, "lead {lead}");
}

#[test]
fn control_scenario_predicts_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let out = run(&[
        "simulate",
        "--out",
        s(&data),
        "--flashover-at",
        "none",
        "--frames",
        "240",
    ]);
    assert_eq!(code(&out), 0);
    let report = dir.path().join("report.csv");
    assert_eq!(
        code(&run(&["analyze", "--in", s(&data), "--report", s(&report)])),
        0
    );
    let alert = dir.path().join("alert.json");
    let out = run(&["predict", "--report", s(&report), "--alert", s(&alert)]);
    assert_eq!(code(&out), 3);
    assert!(!alert.exists());
}

#[test]
fn train_enhance_probe() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(code(&run(&["simulate", "--out", s(&data)])), 0);
    let ckpt = dir.path().join("model.fgan");
    let out = run(&[
        "train",
        "--data",
        s(&data),
        "--out",
        s(&ckpt),
        "--epochs",
        "1",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(&fs::read(&ckpt).unwrap()[..4], b"FGAN");

    let enhanced = dir.path().join("enhanced");
    let out = run(&[
        "enhance",
        "--ckpt",
        s(&ckpt),
        "--in",
        s(&data),
        "--out",
        s(&enhanced),
        "--split",
        "test",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_dir(&enhanced).unwrap().count(), 10);

    let frame = fs::read_dir(&enhanced)
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let maps = dir.path().join("maps");
    let out = run(&[
        "probe",
        "--ckpt",
        s(&ckpt),
        "--in",
        s(&frame),
        "--layers",
        "enc0,dec5",
        "--out",
        s(&maps),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(maps.join("layer_enc0.ppm").exists() && maps.join("layer_dec5.ppm").exists());

    let out = run(&[
        "probe",
        "--ckpt",
        s(&ckpt),
        "--in",
        s(&frame),
        "--layers",
        "enc9",
        "--out",
        s(&maps),
    ]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("enc0"));
}

#[test]
fn e2e_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out_dir in [&a, &b] {
        let out = run(&["e2e", "--out", s(out_dir), "--seed", "5", "--epochs", "2"]);
        assert!(
            matches!(code(&out), 0 | 3),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for file in ["report.csv", "summary.json", "checkpoint.fgan"] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn bad_invocations_map_to_exit_codes() {
    assert_eq!(code(&run(&["simulate", "--bogus"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing.csv");
    let alert = dir.path().join("alert.json");
    assert_eq!(
        code(&run(&[
            "predict",
            "--report",
            s(&missing),
            "--alert",
            s(&alert)
        ])),
        4
    );
    let out = run(&["simulate", "--out", s(dir.path()), "--fps", "0"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn e2e_control_exits_without_alert() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = run(&[
        "e2e",
        "--out",
        s(&out_dir),
        "--flashover-at",
        "none",
        "--epochs",
        "5",
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!out_dir.join("alert.json").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["exit_code"], 3);
    assert!(summary["alert"].is_null());
    assert_eq!(fs::read_dir(out_dir.join("enhanced")).unwrap().count(), 10);
}

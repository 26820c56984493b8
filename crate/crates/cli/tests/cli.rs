use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pseudobox::io::{read_scenes, update_memory_documents};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pseudobox"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn example_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/example.json")
}

/// A detection file that reproduces every ground-truth box with `u = 1`.
fn gt_detections(scenes: &Path) -> String {
    let mut out = String::new();
    for s in read_scenes(scenes).unwrap() {
        let dets: Vec<String> = s
            .boxes
            .iter()
            .map(|b| {
                let [cx, cy, cz, l, w, h, yaw] = b.to_array();
                format!(
                    r#"{{"cx":{cx},"cy":{cy},"cz":{cz},"l":{l},"w":{w},"h":{h},"yaw":{yaw},"cls_score":1.0,"iou_score":1.0}}"#
                )
            })
            .collect();
        out.push_str(&format!(
            "{{\"id\":\"{}\",\"detections\":[{}]}}\n",
            s.id,
            dets.join(",")
        ));
    }
    out
}

fn simulate(dir: &Path, extra: &[&str]) -> Output {
    let cfg = example_config();
    let mut args = vec![
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn iou_command_prints_six_decimals() {
    let same = run(&[
        "iou",
        "--a",
        "0,0,0,4,2,1.5,0.3",
        "--b",
        "0,0,0,4,2,1.5,0.3",
    ]);
    assert!(same.status.success());
    assert_eq!(stdout(&same), "bev 1.000000\n3d  1.000000\n");
    let apart = run(&["iou", "--a", "0,0,0,1,1,1,0", "--b", "-5,0,0,1,1,1,0"]);
    assert_eq!(stdout(&apart), "bev 0.000000\n3d  0.000000\n");
    let offset = run(&["iou", "--a", "0,0,0,1,1,1,0", "--b", "0.5,0,0,1,1,1,0"]);
    assert_eq!(stdout(&offset), "bev 0.333333\n3d  0.333333\n");
    assert_eq!(
        run(&["iou", "--a", "0,0,x,1,1,1,0", "--b", "0,0,0,1,1,1,0"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&["iou", "--a", "0,0,0,1,1,1", "--b", "0,0,0,1,1,1,0"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn usage_and_input_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let out = dir.path().to_str().unwrap();
    assert_eq!(
        run(&["simulate", "--config", "/nonexistent.json", "--out", out])
            .status
            .code(),
        Some(2)
    );
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"rounds\": 0}").unwrap();
    assert_eq!(
        run(&["simulate", "--config", bad.to_str().unwrap(), "--out", out])
            .status
            .code(),
        Some(2)
    );
    std::fs::write(&bad, "{\"rounds\": ").unwrap();
    assert_eq!(
        run(&["simulate", "--config", bad.to_str().unwrap(), "--out", out])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&["inspect", bad.to_str().unwrap()]).status.code(),
        Some(2)
    );
}

#[test]
fn simulate_writes_reports_and_honours_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let start = std::time::Instant::now();
    assert!(simulate(a.path(), &[]).status.success());
    assert!(start.elapsed().as_secs() < 60);
    for f in [
        "config.json",
        "rounds.jsonl",
        "summary.json",
        "snapshot.json",
        "scenes.jsonl",
    ] {
        assert!(a.path().join(f).is_file(), "{f}");
    }
    let rounds = std::fs::read_to_string(a.path().join("rounds.jsonl")).unwrap();
    assert_eq!(rounds.lines().count(), 15);
    assert!(simulate(b.path(), &["--seed", "99"]).status.success());
    assert!(simulate(c.path(), &["--seed", "99"]).status.success());
    let read = |d: &Path| std::fs::read(d.join("summary.json")).unwrap();
    assert_ne!(read(a.path()), read(b.path()));
    assert_eq!(read(b.path()), read(c.path()));
    let inspect = run(&["inspect", a.path().join("snapshot.json").to_str().unwrap()]);
    assert!(inspect.status.success());
    assert!(stdout(&inspect).contains("50 scenes"));
}

#[test]
fn update_then_eval_against_ground_truth() {
    let sim = tempfile::tempdir().unwrap();
    assert!(simulate(sim.path(), &["--seed", "5"]).status.success());
    let scenes = sim.path().join("scenes.jsonl");
    let dets_path = sim.path().join("dets.jsonl");
    let dets = gt_detections(&scenes);
    std::fs::write(&dets_path, &dets).unwrap();

    let snap1 = sim.path().join("snap1.json");
    let snap2 = sim.path().join("snap2.json");
    let (d, s1, s2) = (
        dets_path.to_str().unwrap(),
        snap1.to_str().unwrap(),
        snap2.to_str().unwrap(),
    );
    let up = run(&["update", "--detections", d, "--snapshot-out", s1]);
    assert!(
        up.status.success(),
        "{}",
        String::from_utf8_lossy(&up.stderr)
    );
    assert!(stdout(&up).starts_with("scene"));
    assert_eq!(
        std::fs::read_to_string(&snap1).unwrap(),
        update_memory_documents("", &dets, "").unwrap()
    );

    let up2 = run(&[
        "update",
        "--detections",
        d,
        "--snapshot-in",
        s1,
        "--snapshot-out",
        s2,
    ]);
    assert!(up2.status.success());
    let first = std::fs::read_to_string(&snap1).unwrap();
    assert_eq!(
        std::fs::read_to_string(&snap2).unwrap(),
        update_memory_documents(&first, &dets, "").unwrap()
    );

    let g = scenes.to_str().unwrap();
    let json = sim.path().join("eval.json");
    let ev = run(&[
        "eval",
        "--snapshot",
        s2,
        "--gt",
        g,
        "--closed-gap",
        "61.83",
        "27.48",
        "73.45",
        "--out",
        json.to_str().unwrap(),
    ]);
    assert!(
        ev.status.success(),
        "{}",
        String::from_utf8_lossy(&ev.stderr)
    );
    let text = stdout(&ev);
    assert!(
        text.lines()
            .any(|l| l.split_whitespace().collect::<Vec<_>>() == ["f1", "1.0000"]),
        "{text}"
    );
    assert!(
        text.lines()
            .any(|l| l.split_whitespace().collect::<Vec<_>>() == ["closed_gap", "74.72"]),
        "{text}"
    );
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(summary["ap"], 1.0);
}

#[test]
fn update_flags_and_bad_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let dets = dir.path().join("d.jsonl");
    std::fs::write(
        &dets,
        concat!(
            r#"{"id":"x","detections":[{"cx":0,"cy":0,"cz":0.75,"l":4,"w":2,"h":1.5,"yaw":0,"cls_score":0.5,"iou_score":0.4},"#,
            r#"{"cx":9,"cy":0,"cz":0.75,"l":4,"w":2,"h":1.5,"yaw":0,"cls_score":0.5,"iou_score":0.7}]}"#,
            "\n"
        ),
    )
    .unwrap();
    let snap = dir.path().join("s.json");
    let (d, s) = (dets.to_str().unwrap(), snap.to_str().unwrap());
    let o = run(&[
        "update",
        "--detections",
        d,
        "--snapshot-out",
        s,
        "--t-pos",
        "0.25",
        "--t-neg",
        "0.25",
    ]);
    assert!(o.status.success());
    assert!(!std::fs::read_to_string(&snap).unwrap().contains("ignored"));
    let o = run(&["update", "--detections", d, "--snapshot-out", s]);
    assert!(o.status.success());
    assert!(std::fs::read_to_string(&snap).unwrap().contains("ignored"));
    assert_eq!(
        run(&[
            "update",
            "--detections",
            d,
            "--snapshot-out",
            s,
            "--t-neg",
            "0.9"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        run(&[
            "update",
            "--detections",
            d,
            "--snapshot-out",
            s,
            "--variant",
            "best"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        run(&["update", "--detections", s, "--snapshot-out", s])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&[
            "update",
            "--detections",
            d,
            "--snapshot-in",
            d,
            "--snapshot-out",
            s
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn eval_threshold_monotonicity_and_missing_gt() {
    let sim = tempfile::tempdir().unwrap();
    assert!(simulate(sim.path(), &["--seed", "8"]).status.success());
    let (snap, gt) = (
        sim.path().join("snapshot.json"),
        sim.path().join("scenes.jsonl"),
    );
    let f1 = |iou: &str, kind: &str| -> f64 {
        let o = run(&[
            "eval",
            "--snapshot",
            snap.to_str().unwrap(),
            "--gt",
            gt.to_str().unwrap(),
            "--iou",
            iou,
            "--kind",
            kind,
        ]);
        assert!(o.status.success());
        let text = stdout(&o);
        let line = text
            .lines()
            .find(|l| l.starts_with("f1"))
            .unwrap()
            .to_string();
        line.split_whitespace().nth(1).unwrap().parse().unwrap()
    };
    assert!(f1("0.5", "3d") >= f1("0.7", "3d"));
    assert!(f1("0.5", "bev") >= f1("0.7", "bev"));

    let empty = sim.path().join("empty.jsonl");
    std::fs::write(
        &empty,
        "{\"id\":\"scene_0000\",\"boxes\":[],\"points\":[]}\n",
    )
    .unwrap();
    let o = run(&[
        "eval",
        "--snapshot",
        snap.to_str().unwrap(),
        "--gt",
        empty.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

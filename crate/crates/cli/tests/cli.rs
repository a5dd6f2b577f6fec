use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn memtrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memtrack")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

const SCENE: &str = r#"
width = 128
height = 96
frames = 70
seed = 5

[population]
count = 3

[detector]
false_positives_per_frame = 1.0
"#;

fn simulate(dir: &Path) {
    let cfg = dir.join("sim.toml");
    fs::write(&cfg, SCENE).unwrap();
    let scene = dir.join("scene");
    let o = memtrack(&["simulate", "--config", cfg.to_str().unwrap(), "--out", scene.to_str().unwrap(), "--detections"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn simulate_writes_scene() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path());
    let scene = tmp.path().join("scene");
    assert!(scene.join("manifest.toml").exists());
    assert!(scene.join("gt.csv").exists());
    assert!(rows(&scene.join("detections.csv")) > 0);
    let pngs = fs::read_dir(scene.join("frames"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "png"))
        .count();
    assert_eq!(pngs, 70);
}

#[test]
fn prune_never_adds_rows() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path());
    let input = tmp.path().join("scene/detections.csv");
    let out = tmp.path().join("pruned.csv");
    let o = memtrack(&[
        "prune",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--threshold",
        "high=0.5",
        "--nms-iou",
        "0.3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(rows(&out) <= rows(&input));
}

#[test]
fn tracks_scored_against_themselves_are_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("gt.csv"), "id,frame,x,y\n1,0,20,20\n1,1,21,20\n1,2,22,20\n").unwrap();
    fs::write(
        tmp.path().join("tracks.csv"),
        "track_id,frame,cx,cy,w,h,interpolated\n7,0,20,20,30,30,0\n7,1,21,20,30,30,0\n7,2,22,20,30,30,0\n",
    )
    .unwrap();
    let o = memtrack(&[
        "eval",
        "--gt",
        tmp.path().join("gt.csv").to_str().unwrap(),
        "--tracks",
        tmp.path().join("tracks.csv").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("precision: 1.0000"), "{text}");
    assert!(text.contains("recall: 1.0000"), "{text}");
}

#[test]
fn calibrate_writes_a_full_sweep_per_level() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path());
    let dets = tmp.path().join("scene/detections.csv");
    let out = tmp.path().join("curves.csv");
    let o = memtrack(&[
        "calibrate",
        "--high",
        dets.to_str().unwrap(),
        "--gt",
        tmp.path().join("scene/gt.csv").to_str().unwrap(),
        "--criterion",
        "max_precision",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(rows(&out), 101);
    assert!(stdout(&o).starts_with("high = "));
}

#[test]
fn config_without_detection_source_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "manifest = \"m.toml\"\noutput_dir = \"out\"\n").unwrap();
    let o = memtrack(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn bad_arguments_exit_1_and_missing_files_exit_2() {
    assert_eq!(memtrack(&["prune"]).status.code(), Some(1));
    assert_eq!(memtrack(&["--help"]).status.code(), Some(0));
    let o = memtrack(&["eval", "--gt", "/nonexistent/gt.csv", "--tracks", "/nonexistent/t.csv"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_then_run_produces_report() {
    let tmp = tempfile::tempdir().unwrap();
    simulate(tmp.path());
    let scene = tmp.path().join("scene");
    let cfg = tmp.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "manifest = {:?}\noutput_dir = {:?}\nground_truth = {:?}\n[detections]\nsource = \"builtin\"\n",
            scene.join("manifest.toml"),
            tmp.path().join("out"),
            scene.join("gt.csv"),
        ),
    )
    .unwrap();
    let o = memtrack(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = tmp.path().join("out");
    for f in ["detections_merged.csv", "detections_nms.csv", "tracks.csv", "report.txt", "report.toml"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    assert_eq!(fs::read_to_string(out.join("STAGE")).unwrap().trim(), "complete");
}

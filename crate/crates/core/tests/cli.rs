mod common;

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::Duration;

use lucidforge::augment::{CameraModel, DepthMap};
use lucidforge::episode::Episode;
use lucidforge::Pose;
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lucidforge"));
    c.env_remove("LUCIDFORGE_SEED").env("RUST_LOG", "info");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn compile_empty_scene() {
    let dir = TempDir::new().unwrap();
    let src = dir.path().join("empty.scene");
    let out = dir.path().join("empty.xml");
    fs::write(&src, "(scene)").unwrap();
    let o = run(&["compile", p(&src), p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read_to_string(&out).unwrap(),
        "<mujoco>\n  <compiler angle=\"radian\"/>\n  <worldbody/>\n</mujoco>\n"
    );
}

#[test]
fn compile_is_byte_deterministic() {
    let dir = TempDir::new().unwrap();
    let scene = common::random_scene(&mut common::rng(17), 14);
    let src = dir.path().join("gen.scene");
    fs::write(&src, &scene.text).unwrap();
    let (a, b) = (dir.path().join("a.xml"), dir.path().join("b.xml"));
    assert!(run(&["compile", p(&src), p(&a)]).status.success());
    assert!(run(&["compile", p(&src), p(&b)]).status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let v = run(&["validate", p(&a)]);
    assert!(v.status.success(), "{}", stderr(&v));
    let bodies = scene.nodes.iter().filter(|(_, k)| *k == "body").count();
    assert_eq!(stdout_json(&v)["bodies"], bodies);
}

#[test]
fn compile_errors_map_to_exit_codes() {
    let dir = TempDir::new().unwrap();
    let cyclic = dir.path().join("cyclic.scene");
    fs::write(
        &cyclic,
        "(scene (body \"a\" pos=[0,0,0] + b.top anchor.top=[0,0,1]) (body \"b\" pos=[0,0,0] + a.top anchor.top=[0,0,1]))",
    )
    .unwrap();
    let out = dir.path().join("x.xml");
    let o = run(&["compile", p(&cyclic), p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("CyclicAnchorReference"), "{}", stderr(&o));
    assert!(!out.exists());

    let bad = dir.path().join("bad.scene");
    fs::write(&bad, "(scene\n  (box \"a\" size=[1,2,]))").unwrap();
    let o = run(&["compile", p(&bad), p(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("SyntaxError at 2:"), "{}", stderr(&o));

    let o = run(&["compile", p(&dir.path().join("missing.scene")), p(&out)]);
    assert_eq!(o.status.code(), Some(3));

    assert_eq!(run(&["compile"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn validate_reports_model_shape() {
    let dir = TempDir::new().unwrap();
    let model = dir.path().join("hand.xml");
    fs::write(&model, common::three_finger_hand()).unwrap();
    let o = run(&["validate", p(&model)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = stdout_json(&o);
    assert_eq!(v["dof"], 12);
    assert_eq!(v["sites"].as_array().unwrap().len(), 4);
    assert_eq!(v["model_hash"].as_str().unwrap().len(), 64);

    fs::write(&model, "<mujoco><worldbody><body></worldbody>").unwrap();
    let o = run(&["validate", p(&model)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("MalformedXML"));
}

#[test]
fn serve_rejects_decimation_outside_range() {
    for d in ["3", "21"] {
        let o = run(&["serve", "unused.xml", "--decimation", d]);
        assert_eq!(o.status.code(), Some(2), "decimation {d}");
    }
}

fn write_episodes(dir: &Path, n: usize, frames: usize) {
    fs::create_dir_all(dir).unwrap();
    let mut r = common::rng(23);
    for i in 0..n {
        let ep = common::random_episode(&mut r, frames, &["grip", "cube"], 3);
        fs::write(dir.join(format!("ep{i:02}.jsonl")), ep.save().unwrap()).unwrap();
    }
}

fn sorted_files(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut v: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn augment_multiplies_and_is_seeded() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("in");
    write_episodes(&input, 10, 40);
    let glob = format!("{}/*.jsonl", input.display());

    let out_a = dir.path().join("a");
    let o = bin()
        .args(["augment", &glob, "--multiplier", "5", p(&out_a)])
        .env("LUCIDFORGE_SEED", "99")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let files = sorted_files(&out_a);
    assert_eq!(files.len(), 50);
    for f in &files {
        Episode::load(&fs::read(f).unwrap()).unwrap().validate().unwrap();
    }
    // Originals are carried through unchanged.
    assert_eq!(
        fs::read(out_a.join("ep03.jsonl")).unwrap(),
        fs::read(input.join("ep03.jsonl")).unwrap()
    );

    let out_b = dir.path().join("b");
    let o = bin()
        .args(["augment", &glob, "--multiplier", "5", "--seed", "99", p(&out_b)])
        .output()
        .unwrap();
    assert!(o.status.success());
    for (a, b) in files.iter().zip(sorted_files(&out_b)) {
        assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap(), "{}", a.display());
    }

    let out_c = dir.path().join("c");
    let o = run(&["augment", &glob, "--multiplier", "5", "--seed", "100", p(&out_c)]);
    assert!(o.status.success());
    assert_ne!(fs::read(&files[1]).unwrap(), fs::read(out_c.join("ep00_w01.jsonl")).unwrap());

    let out_one = dir.path().join("one");
    let o = run(&["augment", &glob, "--multiplier", "1", p(&out_one)]);
    assert!(o.status.success());
    assert_eq!(sorted_files(&out_one).len(), 10);

    let o = run(&["augment", &glob, "--max-trans", "-1", p(&dir.path().join("neg"))]);
    assert_eq!(o.status.code(), Some(2));
}

fn camera(x: f64) -> CameraModel {
    CameraModel {
        fx: 100.0,
        fy: 100.0,
        cx: 31.5,
        cy: 31.5,
        width: 64,
        height: 64,
        pose: Pose::from_translation(x, 0.0, 0.0),
    }
}

#[test]
fn warp_camera_identity_and_translation() {
    let dir = TempDir::new().unwrap();
    let ep_dir = dir.path().join("ep");
    write_episodes(&ep_dir, 1, 3);
    let ep = ep_dir.join("ep00.jsonl");
    let depth = dir.path().join("depth");
    fs::create_dir_all(&depth).unwrap();
    for i in 0..3 {
        fs::write(depth.join(format!("frame_{i:05}.depth")), DepthMap::constant(64, 64, 1.0).to_bytes()).unwrap();
    }
    let cam_a = dir.path().join("a.json");
    let cam_b = dir.path().join("b.json");
    fs::write(&cam_a, camera(0.0).to_json()).unwrap();
    fs::write(&cam_b, camera(0.1).to_json()).unwrap();

    let out = dir.path().join("same");
    let o = run(&["warp-camera", p(&ep), p(&depth), p(&cam_a), p(&cam_a), p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = stdout_json(&o);
    assert_eq!(v["frames"], 3);
    assert_eq!(v["mean_abs_flow"], 0.0);
    assert!(out.join("frame_00002.flow").exists());

    let out = dir.path().join("moved");
    let o = run(&["warp-camera", p(&ep), p(&depth), p(&cam_a), p(&cam_b), p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = stdout_json(&o);
    assert!((v["mean_du"].as_f64().unwrap() + 10.0).abs() < 1e-6, "{v}");
    let flow = lucidforge::augment::FlowField::from_bytes(&fs::read(out.join("frame_00000.flow")).unwrap()).unwrap();
    assert_eq!(flow.valid_count(), 54 * 64);

    fs::remove_file(depth.join("frame_00001.depth")).unwrap();
    let o = run(&["warp-camera", p(&ep), p(&depth), p(&cam_a), p(&cam_b), p(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("frame_00001.depth"), "{}", stderr(&o));
}

#[test]
fn stats_over_globs() {
    let dir = TempDir::new().unwrap();
    let o = run(&["stats", &format!("{}/*.jsonl", dir.path().display())]);
    assert!(o.status.success());
    let v = stdout_json(&o);
    assert_eq!((v["episodes"].as_u64(), v["frames"].as_u64()), (Some(0), Some(0)));

    write_episodes(dir.path(), 2, 25);
    let o = run(&["stats", &format!("{}/*.jsonl", dir.path().display())]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = stdout_json(&o);
    assert_eq!(v["episodes"], 2);
    assert_eq!(v["frames"], 50);
    assert!((v["duration_s"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    assert!(v["bounds"]["grip"]["min"].is_array());

    let text = fs::read_to_string(dir.path().join("ep01.jsonl")).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[4] = "{\"t\":";
    fs::write(dir.path().join("ep01.jsonl"), lines.join("\n")).unwrap();
    let o = run(&["stats", &format!("{}/*.jsonl", dir.path().display())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 5"), "{}", stderr(&o));
}

#[test]
fn replay_prints_every_frame() {
    let dir = TempDir::new().unwrap();
    write_episodes(dir.path(), 1, 7);
    let o = run(&["replay", p(&dir.path().join("ep00.jsonl"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines: Vec<Value> = o.stdout.lines().map(|l| serde_json::from_str(&l.unwrap()).unwrap()).collect();
    assert_eq!(lines.len(), 7);
    assert!((lines[6]["t"].as_f64().unwrap() - 0.24).abs() < 1e-12);
    assert_eq!(run(&["replay", "x.jsonl", "--rate", "0"]).status.code(), Some(2));
}

#[test]
fn serve_records_over_websocket() {
    if Command::new("kill").arg("-l").output().is_err() {
        return; // no way to deliver SIGINT here
    }
    let dir = TempDir::new().unwrap();
    let model = dir.path().join("hand.xml");
    fs::write(&model, common::three_finger_hand()).unwrap();
    let rec = dir.path().join("rec");
    let mut child = bin()
        .args(["serve", p(&model), "--port", "0", "--record-dir", p(&rec)])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut err = BufReader::new(child.stderr.take().unwrap());
    let port = loop {
        let mut line = String::new();
        assert!(err.read_line(&mut line).unwrap() > 0, "server exited early");
        if let Some(rest) = line.split("listening on ").nth(1) {
            break rest.trim().rsplit(':').next().unwrap().parse::<u16>().unwrap();
        }
    };
    std::thread::spawn(move || for _ in err.lines() {});

    let (mut ws, _) = tungstenite::connect(format!("ws://127.0.0.1:{port}")).unwrap();
    let hello: Value = serde_json::from_str(ws.read().unwrap().to_text().unwrap()).unwrap();
    assert_eq!(hello["type"], "hello");
    assert_eq!(hello["rate_hz"], 25.0);
    ws.send(tungstenite::Message::text(r#"{"type":"record_start"}"#)).unwrap();
    let mut states = 0;
    while states < 45 {
        let msg: Value = serde_json::from_str(ws.read().unwrap().to_text().unwrap()).unwrap();
        if msg["type"] == "state" {
            states += 1;
            assert_eq!(msg["q"].as_array().unwrap().len(), 12);
        }
    }
    ws.send(tungstenite::Message::text(r#"{"type":"record_stop"}"#)).unwrap();
    ws.send(tungstenite::Message::text(r#"{"type":"teleport"}"#)).unwrap();
    let mut saw_error = false;
    for _ in 0..200 {
        let msg: Value = serde_json::from_str(ws.read().unwrap().to_text().unwrap()).unwrap();
        if msg["type"] == "error" {
            assert_eq!(msg["code"], "malformed");
            saw_error = true;
            break;
        }
    }
    assert!(saw_error);
    let _ = ws.close(None);
    std::thread::sleep(Duration::from_millis(200));

    Command::new("kill").args(["-INT", &child.id().to_string()]).status().unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["sessions"], 1);
    let files = sorted_files(&rec);
    assert_eq!(files.len(), 1);
    let ep = Episode::load(&fs::read(&files[0]).unwrap()).unwrap();
    assert!((12..=14).contains(&ep.len()), "{} frames", ep.len());
    assert!(ep.meta.created.is_some());
}

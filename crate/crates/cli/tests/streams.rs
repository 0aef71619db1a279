mod common;

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Stdio};

use common::{bin, p, run, run_ok, stdout, trained};
use hallglove::firmware::{encode_frame, parse_frame, WireFrame};
use hallglove::hand::{default_rom, default_vocabulary, AnthropometricProfile, HandPose};
use hallglove::physics::{simulate_frame_seeded, GloveModel};

const SCRIPT: &str = "gesture namaste 2\ngesture water 2\ngesture peace 2\n";

fn with_script(text: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.txt"), text).unwrap();
    dir
}

#[test]
fn simulate_counts_and_parses() {
    let dir = with_script(SCRIPT);
    let out = run_ok(dir.path(), &["simulate", "s.txt"]);
    let text = stdout(&out);
    let frames: Vec<WireFrame> = text.lines().map(|l| parse_frame(l).unwrap()).collect();
    let data = frames.iter().filter(|f| matches!(f, WireFrame::Data { .. })).count();
    assert_eq!(data, 300);
    assert_eq!(&text.lines().take(3).collect::<Vec<_>>(), &["S,BOOT", "S,SERIAL_INIT", "S,CALIBRATED_IDLE"]);
    let again = run_ok(dir.path(), &["simulate", "s.txt"]);
    assert_eq!(out.stdout, again.stdout);
    let other = run_ok(dir.path(), &["simulate", "s.txt", "--seed", "1"]);
    assert_ne!(out.stdout, other.stdout);
}

#[test]
fn simulate_unknown_gesture_fails_before_streaming() {
    let dir = with_script("gesture namaste 1\ngesture juggle 1\n");
    let out = run(dir.path(), &["simulate", "s.txt"]);
    assert!(!out.status.success());
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("juggle"));
}

#[test]
fn simulate_imu_fault_stops_after_state_frames() {
    let dir = with_script(SCRIPT);
    let out = run(dir.path(), &["simulate", "s.txt", "--imu-fault"]);
    assert!(!out.status.success());
    assert_eq!(stdout(&out), "S,BOOT\nS,SERIAL_INIT\nS,IMU_FAULT\n");
}

#[test]
fn simulate_on_glove_inference() {
    let t = trained();
    let dir = with_script("gesture you 1\n");
    let out = run_ok(
        dir.path(),
        &["simulate", "s.txt", "--mode", "infer", "--weights", p(&t.weights())],
    );
    let text = stdout(&out);
    assert!(text.contains("S,INFERENCE\n"));
    let you = default_vocabulary().by_name("you").unwrap().class_index as u32;
    let gestures: Vec<u32> = text
        .lines()
        .filter_map(|l| match parse_frame(l).unwrap() {
            WireFrame::Gesture { class_index, .. } => Some(class_index),
            _ => None,
        })
        .collect();
    assert_eq!(gestures.len(), 50);
    assert!(gestures.iter().filter(|c| **c == you).count() >= 45);
    let out = run(dir.path(), &["simulate", "s.txt", "--mode", "infer"]);
    assert!(!out.status.success());
}

fn pipe(dir: &std::path::Path, sim: &[&str], infer: &[&str]) -> String {
    let mut s = bin()
        .args(sim)
        .current_dir(dir)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let i = bin()
        .args(infer)
        .current_dir(dir)
        .stdin(s.stdout.take().unwrap())
        .output()
        .unwrap();
    assert!(s.wait().unwrap().success());
    assert!(i.status.success(), "{}", String::from_utf8_lossy(&i.stderr));
    stdout(&i)
}

#[test]
fn simulate_piped_into_infer() {
    let t = trained();
    let dir = with_script(SCRIPT);
    let words = pipe(dir.path(), &["simulate", "s.txt"], &["infer", p(&t.weights())]);
    assert_eq!(words, "namaste\nwater\npeace\n");
}

#[test]
fn infer_debounce_on_gesture_frames() {
    let t = trained();
    let dir = tempfile::tempdir().unwrap();
    let g = |seq, c| encode_frame(&WireFrame::Gesture { seq, class_index: c, confidence: 0.9 });
    // Steady class 4 for 12 frames: one word.
    let steady: String = (0..12).map(|i| g(i, 4)).collect();
    fs::write(dir.path().join("steady.txt"), steady).unwrap();
    let out = run_ok(dir.path(), &["infer", p(&t.weights()), "--input", "steady.txt"]);
    assert_eq!(stdout(&out), format!("{}\n", default_vocabulary().get(4).unwrap().name));
    // Classes alternating every 3 frames never reach 5 in a row.
    let flicker: String = (0..60).map(|i| g(i, if (i / 3) % 2 == 0 { 1 } else { 2 })).collect();
    fs::write(dir.path().join("flicker.txt"), flicker).unwrap();
    let out = run_ok(dir.path(), &["infer", p(&t.weights()), "--input", "flicker.txt"]);
    assert_eq!(stdout(&out), "");
    // Garbage lines are skipped, not fatal.
    fs::write(dir.path().join("junk.txt"), "hello\nD,1,2\n\u{7f}\n").unwrap();
    run_ok(dir.path(), &["infer", p(&t.weights()), "--input", "junk.txt"]);
}

#[test]
fn infer_word_map_with_actions() {
    let t = trained();
    let dir = tempfile::tempdir().unwrap();
    let mut map = String::new();
    for (i, g) in default_vocabulary().gestures().iter().enumerate() {
        map.push_str(&format!("[[word]]\nclass = {i}\nword = \"{}\"\n", g.name.to_uppercase()));
        if i == 4 {
            map.push_str("action = \"NEXT_SLIDE\"\n");
        }
    }
    fs::write(dir.path().join("words.toml"), &map).unwrap();
    let frames: String = (0..6)
        .map(|i| encode_frame(&WireFrame::Gesture { seq: i, class_index: 4, confidence: 1.0 }))
        .collect();
    fs::write(dir.path().join("f.txt"), frames).unwrap();
    let out = run_ok(
        dir.path(),
        &["infer", p(&t.weights()), "--wordmap", "words.toml", "--input", "f.txt"],
    );
    assert_eq!(stdout(&out), "THREE\nACTION,NEXT_SLIDE\n");

    let bad = map + "[[word]]\nclass = 11\nword = \"extra\"\n";
    fs::write(dir.path().join("bad.toml"), bad).unwrap();
    let out = run(
        dir.path(),
        &["infer", p(&t.weights()), "--wordmap", "bad.toml", "--input", "f.txt"],
    );
    assert!(!out.status.success());
    assert!(out.stdout.is_empty());
}

#[test]
fn simulate_over_socket_into_infer() {
    let t = trained();
    let dir = with_script(SCRIPT);
    let (mut sim, addr) = spawn_listening(dir.path(), &["simulate", "s.txt", "--listen", "127.0.0.1:0"]);
    let out = run_ok(dir.path(), &["infer", p(&t.weights()), "--connect", &addr]);
    assert!(sim.wait().unwrap().success());
    assert_eq!(stdout(&out), "namaste\nwater\npeace\n");
}

/// Starts a listening command and returns it with the address it reports.
fn spawn_listening(dir: &std::path::Path, args: &[&str]) -> (Child, String) {
    let mut child = bin()
        .args(args)
        .current_dir(dir)
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut err = BufReader::new(child.stderr.take().unwrap());
    let mut line = String::new();
    err.read_line(&mut line).unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on ")
        .unwrap_or_else(|| panic!("unexpected: {line}"))
        .to_string();
    // Keep draining stderr so the child never blocks on it.
    std::thread::spawn(move || {
        let mut sink = String::new();
        let _ = err.read_to_string(&mut sink);
    });
    (child, addr)
}

struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Client {
    fn connect(addr: &str) -> Self {
        let s = TcpStream::connect(addr).unwrap();
        Self {
            reader: BufReader::new(s.try_clone().unwrap()),
            writer: s,
        }
    }

    fn recv(&mut self) -> serde_json::Value {
        let mut line = String::new();
        self.reader.read_line(&mut line).unwrap();
        serde_json::from_str(&line).unwrap_or_else(|e| panic!("{e}: {line:?}"))
    }

    fn ask(&mut self, msg: &str) -> serde_json::Value {
        self.writer.write_all(msg.as_bytes()).unwrap();
        self.writer.write_all(b"\n").unwrap();
        self.recv()
    }
}

#[test]
fn serve_session() {
    let t = trained();
    let dir = tempfile::tempdir().unwrap();
    let (mut server, addr) = spawn_listening(
        dir.path(),
        &["serve", p(&t.weights()), "--bind", "127.0.0.1:0", "--once", "--record-out", "rec.csv"],
    );
    let mut c = Client::connect(&addr);
    let hello = c.recv();
    assert_eq!(hello["type"], "hello");
    assert_eq!(hello["words"].as_array().unwrap().len(), 11);
    // thumb IP, then index PIP
    assert_eq!(hello["rom"][1], 80.0);
    assert_eq!(hello["rom"][3], 110.0);

    // Busy while the first session is open.
    let mut second = Client::connect(&addr);
    let busy = second.recv();
    assert_eq!(busy, serde_json::json!({"type": "error", "reason": "busy"}));

    let reply = c.ask(r#"{"type":"pose","angles":[0,0,0,0,0,0,0,0,0,0,0,0,0,0],"wrist":[0,0,0]}"#);
    assert_eq!(reply["type"], "frame");
    let expected = simulate_frame_seeded(
        &HandPose::extended(),
        &AnthropometricProfile::reference(),
        &GloveModel::default().noiseless(),
        &default_rom(),
        0,
    )
    .unwrap();
    let codes: Vec<u16> = serde_json::from_value(reply["codes"].clone()).unwrap();
    assert_eq!(codes, expected.codes.to_vec());
    assert_eq!(reply["voltages"].as_array().unwrap().len(), 14);
    assert_eq!(reply["probs"].as_array().unwrap().len(), 11);

    let reply = c.ask(r#"{"type":"preset","gesture":3}"#);
    let probs: Vec<f64> = serde_json::from_value(reply["probs"].clone()).unwrap();
    let best = (0..probs.len()).max_by(|a, b| probs[*a].total_cmp(&probs[*b])).unwrap();
    assert_eq!(best, 3);
    assert_eq!(reply["word"], default_vocabulary().get(3).unwrap().name.as_str());

    let reply = c.ask("{not json");
    assert_eq!(reply["type"], "error");
    let reply = c.ask(r#"{"type":"pose","angles":[1,2],"wrist":[0,0,0]}"#);
    assert_eq!(reply["type"], "error");
    // Still open after errors.
    let reply = c.ask(r#"{"type":"record","label":3,"count":20}"#);
    assert_eq!(reply, serde_json::json!({"type": "recorded", "label": 3, "count": 20, "total": 20}));

    drop(c);
    assert!(server.wait().unwrap().success());
    let rec = fs::read_to_string(dir.path().join("rec.csv")).unwrap();
    assert_eq!(rec.lines().count(), 21);
}

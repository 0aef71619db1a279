//! Streaming commands: simulate, infer, serve.

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use hallglove::app::{infer_stream, WordMap};
use hallglove::dataset::write_csv;
use hallglove::firmware::{Firmware, FirmwareState, LoopConfig, LoopMode, LoopStats};
use hallglove::hand::AnthropometricProfile;
use hallglove::script::PoseScript;
use hallglove::session::{Outbound, Session};
use serde_json::json;

use crate::commands::inference_model;
use crate::config::Resolved;
use crate::output::{write_atomic, RunManifest};
use crate::{Format, SimMode};

pub struct SimulateArgs {
    pub script: PathBuf,
    pub mode: SimMode,
    pub weights: Option<PathBuf>,
    pub realtime: bool,
    pub listen: Option<String>,
    pub imu_fault: bool,
}

pub struct InferArgs {
    pub weights: PathBuf,
    pub wordmap: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub connect: Option<String>,
    pub debounce: Option<usize>,
}

fn listen_once(addr: &str) -> Result<TcpStream> {
    let listener = TcpListener::bind(addr).with_context(|| format!("cannot bind {addr}"))?;
    eprintln!("listening on {}", listener.local_addr()?);
    let (stream, _) = listener.accept()?;
    Ok(stream)
}

pub fn simulate(cfg: &Resolved, args: &SimulateArgs, out: Option<&Path>, fmt: Format) -> Result<()> {
    let text = fs::read_to_string(&args.script)
        .with_context(|| format!("cannot read {}", args.script.display()))?;
    // Validate everything before the first frame goes out.
    let script = PoseScript::parse(&text, &cfg.vocab, &cfg.rom)
        .with_context(|| format!("invalid pose script {}", args.script.display()))?;
    let sim = &cfg.run.simulate;
    let mode = match args.mode {
        SimMode::Collect => LoopMode::Collect,
        SimMode::Infer => LoopMode::Infer,
    };
    let inference = match (&args.weights, mode) {
        (Some(w), _) => Some(inference_model(cfg, w)?),
        (None, LoopMode::Infer) => bail!("--mode infer needs --weights"),
        (None, LoopMode::Collect) => None,
    };
    let loop_cfg = LoopConfig {
        sample_rate: sim.sample_rate,
        mode,
        realtime: args.realtime,
    };
    loop_cfg.validate()?;
    let profile = AnthropometricProfile::from_percentile("sim", sim.percentile)?;
    let model = if sim.noise {
        cfg.glove.clone()
    } else {
        cfg.glove.noiseless()
    };
    let mut fw = Firmware::new(&model, &cfg.rom, profile, inference.as_ref(), cfg.run.seed);

    let run = |sink: &mut dyn Write, fw: &mut Firmware| -> Result<LoopStats> {
        let state = fw.boot(!args.imu_fault, sink)?;
        if state != FirmwareState::CalibratedIdle {
            sink.flush()?;
            bail!("glove stopped in {}", state.wire_name());
        }
        Ok(fw.run_loop(script.expand(sim.sample_rate), &loop_cfg, sink)?)
    };

    let stats = if let Some(addr) = &args.listen {
        let mut sink = BufWriter::new(listen_once(addr)?);
        run(&mut sink, &mut fw)?
    } else if let Some(path) = out {
        let mut buf = Vec::new();
        let stats = run(&mut buf, &mut fw)?;
        write_atomic(path, &buf)?;
        RunManifest::new("simulate", cfg)
            .input(&args.script)
            .output(path)
            .options(json!({
                "mode": format!("{:?}", args.mode).to_lowercase(),
                "weights": args.weights,
                "imu_fault": args.imu_fault,
            }))
            .write_for(path)?;
        stats
    } else {
        let stdout = io::stdout();
        let mut sink = BufWriter::new(stdout.lock());
        run(&mut sink, &mut fw)?
    };

    match fmt {
        Format::Text => eprintln!(
            "simulate: {} frames, tick latency mean {:.3} ms, max {:.3} ms, {} over budget",
            stats.frames_emitted,
            stats.mean_latency().as_secs_f64() * 1e3,
            stats.max_latency.as_secs_f64() * 1e3,
            stats.overruns
        ),
        Format::Machine => eprintln!(
            "{}",
            json!({
                "frames": stats.frames_emitted,
                "mean_latency_ms": stats.mean_latency().as_secs_f64() * 1e3,
                "max_latency_ms": stats.max_latency.as_secs_f64() * 1e3,
                "overruns": stats.overruns,
            })
        ),
    }
    Ok(())
}

fn word_map(cfg: &Resolved, path: Option<&Path>) -> Result<WordMap> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            WordMap::from_toml(&text, cfg.vocab.len())
                .with_context(|| format!("invalid word map {}", p.display()))
        }
        None => Ok(cfg.words.clone()),
    }
}

pub fn infer(cfg: &Resolved, args: &InferArgs, out: Option<&Path>, fmt: Format) -> Result<()> {
    let model = inference_model(cfg, &args.weights)?;
    let words = word_map(cfg, args.wordmap.as_deref())?;
    let debounce = args.debounce.unwrap_or(cfg.run.infer.debounce);
    if debounce == 0 {
        bail!("debounce must be at least 1");
    }
    let source: Box<dyn BufRead> = match (&args.input, &args.connect) {
        (Some(p), _) => Box::new(BufReader::new(
            fs::File::open(p).with_context(|| format!("cannot open {}", p.display()))?,
        )),
        (None, Some(addr)) => Box::new(BufReader::new(
            TcpStream::connect(addr).with_context(|| format!("cannot connect to {addr}"))?,
        )),
        (None, None) => Box::new(io::stdin().lock()),
    };
    let stats = match out {
        Some(path) => {
            let mut buf = Vec::new();
            let stats = infer_stream(source, &model, &words, debounce, &mut buf)?;
            write_atomic(path, &buf)?;
            let mut manifest = RunManifest::new("infer", cfg).input(&args.weights);
            if let Some(p) = &args.input {
                manifest = manifest.input(p);
            }
            manifest
                .output(path)
                .options(json!({ "debounce": debounce, "wordmap": args.wordmap, "connect": args.connect }))
                .write_for(path)?;
            stats
        }
        None => {
            let stdout = io::stdout();
            let mut sink = stdout.lock();
            infer_stream(source, &model, &words, debounce, &mut sink)?
        }
    };
    match fmt {
        Format::Text => {
            eprintln!(
                "infer: {} data frames, {} gesture frames, {} words, {} rejected lines",
                stats.data_frames,
                stats.gesture_frames,
                stats.words_emitted,
                stats.rejected.len()
            );
            for (line, e) in stats.rejected.iter().take(5) {
                eprintln!("  line {line}: {e}");
            }
        }
        Format::Machine => eprintln!(
            "{}",
            json!({
                "data_frames": stats.data_frames,
                "gesture_frames": stats.gesture_frames,
                "words": stats.words_emitted,
                "rejected": stats.rejected.len(),
            })
        ),
    }
    Ok(())
}

fn send(w: &mut impl Write, msg: &Outbound) -> io::Result<()> {
    w.write_all(msg.to_line().as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()
}

fn save_recordings(session: &Session, path: &Path) -> Result<()> {
    if let Some(d) = session.recorded_dataset() {
        let mut buf = Vec::new();
        write_csv(&d, &mut buf)?;
        write_atomic(path, &buf)?;
    }
    Ok(())
}

fn run_session(stream: TcpStream, session: &Mutex<Session>, record_out: Option<&Path>) -> Result<()> {
    let mut writer = BufWriter::new(stream.try_clone()?);
    let hello = session.lock().expect("session lock").hello();
    send(&mut writer, &hello)?;
    for line in BufReader::new(stream).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut s = session.lock().expect("session lock");
        let reply = s.handle_line(&line);
        if let (Outbound::Recorded { .. }, Some(p)) = (&reply, record_out) {
            save_recordings(&s, p)?;
        }
        drop(s);
        send(&mut writer, &reply)?;
    }
    Ok(())
}

pub fn serve(
    cfg: &Resolved,
    weights: &Path,
    bind: &str,
    wordmap: Option<&Path>,
    record_out: Option<PathBuf>,
    once: bool,
) -> Result<()> {
    let model = inference_model(cfg, weights)?;
    let words = word_map(cfg, wordmap)?;
    let session = Arc::new(Mutex::new(Session::new(
        cfg.glove.clone(),
        cfg.rom,
        cfg.vocab.clone(),
        words,
        model,
        cfg.run.seed,
    )));
    let listener = TcpListener::bind(bind).with_context(|| format!("cannot bind {bind}"))?;
    listener.set_nonblocking(true)?;
    eprintln!("listening on {}", listener.local_addr()?);
    let busy = Arc::new(AtomicBool::new(false));
    let finished = Arc::new(AtomicBool::new(false));
    loop {
        if once && finished.load(Ordering::SeqCst) {
            return Ok(());
        }
        let (mut stream, peer) = match listener.accept() {
            Ok(c) => c,
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                thread::sleep(Duration::from_millis(10));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        stream.set_nonblocking(false)?;
        if busy.swap(true, Ordering::SeqCst) {
            let _ = send(&mut stream, &Outbound::error("busy"));
            continue;
        }
        let (session, busy, finished) = (session.clone(), busy.clone(), finished.clone());
        let record_out = record_out.clone();
        thread::spawn(move || {
            if let Err(e) = run_session(stream, &session, record_out.as_deref()) {
                eprintln!("session {peer}: {e:#}");
            }
            finished.store(true, Ordering::SeqCst);
            busy.store(false, Ordering::SeqCst);
        });
    }
}

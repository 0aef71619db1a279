//! Glove firmware model: LED-coded state machine, the line protocol spoken
//! to the host, and the sample -> normalize -> infer -> emit loop.

use std::fmt;
use std::io::Write;
use std::time::{Duration, Instant};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::hand::{AnthropometricProfile, HandPose, RomTable, JOINT_COUNT};
use crate::neural::{classify, forward, MlpParameters, NeuralError, NormalizationSpec};
use crate::numfmt::sig9;
use crate::physics::{simulate_frame, GloveModel, PhysicsError, SensorFrame, IMU_CHANNELS};

/// Largest ADC code accepted on the wire (10-bit converter).
pub const MAX_WIRE_CODE: u16 = 1023;
/// Per-tick processing budget.
pub const TICK_BUDGET: Duration = Duration::from_millis(100);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FirmwareState {
    Boot,
    SerialInit,
    ImuFault,
    CalibratedIdle,
    Inference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Led {
    Red,
    Yellow,
    Magenta,
    Blue,
    Green,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirmwareEvent {
    PowerOn,
    SerialReady,
    ImuInitOk,
    ImuInitFail,
    StartInference,
}

impl FirmwareState {
    pub const ALL: [FirmwareState; 5] = [
        FirmwareState::Boot,
        FirmwareState::SerialInit,
        FirmwareState::ImuFault,
        FirmwareState::CalibratedIdle,
        FirmwareState::Inference,
    ];

    pub fn led(self) -> Led {
        match self {
            FirmwareState::Boot => Led::Red,
            FirmwareState::SerialInit => Led::Yellow,
            FirmwareState::ImuFault => Led::Magenta,
            FirmwareState::CalibratedIdle => Led::Blue,
            FirmwareState::Inference => Led::Green,
        }
    }

    pub fn wire_name(self) -> &'static str {
        match self {
            FirmwareState::Boot => "BOOT",
            FirmwareState::SerialInit => "SERIAL_INIT",
            FirmwareState::ImuFault => "IMU_FAULT",
            FirmwareState::CalibratedIdle => "CALIBRATED_IDLE",
            FirmwareState::Inference => "INFERENCE",
        }
    }

    pub fn from_wire_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.wire_name() == name)
    }
}

impl FirmwareEvent {
    pub const ALL: [FirmwareEvent; 5] = [
        FirmwareEvent::PowerOn,
        FirmwareEvent::SerialReady,
        FirmwareEvent::ImuInitOk,
        FirmwareEvent::ImuInitFail,
        FirmwareEvent::StartInference,
    ];
}

/// Transition table. Pairs not listed leave the state unchanged.
pub fn fsm_step(state: FirmwareState, event: FirmwareEvent) -> FirmwareState {
    use FirmwareEvent as E;
    use FirmwareState as S;
    match (state, event) {
        (S::Boot, E::PowerOn) => S::SerialInit,
        (S::SerialInit, E::ImuInitOk) => S::CalibratedIdle,
        (S::SerialInit, E::ImuInitFail) => S::ImuFault,
        (S::CalibratedIdle, E::StartInference) => S::Inference,
        (s, _) => s,
    }
}

/// One line of the glove/host protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WireFrame {
    Data { seq: u32, frame: SensorFrame },
    Gesture { seq: u32, class_index: u32, confidence: f64 },
    State(FirmwareState),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("empty line")]
    Empty,
    #[error("line is not terminated correctly")]
    BadTerminator,
    #[error("unknown frame tag {0:?}")]
    UnknownTag(String),
    #[error("{tag} frame needs {expected} fields, got {got}")]
    FieldCount {
        tag: char,
        expected: usize,
        got: usize,
    },
    #[error("field {index} is not a valid number: {value:?}")]
    NotNumeric { index: usize, value: String },
    #[error("field {index}: ADC code {value} above {MAX_WIRE_CODE}")]
    CodeOutOfRange { index: usize, value: u64 },
    #[error("confidence {0} outside [0, 1]")]
    ConfidenceOutOfRange(f64),
    #[error("unknown state name {0:?}")]
    UnknownState(String),
}

impl fmt::Display for WireFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&encode_frame(self))
    }
}

/// Encodes one frame as an LF-terminated ASCII line.
pub fn encode_frame(frame: &WireFrame) -> String {
    let mut line = String::with_capacity(128);
    match frame {
        WireFrame::Data { seq, frame } => {
            line.push_str("D,");
            line.push_str(&seq.to_string());
            for c in frame.codes {
                line.push(',');
                line.push_str(&c.to_string());
            }
            for v in frame.imu {
                line.push(',');
                line.push_str(&sig9(v));
            }
        }
        WireFrame::Gesture {
            seq,
            class_index,
            confidence,
        } => {
            line.push_str(&format!("G,{seq},{class_index},{}", sig9(*confidence)));
        }
        WireFrame::State(s) => {
            line.push_str("S,");
            line.push_str(s.wire_name());
        }
    }
    line.push('\n');
    line
}

fn parse_u64_field(fields: &[&str], index: usize) -> Result<u64, FrameError> {
    let s = fields[index];
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) || s.len() > 20 {
        return Err(FrameError::NotNumeric {
            index,
            value: s.to_string(),
        });
    }
    s.parse().map_err(|_| FrameError::NotNumeric {
        index,
        value: s.to_string(),
    })
}

fn parse_u32_field(fields: &[&str], index: usize) -> Result<u32, FrameError> {
    let v = parse_u64_field(fields, index)?;
    u32::try_from(v).map_err(|_| FrameError::NotNumeric {
        index,
        value: fields[index].to_string(),
    })
}

fn parse_real_field(fields: &[&str], index: usize) -> Result<f64, FrameError> {
    let s = fields[index];
    let numeric = !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_digit() || matches!(b, b'-' | b'+' | b'.' | b'e' | b'E'));
    let v: Option<f64> = if numeric { s.parse().ok() } else { None };
    match v {
        Some(v) if v.is_finite() => Ok(v),
        _ => Err(FrameError::NotNumeric {
            index,
            value: s.to_string(),
        }),
    }
}

/// Parses one protocol line. A single trailing LF is accepted; anything
/// else malformed yields a [`FrameError`]. Never panics.
pub fn parse_frame(line: &str) -> Result<WireFrame, FrameError> {
    let body = line.strip_suffix('\n').unwrap_or(line);
    if body.is_empty() {
        return Err(FrameError::Empty);
    }
    if body.contains(['\n', '\r']) {
        return Err(FrameError::BadTerminator);
    }
    let fields: Vec<&str> = body.split(',').collect();
    let field_count = |tag: char, expected: usize| {
        if fields.len() == expected {
            Ok(())
        } else {
            Err(FrameError::FieldCount {
                tag,
                expected,
                got: fields.len(),
            })
        }
    };
    match fields[0] {
        "D" => {
            field_count('D', 2 + JOINT_COUNT + IMU_CHANNELS)?;
            let seq = parse_u32_field(&fields, 1)?;
            let mut codes = [0u16; JOINT_COUNT];
            for (i, c) in codes.iter_mut().enumerate() {
                let index = 2 + i;
                let v = parse_u64_field(&fields, index)?;
                if v > u64::from(MAX_WIRE_CODE) {
                    return Err(FrameError::CodeOutOfRange { index, value: v });
                }
                *c = v as u16;
            }
            let mut imu = [0.0; IMU_CHANNELS];
            for (i, v) in imu.iter_mut().enumerate() {
                *v = parse_real_field(&fields, 2 + JOINT_COUNT + i)?;
            }
            Ok(WireFrame::Data {
                seq,
                frame: SensorFrame { codes, imu },
            })
        }
        "G" => {
            field_count('G', 4)?;
            let seq = parse_u32_field(&fields, 1)?;
            let class_index = parse_u32_field(&fields, 2)?;
            let confidence = parse_real_field(&fields, 3)?;
            if !(0.0..=1.0).contains(&confidence) {
                return Err(FrameError::ConfidenceOutOfRange(confidence));
            }
            Ok(WireFrame::Gesture {
                seq,
                class_index,
                confidence,
            })
        }
        "S" => {
            field_count('S', 2)?;
            FirmwareState::from_wire_name(fields[1])
                .map(WireFrame::State)
                .ok_or_else(|| FrameError::UnknownState(fields[1].to_string()))
        }
        other => Err(FrameError::UnknownTag(other.chars().take(16).collect())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopMode {
    Collect,
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopConfig {
    pub sample_rate: f64,
    pub mode: LoopMode,
    /// Sleep between ticks to hold the sample rate.
    pub realtime: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            sample_rate: 50.0,
            mode: LoopMode::Collect,
            realtime: false,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), LoopError> {
        if (1.0..=1000.0).contains(&self.sample_rate) {
            Ok(())
        } else {
            Err(LoopError::SampleRate(self.sample_rate))
        }
    }

    pub fn tick_period(&self) -> Duration {
        Duration::from_secs_f64(1.0 / self.sample_rate)
    }
}

#[derive(Debug, Error)]
pub enum LoopError {
    #[error("firmware not ready (state {0:?})")]
    NotReady(FirmwareState),
    #[error("sample rate {0} outside [1, 1000] Hz")]
    SampleRate(f64),
    #[error("inference mode needs a model")]
    NoModel,
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("sink write failed: {0}")]
    Io(#[from] std::io::Error),
}

/// Trained network plus the normalization it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceModel {
    pub params: MlpParameters,
    pub normalization: NormalizationSpec,
}

impl InferenceModel {
    /// Normalize, forward, classify. Returns the class, its confidence and
    /// the raw output vector.
    pub fn infer(&self, frame: &SensorFrame) -> Result<(usize, f64, Vec<f64>), NeuralError> {
        let x = self.normalization.normalize(frame);
        let y = forward(&self.params, &x)?.output;
        let c = classify(&y)?;
        Ok((c.class_index, c.confidence, y))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoopStats {
    pub ticks: u64,
    pub frames_emitted: u64,
    pub max_latency: Duration,
    pub total_latency: Duration,
    /// Ticks whose processing exceeded [`TICK_BUDGET`].
    pub overruns: u64,
}

impl LoopStats {
    pub fn mean_latency(&self) -> Duration {
        if self.ticks == 0 {
            Duration::ZERO
        } else {
            self.total_latency / self.ticks as u32
        }
    }
}

/// Simulated glove: state machine, sensor models and the seeded noise
/// stream for one session.
pub struct Firmware<'a> {
    state: FirmwareState,
    model: &'a GloveModel,
    rom: &'a RomTable,
    profile: AnthropometricProfile,
    inference: Option<&'a InferenceModel>,
    rng: ChaCha8Rng,
    seq: u32,
}

impl<'a> Firmware<'a> {
    pub fn new(
        model: &'a GloveModel,
        rom: &'a RomTable,
        profile: AnthropometricProfile,
        inference: Option<&'a InferenceModel>,
        seed: u64,
    ) -> Self {
        Self {
            state: FirmwareState::Boot,
            model,
            rom,
            profile,
            inference,
            rng: ChaCha8Rng::seed_from_u64(seed),
            seq: 0,
        }
    }

    pub fn state(&self) -> FirmwareState {
        self.state
    }

    pub fn next_seq(&self) -> u32 {
        self.seq
    }

    /// Applies an event and returns the new state.
    pub fn handle(&mut self, event: FirmwareEvent) -> FirmwareState {
        self.state = fsm_step(self.state, event);
        self.state
    }

    /// Runs the power-on sequence, writing a state frame for every state
    /// entered (including the initial boot state).
    pub fn boot<W: Write + ?Sized>(&mut self, imu_ok: bool, sink: &mut W) -> std::io::Result<FirmwareState> {
        sink.write_all(encode_frame(&WireFrame::State(self.state)).as_bytes())?;
        let imu_event = if imu_ok {
            FirmwareEvent::ImuInitOk
        } else {
            FirmwareEvent::ImuInitFail
        };
        for event in [FirmwareEvent::PowerOn, imu_event] {
            let before = self.state;
            if self.handle(event) != before {
                sink.write_all(encode_frame(&WireFrame::State(self.state)).as_bytes())?;
            }
        }
        Ok(self.state)
    }

    /// One tick: sample the pose, then emit a data frame (collect) or a
    /// gesture frame (infer).
    pub fn tick(&mut self, pose: &HandPose, mode: LoopMode) -> Result<WireFrame, LoopError> {
        let frame = simulate_frame(pose, &self.profile, self.model, self.rom, &mut self.rng)?;
        let seq = self.seq;
        let out = match mode {
            LoopMode::Collect => WireFrame::Data { seq, frame },
            LoopMode::Infer => {
                let model = self.inference.ok_or(LoopError::NoModel)?;
                let (class_index, confidence, _) = model.infer(&frame)?;
                WireFrame::Gesture {
                    seq,
                    class_index: class_index as u32,
                    confidence,
                }
            }
        };
        self.seq = self.seq.wrapping_add(1);
        Ok(out)
    }

    /// Drives ticks until the pose source is exhausted.
    pub fn run_loop<I, W>(
        &mut self,
        poses: I,
        config: &LoopConfig,
        sink: &mut W,
    ) -> Result<LoopStats, LoopError>
    where
        I: IntoIterator<Item = HandPose>,
        W: Write + ?Sized,
    {
        config.validate()?;
        if !matches!(
            self.state,
            FirmwareState::CalibratedIdle | FirmwareState::Inference
        ) {
            return Err(LoopError::NotReady(self.state));
        }
        if config.mode == LoopMode::Infer {
            if self.inference.is_none() {
                return Err(LoopError::NoModel);
            }
            if self.state == FirmwareState::CalibratedIdle {
                self.handle(FirmwareEvent::StartInference);
                sink.write_all(encode_frame(&WireFrame::State(self.state)).as_bytes())?;
            }
        }
        let period = config.tick_period();
        let mut stats = LoopStats::default();
        let mut next_deadline = Instant::now();
        for pose in poses {
            let start = Instant::now();
            let frame = self.tick(&pose, config.mode)?;
            sink.write_all(encode_frame(&frame).as_bytes())?;
            let elapsed = start.elapsed();
            stats.ticks += 1;
            stats.frames_emitted += 1;
            stats.total_latency += elapsed;
            stats.max_latency = stats.max_latency.max(elapsed);
            if elapsed >= TICK_BUDGET {
                stats.overruns += 1;
            }
            if config.realtime {
                next_deadline += period;
                let now = Instant::now();
                if next_deadline > now {
                    std::thread::sleep(next_deadline - now);
                }
            }
        }
        sink.flush()?;
        Ok(stats)
    }
}

//! Interactive session behind `serve`: one JSON object per line in each
//! direction.
//!
//! Inbound:
//!   {"type":"pose","angles":[14 degrees],"wrist":[roll,pitch,yaw]}
//!   {"type":"preset","gesture":<class index>}
//!   {"type":"record","label":<class index>,"count":<n>}
//!
//! Outbound:
//!   {"type":"hello","words":[...],"rom":[14 max degrees]}   (on connect)
//!   {"type":"frame","voltages":[14],"codes":[14],"probs":[n],"word":"..."}
//!   {"type":"recorded","label":l,"count":n,"total":t}
//!   {"type":"error","reason":"..."}

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::app::WordMap;
use crate::dataset::{GestureDataset, SampleRecord};
use crate::firmware::InferenceModel;
use crate::hand::{
    canonical_joint_order, AnthropometricProfile, HandPose, RomTable, Vocabulary, Wrist,
    JOINT_COUNT,
};
use crate::neural::{classify, forward};
use crate::physics::{imu_sample, mux_scan, simulate_frame, GloveModel, SensorFrame};

/// Upper bound on samples captured by one record command.
pub const MAX_RECORD_COUNT: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Inbound {
    Pose { angles: Vec<f64>, wrist: Vec<f64> },
    Preset { gesture: usize },
    Record { label: usize, count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Outbound {
    Hello {
        words: Vec<String>,
        rom: Vec<f64>,
    },
    Frame {
        voltages: Vec<f64>,
        codes: Vec<u16>,
        probs: Vec<f64>,
        word: String,
    },
    Recorded {
        label: usize,
        count: usize,
        total: usize,
    },
    Error {
        reason: String,
    },
}

impl Outbound {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("outbound messages always serialize")
    }

    pub fn error(reason: impl Into<String>) -> Self {
        Outbound::Error {
            reason: reason.into(),
        }
    }
}

/// State of one UI session.
pub struct Session {
    display_model: GloveModel,
    record_model: GloveModel,
    rom: RomTable,
    profile: AnthropometricProfile,
    vocab: Vocabulary,
    words: WordMap,
    inference: InferenceModel,
    rng: ChaCha8Rng,
    current: HandPose,
    recorded: Vec<SampleRecord>,
}

impl Session {
    /// Pose replies use the noise-free model; recordings use `model` as
    /// given.
    pub fn new(
        model: GloveModel,
        rom: RomTable,
        vocab: Vocabulary,
        words: WordMap,
        inference: InferenceModel,
        seed: u64,
    ) -> Self {
        Self {
            display_model: model.noiseless(),
            record_model: model,
            rom,
            profile: AnthropometricProfile::reference(),
            vocab,
            words,
            inference,
            rng: ChaCha8Rng::seed_from_u64(seed),
            current: HandPose::extended(),
            recorded: Vec::new(),
        }
    }

    pub fn hello(&self) -> Outbound {
        Outbound::Hello {
            words: (0..self.words.len())
                .map(|c| self.words.word(c).unwrap_or_default().to_string())
                .collect(),
            rom: canonical_joint_order()
                .iter()
                .map(|j| self.rom.max_for(*j))
                .collect(),
        }
    }

    /// Samples captured by record commands so far.
    pub fn recorded(&self) -> &[SampleRecord] {
        &self.recorded
    }

    pub fn recorded_dataset(&self) -> Option<GestureDataset> {
        GestureDataset::new(self.vocab.len(), self.recorded.clone()).ok()
    }

    /// Handles one inbound line; always produces exactly one reply.
    pub fn handle_line(&mut self, line: &str) -> Outbound {
        match serde_json::from_str::<Inbound>(line.trim()) {
            Ok(msg) => self.handle(msg),
            Err(e) => Outbound::error(format!("malformed message: {e}")),
        }
    }

    pub fn handle(&mut self, msg: Inbound) -> Outbound {
        match msg {
            Inbound::Pose { angles, wrist } => {
                let Ok(angles) = <[f64; JOINT_COUNT]>::try_from(angles.as_slice()) else {
                    return Outbound::error(format!("pose needs {JOINT_COUNT} angles"));
                };
                let Ok(wrist) = <[f64; 3]>::try_from(wrist.as_slice()) else {
                    return Outbound::error("wrist needs 3 angles");
                };
                self.show(HandPose::new(angles, Wrist::from(wrist)))
            }
            Inbound::Preset { gesture } => match self.vocab.get(gesture) {
                Some(g) => {
                    let pose = g.canonical_pose.clone();
                    self.show(pose)
                }
                None => Outbound::error(format!("unknown gesture {gesture}")),
            },
            Inbound::Record { label, count } => self.record(label, count),
        }
    }

    fn show(&mut self, pose: HandPose) -> Outbound {
        let scan = match mux_scan(&pose, &self.profile, &self.display_model, &self.rom, &mut self.rng) {
            Ok(s) => s,
            Err(e) => return Outbound::error(e.to_string()),
        };
        let imu = imu_sample(pose.wrist, &self.display_model.imu, &mut self.rng);
        let frame = SensorFrame {
            codes: scan.codes,
            imu,
        };
        let x = self.inference.normalization.normalize(&frame);
        let probs = match forward(&self.inference.params, &x) {
            Ok(a) => a.output,
            Err(e) => return Outbound::error(e.to_string()),
        };
        let word = classify(&probs)
            .ok()
            .and_then(|c| self.words.word(c.class_index))
            .unwrap_or_default()
            .to_string();
        self.current = pose;
        Outbound::Frame {
            voltages: scan.voltages.to_vec(),
            codes: scan.codes.to_vec(),
            probs,
            word,
        }
    }

    fn record(&mut self, label: usize, count: usize) -> Outbound {
        if label >= self.vocab.len() {
            return Outbound::error(format!("unknown label {label}"));
        }
        if count == 0 || count > MAX_RECORD_COUNT {
            return Outbound::error(format!("count must be in 1..={MAX_RECORD_COUNT}"));
        }
        for _ in 0..count {
            let frame = match simulate_frame(
                &self.current,
                &self.profile,
                &self.record_model,
                &self.rom,
                &mut self.rng,
            ) {
                Ok(f) => f,
                Err(e) => return Outbound::error(e.to_string()),
            };
            self.recorded.push(SampleRecord {
                subject_id: "operator".into(),
                label,
                frame,
                sequence: self.recorded.len() as u64,
            });
        }
        Outbound::Recorded {
            label,
            count,
            total: self.recorded.len(),
        }
    }
}

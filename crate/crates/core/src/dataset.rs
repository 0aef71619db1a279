//! Labeled sample storage, synthetic multi-subject generation, stream
//! recording and train/validation splits.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::firmware::{parse_frame, FrameError, WireFrame, MAX_WIRE_CODE};
use crate::hand::{subject_profiles, HandPose, RomTable, Vocabulary, JOINT_COUNT};
use crate::numfmt::sig9;
use crate::physics::{simulate_frame, GloveModel, PhysicsError, SensorFrame, IMU_CHANNELS};
use crate::error::ConfigError;

/// Exact CSV header line.
pub const CSV_HEADER: &str =
    "subject,label,h0,h1,h2,h3,h4,h5,h6,h7,h8,h9,h10,h11,h12,h13,ax,ay,az,gx,gy,gz";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: label {label} not in vocabulary of {classes}")]
    UnknownLabel {
        line: usize,
        label: usize,
        classes: usize,
    },
    #[error("class {class} has {count} samples, need at least 2")]
    TooFewSamples { class: usize, count: usize },
    #[error("subject {0:?} not present in dataset")]
    UnknownSubject(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub subject_id: String,
    pub label: usize,
    pub frame: SensorFrame,
    pub sequence: u64,
}

fn valid_subject(id: &str) -> bool {
    !id.is_empty() && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

/// Records plus the number of classes they are labeled against.
/// Record sequence numbers always equal their position.
#[derive(Debug, Clone, PartialEq)]
pub struct GestureDataset {
    n_classes: usize,
    records: Vec<SampleRecord>,
}

impl GestureDataset {
    pub fn new(n_classes: usize, mut records: Vec<SampleRecord>) -> Result<Self, DatasetError> {
        for (i, r) in records.iter_mut().enumerate() {
            if r.label >= n_classes {
                return Err(DatasetError::UnknownLabel {
                    line: i + 2,
                    label: r.label,
                    classes: n_classes,
                });
            }
            if !valid_subject(&r.subject_id) {
                return Err(DatasetError::InvalidRecord(format!(
                    "subject id {:?} must be alphanumeric",
                    r.subject_id
                )));
            }
            if r.frame.codes.iter().any(|c| *c > MAX_WIRE_CODE) {
                return Err(DatasetError::InvalidRecord(format!("ADC code above {MAX_WIRE_CODE}")));
            }
            if r.frame.imu.iter().any(|v| !v.is_finite()) {
                return Err(DatasetError::InvalidRecord("non-finite IMU value".into()));
            }
            r.sequence = i as u64;
        }
        Ok(Self { n_classes, records })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Subset by record positions, renumbered.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let records = indices
            .iter()
            .enumerate()
            .map(|(i, &j)| SampleRecord {
                sequence: i as u64,
                ..self.records[j].clone()
            })
            .collect();
        Self {
            n_classes: self.n_classes,
            records,
        }
    }

    /// Distinct subject ids in order of first appearance.
    pub fn subjects(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.records {
            if !out.contains(&r.subject_id) {
                out.push(r.subject_id.clone());
            }
        }
        out
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for r in &self.records {
            counts[r.label] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub reps_per_gesture: usize,
    /// Per-joint Gaussian jitter, degrees.
    pub angle_jitter: f64,
    /// Per-axis wrist jitter, degrees.
    pub wrist_jitter: f64,
    /// Sensor noise on or off.
    pub noise: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_subjects: 5,
            reps_per_gesture: 40,
            angle_jitter: 4.0,
            wrist_jitter: 5.0,
            noise: true,
            seed: 42,
        }
    }
}

/// Jitters a canonical pose and clamps it back into range.
pub fn perturb_pose<R: Rng + ?Sized>(
    pose: &HandPose,
    angle_sigma: f64,
    wrist_sigma: f64,
    rom: &RomTable,
    rng: &mut R,
) -> HandPose {
    let mut out = pose.clone();
    for a in out.angles.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *a += angle_sigma * z;
    }
    for w in [&mut out.wrist.roll, &mut out.wrist.pitch, &mut out.wrist.yaw] {
        let z: f64 = rng.sample(StandardNormal);
        *w += wrist_sigma * z;
    }
    rom.clamp(&out)
}

/// Simulated recording sessions: every subject performs every gesture
/// `reps_per_gesture` times. Order is subject, gesture, repetition.
pub fn generate_synthetic(
    vocab: &Vocabulary,
    model: &GloveModel,
    rom: &RomTable,
    config: &SynthConfig,
) -> Result<GestureDataset, DatasetError> {
    if config.reps_per_gesture == 0 {
        return Err(ConfigError::Invalid("reps_per_gesture must be at least 1".into()).into());
    }
    if !(config.angle_jitter >= 0.0 && config.wrist_jitter >= 0.0) {
        return Err(ConfigError::Invalid("jitter must be non-negative".into()).into());
    }
    let model = if config.noise {
        model.clone()
    } else {
        model.noiseless()
    };
    let profiles = subject_profiles(config.n_subjects)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut records =
        Vec::with_capacity(vocab.len() * config.n_subjects * config.reps_per_gesture);
    for profile in &profiles {
        for gesture in vocab.gestures() {
            for _ in 0..config.reps_per_gesture {
                let pose = perturb_pose(
                    &gesture.canonical_pose,
                    config.angle_jitter,
                    config.wrist_jitter,
                    rom,
                    &mut rng,
                );
                let frame = simulate_frame(&pose, profile, &model, rom, &mut rng)?;
                records.push(SampleRecord {
                    subject_id: profile.subject_id.clone(),
                    label: gesture.class_index,
                    frame,
                    sequence: records.len() as u64,
                });
            }
        }
    }
    GestureDataset::new(vocab.len(), records)
}

pub fn write_csv<W: Write>(dataset: &GestureDataset, mut out: W) -> std::io::Result<()> {
    out.write_all(CSV_HEADER.as_bytes())?;
    out.write_all(b"\n")?;
    let mut line = String::with_capacity(160);
    for r in dataset.records() {
        line.clear();
        line.push_str(&r.subject_id);
        line.push(',');
        line.push_str(&r.label.to_string());
        for c in r.frame.codes {
            line.push(',');
            line.push_str(&c.to_string());
        }
        for v in r.frame.imu {
            line.push(',');
            line.push_str(&sig9(v));
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    out.flush()
}

pub fn read_csv<R: BufRead>(input: R, n_classes: usize) -> Result<GestureDataset, DatasetError> {
    let mut lines = input.lines();
    match lines.next().transpose()? {
        Some(header) if header.trim_end_matches('\r') == CSV_HEADER => {}
        _ => {
            return Err(DatasetError::Malformed {
                line: 1,
                reason: format!("expected header {CSV_HEADER:?}"),
            })
        }
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let malformed = |reason: String| DatasetError::Malformed {
            line: line_no,
            reason,
        };
        let fields: Vec<&str> = line.split(',').collect();
        let expected = 2 + JOINT_COUNT + IMU_CHANNELS;
        if fields.len() != expected {
            return Err(malformed(format!(
                "expected {expected} fields, got {}",
                fields.len()
            )));
        }
        let subject_id = fields[0].to_string();
        if !valid_subject(&subject_id) {
            return Err(malformed(format!("bad subject id {subject_id:?}")));
        }
        let label: usize = fields[1]
            .parse()
            .map_err(|_| malformed(format!("bad label {:?}", fields[1])))?;
        if label >= n_classes {
            return Err(DatasetError::UnknownLabel {
                line: line_no,
                label,
                classes: n_classes,
            });
        }
        let mut codes = [0u16; JOINT_COUNT];
        for (k, c) in codes.iter_mut().enumerate() {
            let f = fields[2 + k];
            *c = f
                .parse::<u16>()
                .ok()
                .filter(|v| *v <= MAX_WIRE_CODE)
                .ok_or_else(|| malformed(format!("bad ADC code {f:?} in h{k}")))?;
        }
        let mut imu = [0.0; IMU_CHANNELS];
        for (k, v) in imu.iter_mut().enumerate() {
            let f = fields[2 + JOINT_COUNT + k];
            *v = f
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| malformed(format!("bad IMU value {f:?}")))?;
        }
        records.push(SampleRecord {
            subject_id,
            label,
            frame: SensorFrame { codes, imu },
            sequence: records.len() as u64,
        });
    }
    GestureDataset::new(n_classes, records)
}

/// Outcome of recording labeled samples from a wire stream.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamCapture {
    pub records: Vec<SampleRecord>,
    /// (line number, error) for every data-like line that failed to parse.
    pub rejected: Vec<(usize, FrameError)>,
    /// False if the source ended before `count` frames arrived.
    pub complete: bool,
}

/// Reads frames until `count` data frames have been captured. State and
/// gesture frames are ignored; malformed lines are skipped and reported.
pub fn record_from_stream<R: BufRead>(
    source: R,
    subject_id: &str,
    label: usize,
    count: usize,
) -> std::io::Result<StreamCapture> {
    let mut capture = StreamCapture {
        records: Vec::with_capacity(count),
        rejected: Vec::new(),
        complete: count == 0,
    };
    if count == 0 {
        return Ok(capture);
    }
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        match parse_frame(&line) {
            Ok(WireFrame::Data { seq, frame }) => {
                capture.records.push(SampleRecord {
                    subject_id: subject_id.to_string(),
                    label,
                    frame,
                    sequence: u64::from(seq),
                });
                if capture.records.len() == count {
                    capture.complete = true;
                    break;
                }
            }
            Ok(_) => {}
            Err(e) => capture.rejected.push((i + 1, e)),
        }
    }
    Ok(capture)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitMode {
    StratifiedRandom { val_fraction: f64 },
    LeaveOneSubjectOut { subject_id: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub seed: u64,
}

impl SplitSpec {
    pub fn stratified(val_fraction: f64, seed: u64) -> Self {
        Self {
            mode: SplitMode::StratifiedRandom { val_fraction },
            seed,
        }
    }

    pub fn leave_out(subject_id: impl Into<String>) -> Self {
        Self {
            mode: SplitMode::LeaveOneSubjectOut {
                subject_id: subject_id.into(),
            },
            seed: 0,
        }
    }
}

/// Record positions of the two halves of a split, each in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

pub fn split_indices(dataset: &GestureDataset, spec: &SplitSpec) -> Result<SplitIndices, DatasetError> {
    for (class, count) in dataset.class_counts().into_iter().enumerate() {
        if count < 2 {
            return Err(DatasetError::TooFewSamples { class, count });
        }
    }
    let mut val = match &spec.mode {
        SplitMode::StratifiedRandom { val_fraction } => {
            if !(*val_fraction > 0.0 && *val_fraction < 1.0) {
                return Err(DatasetError::InvalidSplit(format!(
                    "val_fraction {val_fraction} outside (0, 1)"
                )));
            }
            let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for (i, r) in dataset.records().iter().enumerate() {
                by_class.entry(r.label).or_default().push(i);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let mut val = Vec::new();
            for (_, mut members) in by_class {
                members.shuffle(&mut rng);
                let n = members.len();
                let take = ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1);
                val.extend_from_slice(&members[..take]);
            }
            val
        }
        SplitMode::LeaveOneSubjectOut { subject_id } => {
            let val: Vec<usize> = dataset
                .records()
                .iter()
                .enumerate()
                .filter(|(_, r)| &r.subject_id == subject_id)
                .map(|(i, _)| i)
                .collect();
            if val.is_empty() {
                return Err(DatasetError::UnknownSubject(subject_id.clone()));
            }
            if val.len() == dataset.len() {
                return Err(DatasetError::InvalidSplit(
                    "held-out subject is the whole dataset".into(),
                ));
            }
            val
        }
    };
    val.sort_unstable();
    let mut in_val = vec![false; dataset.len()];
    for &i in &val {
        in_val[i] = true;
    }
    let train = (0..dataset.len()).filter(|i| !in_val[*i]).collect();
    Ok(SplitIndices { train, val })
}

pub fn split(
    dataset: &GestureDataset,
    spec: &SplitSpec,
) -> Result<(GestureDataset, GestureDataset), DatasetError> {
    let idx = split_indices(dataset, spec)?;
    Ok((dataset.subset(&idx.train), dataset.subset(&idx.val)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hand::{default_rom, default_vocabulary};

    fn small() -> GestureDataset {
        let cfg = SynthConfig {
            reps_per_gesture: 4,
            ..Default::default()
        };
        generate_synthetic(&default_vocabulary(), &GloveModel::default(), &default_rom(), &cfg)
            .unwrap()
    }

    #[test]
    fn record_counts() {
        let d = generate_synthetic(
            &default_vocabulary(),
            &GloveModel::default(),
            &default_rom(),
            &SynthConfig::default(),
        )
        .unwrap();
        assert_eq!(d.len(), 2200);
        assert_eq!(d.subjects().len(), 5);
        assert!(d.class_counts().iter().all(|c| *c == 200));
    }

    #[test]
    fn no_jitter_no_noise_reps_identical() {
        let cfg = SynthConfig {
            reps_per_gesture: 3,
            angle_jitter: 0.0,
            wrist_jitter: 0.0,
            noise: false,
            ..Default::default()
        };
        let d = generate_synthetic(&default_vocabulary(), &GloveModel::default(), &default_rom(), &cfg)
            .unwrap();
        for chunk in d.records().chunks(3) {
            assert!(chunk.iter().all(|r| r.frame == chunk[0].frame));
        }
    }

    #[test]
    fn generation_is_seeded() {
        assert_eq!(small(), small());
        let other = generate_synthetic(
            &default_vocabulary(),
            &GloveModel::default(),
            &default_rom(),
            &SynthConfig {
                reps_per_gesture: 4,
                seed: 7,
                ..Default::default()
            },
        )
        .unwrap();
        assert_ne!(small(), other);
    }

    #[test]
    fn csv_header_and_round_trip() {
        let d = small();
        let mut buf = Vec::new();
        write_csv(&d, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(
            "subject,label,h0,h1,h2,h3,h4,h5,h6,h7,h8,h9,h10,h11,h12,h13,ax,ay,az,gx,gy,gz\n"
        ));
        let back = read_csv(buf.as_slice(), d.n_classes()).unwrap();
        assert_eq!(back.len(), d.len());
        for (a, b) in back.records().iter().zip(d.records()) {
            assert_eq!(a.subject_id, b.subject_id);
            assert_eq!(a.label, b.label);
            assert_eq!(a.frame.codes, b.frame.codes);
            for (x, y) in a.frame.imu.iter().zip(b.frame.imu) {
                assert!((x - y).abs() <= 1e-6);
            }
        }
        // Values already at 9 significant digits survive exactly.
        let mut again = Vec::new();
        write_csv(&back, &mut again).unwrap();
        assert_eq!(again, buf);
        assert_eq!(read_csv(again.as_slice(), d.n_classes()).unwrap(), back);
    }

    #[test]
    fn csv_errors_name_lines() {
        let mut row = String::from("s1,0");
        for _ in 0..13 {
            row.push_str(",100");
        }
        row.push_str(",0,0,1,0,0,0");
        let text = format!("{CSV_HEADER}\n{row}\n");
        match read_csv(text.as_bytes(), 11) {
            Err(DatasetError::Malformed { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        let good_row = row.replacen("s1,0", "s1,0,100", 1);
        let text = format!("{CSV_HEADER}\n{good_row}\n{}\n", good_row.replacen("s1,0", "s1,11", 1));
        match read_csv(text.as_bytes(), 11) {
            Err(DatasetError::UnknownLabel { line: 3, label: 11, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(read_csv("nope\n".as_bytes(), 11).is_err());
    }

    #[test]
    fn stream_capture() {
        let frame = SensorFrame {
            codes: [300; 14],
            imu: [0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        };
        let mut text = String::from("S,BOOT\n");
        for seq in 0..11u32 {
            if seq == 4 {
                text.push_str("D,4,garbage\n");
            } else {
                text.push_str(&crate::firmware::encode_frame(&WireFrame::Data { seq, frame }));
            }
        }
        let cap = record_from_stream(text.as_bytes(), "op", 3, 10).unwrap();
        assert_eq!(cap.records.len(), 10);
        assert_eq!(cap.rejected.len(), 1);
        assert!(cap.complete);
        assert!(cap.records.iter().all(|r| r.label == 3));
        let seqs: Vec<u64> = cap.records.iter().map(|r| r.sequence).collect();
        assert_eq!(seqs, vec![0, 1, 2, 3, 5, 6, 7, 8, 9, 10]);

        let cap = record_from_stream(text.as_bytes(), "op", 3, 20).unwrap();
        assert!(!cap.complete);
        assert_eq!(cap.records.len(), 10);
    }

    #[test]
    fn stratified_split() {
        let d = generate_synthetic(
            &default_vocabulary(),
            &GloveModel::default(),
            &default_rom(),
            &SynthConfig::default(),
        )
        .unwrap();
        let spec = SplitSpec::stratified(0.2, 42);
        let idx = split_indices(&d, &spec).unwrap();
        assert_eq!(idx.val.len(), 440);
        assert_eq!(idx.train.len() + idx.val.len(), d.len());
        assert_eq!(split_indices(&d, &spec).unwrap(), idx);
        let (_, val) = split(&d, &spec).unwrap();
        assert!(val.class_counts().iter().all(|c| *c == 40));

        let loso = split_indices(&d, &SplitSpec::leave_out("s3")).unwrap();
        assert_eq!(loso.val.len(), 440);
        assert!(loso.val.iter().all(|&i| d.records()[i].subject_id == "s3"));
        assert!(split_indices(&d, &SplitSpec::leave_out("nobody")).is_err());
    }

    #[test]
    fn split_rejects_sparse_classes() {
        let d = small();
        let keep: Vec<usize> = (0..d.len()).filter(|&i| d.records()[i].label != 0 || i == 0).collect();
        let sparse = d.subset(&keep);
        assert!(matches!(
            split_indices(&sparse, &SplitSpec::stratified(0.2, 1)),
            Err(DatasetError::TooFewSamples { class: 0, count: 1 })
        ));
    }
}

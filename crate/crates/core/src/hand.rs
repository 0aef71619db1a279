//! Hand kinematics: joint layout, poses, range of motion, anthropometric
//! scaling and the gesture vocabulary.

use std::fmt;

use serde::Deserialize;

use crate::error::ConfigError;
use crate::physics::MagnetPairGeometry;

/// Number of instrumented joints (and Hall channels).
pub const JOINT_COUNT: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Finger {
    Thumb,
    Index,
    Middle,
    Ring,
    Little,
}

impl Finger {
    pub const ALL: [Finger; 5] = [
        Finger::Thumb,
        Finger::Index,
        Finger::Middle,
        Finger::Ring,
        Finger::Little,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Finger::Thumb => "thumb",
            Finger::Index => "index",
            Finger::Middle => "middle",
            Finger::Ring => "ring",
            Finger::Little => "little",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Joint {
    Mcp,
    Pip,
    Dip,
    /// Thumb interphalangeal joint.
    Ip,
}

impl Joint {
    pub fn name(self) -> &'static str {
        match self {
            Joint::Mcp => "MCP",
            Joint::Pip => "PIP",
            Joint::Dip => "DIP",
            Joint::Ip => "IP",
        }
    }
}

/// A sensed joint. Only the 14 admissible finger/joint pairs can be built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct JointId {
    finger: Finger,
    joint: Joint,
}

impl JointId {
    pub fn new(finger: Finger, joint: Joint) -> Option<Self> {
        let admissible = match finger {
            Finger::Thumb => matches!(joint, Joint::Mcp | Joint::Ip),
            _ => matches!(joint, Joint::Mcp | Joint::Pip | Joint::Dip),
        };
        admissible.then_some(Self { finger, joint })
    }

    pub fn finger(self) -> Finger {
        self.finger
    }

    pub fn joint(self) -> Joint {
        self.joint
    }

    /// Position in [`canonical_joint_order`], which is also the mux channel.
    pub fn index(self) -> usize {
        let finger_base = match self.finger {
            Finger::Thumb => 0,
            Finger::Index => 2,
            Finger::Middle => 5,
            Finger::Ring => 8,
            Finger::Little => 11,
        };
        let offset = match self.joint {
            Joint::Mcp => 0,
            Joint::Pip | Joint::Ip => 1,
            Joint::Dip => 2,
        };
        finger_base + offset
    }
}

impl fmt::Display for JointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.finger.name(), self.joint.name())
    }
}

/// Thumb (MCP, IP), then index, middle, ring, little each (MCP, PIP, DIP).
/// Element `i` is sampled on mux channel `Ci`.
pub fn canonical_joint_order() -> [JointId; JOINT_COUNT] {
    let mut out = [JointId {
        finger: Finger::Thumb,
        joint: Joint::Mcp,
    }; JOINT_COUNT];
    let mut i = 0;
    for finger in Finger::ALL {
        let joints: &[Joint] = if finger == Finger::Thumb {
            &[Joint::Mcp, Joint::Ip]
        } else {
            &[Joint::Mcp, Joint::Pip, Joint::Dip]
        };
        for &joint in joints {
            out[i] = JointId { finger, joint };
            i += 1;
        }
    }
    out
}

/// Wrist orientation in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Wrist {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Wrist {
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self { roll, pitch, yaw }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.roll, self.pitch, self.yaw]
    }
}

impl From<[f64; 3]> for Wrist {
    fn from(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

/// Joint flexion angles (degrees, 0 = full extension) in canonical order,
/// plus wrist orientation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HandPose {
    pub angles: [f64; JOINT_COUNT],
    pub wrist: Wrist,
}

impl HandPose {
    pub fn new(angles: [f64; JOINT_COUNT], wrist: Wrist) -> Self {
        Self { angles, wrist }
    }

    /// Fully extended hand, level wrist.
    pub fn extended() -> Self {
        Self::default()
    }

    pub fn angle(&self, joint: JointId) -> f64 {
        self.angles[joint.index()]
    }

    pub fn set_angle(&mut self, joint: JointId, degrees: f64) {
        self.angles[joint.index()] = degrees;
    }
}

/// Maximum flexion per joint class, degrees. Minimum is always 0.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RomTable {
    pub mcp: f64,
    pub pip: f64,
    pub dip: f64,
    pub thumb_ip: f64,
}

impl Default for RomTable {
    fn default() -> Self {
        Self {
            mcp: 90.0,
            pip: 110.0,
            dip: 80.0,
            thumb_ip: 80.0,
        }
    }
}

impl RomTable {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let rom: RomTable = toml::from_str(text)?;
        for (name, v) in [
            ("mcp", rom.mcp),
            ("pip", rom.pip),
            ("dip", rom.dip),
            ("thumb_ip", rom.thumb_ip),
        ] {
            if !(v > 0.0 && v <= 180.0) {
                return Err(ConfigError::Invalid(format!(
                    "rom.{name} must be in (0, 180], got {v}"
                )));
            }
        }
        Ok(rom)
    }

    pub fn max_for(&self, joint: JointId) -> f64 {
        match joint.joint() {
            Joint::Mcp => self.mcp,
            Joint::Pip => self.pip,
            Joint::Dip => self.dip,
            Joint::Ip => self.thumb_ip,
        }
    }

    /// Clamp every joint into its range and the wrist into [-180, 180].
    pub fn clamp(&self, pose: &HandPose) -> HandPose {
        let mut out = pose.clone();
        for joint in canonical_joint_order() {
            let a = out.angles[joint.index()];
            out.angles[joint.index()] = if a.is_nan() {
                0.0
            } else {
                a.clamp(0.0, self.max_for(joint))
            };
        }
        let clamp_wrist = |v: f64| if v.is_nan() { 0.0 } else { v.clamp(-180.0, 180.0) };
        out.wrist = Wrist::new(
            clamp_wrist(out.wrist.roll),
            clamp_wrist(out.wrist.pitch),
            clamp_wrist(out.wrist.yaw),
        );
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PoseViolation {
    JointOutOfRange { joint: JointId, angle: f64, max: f64 },
    WristOutOfRange { axis: &'static str, angle: f64 },
}

impl fmt::Display for PoseViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PoseViolation::JointOutOfRange { joint, angle, max } => {
                write!(f, "{joint} angle {angle} outside [0, {max}]")
            }
            PoseViolation::WristOutOfRange { axis, angle } => {
                write!(f, "wrist {axis} {angle} outside [-180, 180]")
            }
        }
    }
}

/// Checks every joint against the ROM table and the wrist against
/// [-180, 180]. NaN is always a violation.
pub fn validate_pose(pose: &HandPose, rom: &RomTable) -> Result<(), Vec<PoseViolation>> {
    let mut violations = Vec::new();
    for joint in canonical_joint_order() {
        let angle = pose.angle(joint);
        let max = rom.max_for(joint);
        if !(0.0..=max).contains(&angle) {
            violations.push(PoseViolation::JointOutOfRange { joint, angle, max });
        }
    }
    for (axis, angle) in [
        ("roll", pose.wrist.roll),
        ("pitch", pose.wrist.pitch),
        ("yaw", pose.wrist.yaw),
    ] {
        if !(-180.0..=180.0).contains(&angle) {
            violations.push(PoseViolation::WristOutOfRange { axis, angle });
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

pub const MIN_SCALE: f64 = 0.8;
pub const MAX_SCALE: f64 = 1.2;

/// Shipped hand-size percentile table: (percentile, geometry scale).
pub const PERCENTILE_SCALES: [(f64, f64); 3] = [(25.0, 0.92), (50.0, 1.00), (75.0, 1.08)];

#[derive(Debug, Clone, PartialEq)]
pub struct AnthropometricProfile {
    pub subject_id: String,
    scale: f64,
}

impl AnthropometricProfile {
    pub fn new(subject_id: impl Into<String>, scale: f64) -> Result<Self, ConfigError> {
        if !(MIN_SCALE..=MAX_SCALE).contains(&scale) {
            return Err(ConfigError::Invalid(format!(
                "anthropometric scale {scale} outside [{MIN_SCALE}, {MAX_SCALE}]"
            )));
        }
        Ok(Self {
            subject_id: subject_id.into(),
            scale,
        })
    }

    pub fn from_percentile(
        subject_id: impl Into<String>,
        percentile: f64,
    ) -> Result<Self, ConfigError> {
        Self::new(subject_id, percentile_scale(percentile)?)
    }

    /// Reference (50th percentile) hand.
    pub fn reference() -> Self {
        Self {
            subject_id: "ref".into(),
            scale: 1.0,
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// Linear interpolation in [`PERCENTILE_SCALES`]; the end segments are
/// extended linearly for percentiles outside 25..75.
pub fn percentile_scale(percentile: f64) -> Result<f64, ConfigError> {
    if !(0.0..=100.0).contains(&percentile) {
        return Err(ConfigError::Invalid(format!(
            "percentile {percentile} outside [0, 100]"
        )));
    }
    let t = &PERCENTILE_SCALES;
    let seg = if percentile <= t[1].0 { 0 } else { 1 };
    let (p0, s0) = t[seg];
    let (p1, s1) = t[seg + 1];
    Ok(s0 + (percentile - p0) * (s1 - s0) / (p1 - p0))
}

/// `n` subjects with percentiles evenly spread over 25th..75th.
pub fn subject_profiles(n: usize) -> Result<Vec<AnthropometricProfile>, ConfigError> {
    if n == 0 {
        return Err(ConfigError::Invalid("need at least one subject".into()));
    }
    (0..n)
        .map(|i| {
            let p = if n == 1 {
                50.0
            } else {
                25.0 + 50.0 * i as f64 / (n - 1) as f64
            };
            AnthropometricProfile::from_percentile(format!("s{}", i + 1), p)
        })
        .collect()
}

/// Mount gap and height scale with hand size; the dipole strength does not.
pub fn scaled_geometry(
    base: &MagnetPairGeometry,
    profile: &AnthropometricProfile,
) -> MagnetPairGeometry {
    MagnetPairGeometry {
        gap: base.gap * profile.scale,
        mount_height: base.mount_height * profile.scale,
        dipole_coeff: base.dipole_coeff,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GestureDefinition {
    pub name: String,
    pub canonical_pose: HandPose,
    pub class_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    gestures: Vec<GestureDefinition>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct VocabularyFile {
    gesture: Vec<GestureEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GestureEntry {
    word: String,
    angles: Vec<f64>,
    #[serde(default)]
    wrist: [f64; 3],
}

pub const DEFAULT_VOCABULARY: &str = include_str!("../config/vocabulary.toml");
pub const DEFAULT_ROM: &str = include_str!("../config/rom.toml");

impl Vocabulary {
    /// Builds a vocabulary; class indices are assigned from list position.
    pub fn new(gestures: Vec<(String, HandPose)>, rom: &RomTable) -> Result<Self, ConfigError> {
        if gestures.is_empty() {
            return Err(ConfigError::Invalid("vocabulary is empty".into()));
        }
        let mut out = Vec::with_capacity(gestures.len());
        for (class_index, (name, pose)) in gestures.into_iter().enumerate() {
            if name.is_empty() || name.contains(|c: char| c.is_whitespace() || c == ',') {
                return Err(ConfigError::Invalid(format!(
                    "gesture word {name:?} must be non-empty without whitespace or commas"
                )));
            }
            if out.iter().any(|g: &GestureDefinition| g.name == name) {
                return Err(ConfigError::Invalid(format!("duplicate gesture word {name:?}")));
            }
            if let Err(v) = validate_pose(&pose, rom) {
                return Err(ConfigError::Invalid(format!(
                    "gesture {name:?}: {}",
                    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
                )));
            }
            out.push(GestureDefinition {
                name,
                canonical_pose: pose,
                class_index,
            });
        }
        Ok(Self { gestures: out })
    }

    pub fn from_toml(text: &str, rom: &RomTable) -> Result<Self, ConfigError> {
        let file: VocabularyFile = toml::from_str(text)?;
        let mut gestures = Vec::with_capacity(file.gesture.len());
        for entry in file.gesture {
            let angles: [f64; JOINT_COUNT] = entry.angles.as_slice().try_into().map_err(|_| {
                ConfigError::Invalid(format!(
                    "gesture {:?}: expected {JOINT_COUNT} angles, got {}",
                    entry.word,
                    entry.angles.len()
                ))
            })?;
            gestures.push((entry.word, HandPose::new(angles, entry.wrist.into())));
        }
        Self::new(gestures, rom)
    }

    pub fn gestures(&self) -> &[GestureDefinition] {
        &self.gestures
    }

    pub fn len(&self) -> usize {
        self.gestures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gestures.is_empty()
    }

    pub fn get(&self, class_index: usize) -> Option<&GestureDefinition> {
        self.gestures.get(class_index)
    }

    pub fn by_name(&self, name: &str) -> Option<&GestureDefinition> {
        self.gestures.iter().find(|g| g.name == name)
    }
}

/// The shipped ROM table.
pub fn default_rom() -> RomTable {
    RomTable::from_toml(DEFAULT_ROM).expect("shipped rom.toml is valid")
}

/// The shipped 11-word vocabulary.
pub fn default_vocabulary() -> Vocabulary {
    Vocabulary::from_toml(DEFAULT_VOCABULARY, &default_rom()).expect("shipped vocabulary is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn joint_order_has_fourteen_entries_two_for_thumb() {
        let order = canonical_joint_order();
        assert_eq!(order.len(), 14);
        assert_eq!(order.iter().filter(|j| j.finger() == Finger::Thumb).count(), 2);
        assert_eq!(order, canonical_joint_order());
    }

    #[test]
    fn joint_order_is_a_bijection() {
        let order = canonical_joint_order();
        for (i, j) in order.iter().enumerate() {
            assert_eq!(j.index(), i);
        }
        let mut all = HashSet::new();
        for f in Finger::ALL {
            for j in [Joint::Mcp, Joint::Pip, Joint::Dip, Joint::Ip] {
                if let Some(id) = JointId::new(f, j) {
                    all.insert(id);
                }
            }
        }
        assert_eq!(all.len(), 14);
        assert_eq!(all, order.iter().copied().collect());
    }

    #[test]
    fn thumb_has_no_pip_and_fingers_no_ip() {
        assert!(JointId::new(Finger::Thumb, Joint::Pip).is_none());
        assert!(JointId::new(Finger::Thumb, Joint::Dip).is_none());
        assert!(JointId::new(Finger::Index, Joint::Ip).is_none());
    }

    #[test]
    fn validate_pose_cases() {
        let rom = default_rom();
        assert!(validate_pose(&HandPose::extended(), &rom).is_ok());

        let idx_dip = JointId::new(Finger::Index, Joint::Dip).unwrap();
        let mut pose = HandPose::extended();
        pose.set_angle(idx_dip, -5.0);
        let v = validate_pose(&pose, &rom).unwrap_err();
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], PoseViolation::JointOutOfRange { joint, .. } if joint == idx_dip));

        let idx_pip = JointId::new(Finger::Index, Joint::Pip).unwrap();
        let mut pose = HandPose::extended();
        pose.set_angle(idx_pip, 100.0);
        assert!(validate_pose(&pose, &rom).is_ok());

        let mut pose = HandPose::extended();
        pose.angles[7] = f64::NAN;
        pose.wrist.yaw = 190.0;
        assert_eq!(validate_pose(&pose, &rom).unwrap_err().len(), 2);
    }

    #[test]
    fn scaling_geometry() {
        let base = MagnetPairGeometry::new(0.005, 0.010, 1e-6).unwrap();
        let same = scaled_geometry(&base, &AnthropometricProfile::new("a", 1.0).unwrap());
        assert_eq!(same, base);
        let small = scaled_geometry(&base, &AnthropometricProfile::new("a", 0.9).unwrap());
        assert!((small.mount_height - 0.009).abs() < 1e-15);
        assert!((small.gap - 0.0045).abs() < 1e-15);
        assert_eq!(small.dipole_coeff, base.dipole_coeff);
        assert!(AnthropometricProfile::new("a", 1.3).is_err());
        assert!(AnthropometricProfile::new("a", 0.79).is_err());
    }

    #[test]
    fn percentile_lookup() {
        assert_eq!(percentile_scale(25.0).unwrap(), 0.92);
        assert_eq!(percentile_scale(50.0).unwrap(), 1.0);
        assert_eq!(percentile_scale(75.0).unwrap(), 1.08);
        assert!((percentile_scale(37.5).unwrap() - 0.96).abs() < 1e-12);
        let scales: Vec<f64> = subject_profiles(5)
            .unwrap()
            .iter()
            .map(|p| p.scale())
            .collect();
        assert_eq!(scales.first(), Some(&0.92));
        assert_eq!(scales.last(), Some(&1.08));
    }

    #[test]
    fn shipped_vocabulary_is_valid_and_separated() {
        let rom = default_rom();
        let vocab = default_vocabulary();
        assert_eq!(vocab.len(), 11);
        for (i, g) in vocab.gestures().iter().enumerate() {
            assert_eq!(g.class_index, i);
            assert!(validate_pose(&g.canonical_pose, &rom).is_ok());
        }
        for a in vocab.gestures() {
            for b in vocab.gestures() {
                if a.class_index >= b.class_index {
                    continue;
                }
                let separated = a
                    .canonical_pose
                    .angles
                    .iter()
                    .zip(b.canonical_pose.angles.iter())
                    .filter(|(x, y)| (*x - *y).abs() >= 20.0)
                    .count();
                assert!(separated >= 2, "{} vs {}: {separated}", a.name, b.name);
            }
        }
    }

    #[test]
    fn vocabulary_rejects_bad_entries() {
        let rom = default_rom();
        let short = "[[gesture]]\nword = \"a\"\nangles = [0.0, 1.0]\n";
        assert!(Vocabulary::from_toml(short, &rom).is_err());
        let dup = "[[gesture]]\nword = \"a\"\nangles = [0,0,0,0,0,0,0,0,0,0,0,0,0,0]\n\
                   [[gesture]]\nword = \"a\"\nangles = [0,0,0,0,0,0,0,0,0,0,0,0,0,0]\n";
        assert!(Vocabulary::from_toml(dup, &rom).is_err());
        let out_of_rom = "[[gesture]]\nword = \"a\"\nangles = [0,0,0,0,95,0,0,0,0,0,0,0,0,0]\n";
        assert!(Vocabulary::from_toml(out_of_rom, &rom).is_err());
    }
}

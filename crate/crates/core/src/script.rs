//! Pose scripts: timed sequences of named gestures or explicit poses.
//!
//! ```text
//! # comment
//! gesture <word> <seconds>
//! pose <seconds> <a0> ... <a13> <roll> <pitch> <yaw>
//! ```

use thiserror::Error;

use crate::hand::{validate_pose, HandPose, RomTable, Vocabulary, Wrist, JOINT_COUNT};

#[derive(Debug, Error, PartialEq)]
pub enum ScriptError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("line {line}: unknown gesture {name:?}")]
    UnknownGesture { line: usize, name: String },
    #[error("line {line}: pose out of range: {reason}")]
    InvalidPose { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptStep {
    pub pose: HandPose,
    pub seconds: f64,
    /// Class index when the step names a gesture.
    pub gesture: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseScript {
    pub steps: Vec<ScriptStep>,
}

fn parse_seconds(s: &str, line: usize) -> Result<f64, ScriptError> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(ScriptError::Syntax {
            line,
            reason: format!("bad duration {s:?}"),
        }),
    }
}

impl PoseScript {
    pub fn parse(text: &str, vocab: &Vocabulary, rom: &RomTable) -> Result<Self, ScriptError> {
        let mut steps = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let tokens: Vec<&str> = content.split_whitespace().collect();
            match tokens[0] {
                "gesture" => {
                    if tokens.len() != 3 {
                        return Err(ScriptError::Syntax {
                            line,
                            reason: "expected: gesture <word> <seconds>".into(),
                        });
                    }
                    let g = vocab.by_name(tokens[1]).ok_or_else(|| ScriptError::UnknownGesture {
                        line,
                        name: tokens[1].to_string(),
                    })?;
                    steps.push(ScriptStep {
                        pose: g.canonical_pose.clone(),
                        seconds: parse_seconds(tokens[2], line)?,
                        gesture: Some(g.class_index),
                    });
                }
                "pose" => {
                    if tokens.len() != 2 + JOINT_COUNT + 3 {
                        return Err(ScriptError::Syntax {
                            line,
                            reason: format!(
                                "expected: pose <seconds> <{JOINT_COUNT} angles> <roll> <pitch> <yaw>"
                            ),
                        });
                    }
                    let seconds = parse_seconds(tokens[1], line)?;
                    let values = tokens[2..]
                        .iter()
                        .map(|t| t.parse::<f64>())
                        .collect::<Result<Vec<f64>, _>>()
                        .map_err(|_| ScriptError::Syntax {
                            line,
                            reason: "non-numeric angle".into(),
                        })?;
                    let angles: [f64; JOINT_COUNT] = values[..JOINT_COUNT].try_into().unwrap();
                    let wrist = Wrist::new(
                        values[JOINT_COUNT],
                        values[JOINT_COUNT + 1],
                        values[JOINT_COUNT + 2],
                    );
                    let pose = HandPose::new(angles, wrist);
                    validate_pose(&pose, rom).map_err(|v| ScriptError::InvalidPose {
                        line,
                        reason: v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; "),
                    })?;
                    steps.push(ScriptStep {
                        pose,
                        seconds,
                        gesture: None,
                    });
                }
                other => {
                    return Err(ScriptError::Syntax {
                        line,
                        reason: format!("unknown directive {other:?}"),
                    })
                }
            }
        }
        Ok(Self { steps })
    }

    /// Number of ticks a step lasts at `rate` Hz.
    pub fn ticks_for(seconds: f64, rate: f64) -> usize {
        (seconds * rate).round() as usize
    }

    /// One pose per tick.
    pub fn expand(&self, rate: f64) -> impl Iterator<Item = HandPose> + '_ {
        self.steps
            .iter()
            .flat_map(move |s| std::iter::repeat_n(s.pose.clone(), Self::ticks_for(s.seconds, rate)))
    }

    pub fn total_ticks(&self, rate: f64) -> usize {
        self.steps.iter().map(|s| Self::ticks_for(s.seconds, rate)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hand::{default_rom, default_vocabulary};

    #[test]
    fn three_gestures_two_seconds() {
        let text = "# demo\ngesture namaste 2\ngesture water 2.0\n\ngesture peace 2 # trailing\n";
        let s = PoseScript::parse(text, &default_vocabulary(), &default_rom()).unwrap();
        assert_eq!(s.steps.len(), 3);
        assert_eq!(s.total_ticks(50.0), 300);
        assert_eq!(s.expand(50.0).count(), 300);
        assert_eq!(s.steps[1].gesture, Some(1));
    }

    #[test]
    fn explicit_pose() {
        let text = "pose 0.5 0 0 10 10 10 0 0 0 0 0 0 0 0 0 5 -5 0\n";
        let s = PoseScript::parse(text, &default_vocabulary(), &default_rom()).unwrap();
        assert_eq!(s.steps[0].pose.angles[2], 10.0);
        assert_eq!(s.steps[0].pose.wrist.pitch, -5.0);
        assert_eq!(s.total_ticks(50.0), 25);
    }

    #[test]
    fn errors() {
        let v = default_vocabulary();
        let r = default_rom();
        assert!(matches!(
            PoseScript::parse("gesture nothing 1\n", &v, &r),
            Err(ScriptError::UnknownGesture { line: 1, .. })
        ));
        assert!(matches!(
            PoseScript::parse("gesture water\n", &v, &r),
            Err(ScriptError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            PoseScript::parse("gesture water -1\n", &v, &r),
            Err(ScriptError::Syntax { .. })
        ));
        assert!(matches!(
            PoseScript::parse("jump 1\n", &v, &r),
            Err(ScriptError::Syntax { .. })
        ));
        let bad = "pose 1 0 0 0 0 0 0 0 0 0 0 0 0 0 200 0 0 0\n";
        assert!(matches!(
            PoseScript::parse(bad, &v, &r),
            Err(ScriptError::InvalidPose { line: 1, .. })
        ));
    }
}

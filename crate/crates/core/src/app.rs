//! Host application layer: gesture index to word (and optional macro
//! action) mapping, debouncing, and the frame-stream to word-stream filter.

use std::io::{BufRead, Write};

use serde::Deserialize;
use thiserror::Error;

use crate::error::ConfigError;
use crate::firmware::{parse_frame, FrameError, InferenceModel, WireFrame};
use crate::hand::Vocabulary;
use crate::neural::NeuralError;

/// Consecutive identical classifications required before a word is emitted.
pub const DEFAULT_DEBOUNCE: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct WordMap {
    words: Vec<String>,
    actions: Vec<Option<String>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WordMapFile {
    word: Vec<WordEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WordEntry {
    class: usize,
    word: String,
    action: Option<String>,
}

impl WordMap {
    /// Words taken straight from the vocabulary, no actions.
    pub fn from_vocabulary(vocab: &Vocabulary) -> Self {
        let words: Vec<String> = vocab.gestures().iter().map(|g| g.name.clone()).collect();
        Self {
            actions: vec![None; words.len()],
            words,
        }
    }

    /// Parses a word map that must cover classes `0..n_classes` exactly.
    pub fn from_toml(text: &str, n_classes: usize) -> Result<Self, ConfigError> {
        let file: WordMapFile = toml::from_str(text)?;
        let mut words: Vec<Option<String>> = vec![None; n_classes];
        let mut actions = vec![None; n_classes];
        for entry in file.word {
            if entry.class >= n_classes {
                return Err(ConfigError::Invalid(format!(
                    "word map class {} unknown (vocabulary has {n_classes} classes)",
                    entry.class
                )));
            }
            if words[entry.class].is_some() {
                return Err(ConfigError::Invalid(format!(
                    "class {} mapped twice",
                    entry.class
                )));
            }
            if let Some(a) = &entry.action {
                if a.is_empty() || !a.bytes().all(|b| b.is_ascii_uppercase() || b.is_ascii_digit() || b == b'_') {
                    return Err(ConfigError::Invalid(format!(
                        "action {a:?} must be UPPER_SNAKE_CASE"
                    )));
                }
            }
            words[entry.class] = Some(entry.word);
            actions[entry.class] = entry.action;
        }
        let words = words
            .into_iter()
            .enumerate()
            .map(|(i, w)| w.ok_or_else(|| ConfigError::Invalid(format!("class {i} has no word"))))
            .collect::<Result<Vec<String>, _>>()?;
        for (i, w) in words.iter().enumerate() {
            if w.is_empty() || w.contains('\n') {
                return Err(ConfigError::Invalid(format!("class {i}: empty or multi-line word")));
            }
            if words[..i].contains(w) {
                return Err(ConfigError::Invalid(format!("duplicate word {w:?}")));
            }
        }
        Ok(Self { words, actions })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, class: usize) -> Option<&str> {
        self.words.get(class).map(String::as_str)
    }

    pub fn action(&self, class: usize) -> Option<&str> {
        self.actions.get(class).and_then(|a| a.as_deref())
    }

    /// Output lines for one emitted class: the word, then `ACTION,<NAME>`
    /// if the class carries a macro.
    pub fn output_lines(&self, class: usize) -> Vec<String> {
        let mut out = Vec::with_capacity(2);
        if let Some(w) = self.word(class) {
            out.push(w.to_string());
        }
        if let Some(a) = self.action(class) {
            out.push(format!("ACTION,{a}"));
        }
        out
    }
}

/// Emits a class once it has been seen `n` times in a row and differs from
/// the previously emitted class.
#[derive(Debug, Clone)]
pub struct Debouncer {
    n: usize,
    candidate: Option<usize>,
    run: usize,
    emitted: Option<usize>,
}

impl Debouncer {
    pub fn new(n: usize) -> Self {
        Self {
            n: n.max(1),
            candidate: None,
            run: 0,
            emitted: None,
        }
    }

    pub fn push(&mut self, class: usize) -> Option<usize> {
        if self.candidate == Some(class) {
            self.run += 1;
        } else {
            self.candidate = Some(class);
            self.run = 1;
        }
        if self.run == self.n && self.emitted != Some(class) {
            self.emitted = Some(class);
            return Some(class);
        }
        None
    }
}

#[derive(Debug, Error)]
pub enum InferStreamError {
    #[error("model has {model} outputs but the word map has {words} entries")]
    Mismatch { model: usize, words: usize },
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InferStreamStats {
    pub data_frames: u64,
    pub gesture_frames: u64,
    pub words_emitted: u64,
    pub rejected: Vec<(usize, FrameError)>,
}

/// Reads wire frames and writes one line per debounced gesture change.
/// Data frames are classified with `model`; gesture frames are used as is.
pub fn infer_stream<R: BufRead, W: Write>(
    source: R,
    model: &InferenceModel,
    words: &WordMap,
    debounce: usize,
    sink: &mut W,
) -> Result<InferStreamStats, InferStreamError> {
    if model.params.n_out != words.len() {
        return Err(InferStreamError::Mismatch {
            model: model.params.n_out,
            words: words.len(),
        });
    }
    let mut stats = InferStreamStats::default();
    let mut debouncer = Debouncer::new(debounce);
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let class = match parse_frame(&line) {
            Ok(WireFrame::Data { frame, .. }) => {
                stats.data_frames += 1;
                model.infer(&frame)?.0
            }
            Ok(WireFrame::Gesture { class_index, .. }) => {
                stats.gesture_frames += 1;
                class_index as usize
            }
            Ok(WireFrame::State(_)) => continue,
            Err(e) => {
                stats.rejected.push((i + 1, e));
                continue;
            }
        };
        if class >= words.len() {
            continue;
        }
        if let Some(c) = debouncer.push(class) {
            for out in words.output_lines(c) {
                writeln!(sink, "{out}")?;
            }
            sink.flush()?;
            stats.words_emitted += 1;
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hand::default_vocabulary;

    #[test]
    fn steady_class_emits_once() {
        let mut d = Debouncer::new(5);
        let out: Vec<_> = (0..20).filter_map(|_| d.push(4)).collect();
        assert_eq!(out, vec![4]);
    }

    #[test]
    fn alternating_below_threshold_is_silent() {
        let mut d = Debouncer::new(5);
        let out: Vec<_> = (0..40).filter_map(|i| d.push(if (i / 3) % 2 == 0 { 1 } else { 2 })).collect();
        assert!(out.is_empty());
    }

    #[test]
    fn change_emits_again_but_blip_does_not() {
        let mut d = Debouncer::new(3);
        let seq = [1, 1, 1, 1, 2, 1, 1, 1, 2, 2, 2, 2];
        let out: Vec<_> = seq.iter().filter_map(|c| d.push(*c)).collect();
        assert_eq!(out, vec![1, 2]);
    }

    #[test]
    fn word_map_from_toml() {
        let text = r#"
            [[word]]
            class = 0
            word = "hello"
            [[word]]
            class = 1
            word = "next"
            action = "NEXT_SLIDE"
        "#;
        let m = WordMap::from_toml(text, 2).unwrap();
        assert_eq!(m.output_lines(0), vec!["hello"]);
        assert_eq!(m.output_lines(1), vec!["next", "ACTION,NEXT_SLIDE"]);
        assert!(WordMap::from_toml(text, 1).is_err());
        assert!(WordMap::from_toml(text, 3).is_err());
        let dup = text.replace("\"next\"", "\"hello\"");
        assert!(WordMap::from_toml(&dup, 2).is_err());
    }

    #[test]
    fn word_map_from_vocabulary() {
        let v = default_vocabulary();
        let m = WordMap::from_vocabulary(&v);
        assert_eq!(m.len(), 11);
        assert_eq!(m.word(0), Some(v.gestures()[0].name.as_str()));
        assert_eq!(m.action(0), None);
    }
}

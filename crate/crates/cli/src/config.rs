//! Run configuration: one TOML file naming the model files and the knobs of
//! every command.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hallglove::app::WordMap;
use hallglove::dataset::SynthConfig;
use hallglove::hand::{RomTable, Vocabulary, DEFAULT_ROM, DEFAULT_VOCABULARY};
use hallglove::neural::{AdamConfig, NormalizationSpec, TrainConfig};
use hallglove::physics::{GloveModel, DEFAULT_GLOVE};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub models: ModelPaths,
    pub generate: GenerateSection,
    pub train: TrainSection,
    pub simulate: SimulateSection,
    pub infer: InferSection,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelPaths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub glove: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rom: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wordmap: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    pub subjects: usize,
    pub reps: usize,
    pub angle_jitter: f64,
    pub wrist_jitter: f64,
    pub noise: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub hidden: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub val_fraction: f64,
    pub target_val_accuracy: f64,
    pub patience: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub sample_rate: f64,
    pub percentile: f64,
    pub noise: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferSection {
    pub debounce: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            models: ModelPaths::default(),
            generate: GenerateSection::default(),
            train: TrainSection::default(),
            simulate: SimulateSection::default(),
            infer: InferSection::default(),
        }
    }
}

impl Default for GenerateSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        Self {
            subjects: s.n_subjects,
            reps: s.reps_per_gesture,
            angle_jitter: s.angle_jitter,
            wrist_jitter: s.wrist_jitter,
            noise: s.noise,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            hidden: t.n_hidden,
            learning_rate: t.adam.alpha,
            beta1: t.adam.beta1,
            beta2: t.adam.beta2,
            epsilon: t.adam.epsilon,
            epochs: t.epochs,
            batch_size: t.batch_size,
            val_fraction: t.val_fraction,
            target_val_accuracy: t.target_val_accuracy,
            patience: t.patience,
        }
    }
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            sample_rate: 50.0,
            percentile: 50.0,
            noise: true,
        }
    }
}

impl Default for InferSection {
    fn default() -> Self {
        Self {
            debounce: hallglove::app::DEFAULT_DEBOUNCE,
        }
    }
}

/// Everything a command needs, resolved and validated up front.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub run: RunConfig,
    pub glove_text: String,
    pub rom_text: String,
    pub vocabulary_text: String,
    pub wordmap_text: Option<String>,
    pub glove: GloveModel,
    pub rom: RomTable,
    pub vocab: Vocabulary,
    pub words: WordMap,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

impl Resolved {
    /// Loads `path` (or the built-in defaults) and applies the seed override.
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<Self> {
        let (mut run, base) = match path {
            Some(p) => {
                let text = read_text(p)?;
                let run: RunConfig =
                    toml::from_str(&text).with_context(|| format!("invalid config {}", p.display()))?;
                (run, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (RunConfig::default(), PathBuf::new()),
        };
        if let Some(s) = seed {
            run.seed = s;
        }
        let load = |p: &Option<PathBuf>, fallback: &str| -> Result<String> {
            match p {
                Some(p) => read_text(&base.join(p)),
                None => Ok(fallback.to_string()),
            }
        };
        let glove_text = load(&run.models.glove, DEFAULT_GLOVE)?;
        let rom_text = load(&run.models.rom, DEFAULT_ROM)?;
        let vocabulary_text = load(&run.models.vocabulary, DEFAULT_VOCABULARY)?;
        let wordmap_text = match &run.models.wordmap {
            Some(p) => Some(read_text(&base.join(p))?),
            None => None,
        };
        let glove = GloveModel::from_toml(&glove_text).context("glove model")?;
        let rom = RomTable::from_toml(&rom_text).context("range-of-motion table")?;
        let vocab = Vocabulary::from_toml(&vocabulary_text, &rom).context("vocabulary")?;
        let words = match &wordmap_text {
            Some(t) => WordMap::from_toml(t, vocab.len()).context("word map")?,
            None => WordMap::from_vocabulary(&vocab),
        };
        let resolved = Self {
            run,
            glove_text,
            rom_text,
            vocabulary_text,
            wordmap_text,
            glove,
            rom,
            vocab,
            words,
        };
        resolved.train_config().validate().context("train section")?;
        if resolved.run.infer.debounce == 0 {
            bail!("infer.debounce must be at least 1");
        }
        Ok(resolved)
    }

    pub fn synth_config(&self) -> SynthConfig {
        let g = &self.run.generate;
        SynthConfig {
            n_subjects: g.subjects,
            reps_per_gesture: g.reps,
            angle_jitter: g.angle_jitter,
            wrist_jitter: g.wrist_jitter,
            noise: g.noise,
            seed: self.run.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.run.train;
        TrainConfig {
            n_hidden: t.hidden,
            adam: AdamConfig {
                alpha: t.learning_rate,
                beta1: t.beta1,
                beta2: t.beta2,
                epsilon: t.epsilon,
            },
            epochs: t.epochs,
            batch_size: t.batch_size,
            val_fraction: t.val_fraction,
            target_val_accuracy: t.target_val_accuracy,
            patience: t.patience,
            seed: self.run.seed,
        }
    }

    pub fn normalization(&self) -> NormalizationSpec {
        NormalizationSpec::for_ranges(
            self.glove.adc.max_code(),
            self.glove.imu.accel_range,
            self.glove.imu.gyro_range,
        )
    }

    /// Snapshot stored in run manifests.
    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::json!({
            "run": self.run,
            "glove": self.glove_text,
            "rom": self.rom_text,
            "vocabulary": self.vocabulary_text,
            "wordmap": self.wordmap_text,
        })
    }
}

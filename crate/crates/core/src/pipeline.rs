//! Dataset-level training and evaluation.

use thiserror::Error;

use crate::dataset::{split_indices, DatasetError, GestureDataset, SplitIndices, SplitSpec};
use crate::neural::{evaluate, fit, Evaluation, MlpParameters, NeuralError, NormalizationSpec, Samples, TrainConfig, TrainReport};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("model has {model} outputs but the vocabulary has {vocab} words")]
    VocabularyMismatch { model: usize, vocab: usize },
}

/// Normalized network inputs and labels for a whole dataset.
pub fn prepare(dataset: &GestureDataset, norm: &NormalizationSpec) -> (Vec<Vec<f64>>, Vec<usize>) {
    dataset
        .records()
        .iter()
        .map(|r| (norm.normalize(&r.frame).to_vec(), r.label))
        .unzip()
}

fn pick<T: Clone>(all: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| all[i].clone()).collect()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: MlpParameters,
    pub report: TrainReport,
    pub split: SplitIndices,
}

/// Splits, normalizes and trains. The split uses `config.val_fraction`
/// and `config.seed` unless an explicit split is given.
pub fn train_dataset(
    dataset: &GestureDataset,
    norm: &NormalizationSpec,
    config: &TrainConfig,
    split: Option<&SplitSpec>,
) -> Result<TrainOutcome, PipelineError> {
    config.validate()?;
    let default_split = SplitSpec::stratified(config.val_fraction, config.seed);
    let split = split_indices(dataset, split.unwrap_or(&default_split))?;
    let (inputs, labels) = prepare(dataset, norm);
    let (tx, ty) = (pick(&inputs, &split.train), pick(&labels, &split.train));
    let (vx, vy) = (pick(&inputs, &split.val), pick(&labels, &split.val));
    let (params, report) = fit(
        Samples::new(&tx, &ty),
        Samples::new(&vx, &vy),
        dataset.n_classes(),
        config,
    )?;
    Ok(TrainOutcome {
        params,
        report,
        split,
    })
}

/// Evaluates `params` on the validation half of `split`.
pub fn evaluate_split(
    dataset: &GestureDataset,
    params: &MlpParameters,
    norm: &NormalizationSpec,
    split: &SplitSpec,
) -> Result<Evaluation, PipelineError> {
    if params.n_out != dataset.n_classes() {
        return Err(PipelineError::VocabularyMismatch {
            model: params.n_out,
            vocab: dataset.n_classes(),
        });
    }
    let idx = split_indices(dataset, split)?;
    let (inputs, labels) = prepare(dataset, norm);
    let (vx, vy) = (pick(&inputs, &idx.val), pick(&labels, &idx.val));
    Ok(evaluate(params, Samples::new(&vx, &vy))?)
}

/// Evaluates on every record.
pub fn evaluate_all(
    dataset: &GestureDataset,
    params: &MlpParameters,
    norm: &NormalizationSpec,
) -> Result<Evaluation, PipelineError> {
    if params.n_out != dataset.n_classes() {
        return Err(PipelineError::VocabularyMismatch {
            model: params.n_out,
            vocab: dataset.n_classes(),
        });
    }
    let (x, y) = prepare(dataset, norm);
    Ok(evaluate(params, Samples::new(&x, &y))?)
}

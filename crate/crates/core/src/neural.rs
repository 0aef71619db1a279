//! Sigmoid MLP (one hidden layer) with analytic backpropagation, Adam and
//! a deterministic mini-batch training loop.
//!
//! Arithmetic is f64 throughout; [`MlpParameters::quantized`] gives the f32
//! view that is exported to firmware.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::physics::{SensorFrame, FRAME_CHANNELS, IMU_CHANNELS};
use crate::hand::JOINT_COUNT;

/// Floor applied to probabilities inside the log.
pub const LOG_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum NeuralError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("class index {class} out of range for {n_out} outputs")]
    ClassOutOfRange { class: usize, n_out: usize },
    #[error("NaN in output vector")]
    NaN,
    #[error("empty input")]
    Empty,
    #[error("non-finite parameter")]
    NonFinite,
    #[error("dataset has no samples of class {0}")]
    MissingClass(usize),
    #[error("invalid training config: {0}")]
    Config(String),
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Weights and biases of an `n_in -> n_hidden -> n_out` network.
/// Matrices are row-major with one row per destination unit.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParameters {
    pub n_in: usize,
    pub n_hidden: usize,
    pub n_out: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Hidden and output activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    pub hidden: Vec<f64>,
    pub output: Vec<f64>,
}

impl MlpParameters {
    pub fn zeros(n_in: usize, n_hidden: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_hidden,
            n_out,
            w1: vec![0.0; n_hidden * n_in],
            b1: vec![0.0; n_hidden],
            w2: vec![0.0; n_out * n_hidden],
            b2: vec![0.0; n_out],
        }
    }

    /// Uniform Glorot initialization, zero biases.
    pub fn glorot<R: Rng + ?Sized>(n_in: usize, n_hidden: usize, n_out: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(n_in, n_hidden, n_out);
        let l1 = (6.0 / (n_in + n_hidden) as f64).sqrt();
        for w in p.w1.iter_mut() {
            *w = rng.random_range(-l1..l1);
        }
        let l2 = (6.0 / (n_hidden + n_out) as f64).sqrt();
        for w in p.w2.iter_mut() {
            *w = rng.random_range(-l2..l2);
        }
        p
    }

    /// Builds parameters from flat tensors, checking shapes and finiteness.
    pub fn from_parts(
        n_in: usize,
        n_hidden: usize,
        n_out: usize,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: Vec<f64>,
    ) -> Result<Self, NeuralError> {
        let p = Self {
            n_in,
            n_hidden,
            n_out,
            w1,
            b1,
            w2,
            b2,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        for (got, expected) in [
            (self.w1.len(), self.n_hidden * self.n_in),
            (self.b1.len(), self.n_hidden),
            (self.w2.len(), self.n_out * self.n_hidden),
            (self.b2.len(), self.n_out),
        ] {
            if got != expected {
                return Err(NeuralError::Dimension { expected, got });
            }
        }
        if self.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(NeuralError::NonFinite);
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// The four tensors in export order: W1, b1, W2, b2.
    pub fn tensors(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    /// Round every entry through f32.
    pub fn quantized(&self) -> Self {
        let mut q = self.clone();
        for t in q.tensors_mut() {
            for v in t.iter_mut() {
                *v = f64::from(*v as f32);
            }
        }
        q
    }

    pub fn forward(&self, x: &[f64]) -> Result<Activations, NeuralError> {
        forward(self, x)
    }
}

/// `h = sigmoid(W1 x + b1)`, `y = sigmoid(W2 h + b2)`.
pub fn forward(p: &MlpParameters, x: &[f64]) -> Result<Activations, NeuralError> {
    if x.len() != p.n_in {
        return Err(NeuralError::Dimension {
            expected: p.n_in,
            got: x.len(),
        });
    }
    let hidden: Vec<f64> = (0..p.n_hidden)
        .map(|j| {
            let row = &p.w1[j * p.n_in..(j + 1) * p.n_in];
            sigmoid(dot(row, x) + p.b1[j])
        })
        .collect();
    let output = (0..p.n_out)
        .map(|k| {
            let row = &p.w2[k * p.n_hidden..(k + 1) * p.n_hidden];
            sigmoid(dot(row, &hidden) + p.b2[k])
        })
        .collect();
    Ok(Activations { hidden, output })
}

/// f32 forward pass, the arithmetic the firmware performs.
pub fn forward_f32(p: &MlpParameters, x: &[f32]) -> Result<Vec<f32>, NeuralError> {
    if x.len() != p.n_in {
        return Err(NeuralError::Dimension {
            expected: p.n_in,
            got: x.len(),
        });
    }
    let sig = |z: f32| 1.0 / (1.0 + (-z).exp());
    let hidden: Vec<f32> = (0..p.n_hidden)
        .map(|j| {
            let mut acc = p.b1[j] as f32;
            for i in 0..p.n_in {
                acc += p.w1[j * p.n_in + i] as f32 * x[i];
            }
            sig(acc)
        })
        .collect();
    Ok((0..p.n_out)
        .map(|k| {
            let mut acc = p.b2[k] as f32;
            for j in 0..p.n_hidden {
                acc += p.w2[k * p.n_hidden + j] as f32 * hidden[j];
            }
            sig(acc)
        })
        .collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub class_index: usize,
    pub confidence: f64,
}

/// Argmax with ties going to the lowest index.
pub fn classify(y: &[f64]) -> Result<Classification, NeuralError> {
    if y.is_empty() {
        return Err(NeuralError::Empty);
    }
    if y.iter().any(|v| v.is_nan()) {
        return Err(NeuralError::NaN);
    }
    let mut best = 0;
    for (i, v) in y.iter().enumerate().skip(1) {
        if *v > y[best] {
            best = i;
        }
    }
    Ok(Classification {
        class_index: best,
        confidence: y[best],
    })
}

/// Sum-normalized output: the independent sigmoid outputs divided by their
/// total, the probability vector the cross-entropy is taken over.
pub fn normalized_output(y: &[f64]) -> Vec<f64> {
    let total: f64 = y.iter().sum();
    y.iter().map(|v| v / total).collect()
}

/// Categorical cross-entropy against a one-hot (or any probability) target:
/// `-sum t_i ln max(y_i / sum(y), LOG_EPSILON)`.
pub fn loss(y: &[f64], target: &[f64]) -> f64 {
    -normalized_output(y)
        .iter()
        .zip(target)
        .map(|(p, t)| t * p.max(LOG_EPSILON).ln())
        .sum::<f64>()
}

/// Categorical cross-entropy for the one-hot target `class`.
pub fn loss_for_class(y: &[f64], class: usize) -> f64 {
    let total: f64 = y.iter().sum();
    -(y[class] / total).max(LOG_EPSILON).ln()
}

pub fn one_hot(class: usize, n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n];
    t[class] = 1.0;
    t
}

/// Mean batch loss.
pub fn batch_loss(p: &MlpParameters, batch: &[(&[f64], usize)]) -> Result<f64, NeuralError> {
    if batch.is_empty() {
        return Err(NeuralError::Empty);
    }
    let mut total = 0.0;
    for (x, class) in batch {
        check_class(*class, p.n_out)?;
        total += loss_for_class(&forward(p, x)?.output, *class);
    }
    Ok(total / batch.len() as f64)
}

fn check_class(class: usize, n_out: usize) -> Result<(), NeuralError> {
    if class >= n_out {
        Err(NeuralError::ClassOutOfRange { class, n_out })
    } else {
        Ok(())
    }
}

/// Analytic gradient of [`batch_loss`] with respect to every parameter.
/// The result has the same shapes as `p`.
pub fn backward(p: &MlpParameters, batch: &[(&[f64], usize)]) -> Result<MlpParameters, NeuralError> {
    if batch.is_empty() {
        return Err(NeuralError::Empty);
    }
    let mut g = MlpParameters::zeros(p.n_in, p.n_hidden, p.n_out);
    let mut delta_out = vec![0.0; p.n_out];
    let mut delta_hidden = vec![0.0; p.n_hidden];
    for (x, class) in batch {
        check_class(*class, p.n_out)?;
        let act = forward(p, x)?;
        output_delta(&act.output, *class, &mut delta_out);
        for k in 0..p.n_out {
            g.b2[k] += delta_out[k];
            let row = &mut g.w2[k * p.n_hidden..(k + 1) * p.n_hidden];
            for (gw, h) in row.iter_mut().zip(&act.hidden) {
                *gw += delta_out[k] * h;
            }
        }
        for j in 0..p.n_hidden {
            let back: f64 = (0..p.n_out)
                .map(|k| p.w2[k * p.n_hidden + j] * delta_out[k])
                .sum();
            let h = act.hidden[j];
            delta_hidden[j] = back * h * (1.0 - h);
        }
        for j in 0..p.n_hidden {
            g.b1[j] += delta_hidden[j];
            let row = &mut g.w1[j * p.n_in..(j + 1) * p.n_in];
            for (gw, xi) in row.iter_mut().zip(x.iter()) {
                *gw += delta_hidden[j] * xi;
            }
        }
    }
    let scale = 1.0 / batch.len() as f64;
    for t in g.tensors_mut() {
        for v in t.iter_mut() {
            *v *= scale;
        }
    }
    Ok(g)
}

/// dL/dz for the output pre-activations of one sample:
/// `(y_k / S - t_k) (1 - y_k)` with `S = sum(y)`.
fn output_delta(y: &[f64], class: usize, out: &mut [f64]) {
    let total: f64 = y.iter().sum();
    if y[class] / total <= LOG_EPSILON {
        // Loss is on the flat floor.
        out.iter_mut().for_each(|d| *d = 0.0);
        return;
    }
    for (k, d) in out.iter_mut().enumerate() {
        let t = if k == class { 1.0 } else { 0.0 };
        *d = (y[k] / total - t) * (1.0 - y[k]);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            alpha: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: MlpParameters,
    pub v: MlpParameters,
    pub t: u32,
}

impl AdamState {
    pub fn new(like: &MlpParameters) -> Self {
        let z = MlpParameters::zeros(like.n_in, like.n_hidden, like.n_out);
        Self {
            m: z.clone(),
            v: z,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(
    p: &mut MlpParameters,
    grads: &MlpParameters,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<(), NeuralError> {
    for (a, b) in [(p.param_count(), grads.param_count()), (p.param_count(), state.m.param_count())] {
        if a != b {
            return Err(NeuralError::Dimension { expected: a, got: b });
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let params = p.tensors_mut();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for (((theta, g), m), v) in params.into_iter().zip(grads.tensors()).zip(ms).zip(vs) {
        for i in 0..theta.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            theta[i] -= cfg.alpha * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

/// Per-channel `(min, max)` ranges mapping raw frames onto [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationSpec {
    ranges: Vec<(f64, f64)>,
}

impl NormalizationSpec {
    pub fn new(ranges: Vec<(f64, f64)>) -> Result<Self, NeuralError> {
        if ranges.len() != FRAME_CHANNELS {
            return Err(NeuralError::Dimension {
                expected: FRAME_CHANNELS,
                got: ranges.len(),
            });
        }
        if let Some((lo, hi)) = ranges.iter().find(|(lo, hi)| !(lo < hi)) {
            return Err(NeuralError::Config(format!("channel range [{lo}, {hi}] is empty")));
        }
        Ok(Self { ranges })
    }

    /// Hall codes over the full ADC span, IMU over its full-scale ranges.
    pub fn for_ranges(max_code: u16, accel_range: f64, gyro_range: f64) -> Self {
        let mut ranges = vec![(0.0, f64::from(max_code)); JOINT_COUNT];
        ranges.extend(std::iter::repeat_n((-accel_range, accel_range), 3));
        ranges.extend(std::iter::repeat_n((-gyro_range, gyro_range), 3));
        debug_assert_eq!(ranges.len(), JOINT_COUNT + IMU_CHANNELS);
        Self { ranges }
    }

    pub fn ranges(&self) -> &[(f64, f64)] {
        &self.ranges
    }

    pub fn normalize_channels(&self, raw: &[f64; FRAME_CHANNELS]) -> [f64; FRAME_CHANNELS] {
        let mut out = [0.0; FRAME_CHANNELS];
        for ((o, r), (lo, hi)) in out.iter_mut().zip(raw).zip(&self.ranges) {
            *o = ((r - lo) / (hi - lo)).clamp(0.0, 1.0);
        }
        out
    }

    pub fn normalize(&self, frame: &SensorFrame) -> [f64; FRAME_CHANNELS] {
        self.normalize_channels(&frame.channels())
    }
}

impl Default for NormalizationSpec {
    fn default() -> Self {
        Self::for_ranges(1023, 2.0, 250.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub n_hidden: usize,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub val_fraction: f64,
    pub target_val_accuracy: f64,
    /// Consecutive evaluations at or above target before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_hidden: 24,
            adam: AdamConfig::default(),
            epochs: 300,
            batch_size: 32,
            val_fraction: 0.2,
            target_val_accuracy: 0.96,
            patience: 3,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NeuralError> {
        let a = &self.adam;
        let ok = a.alpha > 0.0
            && 0.0 < a.beta1
            && a.beta1 < 1.0
            && 0.0 < a.beta2
            && a.beta2 < 1.0
            && a.epsilon > 0.0
            && 0.0 < self.val_fraction
            && self.val_fraction < 1.0
            && self.batch_size > 0
            && self.n_hidden > 0
            && self.patience > 0;
        if ok {
            Ok(())
        } else {
            Err(NeuralError::Config(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch after which training stopped.
    pub stopped_epoch: usize,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    /// Validation confusion matrix of the returned parameters,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Labeled, already-normalized samples.
#[derive(Debug, Clone, Copy)]
pub struct Samples<'a> {
    pub inputs: &'a [Vec<f64>],
    pub labels: &'a [usize],
}

impl<'a> Samples<'a> {
    pub fn new(inputs: &'a [Vec<f64>], labels: &'a [usize]) -> Self {
        assert_eq!(inputs.len(), labels.len());
        Self { inputs, labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn pairs(&self) -> Vec<(&'a [f64], usize)> {
        self.inputs
            .iter()
            .map(|x| x.as_slice())
            .zip(self.labels.iter().copied())
            .collect()
    }
}

/// Accuracy, mean loss and confusion matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
    pub confusion: Vec<Vec<usize>>,
}

pub fn evaluate(p: &MlpParameters, samples: Samples<'_>) -> Result<Evaluation, NeuralError> {
    if samples.is_empty() {
        return Err(NeuralError::Empty);
    }
    let mut confusion = vec![vec![0usize; p.n_out]; p.n_out];
    let mut correct = 0usize;
    let mut total_loss = 0.0;
    for (x, class) in samples.pairs() {
        check_class(class, p.n_out)?;
        let y = forward(p, x)?.output;
        total_loss += loss_for_class(&y, class);
        let predicted = classify(&y)?.class_index;
        confusion[class][predicted] += 1;
        if predicted == class {
            correct += 1;
        }
    }
    let n = samples.len() as f64;
    Ok(Evaluation {
        accuracy: correct as f64 / n,
        loss: total_loss / n,
        confusion,
    })
}

/// Mini-batch Adam training with early stopping. Returns the parameters
/// with the best validation accuracy (ties keep the earlier epoch).
pub fn fit(
    train: Samples<'_>,
    val: Samples<'_>,
    n_out: usize,
    config: &TrainConfig,
) -> Result<(MlpParameters, TrainReport), NeuralError> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(NeuralError::Empty);
    }
    let n_in = train.inputs[0].len();
    for x in train.inputs.iter().chain(val.inputs) {
        if x.len() != n_in {
            return Err(NeuralError::Dimension {
                expected: n_in,
                got: x.len(),
            });
        }
    }
    for class in 0..n_out {
        if !train.labels.contains(&class) {
            return Err(NeuralError::MissingClass(class));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = MlpParameters::glorot(n_in, config.n_hidden, n_out, &mut rng);
    let mut adam = AdamState::new(&params);
    let pairs = train.pairs();
    let mut order: Vec<usize> = (0..pairs.len()).collect();

    let mut epochs = Vec::new();
    let mut best: Option<(MlpParameters, usize, Evaluation)> = None;
    let mut streak = 0;
    let mut batch = Vec::with_capacity(config.batch_size);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut train_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| pairs[i]));
            let grads = backward(&params, &batch)?;
            adam_step(&mut params, &grads, &mut adam, &config.adam)?;
        }
        for &(x, class) in &pairs {
            train_loss += loss_for_class(&forward(&params, x)?.output, class);
        }
        train_loss /= pairs.len() as f64;
        let eval = evaluate(&params, val)?;
        epochs.push(EpochStats {
            train_loss,
            val_loss: eval.loss,
            val_accuracy: eval.accuracy,
        });
        let improved = match &best {
            None => true,
            Some((_, _, b)) => eval.accuracy > b.accuracy,
        };
        streak = if eval.accuracy >= config.target_val_accuracy {
            streak + 1
        } else {
            0
        };
        if improved {
            best = Some((params.clone(), epoch, eval));
        }
        if streak >= config.patience {
            break;
        }
    }

    let (best_params, best_epoch, best_eval) = best.expect("at least one epoch ran");
    let report = TrainReport {
        stopped_epoch: epochs.len(),
        epochs,
        best_epoch,
        best_val_accuracy: best_eval.accuracy,
        confusion: best_eval.confusion,
    };
    Ok((best_params, report))
}

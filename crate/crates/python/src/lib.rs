//! Python bindings: sensor simulation, dataset generation, training,
//! weight import/export and the wire protocol.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use hallglove::dataset::{generate_synthetic, read_csv, write_csv, SynthConfig};
use hallglove::export::{export_binary, export_firmware_arrays, import_binary, parse_firmware_arrays};
use hallglove::firmware::{encode_frame, parse_frame, FirmwareState, InferenceModel, WireFrame};
use hallglove::hand::{
    canonical_joint_order, default_rom, default_vocabulary, AnthropometricProfile, HandPose, Wrist,
    JOINT_COUNT,
};
use hallglove::neural::{classify, forward, MlpParameters, NormalizationSpec, TrainConfig};
use hallglove::physics::{simulate_frame_seeded, GloveModel, SensorFrame, FRAME_CHANNELS, IMU_CHANNELS};
use hallglove::pipeline::{evaluate_all, train_dataset};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_array<const N: usize>(v: &[f64], what: &str) -> PyResult<[f64; N]> {
    v.try_into()
        .map_err(|_| PyValueError::new_err(format!("{what} needs {N} values, got {}", v.len())))
}

/// Joint names in channel order C0..C13.
#[pyfunction]
fn joint_names() -> Vec<String> {
    canonical_joint_order().iter().map(|j| j.to_string()).collect()
}

/// Gesture words in class-index order.
#[pyfunction]
fn vocabulary() -> Vec<String> {
    default_vocabulary().gestures().iter().map(|g| g.name.clone()).collect()
}

/// Canonical pose of a vocabulary gesture: (angles, [roll, pitch, yaw]).
#[pyfunction]
fn gesture_pose(name: &str) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let vocab = default_vocabulary();
    let g = vocab
        .by_name(name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown gesture {name:?}")))?;
    Ok((g.canonical_pose.angles.to_vec(), g.canonical_pose.wrist.to_array().to_vec()))
}

/// One simulated frame: (14 ADC codes, 6 IMU values).
#[pyfunction]
#[pyo3(signature = (angles, wrist, seed=0, noise=true, percentile=50.0))]
fn simulate_frame(
    angles: Vec<f64>,
    wrist: Vec<f64>,
    seed: u64,
    noise: bool,
    percentile: f64,
) -> PyResult<(Vec<u16>, Vec<f64>)> {
    let pose = HandPose::new(
        to_array::<JOINT_COUNT>(&angles, "angles")?,
        Wrist::from(to_array::<3>(&wrist, "wrist")?),
    );
    let profile = AnthropometricProfile::from_percentile("py", percentile).map_err(value_err)?;
    let model = if noise {
        GloveModel::default()
    } else {
        GloveModel::default().noiseless()
    };
    let f = simulate_frame_seeded(&pose, &profile, &model, &default_rom(), seed).map_err(value_err)?;
    Ok((f.codes.to_vec(), f.imu.to_vec()))
}

/// Synthetic dataset as CSV text.
#[pyfunction]
#[pyo3(signature = (seed=42, subjects=5, reps=40, noise=true))]
fn generate_csv(seed: u64, subjects: usize, reps: usize, noise: bool) -> PyResult<String> {
    let cfg = SynthConfig {
        n_subjects: subjects,
        reps_per_gesture: reps,
        noise,
        seed,
        ..SynthConfig::default()
    };
    let d = generate_synthetic(&default_vocabulary(), &GloveModel::default(), &default_rom(), &cfg)
        .map_err(value_err)?;
    let mut out = Vec::new();
    write_csv(&d, &mut out).map_err(value_err)?;
    String::from_utf8(out).map_err(value_err)
}

/// Trained classifier with the default input normalization.
#[pyclass(frozen)]
struct Model {
    inner: InferenceModel,
    val_accuracy: Option<f64>,
}

impl Model {
    fn wrap(params: MlpParameters, val_accuracy: Option<f64>) -> Self {
        Self {
            inner: InferenceModel {
                params,
                normalization: NormalizationSpec::default(),
            },
            val_accuracy,
        }
    }
}

#[pymethods]
impl Model {
    /// Trains on CSV text with the default split and hyperparameters.
    #[staticmethod]
    #[pyo3(signature = (csv, seed=42, epochs=300))]
    fn train(csv: &str, seed: u64, epochs: usize) -> PyResult<Self> {
        let n = default_vocabulary().len();
        let d = read_csv(csv.as_bytes(), n).map_err(value_err)?;
        let cfg = TrainConfig {
            seed,
            epochs,
            ..TrainConfig::default()
        };
        let out = train_dataset(&d, &NormalizationSpec::default(), &cfg, None).map_err(value_err)?;
        Ok(Self::wrap(out.params, Some(out.report.best_val_accuracy)))
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Self::wrap(import_binary(data).map_err(value_err)?, None))
    }

    #[staticmethod]
    fn from_firmware(text: &str) -> PyResult<Self> {
        Ok(Self::wrap(parse_firmware_arrays(text).map_err(value_err)?, None))
    }

    /// Binary `.glvw` bytes.
    fn to_bytes<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        let b = export_binary(&self.inner.params).map_err(value_err)?;
        Ok(PyBytes::new(py, &b))
    }

    /// C++ header with the weight arrays.
    fn to_firmware(&self) -> PyResult<String> {
        export_firmware_arrays(&self.inner.params).map_err(value_err)
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        let p = &self.inner.params;
        (p.n_in, p.n_hidden, p.n_out)
    }

    /// Best validation accuracy when the model was trained in this process.
    #[getter]
    fn val_accuracy(&self) -> Option<f64> {
        self.val_accuracy
    }

    /// Output activations for an already normalized input.
    fn forward(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(forward(&self.inner.params, &x).map_err(value_err)?.output)
    }

    /// (class index, confidence) for a normalized input.
    fn classify(&self, x: Vec<f64>) -> PyResult<(usize, f64)> {
        let y = self.forward(x)?;
        let c = classify(&y).map_err(value_err)?;
        Ok((c.class_index, c.confidence))
    }

    /// (class index, confidence) for a raw frame.
    fn infer(&self, codes: Vec<u16>, imu: Vec<f64>) -> PyResult<(usize, f64)> {
        let frame = SensorFrame {
            codes: codes
                .as_slice()
                .try_into()
                .map_err(|_| PyValueError::new_err(format!("need {JOINT_COUNT} codes")))?,
            imu: to_array::<IMU_CHANNELS>(&imu, "imu")?,
        };
        let (c, conf, _) = self.inner.infer(&frame).map_err(value_err)?;
        Ok((c, conf))
    }

    /// Accuracy on every record of a CSV dataset.
    fn accuracy(&self, csv: &str) -> PyResult<f64> {
        let d = read_csv(csv.as_bytes(), self.inner.params.n_out).map_err(value_err)?;
        Ok(evaluate_all(&d, &self.inner.params, &self.inner.normalization)
            .map_err(value_err)?
            .accuracy)
    }
}

/// Parses one wire line into a dict with a `kind` key.
#[pyfunction]
fn parse_line<'py>(py: Python<'py>, line: &str) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    match parse_frame(line).map_err(value_err)? {
        WireFrame::Data { seq, frame } => {
            d.set_item("kind", "data")?;
            d.set_item("seq", seq)?;
            d.set_item("codes", frame.codes.to_vec())?;
            d.set_item("imu", frame.imu.to_vec())?;
        }
        WireFrame::Gesture {
            seq,
            class_index,
            confidence,
        } => {
            d.set_item("kind", "gesture")?;
            d.set_item("seq", seq)?;
            d.set_item("class_index", class_index)?;
            d.set_item("confidence", confidence)?;
        }
        WireFrame::State(s) => {
            d.set_item("kind", "state")?;
            d.set_item("state", s.wire_name())?;
        }
    }
    Ok(d)
}

#[pyfunction]
fn encode_data(seq: u32, codes: Vec<u16>, imu: Vec<f64>) -> PyResult<String> {
    let frame = SensorFrame {
        codes: codes
            .as_slice()
            .try_into()
            .map_err(|_| PyValueError::new_err(format!("need {JOINT_COUNT} codes")))?,
        imu: to_array::<IMU_CHANNELS>(&imu, "imu")?,
    };
    Ok(encode_frame(&WireFrame::Data { seq, frame }))
}

#[pyfunction]
fn encode_gesture(seq: u32, class_index: u32, confidence: f64) -> PyResult<String> {
    if !(0.0..=1.0).contains(&confidence) {
        return Err(PyValueError::new_err("confidence must be in [0, 1]"));
    }
    Ok(encode_frame(&WireFrame::Gesture {
        seq,
        class_index,
        confidence,
    }))
}

#[pyfunction]
fn encode_state(name: &str) -> PyResult<String> {
    let s = FirmwareState::from_wire_name(name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown state {name:?}")))?;
    Ok(encode_frame(&WireFrame::State(s)))
}

#[pymodule]
fn hallglove_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FRAME_CHANNELS", FRAME_CHANNELS)?;
    m.add_function(wrap_pyfunction!(joint_names, m)?)?;
    m.add_function(wrap_pyfunction!(vocabulary, m)?)?;
    m.add_function(wrap_pyfunction!(gesture_pose, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_frame, m)?)?;
    m.add_function(wrap_pyfunction!(generate_csv, m)?)?;
    m.add_function(wrap_pyfunction!(parse_line, m)?)?;
    m.add_function(wrap_pyfunction!(encode_data, m)?)?;
    m.add_function(wrap_pyfunction!(encode_gesture, m)?)?;
    m.add_function(wrap_pyfunction!(encode_state, m)?)?;
    m.add_class::<Model>()?;
    Ok(())
}

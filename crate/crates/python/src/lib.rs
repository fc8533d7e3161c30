//! Python bindings: synthesis, featurization, training, scoring and the
//! theory certificates, with labels passed as strings (`"on"`, `"off"`,
//! `"sitting"`, ...) and reports returned as plain dicts.

use std::path::PathBuf;

use motionguard_core as mg;
use mg::adversarial::{self, LabeledSet, TrainConfig, TrainMode};
use mg::ban_synth::{self, SynthConfig};
use mg::features::{self, FeatureConfig, RssSegment};
use mg::{DeviceLabel, MotionLabel};
use pyo3::exceptions::{PyFileNotFoundError, PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn err(e: mg::Error) -> PyErr {
    use mg::Error as E;
    match &e {
        E::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
            PyFileNotFoundError::new_err(e.to_string())
        }
        E::Io { .. } => PyIOError::new_err(e.to_string()),
        E::NonFinite { .. } | E::Corrupt(_) | E::Version { .. } | E::Json(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn device(s: &str) -> PyResult<DeviceLabel> {
    s.parse().map_err(err)
}

fn motion(s: &str) -> PyResult<MotionLabel> {
    s.parse().map_err(err)
}

fn devices(v: &[String]) -> PyResult<Vec<DeviceLabel>> {
    v.iter().map(|s| device(s)).collect()
}

/// Serializes through JSON into native Python objects.
fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| err(e.into()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn labeled(rows: Vec<Vec<f64>>, dev: &[String], mot: &[String]) -> PyResult<LabeledSet> {
    if rows.len() != dev.len() || rows.len() != mot.len() {
        return Err(PyValueError::new_err(format!(
            "{} rows, {} device labels, {} motion labels",
            rows.len(),
            dev.len(),
            mot.len()
        )));
    }
    let mut set = LabeledSet::default();
    for ((r, d), m) in rows.into_iter().zip(dev).zip(mot) {
        set.push(r, device(d)?, motion(m)?);
    }
    Ok(set)
}

/// One synthetic RSS trace (dBm at 500 Hz) under the default channel model.
#[pyfunction]
#[pyo3(signature = (link, motion_state, seed, duration_s=None))]
fn synth_trace(link: &str, motion_state: &str, seed: u64, duration_s: Option<f64>) -> PyResult<Vec<f64>> {
    let mut config = SynthConfig::default();
    if let Some(d) = duration_s {
        config.duration_s = d;
    }
    let t = ban_synth::synth_trace(&config, device(link)?, motion(motion_state)?, seed).map_err(err)?;
    Ok(t.samples)
}

/// Cuts a 500 Hz trace into whole 2500-sample segments.
#[pyfunction]
fn segments(samples: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    let trace = ban_synth::RssTrace::new(
        samples,
        mg::dsp::SAMPLE_RATE_HZ,
        DeviceLabel::OnBody,
        MotionLabel::Sitting,
        0,
    )
    .map_err(err)?;
    let segs = features::segment_trace(&trace).map_err(err)?;
    Ok(segs.into_iter().map(|s| s.samples().to_vec()).collect())
}

/// Magnitude spectrogram of one segment, one row per window.
#[pyfunction]
fn stft(segment: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    let s = mg::dsp::stft(&segment).map_err(err)?;
    Ok((0..s.window_count()).map(|w| s.window(w).to_vec()).collect())
}

/// Windowed-sinc FIR kernel.
#[pyclass(frozen)]
struct FirFilter {
    inner: mg::dsp::FilterKernel,
}

#[pymethods]
impl FirFilter {
    /// `kind` is `"low-pass"`, `"high-pass"` or `"band-pass"`; band-pass
    /// takes `[low, high]` in `cutoffs_hz`.
    #[new]
    #[pyo3(signature = (kind, cutoffs_hz, taps=1001))]
    fn new(kind: &str, cutoffs_hz: Vec<f64>, taps: usize) -> PyResult<Self> {
        use mg::dsp::FilterKind;
        let kind = match kind {
            "low-pass" | "lowpass" => FilterKind::LowPass,
            "high-pass" | "highpass" => FilterKind::HighPass,
            "band-pass" | "bandpass" => FilterKind::BandPass,
            other => return Err(PyValueError::new_err(format!("unknown filter kind {other:?}"))),
        };
        let inner = mg::dsp::design_fir(kind, &cutoffs_hz, taps, mg::dsp::SAMPLE_RATE_HZ).map_err(err)?;
        Ok(Self { inner })
    }

    fn taps(&self) -> Vec<f64> {
        self.inner.taps().to_vec()
    }

    fn gain_db(&self, freq_hz: f64) -> f64 {
        self.inner.gain_db_at(freq_hz)
    }

    /// Forward-backward filtering; output has the input's length.
    fn apply(&self, py: Python<'_>, signal: Vec<f64>) -> PyResult<Vec<f64>> {
        py.detach(|| mg::dsp::filter_zero_phase(&signal, &self.inner)).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Builds 380-long propagation profiles from segments.
#[pyclass(frozen)]
struct Featurizer {
    inner: features::Featurizer,
}

#[pymethods]
impl Featurizer {
    #[new]
    #[pyo3(signature = (band_hz=(0.5, 15.0), taps=1001))]
    fn new(band_hz: (f64, f64), taps: usize) -> PyResult<Self> {
        let inner = features::Featurizer::new(FeatureConfig { band_hz, taps }).map_err(err)?;
        Ok(Self { inner })
    }

    /// Labels are carried along but do not affect the values.
    #[pyo3(signature = (segment, link="on", motion_state="sitting"))]
    fn profile(&self, py: Python<'_>, segment: Vec<f64>, link: &str, motion_state: &str) -> PyResult<Vec<f64>> {
        let seg = RssSegment::new(segment, device(link)?, motion(motion_state)?).map_err(err)?;
        let p = py.detach(|| self.inner.build_profile(&seg)).map_err(err)?;
        Ok(p.to_vec())
    }

    /// `(m, pc)`: interval magnitudes per window and their proportions.
    fn spectro_summary(&self, segment: Vec<f64>) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
        let seg = RssSegment::new(segment, DeviceLabel::OnBody, MotionLabel::Sitting).map_err(err)?;
        let (s, _) = self.inner.freq_features(&seg).map_err(err)?;
        Ok((s.m.iter().map(|r| r.to_vec()).collect(), s.pc.to_vec()))
    }
}

/// Trained extractor, predictor and discriminator.
#[pyclass]
struct Model {
    inner: adversarial::Model,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: adversarial::load_checkpoint(&path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        adversarial::save_checkpoint(&self.inner, &path).map_err(err)
    }

    /// Checkpoint bytes, as written by `save`.
    fn to_bytes(&self) -> PyResult<Vec<u8>> {
        let mut buf = Vec::new();
        adversarial::write_checkpoint(&self.inner, &mut buf).map_err(err)?;
        Ok(buf)
    }

    #[getter]
    fn motions(&self) -> Vec<String> {
        self.inner.motions.iter().map(|m| m.to_string()).collect()
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.inner.params.scalar_count()
    }

    /// On-body probability of every profile.
    fn predict(&self, py: Python<'_>, rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        py.detach(|| rows.iter().map(|r| self.inner.predict(r).map(|d| d.p_on)).collect::<mg::Result<Vec<_>>>())
            .map_err(err)
    }

    /// Evaluation report as a dict.
    #[pyo3(signature = (rows, devices, motions, threshold=0.5))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        rows: Vec<Vec<f64>>,
        devices: Vec<String>,
        motions: Vec<String>,
        threshold: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let set = labeled(rows, &devices, &motions)?;
        let (report, _) = py.detach(|| mg::eval::evaluate(&self.inner, &set, threshold)).map_err(err)?;
        to_py(py, &report)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(arch={:?}, motions={:?}, parameters={})",
            self.inner.arch.name,
            self.motions(),
            self.inner.params.scalar_count()
        )
    }
}

/// Trains a model; returns `(model, history)` with one dict per epoch.
#[pyfunction]
#[pyo3(signature = (rows, devices, motions, mode="adversarial", lambda_=None, epochs=None, seed=0, monitor=None))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    rows: Vec<Vec<f64>>,
    devices: Vec<String>,
    motions: Vec<String>,
    mode: &str,
    lambda_: Option<f64>,
    epochs: Option<usize>,
    seed: u64,
    monitor: Option<(Vec<Vec<f64>>, Vec<String>, Vec<String>)>,
) -> PyResult<(Model, Bound<'py, PyAny>)> {
    let mode: TrainMode = mode.parse().map_err(err)?;
    let set = labeled(rows, &devices, &motions)?;
    let monitor = monitor.map(|(r, d, m)| labeled(r, &d, &m)).transpose()?;
    let mut config = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    if let Some(l) = lambda_ {
        config.lambda = l;
    }
    if let Some(e) = epochs {
        config.epochs = e;
    }
    let arch = adversarial::ArchConfig::default();
    let (model, history) =
        py.detach(|| adversarial::train(mode, &set, monitor.as_ref(), &arch, &config)).map_err(err)?;
    Ok((Model { inner: model }, to_py(py, &history.epochs)?))
}

/// Area under the ROC curve of on-body scores.
#[pyfunction]
fn auroc(scores: Vec<f64>, labels: Vec<String>) -> PyResult<f64> {
    let points = mg::eval::roc_curve(&scores, &devices(&labels)?).map_err(err)?;
    Ok(mg::eval::auroc(&points))
}

/// `(threshold, fp_rate, tp_rate)` points, strictest threshold first.
#[pyfunction]
fn roc_curve(scores: Vec<f64>, labels: Vec<String>) -> PyResult<Vec<(f64, f64, f64)>> {
    let points = mg::eval::roc_curve(&scores, &devices(&labels)?).map_err(err)?;
    Ok(points.iter().map(|p| (p.threshold, p.fp_rate, p.tp_rate)).collect())
}

#[pyfunction]
#[pyo3(signature = (scores, labels, threshold=0.5))]
fn confusion<'py>(
    py: Python<'py>,
    scores: Vec<f64>,
    labels: Vec<String>,
    threshold: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let m = mg::eval::confusion_metrics(&scores, &devices(&labels)?, threshold).map_err(err)?;
    to_py(py, &m)
}

/// Information-theoretic certificates on random discrete joints.
#[pyfunction]
#[pyo3(signature = (instances=20, seed=0, lambdas=None))]
fn theory_check<'py>(
    py: Python<'py>,
    instances: usize,
    seed: u64,
    lambdas: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut config = mg::theory::TheoryCheckConfig {
        instances,
        ..Default::default()
    };
    if let Some(l) = lambdas {
        config.lambdas = l;
    }
    let report = py.detach(|| mg::theory::theory_check(&config, seed)).map_err(err)?;
    to_py(py, &report)
}

#[pymodule]
#[pyo3(name = "motionguard")]
fn motionguard_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("SAMPLE_RATE_HZ", mg::dsp::SAMPLE_RATE_HZ)?;
    m.add("SEGMENT_LEN", mg::dsp::SEGMENT_LEN)?;
    m.add("PROFILE_DIM", features::PROFILE_DIM)?;
    m.add(
        "MOTIONS",
        MotionLabel::CONTROLLED.iter().map(|m| m.to_string()).collect::<Vec<_>>(),
    )?;
    m.add_class::<FirFilter>()?;
    m.add_class::<Featurizer>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(synth_trace, m)?)?;
    m.add_function(wrap_pyfunction!(segments, m)?)?;
    m.add_function(wrap_pyfunction!(stft, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(auroc, m)?)?;
    m.add_function(wrap_pyfunction!(roc_curve, m)?)?;
    m.add_function(wrap_pyfunction!(confusion, m)?)?;
    m.add_function(wrap_pyfunction!(theory_check, m)?)?;
    Ok(())
}

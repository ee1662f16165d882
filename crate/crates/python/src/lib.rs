//! Python bindings: signals, configuration, the full pipeline, the adaptive
//! filters and the objective metrics.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use aecpost::aec::{AdaptiveFilterConfig, VariantKind};
use aecpost::metrics::MetricParams;
use aecpost::pipeline::PipelineConfig;
use aecpost::signal::{AudioSignal, ImpulseResponse, WavEncoding};
use aecpost::stft::FrameParams;

fn py_err(e: aecpost::Error) -> PyErr {
    match e.root() {
        aecpost::Error::Config(_) | aecpost::Error::InvalidParameter(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Mono audio at a fixed sample rate.
#[pyclass(name = "Signal", module = "aecpost", skip_from_py_object)]
#[derive(Clone)]
struct PySignal {
    inner: AudioSignal,
}

#[pymethods]
impl PySignal {
    #[new]
    #[pyo3(signature = (samples, sample_rate = 16000))]
    fn new(samples: Vec<f64>, sample_rate: u32) -> PyResult<Self> {
        Ok(Self {
            inner: AudioSignal::new(samples, sample_rate).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn read_wav(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: aecpost::signal::read_wav(path).map_err(py_err)?,
        })
    }

    #[pyo3(signature = (path, pcm16 = false))]
    fn write_wav(&self, path: &str, pcm16: bool) -> PyResult<()> {
        let enc = if pcm16 { WavEncoding::Pcm16 } else { WavEncoding::Float32 };
        aecpost::signal::write_wav(path, &self.inner, enc).map_err(py_err)
    }

    #[getter]
    fn samples(&self) -> Vec<f64> {
        self.inner.samples().to_vec()
    }

    #[getter]
    fn sample_rate(&self) -> u32 {
        self.inner.sample_rate()
    }

    fn power(&self) -> f64 {
        self.inner.power()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Signal({} samples at {} Hz)", self.inner.len(), self.inner.sample_rate())
    }
}

/// Pipeline configuration; keys use the dotted config-file names.
#[pyclass(name = "Config", module = "aecpost", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: PipelineConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (text = ""))]
    fn new(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: PipelineConfig::from_text(text).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn from_file(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: PipelineConfig::from_file(path).map_err(py_err)?,
        })
    }

    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.inner.set(key, value).map_err(py_err)
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(py_err)
    }
}

/// Outcome of [`run`].
#[pyclass(name = "Result", module = "aecpost", get_all)]
struct PyRunResult {
    mean_erle_db: f64,
    t20_s: f64,
    ss_misalign_db: f64,
    seg_snr_db: f64,
    seg_sir_db: f64,
    lsd_db: f64,
    t60_s: Option<f64>,
    diverged_at: Option<u64>,
    processed: PySignal,
    aec_error: PySignal,
    csv: String,
}

#[pymethods]
impl PyRunResult {
    fn __repr__(&self) -> String {
        format!(
            "Result(mean_erle_db={:.2}, seg_snr_db={:.2}, seg_sir_db={:.2}, lsd_db={:.2})",
            self.mean_erle_db, self.seg_snr_db, self.seg_sir_db, self.lsd_db
        )
    }
}

/// Synthesises the configured scenario, processes it and writes the outputs
/// if `output.dir` is set.
#[pyfunction]
fn run(config: &PyConfig) -> PyResult<PyRunResult> {
    let cfg = &config.inner;
    let (res, _) = aecpost::pipeline::run_pipeline(cfg).map_err(py_err)?;
    let row = res.csv_row(cfg);
    Ok(PyRunResult {
        mean_erle_db: row.mean_erle_db,
        t20_s: row.t20_s,
        ss_misalign_db: row.ss_misalign_db,
        seg_snr_db: row.seg_snr_db,
        seg_sir_db: row.seg_sir_db,
        lsd_db: row.lsd_db,
        t60_s: res.t60.map(|m| m.t60_s),
        diverged_at: res.diverged_at,
        processed: PySignal { inner: res.processed },
        aec_error: PySignal { inner: res.aec_error },
        csv: aecpost::pipeline::csv::render(&[row]),
    })
}

/// Time-domain adaptive echo canceller.
#[pyclass(name = "AdaptiveFilter", module = "aecpost")]
struct PyAdaptiveFilter {
    inner: aecpost::aec::AdaptiveFilter,
}

#[pymethods]
impl PyAdaptiveFilter {
    #[new]
    #[pyo3(signature = (variant, taps, mu = None, delta = None))]
    fn new(variant: &str, taps: usize, mu: Option<f64>, delta: Option<f64>) -> PyResult<Self> {
        let kind: VariantKind = variant.parse().map_err(py_err)?;
        let mut cfg = AdaptiveFilterConfig::new(kind, taps);
        if let Some(mu) = mu {
            cfg.mu = mu;
        }
        if let Some(delta) = delta {
            cfg.delta = delta;
        }
        Ok(Self {
            inner: aecpost::aec::AdaptiveFilter::new(cfg).map_err(py_err)?,
        })
    }

    /// Returns `(echo_estimate, error)`.
    fn process_sample(&mut self, far: f64, mic: f64) -> PyResult<(f64, f64)> {
        let out = self.inner.process_sample(far, mic).map_err(py_err)?;
        Ok((out.echo_estimate, out.error))
    }

    /// Runs sample by sample over both sequences and returns the error.
    fn process(&mut self, far: Vec<f64>, mic: Vec<f64>) -> PyResult<Vec<f64>> {
        if far.len() != mic.len() {
            return Err(PyValueError::new_err("far and mic lengths differ"));
        }
        far.iter()
            .zip(&mic)
            .map(|(&x, &d)| self.inner.process_sample(x, d).map(|o| o.error).map_err(py_err))
            .collect()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    #[pyo3(signature = (truth, sample_rate = 16000))]
    fn misalignment_db(&self, truth: Vec<f64>, sample_rate: u32) -> PyResult<f64> {
        let path = ImpulseResponse::from_taps(truth, sample_rate).map_err(py_err)?;
        self.inner.misalignment_db(&path).map_err(py_err)
    }
}

#[pyfunction]
fn segmental_snr(reference: &PySignal, processed: &PySignal) -> PyResult<f64> {
    aecpost::metrics::segmental_snr(&reference.inner, &processed.inner, &MetricParams::default()).map_err(py_err)
}

#[pyfunction]
fn log_spectral_distance(reference: &PySignal, processed: &PySignal) -> PyResult<f64> {
    let p = MetricParams::default();
    aecpost::metrics::lsd(&reference.inner, &processed.inner, FrameParams::default(), p.activity_threshold_db)
        .map_err(py_err)
}

/// Mean ERLE over the converged part of the run.
#[pyfunction]
fn erle_db(echo: &PySignal, residual: &PySignal) -> PyResult<f64> {
    Ok(aecpost::metrics::erle(&echo.inner, &residual.inner, &MetricParams::default())
        .map_err(py_err)?
        .mean_db)
}

/// T60 in seconds from an impulse response by backward integration.
#[pyfunction]
#[pyo3(signature = (taps, sample_rate = 16000))]
fn estimate_t60(taps: Vec<f64>, sample_rate: u32) -> PyResult<f64> {
    let path = ImpulseResponse::from_taps(taps, sample_rate).map_err(py_err)?;
    Ok(aecpost::interference::estimate_t60(&path, FrameParams::default().hop)
        .map_err(py_err)?
        .t60_s)
}

/// Analysis followed by synthesis with the default frame parameters.
#[pyfunction]
fn stft_round_trip(signal: &PySignal) -> PyResult<PySignal> {
    let spec = aecpost::stft::stft(&signal.inner, FrameParams::default()).map_err(py_err)?;
    Ok(PySignal {
        inner: aecpost::stft::istft(&spec).map_err(py_err)?,
    })
}

#[pymodule]
#[pyo3(name = "aecpost")]
fn aecpost_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySignal>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyRunResult>()?;
    m.add_class::<PyAdaptiveFilter>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(segmental_snr, m)?)?;
    m.add_function(wrap_pyfunction!(log_spectral_distance, m)?)?;
    m.add_function(wrap_pyfunction!(erle_db, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_t60, m)?)?;
    m.add_function(wrap_pyfunction!(stft_round_trip, m)?)?;
    Ok(())
}

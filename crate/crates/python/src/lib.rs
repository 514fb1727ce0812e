//! Python bindings. Signals cross the boundary as nested lists of floats;
//! windows are `(n, 250)` lists and feature maps `(n, maps, len)`.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ssrgan::checkpoint::{from_bytes, load_checkpoint, save_checkpoint, to_bytes};
use ssrgan::losses::{mk_mmd, MmdConfig};
use ssrgan::metrics::{aas_baseline, inps, ptpr, AasConfig, MetricsReport};
use ssrgan::pipeline::{denoise, fit};
use ssrgan::signal::{bandpass, read_recording, resample, segment, write_recording};
use ssrgan::synth::make_datasets;
use ssrgan::trainer::{Preset, TrainConfig};
use ssrgan::{Error, ModelConfig, Side, SsrganModel, Tensor};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        e @ (Error::InvalidArgument(_) | Error::Config(_) | Error::Json(_) | Error::Format(_)) => {
            PyValueError::new_err(e.to_string())
        }
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for ssrgan::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn parse_json<T: serde::de::DeserializeOwned + Default>(json: Option<&str>) -> PyResult<T> {
    match json {
        None => Ok(T::default()),
        Some(s) => serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string())),
    }
}

fn to_dict<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn windows_tensor(rows: Vec<Vec<f64>>) -> PyResult<Tensor<f32>> {
    let len = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != len) {
        return Err(PyValueError::new_err("windows must all have the same length"));
    }
    let n = rows.len();
    Ok(Tensor::new([n, 1, len], rows.concat()).py()?.cast())
}

fn samples_tensor(rows: Vec<Vec<f64>>) -> PyResult<Tensor<f64>> {
    let dim = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != dim) {
        return Err(PyValueError::new_err("samples must all have the same dimension"));
    }
    Tensor::new([rows.len(), 1, dim], rows.concat()).py()
}

fn side(name: &str) -> PyResult<Side> {
    match name {
        "a" | "A" => Ok(Side::A),
        "b" | "B" => Ok(Side::B),
        _ => Err(PyValueError::new_err(format!("side must be 'a' or 'b', got {name:?}"))),
    }
}

/// A multichannel signal at a fixed sample rate.
#[pyclass(name = "Recording", module = "ssrgan", from_py_object)]
#[derive(Clone)]
pub struct PyRecording {
    inner: ssrgan::signal::Recording,
}

#[pymethods]
impl PyRecording {
    #[new]
    fn new(sample_rate_hz: f64, channels: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self {
            inner: ssrgan::signal::Recording::new(sample_rate_hz, channels).py()?,
        })
    }

    /// Reads a `.csv` recording or a raw `f32` file with its JSON sidecar.
    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: read_recording(path).py()?,
        })
    }

    fn write(&self, path: &str) -> PyResult<()> {
        write_recording(&self.inner, path).py()
    }

    #[getter]
    fn sample_rate_hz(&self) -> f64 {
        self.inner.sample_rate_hz
    }

    #[getter]
    fn channels(&self) -> Vec<Vec<f64>> {
        self.inner.channels.clone()
    }

    #[getter]
    fn n_channels(&self) -> usize {
        self.inner.n_channels()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Recording(channels={}, samples={}, sample_rate_hz={})",
            self.inner.n_channels(),
            self.inner.len(),
            self.inner.sample_rate_hz
        )
    }

    fn bandpass(&self, lo_hz: f64, hi_hz: f64) -> PyResult<Self> {
        Ok(Self {
            inner: bandpass(&self.inner, lo_hz, hi_hz).py()?,
        })
    }

    fn resample(&self, target_hz: f64) -> PyResult<Self> {
        Ok(Self {
            inner: resample(&self.inner, target_hz).py()?,
        })
    }

    /// Zero-mean windows divided by `scale`, or by the robust scale of this
    /// recording when `scale` is omitted.
    #[pyo3(signature = (scale=None))]
    fn windows(&self, scale: Option<f64>) -> PyResult<(Vec<Vec<f64>>, f64)> {
        let ds = segment(&self.inner, 1.0, scale).py()?;
        let len = ds.window_len();
        Ok((ds.windows.data().chunks(len).map(<[f64]>::to_vec).collect(), ds.scale))
    }
}

/// A trained or freshly initialized generator/discriminator set.
#[pyclass(name = "Model", module = "ssrgan")]
pub struct PyModel {
    inner: SsrganModel<f32>,
}

#[pymethods]
impl PyModel {
    /// Builds a model from a JSON `ModelConfig`, or the default geometry.
    #[new]
    #[pyo3(signature = (config_json=None))]
    fn new(config_json: Option<&str>) -> PyResult<Self> {
        let cfg: ModelConfig = parse_json(config_json)?;
        Ok(Self {
            inner: SsrganModel::build(cfg).py()?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: load_checkpoint(path).py()?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_checkpoint(&self.inner, path).py()
    }

    fn to_bytes(&self) -> PyResult<Vec<u8>> {
        to_bytes(&self.inner).py()
    }

    #[staticmethod]
    fn from_bytes(data: Vec<u8>) -> PyResult<Self> {
        Ok(Self {
            inner: from_bytes(&data).py()?,
        })
    }

    #[getter]
    fn norm_scale(&self) -> f64 {
        self.inner.norm_scale
    }

    #[setter]
    fn set_norm_scale(&mut self, scale: f64) -> PyResult<()> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(PyValueError::new_err(format!("norm_scale must be > 0, got {scale}")));
        }
        self.inner.norm_scale = scale;
        Ok(())
    }

    #[getter]
    fn config_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.config).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn generator_param_count(&self) -> usize {
        self.inner.param_count(&self.inner.generator_params())
    }

    /// G_f on normalized windows.
    fn forward(&self, windows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let out = self.inner.generator_forward(&windows_tensor(windows)?).py()?;
        let len = out.length();
        Ok(out.data().chunks(len).map(|c| c.iter().map(|&v| v as f64).collect()).collect())
    }

    /// G_r on normalized windows.
    fn reverse(&self, windows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let out = self.inner.generator_reverse(&windows_tensor(windows)?).py()?;
        let len = out.length();
        Ok(out.data().chunks(len).map(|c| c.iter().map(|&v| v as f64).collect()).collect())
    }

    /// Middle-content feature maps: side `"a"` for φ₁, `"b"` for φ₂.
    #[pyo3(signature = (windows, side="a"))]
    fn features(&self, windows: Vec<Vec<f64>>, side: &str) -> PyResult<Vec<Vec<Vec<f64>>>> {
        let out = self
            .inner
            .middle_content(&windows_tensor(windows)?, self::side(side)?)
            .py()?;
        let [_, maps, len] = out.shape();
        Ok(out
            .data()
            .chunks(maps * len)
            .map(|w| w.chunks(len).map(|m| m.iter().map(|&v| v as f64).collect()).collect())
            .collect())
    }

    /// Full-signal denoising of a 250 Hz recording.
    fn denoise(&self, rec: &PyRecording) -> PyResult<PyRecording> {
        Ok(PyRecording {
            inner: denoise(&self.inner, &rec.inner).py()?,
        })
    }
}

/// Synthetic training and evaluation recordings as a dict with keys `a`,
/// `b`, `eval_contaminated`, `eval_clean` and `scale`.
#[pyfunction]
#[pyo3(signature = (config_json=None, n_train_a=512, n_train_b=512, n_eval=64))]
fn synth<'py>(
    py: Python<'py>,
    config_json: Option<&str>,
    n_train_a: usize,
    n_train_b: usize,
    n_eval: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = parse_json(config_json)?;
    let d = make_datasets(&cfg, n_train_a, n_train_b, n_eval).py()?;
    let out = PyDict::new(py);
    for (key, ds) in [
        ("a", &d.a),
        ("b", &d.b),
        ("eval_contaminated", &d.eval_contaminated),
        ("eval_clean", &d.eval_clean),
    ] {
        let inner = ssrgan::signal::stitch(ds).py()?;
        out.set_item(key, PyRecording { inner })?;
    }
    out.set_item("scale", d.manifest.scale)?;
    Ok(out)
}

/// Trains a new model on recordings `a` (contaminated) and `b` (clean).
/// Returns the model and one dict of losses per iteration.
#[pyfunction]
#[pyo3(signature = (a, b, train_json=None, model_json=None, preset=None))]
fn train<'py>(
    py: Python<'py>,
    a: &PyRecording,
    b: &PyRecording,
    train_json: Option<&str>,
    model_json: Option<&str>,
    preset: Option<&str>,
) -> PyResult<(PyModel, Bound<'py, PyAny>)> {
    let mut train_cfg: TrainConfig = parse_json(train_json)?;
    if let Some(p) = preset {
        train_cfg = Preset::parse(p).py()?.apply(train_cfg);
    }
    let model_cfg: ModelConfig = parse_json(model_json)?;
    let wa = segment(&a.inner, 1.0, None).py()?;
    let wb = segment(&b.inner, 1.0, Some(wa.scale)).py()?;
    let (model, history) = py
        .detach(|| fit(&model_cfg, &train_cfg, &wa, &wb, |_| {}))
        .py()?;
    Ok((PyModel { inner: model }, to_dict(py, &history.records)?))
}

#[pyfunction]
fn inps_db(before: &PyRecording, after: &PyRecording) -> PyResult<f64> {
    inps(&before.inner, &after.inner).py()
}

#[pyfunction(name = "ptpr")]
fn ptpr_ratio(before: &PyRecording, after: &PyRecording) -> PyResult<f64> {
    ptpr(&before.inner, &after.inner).py()
}

/// INPS, PTPR, PSD curves and, with `clean`, ground-truth correlation.
#[pyfunction]
#[pyo3(signature = (before, after, clean=None))]
fn metrics<'py>(
    py: Python<'py>,
    before: &PyRecording,
    after: &PyRecording,
    clean: Option<&PyRecording>,
) -> PyResult<Bound<'py, PyAny>> {
    let r = MetricsReport::compute(&before.inner, &after.inner, clean.map(|c| &c.inner)).py()?;
    to_dict(py, &r)
}

#[pyfunction]
#[pyo3(signature = (rec, config_json=None))]
fn aas(rec: &PyRecording, config_json: Option<&str>) -> PyResult<PyRecording> {
    let cfg: AasConfig = parse_json(config_json)?;
    Ok(PyRecording {
        inner: aas_baseline(&rec.inner, &cfg).py()?,
    })
}

/// Squared multi-kernel MMD between two sample sets given as rows.
/// Bandwidths follow the median heuristic unless `sigmas` is given.
#[pyfunction]
#[pyo3(signature = (x, y, sigmas=None))]
fn mmd(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>, sigmas: Option<Vec<f64>>) -> PyResult<f64> {
    let cfg = sigmas.map(MmdConfig::fixed).unwrap_or_default();
    mk_mmd(&samples_tensor(x)?, &samples_tensor(y)?, &cfg).py()
}

/// Runs the gradient and adjoint suites. Returns `(passed, report_text)`.
#[pyfunction]
#[pyo3(signature = (seeds=vec![0, 1, 2]))]
fn gradcheck(py: Python<'_>, seeds: Vec<u64>) -> PyResult<(bool, String)> {
    let report = py.detach(|| ssrgan::verify::gradcheck(&seeds)).py()?;
    Ok((report.passed(), report.to_string()))
}

#[pymodule(name = "ssrgan")]
pub fn ssrgan_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRecording>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(inps_db, m)?)?;
    m.add_function(wrap_pyfunction!(ptpr_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(aas, m)?)?;
    m.add_function(wrap_pyfunction!(mmd, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add("MODEL_RATE_HZ", ssrgan::signal::MODEL_RATE_HZ)?;
    Ok(())
}

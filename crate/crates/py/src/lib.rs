//! Python bindings: configuration, calibration, sweeps, fits and the
//! acceptance run.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use spdc_spatial::acceptance::{self, Status};
use spdc_spatial::analysis;
use spdc_spatial::config::ExperimentConfig;
use spdc_spatial::crystal::CrystalSpec;
use spdc_spatial::harness::{self, AngleResult, Mode, SweepReport};
use spdc_spatial::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidInput(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Experiment configuration; every section defaults to the built-in values.
#[pyclass(name = "Config", module = "spdc_spatial")]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    fn new() -> Self {
        Self {
            inner: ExperimentConfig::default(),
        }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        ExperimentConfig::from_toml(text)
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        ExperimentConfig::load(path).map(|inner| Self { inner }).map_err(to_py)
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.acquisition.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.acquisition.seed = seed;
    }

    #[getter]
    fn waist_m(&self) -> f64 {
        self.inner.beam.waist_m
    }

    #[setter]
    fn set_waist_m(&mut self, w: f64) {
        self.inner.beam.waist_m = w;
    }

    #[getter]
    fn cut_angle_deg(&self) -> f64 {
        self.inner.crystal.cut_angle_deg
    }

    #[setter]
    fn set_cut_angle_deg(&mut self, deg: f64) {
        self.inner.crystal.cut_angle_deg = deg;
    }

    #[getter]
    fn sweep_deg(&self) -> Vec<f64> {
        self.inner.sweep.alpha_p_deg.clone()
    }

    #[setter]
    fn set_sweep_deg(&mut self, angles: Vec<f64>) {
        self.inner.sweep.alpha_p_deg = angles;
    }

    #[getter]
    fn duration_s(&self) -> f64 {
        self.inner.acquisition.duration_s
    }

    #[setter]
    fn set_duration_s(&mut self, t: f64) {
        self.inner.acquisition.duration_s = t;
    }

    #[getter]
    fn pair_rate_hz(&self) -> f64 {
        self.inner.acquisition.pair_rate_hz
    }

    #[setter]
    fn set_pair_rate_hz(&mut self, r: f64) {
        self.inner.acquisition.pair_rate_hz = r;
    }

    fn __repr__(&self) -> String {
        format!("Config(hash={})", &self.inner.hash()[..12])
    }
}

/// A crystal with its cut angle, used for phase-matching queries.
#[pyclass(name = "Crystal", module = "spdc_spatial", frozen)]
struct PyCrystal {
    inner: CrystalSpec,
    omega_p: f64,
}

#[pymethods]
impl PyCrystal {
    /// The configured crystal, uncalibrated.
    #[staticmethod]
    fn from_config(config: &PyConfig) -> PyResult<Self> {
        Ok(Self {
            inner: config.inner.crystal_spec().map_err(to_py)?,
            omega_p: config.inner.omega_p(),
        })
    }

    #[getter]
    fn cut_angle_deg(&self) -> f64 {
        self.inner.cut_angle.to_degrees()
    }

    /// External signal angle of the phase-matched degenerate pair, degrees.
    fn signal_angle_deg(&self, alpha_p_deg: f64) -> PyResult<f64> {
        self.inner.signal_angle_deg(alpha_p_deg, self.omega_p).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Crystal(cut_angle_deg={:.6})", self.cut_angle_deg())
    }
}

/// Trim the cut angle so the α_p = 0 signal leaves at the configured target.
#[pyfunction]
fn calibrate(py: Python<'_>, config: &PyConfig) -> PyResult<PyCrystal> {
    let cfg = config.inner.clone();
    let inner = py.detach(|| harness::calibrate(&cfg)).map_err(to_py)?;
    Ok(PyCrystal {
        inner,
        omega_p: config.inner.omega_p(),
    })
}

#[pyclass(name = "GaussianFit", module = "spdc_spatial", frozen, get_all)]
struct PyGaussianFit {
    amplitude: f64,
    center: f64,
    width: f64,
    offset: f64,
    sigma_amplitude: f64,
    sigma_center: f64,
    sigma_width: f64,
    sigma_offset: f64,
    reduced_chi2: f64,
    iterations: usize,
}

impl From<analysis::GaussianFit> for PyGaussianFit {
    fn from(f: analysis::GaussianFit) -> Self {
        Self {
            amplitude: f.amplitude,
            center: f.center,
            width: f.width,
            offset: f.offset,
            sigma_amplitude: f.sigma_amplitude,
            sigma_center: f.sigma_center,
            sigma_width: f.sigma_width,
            sigma_offset: f.sigma_offset,
            reduced_chi2: f.reduced_chi2,
            iterations: f.iterations,
        }
    }
}

#[pymethods]
impl PyGaussianFit {
    #[getter]
    fn diameter(&self) -> f64 {
        2.0 * self.width
    }

    fn __repr__(&self) -> String {
        format!(
            "GaussianFit(center={:.4}, width={:.4}, amplitude={:.2}, offset={:.2})",
            self.center, self.width, self.amplitude, self.offset
        )
    }
}

/// Fit A·exp(−(x−c)²/w²) + b to per-pixel values; `mask` marks live pixels.
#[pyfunction]
#[pyo3(signature = (values, mask=None))]
fn fit_gaussian(values: Vec<f64>, mask: Option<Vec<bool>>) -> PyResult<PyGaussianFit> {
    let mask = mask.unwrap_or_else(|| vec![true; values.len()]);
    analysis::fit_gaussian_values(&values, &mask)
        .map(Into::into)
        .map_err(to_py)
}

#[pyclass(name = "LinearFit", module = "spdc_spatial", frozen, get_all)]
struct PyLinearFit {
    intercept: f64,
    slope: f64,
    sigma_intercept: f64,
    sigma_slope: f64,
    covariance: [[f64; 2]; 2],
    chi2: f64,
}

impl From<analysis::LinearFit> for PyLinearFit {
    fn from(f: analysis::LinearFit) -> Self {
        Self {
            intercept: f.intercept,
            slope: f.slope,
            sigma_intercept: f.sigma_intercept,
            sigma_slope: f.sigma_slope,
            covariance: f.covariance,
            chi2: f.chi2,
        }
    }
}

#[pymethods]
impl PyLinearFit {
    fn __repr__(&self) -> String {
        format!(
            "LinearFit(intercept={:.6} ± {:.6}, slope={:.4} ± {:.4})",
            self.intercept, self.sigma_intercept, self.slope, self.sigma_slope
        )
    }
}

/// Weighted straight-line fit through (x, y, sigma_y) points.
#[pyfunction]
fn fit_linear(points: Vec<(f64, f64, f64)>) -> PyResult<PyLinearFit> {
    analysis::fit_linear(&points).map(Into::into).map_err(to_py)
}

#[pyclass(name = "AngleResult", module = "spdc_spatial", frozen)]
struct PyAngleResult {
    inner: AngleResult,
}

#[pymethods]
impl PyAngleResult {
    #[getter]
    fn alpha_p_deg(&self) -> f64 {
        self.inner.alpha_p_deg
    }

    #[getter]
    fn alpha_s0_deg(&self) -> f64 {
        self.inner.alpha_s0_deg
    }

    #[getter]
    fn sigma_alpha_s0_deg(&self) -> f64 {
        self.inner.sigma_alpha_s0_deg
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn probability(&self) -> Vec<f64> {
        self.inner.probability.clone()
    }

    #[getter]
    fn expected(&self) -> Vec<f64> {
        self.inner.expected.clone()
    }

    /// Sampled counts (synthetic mode only).
    #[getter]
    fn counts(&self) -> Option<Vec<u64>> {
        self.inner.histogram.as_ref().map(|h| h.counts.clone())
    }

    #[getter]
    fn fit(&self) -> PyGaussianFit {
        self.inner.fit.into()
    }

    #[getter]
    fn peak_probability(&self) -> f64 {
        self.inner.peak_probability
    }

    fn __repr__(&self) -> String {
        format!(
            "AngleResult(alpha_p_deg={:+.3}, alpha_s0_deg={:.5})",
            self.inner.alpha_p_deg, self.inner.alpha_s0_deg
        )
    }
}

#[pyclass(name = "SweepReport", module = "spdc_spatial", frozen)]
struct PySweepReport {
    inner: SweepReport,
    config: ExperimentConfig,
}

#[pymethods]
impl PySweepReport {
    #[getter]
    fn mode(&self) -> String {
        self.inner.mode.to_string()
    }

    #[getter]
    fn config_hash(&self) -> &str {
        &self.inner.config_hash
    }

    #[getter]
    fn calibrated_cut_angle_deg(&self) -> f64 {
        self.inner.calibrated_cut_angle_deg
    }

    #[getter]
    fn line(&self) -> PyLinearFit {
        self.inner.line.into()
    }

    #[getter]
    fn slope(&self) -> f64 {
        self.inner.line.slope
    }

    #[getter]
    fn intercept(&self) -> f64 {
        self.inner.line.intercept
    }

    #[getter]
    fn flatness(&self) -> f64 {
        self.inner.flatness
    }

    #[getter]
    fn angles(&self) -> Vec<PyAngleResult> {
        self.inner
            .angles
            .iter()
            .map(|a| PyAngleResult { inner: a.clone() })
            .collect()
    }

    /// Write the profile, summary, fit-report and acceptance files; returns the paths.
    fn emit(&self, dir: PathBuf) -> PyResult<Vec<PathBuf>> {
        harness::emit(&self.inner, &self.config, &dir).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.angles.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "SweepReport(mode={}, slope={:.4}, intercept={:.5}, angles={})",
            self.inner.mode,
            self.inner.line.slope,
            self.inner.line.intercept,
            self.inner.angles.len()
        )
    }
}

/// Run the pump-angle sweep in "analytic", "synthetic" or "oracle" mode.
#[pyfunction]
#[pyo3(signature = (config, mode="analytic", threads=0))]
fn run_sweep(py: Python<'_>, config: &PyConfig, mode: &str, threads: usize) -> PyResult<PySweepReport> {
    let mode: Mode = mode.parse().map_err(to_py)?;
    let cfg = config.inner.clone();
    let report = py
        .detach(|| harness::with_threads(threads, || harness::run_sweep(&cfg, mode)))
        .map_err(to_py)?
        .map_err(to_py)?;
    Ok(PySweepReport {
        inner: report,
        config: cfg,
    })
}

/// Evaluate the acceptance criteria; returns (id, name, status, detail) tuples
/// with status one of "pass", "fail", "not_evaluated".
#[pyfunction]
#[pyo3(signature = (config, threads=0))]
fn check(py: Python<'_>, config: &PyConfig, threads: usize) -> PyResult<Vec<(u8, String, String, String)>> {
    let cfg = config.inner.clone();
    let results = py
        .detach(|| harness::with_threads(threads, || acceptance::run_all(&cfg)))
        .map_err(to_py)?
        .map_err(to_py)?;
    Ok(results
        .into_iter()
        .map(|r| {
            let status = match r.status {
                Status::Pass => "pass",
                Status::Fail => "fail",
                Status::NotEvaluated => "not_evaluated",
            };
            (r.id, r.name.to_string(), status.to_string(), r.detail)
        })
        .collect())
}

#[pymodule(name = "spdc_spatial")]
fn spdc_spatial_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyCrystal>()?;
    m.add_class::<PyGaussianFit>()?;
    m.add_class::<PyLinearFit>()?;
    m.add_class::<PyAngleResult>()?;
    m.add_class::<PySweepReport>()?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(fit_linear, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    Ok(())
}

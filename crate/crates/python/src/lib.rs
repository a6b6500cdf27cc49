//! Python bindings. Angles are degrees and SNR is dB at this boundary, as on
//! the command line; matrices are lists of rows of Python complex numbers.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use sdmimo_core::experiments::{self, ExperimentKind};
use sdmimo_core::receivers::{self, SeOptions};
use sdmimo_core::{
    array_model, noise_spectrum, quantization, sigma_delta, validate, CMatrix, Error, PhiSetting,
};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter { .. }
        | Error::DimensionMismatch { .. }
        | Error::InvalidConfig(_)
        | Error::UnknownExperiment(_)
        | Error::InsufficientSamples { .. }
        | Error::NotHermitian(_)
        | Error::ZeroDiagonal(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn rows(m: &CMatrix) -> Vec<Vec<Complex64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn matrix(rows: Vec<Vec<Complex64>>) -> PyResult<CMatrix> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("matrix rows must have equal length"));
    }
    Ok(CMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

/// Uniform linear array of `m` antennas spaced `d_over_lambda` wavelengths apart.
#[pyclass(name = "ArrayGeometry", frozen)]
struct PyGeometry(sdmimo_core::ArrayGeometry);

#[pymethods]
impl PyGeometry {
    #[new]
    #[pyo3(signature = (m, d_over_lambda=0.25))]
    fn new(m: usize, d_over_lambda: f64) -> PyResult<Self> {
        sdmimo_core::ArrayGeometry::new(m, d_over_lambda)
            .map(Self)
            .map_err(to_py)
    }

    #[getter]
    fn m(&self) -> usize {
        self.0.m
    }

    #[getter]
    fn d_over_lambda(&self) -> f64 {
        self.0.d_over_lambda
    }

    /// Steering vector for `u = sin θ`.
    fn steering_vector(&self, u: f64) -> PyResult<Vec<Complex64>> {
        Ok(array_model::steering_vector(&self.0, u)
            .map_err(to_py)?
            .iter()
            .copied()
            .collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "ArrayGeometry(m={}, d_over_lambda={})",
            self.0.m, self.0.d_over_lambda
        )
    }
}

/// Uplink scenario: `k` users with `l` paths each inside a sector of
/// `spread_deg` degrees centred at `theta0_deg`.
#[pyclass(name = "Scenario", frozen)]
struct PyScenario(sdmimo_core::Scenario);

#[pymethods]
impl PyScenario {
    #[new]
    #[pyo3(signature = (k=10, l=50, theta0_deg=30.0, spread_deg=40.0, snr_db=0.0, phi_mode="auto", phi_deg=None))]
    fn new(
        k: usize,
        l: usize,
        theta0_deg: f64,
        spread_deg: f64,
        snr_db: f64,
        phi_mode: &str,
        phi_deg: Option<f64>,
    ) -> PyResult<Self> {
        let mut s =
            sdmimo_core::Scenario::new(k, l, theta0_deg.to_radians(), spread_deg.to_radians(), snr_db)
                .map_err(to_py)?;
        s.phi = match (phi_mode, phi_deg) {
            ("auto", None) => PhiSetting::Auto,
            ("optimal", None) => PhiSetting::Optimal,
            ("manual", Some(p)) => PhiSetting::Manual(p.to_radians()),
            _ => {
                return Err(PyValueError::new_err(
                    "phi_mode must be auto, optimal, or manual with phi_deg",
                ))
            }
        };
        Ok(Self(s))
    }

    #[getter]
    fn k(&self) -> usize {
        self.0.k
    }

    #[getter]
    fn l(&self) -> usize {
        self.0.l
    }

    #[getter]
    fn snr_db(&self) -> f64 {
        self.0.snr_db()
    }

    /// Sector edges as `(sin θ_min, sin θ_max)`.
    fn sector(&self) -> (f64, f64) {
        self.0.sector()
    }

    /// Steering phase used by the Sigma-Delta chain, radians.
    fn steering_phase(&self, geom: &PyGeometry) -> PyResult<f64> {
        self.0.steering_phase(&geom.0).map_err(to_py)
    }

    /// Sector-averaged input covariance `R_x`.
    fn rx_covariance(&self, geom: &PyGeometry) -> PyResult<Vec<Vec<Complex64>>> {
        Ok(rows(
            &array_model::rx_covariance_analytic(&self.0, &geom.0).map_err(to_py)?,
        ))
    }

    /// One received snapshot `x` for the given seed.
    fn synthesize_rx(&self, geom: &PyGeometry, seed: u64) -> PyResult<Vec<Complex64>> {
        let mut rng = sdmimo_core::rng::trial_rng(seed, 0);
        let real = array_model::draw_channel_with(&self.0, &geom.0, None, &mut rng).map_err(to_py)?;
        let s = array_model::draw_symbols(self.0.k, array_model::SymbolKind::Gaussian, &mut rng);
        let x = array_model::synthesize_rx_with(&real, &self.0, &s, &mut rng).map_err(to_py)?;
        Ok(x.iter().copied().collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(k={}, l={}, theta0_deg={}, spread_deg={}, snr_db={})",
            self.0.k,
            self.0.l,
            self.0.theta0.to_degrees(),
            self.0.spread.to_degrees(),
            self.0.snr_db()
        )
    }
}

/// Plain one-bit quantization with per-antenna levels.
#[pyfunction]
fn quantize_one_bit(x: Vec<Complex64>, levels: Vec<f64>) -> PyResult<Vec<Complex64>> {
    let bank = quantization::QuantizerBank::new(levels).map_err(to_py)?;
    quantization::quantize_one_bit(&x, &bank).map_err(to_py)
}

/// Sigma-Delta quantization along the array; returns `(y, r)`.
#[pyfunction]
fn sd_quantize(x: Vec<Complex64>, levels: Vec<f64>, phi: f64) -> PyResult<(Vec<Complex64>, Vec<Complex64>)> {
    let bank = quantization::QuantizerBank::new(levels).map_err(to_py)?;
    sigma_delta::sd_quantize(&x, &bank, phi).map_err(to_py)
}

/// Noise-power recursion: returns `(p_r, p_q, levels)` for per-antenna input powers.
#[pyfunction]
fn sd_linear_model(p_x: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let n = sigma_delta::sd_linear_model(&p_x).map_err(to_py)?;
    let levels = n.levels().levels().to_vec();
    Ok((n.p_r, n.p_q, levels))
}

/// Unit-gain one-bit levels `sqrt(π p)/2`.
#[pyfunction]
fn alpha_gaussian(p_r: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(quantization::alpha_gaussian(&p_r)
        .map_err(to_py)?
        .levels()
        .to_vec())
}

/// Output covariance of unit-gain one-bit converters for input covariance `r_x`.
#[pyfunction]
fn arcsine_output_covariance(r_x: Vec<Vec<Complex64>>) -> PyResult<Vec<Vec<Complex64>>> {
    Ok(rows(
        &quantization::arcsine_output_covariance(&matrix(r_x)?).map_err(to_py)?,
    ))
}

/// Noise density `(1/M) a(u)^H R a(u)` on a grid of `u = sin θ`.
#[pyfunction]
fn noise_density(r: Vec<Vec<Complex64>>, geom: &PyGeometry, u_grid: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(noise_spectrum::spectrum(&matrix(r)?, &geom.0, &u_grid)
        .map_err(to_py)?
        .density)
}

/// `ζ` fitted for the largest off-diagonal normalized correlation `x_max`.
#[pyfunction]
fn fit_zeta(x_max: f64) -> PyResult<f64> {
    Ok(noise_spectrum::fit_zeta(x_max).map_err(to_py)?.zeta)
}

/// Optimal steering phase `φ*` in radians.
#[pyfunction]
fn phi_star(scn: &PyScenario, geom: &PyGeometry) -> PyResult<f64> {
    receivers::phi_star(&scn.0, &geom.0).map_err(to_py)
}

/// Shaping factor `G(φ)`; `phi` in radians.
#[pyfunction]
fn g_phi(scn: &PyScenario, geom: &PyGeometry, phi: f64) -> PyResult<f64> {
    receivers::g_phi(&scn.0, &geom.0, phi).map_err(to_py)
}

/// Simulated sum SE in bits/s/Hz; returns `(sum, per_user, sum_stderr)`.
#[pyfunction]
#[pyo3(signature = (receiver, scn, geom, arch, trials=1000, seed=1, csi="perfect"))]
#[allow(clippy::too_many_arguments)]
fn se_simulated(
    py: Python<'_>,
    receiver: &str,
    scn: &PyScenario,
    geom: &PyGeometry,
    arch: &str,
    trials: usize,
    seed: u64,
    csi: &str,
) -> PyResult<(f64, Vec<f64>, f64)> {
    let kind = receiver.parse().map_err(PyValueError::new_err)?;
    let arch = arch.parse().map_err(PyValueError::new_err)?;
    let mut opts = SeOptions::new(trials, seed);
    opts.csi = csi.parse().map_err(PyValueError::new_err)?;
    let (s, g) = (scn.0.clone(), geom.0);
    let r = py
        .detach(move || receivers::se_simulated(kind, &s, &g, arch, &opts))
        .map_err(to_py)?;
    Ok((r.sum, r.per_user, r.sum_stderr))
}

/// Closed-form Sigma-Delta MRC sum SE averaged over the simulation's DoA draws.
#[pyfunction]
#[pyo3(signature = (scn, geom, trials=1000, seed=1))]
fn se_mrc_closed_form(
    py: Python<'_>,
    scn: &PyScenario,
    geom: &PyGeometry,
    trials: usize,
    seed: u64,
) -> PyResult<f64> {
    let (s, g) = (scn.0.clone(), geom.0);
    let opts = SeOptions::new(trials, seed);
    let r = py
        .detach(move || experiments::se_mrc_closed_form_averaged(&s, &g, &opts))
        .map_err(to_py)?;
    Ok(r.sum)
}

/// Runs a builtin experiment (`fig1`..`fig5`) and writes its CSVs to `out`.
/// Returns the written paths.
#[pyfunction]
#[pyo3(signature = (name, out, trials=None, seed=None))]
fn run_experiment(
    py: Python<'_>,
    name: &str,
    out: PathBuf,
    trials: Option<usize>,
    seed: Option<u64>,
) -> PyResult<Vec<String>> {
    let mut spec = experiments::builtin(name).map_err(to_py)?;
    if let Some(t) = trials {
        spec.trials = t;
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    let paths = py
        .detach(move || experiments::run_experiment(&spec).and_then(|r| r.write(&out)))
        .map_err(to_py)?;
    Ok(paths.iter().map(|p| p.display().to_string()).collect())
}

/// Names and kinds of the builtin experiments.
#[pyfunction]
fn list_experiments() -> PyResult<Vec<(String, String)>> {
    experiments::BUILTIN
        .iter()
        .map(|n| {
            let s = experiments::builtin(n).map_err(to_py)?;
            let kind = match s.kind {
                ExperimentKind::Spectrum => "spectrum",
                ExperimentKind::Se => "se",
                ExperimentKind::PhiOpt => "phi-opt",
                ExperimentKind::ChanEst => "chanest",
            };
            Ok((n.to_string(), kind.to_string()))
        })
        .collect()
}

/// Runs the validation suite; returns `(passed, report_text)`.
#[pyfunction]
fn validate_suite(py: Python<'_>) -> PyResult<(bool, String)> {
    let rep = py
        .detach(|| validate::validate_suite(validate::Perturbation::default()))
        .map_err(to_py)?;
    Ok((rep.passed(), rep.to_string()))
}

#[pymodule]
fn sdmimo(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGeometry>()?;
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(quantize_one_bit, m)?)?;
    m.add_function(wrap_pyfunction!(sd_quantize, m)?)?;
    m.add_function(wrap_pyfunction!(sd_linear_model, m)?)?;
    m.add_function(wrap_pyfunction!(alpha_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(arcsine_output_covariance, m)?)?;
    m.add_function(wrap_pyfunction!(noise_density, m)?)?;
    m.add_function(wrap_pyfunction!(fit_zeta, m)?)?;
    m.add_function(wrap_pyfunction!(phi_star, m)?)?;
    m.add_function(wrap_pyfunction!(g_phi, m)?)?;
    m.add_function(wrap_pyfunction!(se_simulated, m)?)?;
    m.add_function(wrap_pyfunction!(se_mrc_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(list_experiments, m)?)?;
    m.add_function(wrap_pyfunction!(validate_suite, m)?)?;
    Ok(())
}

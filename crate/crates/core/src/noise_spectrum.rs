//! Spatial quantization-noise spectra and their in-sector power.

use std::f64::consts::PI;
use std::path::Path;

use serde::Serialize;

use crate::array_model::{
    draw_channel_with, draw_doa_set, draw_symbols, rx_covariance_analytic, rx_covariance_for_doas,
    sector_lag_averages, sinc, synthesize_rx_with, ArrayGeometry, CovarianceMethod, DoaMode, Scenario,
    SymbolKind,
};
use crate::linalg::{accumulate_outer_lower, ensure_hermitian, mirror_lower, quadratic_form, real_diag};
use crate::montecarlo::fold_trials;
use crate::quadrature::GaussLegendre;
use crate::quantization::{alpha_gaussian, normalized_correlation, onebit_noise_covariance};
use crate::rng::{derive_seed, purpose, stream_rng, trial_rng};
use crate::sigma_delta::{noise_power_limit, sd_linear_model, sd_quantize_into, SdNoiseModel};
use crate::{CMatrix, Error, Result, C64};

/// Default number of points on `[-1, 1]`.
pub const DEFAULT_GRID_POINTS: usize = 1024;
/// Gauss–Legendre nodes for sector averages.
pub const SECTOR_NODES: usize = 128;
/// Minimum trial count for empirical spectra.
pub const MIN_SPECTRUM_TRIALS: usize = 1000;

/// Sampled noise density over `u = sin θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumCurve {
    pub u_grid: Vec<f64>,
    pub density: Vec<f64>,
}

impl SpectrumCurve {
    /// Mean density over the grid points inside `[lo, hi]`.
    pub fn mean_over(&self, lo: f64, hi: f64) -> f64 {
        let (s, n) = self
            .u_grid
            .iter()
            .zip(&self.density)
            .filter(|(u, _)| **u >= lo && **u <= hi)
            .fold((0.0, 0usize), |(s, n), (_, d)| (s + d, n + 1));
        s / n.max(1) as f64
    }
}

/// Linear fit `asin(x) ≈ ζ x` over `[0, x̄]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZetaApprox {
    pub zeta: f64,
    pub fit_range: f64,
}

impl ZetaApprox {
    /// A fixed slope, e.g. from the command line.
    pub fn fixed(zeta: f64) -> Result<Self> {
        if !(zeta.is_finite() && zeta > 0.0) {
            return Err(Error::invalid("zeta", format!("must be positive, got {zeta}")));
        }
        Ok(Self {
            zeta,
            fit_range: f64::NAN,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    OneBit,
    SigmaDelta,
}

pub fn uniform_grid(n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect(),
    }
}

/// `(1/M) a(u)^H R a(u)`.
pub fn rho_q(r: &CMatrix, u: f64, geom: &ArrayGeometry) -> Result<f64> {
    ensure_hermitian(r, 1e-9)?;
    if r.nrows() != geom.m {
        return Err(Error::DimensionMismatch {
            context: "noise covariance",
            expected: geom.m,
            got: r.nrows(),
        });
    }
    let a = crate::array_model::steering_vector(geom, u)?;
    Ok(density_unchecked(r, a.as_slice()))
}

fn density_unchecked(r: &CMatrix, a: &[C64]) -> f64 {
    let (re, im) = quadratic_form(r, a);
    debug_assert!(im.abs() <= 1e-9 * re.abs().max(1.0), "imaginary residual {im}");
    re / a.len() as f64
}

/// `ρ_q` sampled on `u_grid`.
pub fn spectrum(r: &CMatrix, geom: &ArrayGeometry, u_grid: &[f64]) -> Result<SpectrumCurve> {
    ensure_hermitian(r, 1e-9)?;
    if r.nrows() != geom.m {
        return Err(Error::DimensionMismatch {
            context: "noise covariance",
            expected: geom.m,
            got: r.nrows(),
        });
    }
    let mut density = Vec::with_capacity(u_grid.len());
    for &u in u_grid {
        let a = crate::array_model::steering_vector(geom, u)?;
        density.push(density_unchecked(r, a.as_slice()));
    }
    Ok(SpectrumCurve {
        u_grid: u_grid.to_vec(),
        density,
    })
}

/// Average of `ρ_q` over `u ∈ [d1, d2]` by Gauss–Legendre quadrature.
pub fn sector_power(r: &CMatrix, geom: &ArrayGeometry, d1: f64, d2: f64, nodes: usize) -> Result<f64> {
    ensure_hermitian(r, 1e-9)?;
    if !(d2 > d1) {
        return Err(Error::invalid("sector", "upper bound must exceed lower bound"));
    }
    let rule = GaussLegendre::new(nodes);
    let mut acc = 0.0;
    for (u, w) in rule.points(d1, d2) {
        let a = crate::array_model::steering_vector(geom, u)?;
        acc += w * density_unchecked(r, a.as_slice());
    }
    Ok(acc / (d2 - d1))
}

/// Least-squares slope of `asin(x)` on `[0, x̄]`: `∫ x asin x / ∫ x²`.
pub fn fit_zeta(x_max: f64) -> Result<ZetaApprox> {
    if !(x_max > 0.0 && x_max <= 1.0) {
        return Err(Error::invalid(
            "x_max",
            format!("must lie in (0, 1], got {x_max}"),
        ));
    }
    let x = x_max;
    let zeta = if x < 1e-2 {
        let x2 = x * x;
        1.0 + x2 / 10.0 + 9.0 * x2 * x2 / 280.0 + 15.0 * x2 * x2 * x2 / 1008.0
    } else {
        let num = (2.0 * x * x - 1.0) * x.asin() + x * (1.0 - x * x).sqrt();
        3.0 * num / (4.0 * x * x * x)
    };
    Ok(ZetaApprox { zeta, fit_range: x })
}

/// `fit_zeta` at the largest off-diagonal input correlation of the scenario.
pub fn default_zeta(scn: &Scenario, geom: &ArrayGeometry) -> Result<ZetaApprox> {
    let r_x = rx_covariance_analytic(scn, geom)?;
    let ups = normalized_correlation(&r_x)?;
    let mut x_bar: f64 = 0.0;
    for i in 0..geom.m {
        for j in 0..i {
            x_bar = x_bar.max(ups[(i, j)].norm());
        }
    }
    fit_zeta(x_bar.clamp(1e-12, 1.0))
}

/// One-bit distortion covariance under `asin(x) ≈ ζ x`:
/// `(ζ − 1) R_x + (π/2 − ζ) diag(R_x)`.
pub fn onebit_zeta_covariance(r_x: &CMatrix, zeta: ZetaApprox) -> CMatrix {
    let m = r_x.nrows();
    let mut r = r_x * C64::new(zeta.zeta - 1.0, 0.0);
    for i in 0..m {
        r[(i, i)] += r_x[(i, i)] * (PI / 2.0 - zeta.zeta);
    }
    r
}

/// In-sector one-bit noise power under the ζ approximation.
///
/// With a sector of half-width `δ` in `u` this is
/// `(ζ−1)[σ² + (1/M) Σ_k p_kβ_k Σ_{m,n} sinc²(2π(d/λ)(m−n)δ)] + (π/2−ζ) Tr(R_x)/M`.
/// The double sum only depends on the sector width, so off-broadside sectors
/// are handled by the same expression.
pub fn pq_onebit_analytic(scn: &Scenario, geom: &ArrayGeometry, zeta: ZetaApprox) -> Result<f64> {
    scn.validate()?;
    geom.validate()?;
    let (d1, d2) = scn.sector();
    let m = geom.m as f64;
    let lags = sector_lag_averages(geom, d1, d2, CovarianceMethod::Closed);
    let double_sum = sinc_double_sum(&lags);
    let trace = m * scn.input_power();
    Ok(
        (zeta.zeta - 1.0) * (scn.sigma_n2 + scn.received_signal_power() * double_sum / m)
            + (PI / 2.0 - zeta.zeta) * trace / m,
    )
}

/// `Σ_{m,n} |c_{m−n}|²` for lag coefficients `c`.
pub fn sinc_double_sum(lags: &[C64]) -> f64 {
    let m = lags.len();
    let mut s = m as f64 * lags[0].norm_sqr();
    for (n, c) in lags.iter().enumerate().skip(1) {
        s += 2.0 * (m - n) as f64 * c.norm_sqr();
    }
    s
}

/// In-sector Sigma-Delta noise power for `φ = 0` and a broadside sector of
/// half-width `delta`:
/// `(2/M)(Tr R_q − σ²_qM)(1 − sinc(2π(d/λ)δ)) + σ²_qM / M`.
pub fn pq_sigmadelta_analytic(noise: &SdNoiseModel, geom: &ArrayGeometry, delta: f64) -> f64 {
    let m = noise.m() as f64;
    let last = noise.last_noise_power();
    2.0 / m * (noise.trace() - last) * (1.0 - sinc(geom.spatial_frequency(delta))) + last / m
}

/// Sigma-Delta in-sector noise power for any steering phase and sector.
pub fn pq_sigmadelta_sector(noise: &SdNoiseModel, geom: &ArrayGeometry, phi: f64, d1: f64, d2: f64) -> f64 {
    let m = noise.m() as f64;
    let last = noise.last_noise_power();
    let c = geom.spatial_frequency(1.0);
    let mean_cos = (c * 0.5 * (d1 + d2) - phi).cos() * sinc(0.5 * c * (d2 - d1));
    2.0 / m * (noise.trace() - last) * (1.0 - mean_cos) + last / m
}

/// Large-array small-angle form `(4/3)(c/(1−c)) π² δ² (d/λ)² p_x`.
pub fn pq_sigmadelta_small_angle(delta: f64, d_over_lambda: f64, p_x: f64) -> f64 {
    4.0 / 3.0 * noise_power_limit() * PI * PI * delta * delta * d_over_lambda * d_over_lambda * p_x
}

/// Limit of `M² P_q` at fixed aperture `d0 = M d/λ`.
pub fn pq_sigmadelta_fixed_aperture_limit(delta: f64, d0: f64, p_x: f64) -> f64 {
    pq_sigmadelta_small_angle(delta, d0, p_x)
}

/// One-bit and Sigma-Delta noise spectra from simulation and from the linear model.
#[derive(Debug, Clone)]
pub struct SpectrumRun {
    pub u_grid: Vec<f64>,
    pub onebit_sim: Vec<f64>,
    pub onebit_analytic: Vec<f64>,
    pub sd_sim: Vec<f64>,
    pub sd_analytic: Vec<f64>,
    pub phi: f64,
    pub trials: usize,
    /// Sample covariances of the effective noise `y − x`.
    pub onebit_cov: CMatrix,
    pub sd_cov: CMatrix,
    /// Input covariance the analytic curves are built from.
    pub r_x: CMatrix,
}

#[derive(Debug, Clone)]
pub struct SpectrumOptions {
    pub trials: usize,
    pub seed: u64,
    pub doa_mode: DoaMode,
    /// Multiplies every Sigma-Delta level (1 for the analytic design).
    pub alpha_scale: f64,
    /// Added to the scenario's steering phase.
    pub phi_offset: f64,
}

impl SpectrumOptions {
    pub fn new(trials: usize, seed: u64) -> Self {
        Self {
            trials,
            seed,
            doa_mode: DoaMode::Fixed,
            alpha_scale: 1.0,
            phi_offset: 0.0,
        }
    }
}

impl SpectrumRun {
    pub fn curve(&self, pipeline: Pipeline, simulated: bool) -> SpectrumCurve {
        let density = match (pipeline, simulated) {
            (Pipeline::OneBit, true) => &self.onebit_sim,
            (Pipeline::OneBit, false) => &self.onebit_analytic,
            (Pipeline::SigmaDelta, true) => &self.sd_sim,
            (Pipeline::SigmaDelta, false) => &self.sd_analytic,
        };
        SpectrumCurve {
            u_grid: self.u_grid.clone(),
            density: density.clone(),
        }
    }

    /// Largest `|sim − analytic| / analytic` over the grid.
    pub fn max_relative_deviation(&self, pipeline: Pipeline) -> f64 {
        let (sim, ana) = match pipeline {
            Pipeline::OneBit => (&self.onebit_sim, &self.onebit_analytic),
            Pipeline::SigmaDelta => (&self.sd_sim, &self.sd_analytic),
        };
        sim.iter()
            .zip(ana)
            .map(|(s, a)| (s - a).abs() / a.abs())
            .fold(0.0, f64::max)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "u",
            "rho_onebit_sim",
            "rho_onebit_analytic",
            "rho_sd_sim",
            "rho_sd_analytic",
        ])?;
        for i in 0..self.u_grid.len() {
            w.write_record([
                fmt(self.u_grid[i]),
                fmt(self.onebit_sim[i]),
                fmt(self.onebit_analytic[i]),
                fmt(self.sd_sim[i]),
                fmt(self.sd_analytic[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn fmt(v: f64) -> String {
    format!("{v:.10e}")
}

struct NoiseAccumulator {
    onebit: CMatrix,
    sd: CMatrix,
}

/// Simulated and analytic noise spectra for both pipelines on paired snapshots.
///
/// Each trial draws a channel, symbols and noise, forms one snapshot `x`, and
/// passes it through both pipelines. One-bit levels are `sqrt(π E|x_m|²)/2`;
/// Sigma-Delta levels come from the noise-power recursion. In `Fixed` DoA mode
/// the analytic input covariance is conditioned on the drawn directions,
/// otherwise it is the sector average.
pub fn run_spectrum(
    scn: &Scenario,
    geom: &ArrayGeometry,
    opts: &SpectrumOptions,
    u_grid: &[f64],
) -> Result<SpectrumRun> {
    if opts.trials < MIN_SPECTRUM_TRIALS {
        return Err(Error::InsufficientSamples {
            required: MIN_SPECTRUM_TRIALS,
            got: opts.trials,
        });
    }
    run_spectrum_unchecked(scn, geom, opts, u_grid)
}

pub(crate) fn run_spectrum_unchecked(
    scn: &Scenario,
    geom: &ArrayGeometry,
    opts: &SpectrumOptions,
    u_grid: &[f64],
) -> Result<SpectrumRun> {
    scn.validate()?;
    geom.validate()?;
    if opts.trials == 0 {
        return Err(Error::invalid("trials", "must be at least 1"));
    }
    let m = geom.m;
    let phi = scn.steering_phase(geom)? + opts.phi_offset;
    let fixed = match opts.doa_mode {
        DoaMode::Fixed => {
            let mut rng = stream_rng(derive_seed(opts.seed, purpose::FIXED_DOAS), 0);
            Some(draw_doa_set(scn, &mut rng))
        }
        DoaMode::PerTrial => None,
    };
    let r_x = match &fixed {
        Some(d) => rx_covariance_for_doas(scn, geom, d),
        None => rx_covariance_analytic(scn, geom)?,
    };
    let p_x = real_diag(&r_x);
    let onebit_bank = alpha_gaussian(&p_x)?;
    let model = sd_linear_model(&p_x)?;
    let sd_bank = model.levels().scaled(opts.alpha_scale)?;
    let rot = C64::from_polar(1.0, -phi);

    let acc = fold_trials(
        opts.trials,
        || NoiseAccumulator {
            onebit: CMatrix::zeros(m, m),
            sd: CMatrix::zeros(m, m),
        },
        |acc, t| {
            let mut rng = trial_rng(opts.seed, t);
            let real = draw_channel_with(scn, geom, fixed.as_ref(), &mut rng).expect("scenario validated");
            let s = draw_symbols(scn.k, SymbolKind::Gaussian, &mut rng);
            let x = synthesize_rx_with(&real, scn, &s, &mut rng).expect("dimensions agree");
            let x = x.as_slice();
            let q1: Vec<C64> = x
                .iter()
                .enumerate()
                .map(|(i, &z)| onebit_bank.apply(i, z) - z)
                .collect();
            let mut y = vec![C64::new(0.0, 0.0); m];
            let mut r = vec![C64::new(0.0, 0.0); m];
            sd_quantize_into(x, &sd_bank, rot, &mut y, &mut r);
            let qs: Vec<C64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
            accumulate_outer_lower(&mut acc.onebit, &q1);
            accumulate_outer_lower(&mut acc.sd, &qs);
        },
        |mut a, b| {
            a.onebit += b.onebit;
            a.sd += b.sd;
            a
        },
    );

    let scale = C64::new(1.0 / opts.trials as f64, 0.0);
    let mut onebit_cov = acc.onebit * scale;
    let mut sd_cov = acc.sd * scale;
    mirror_lower(&mut onebit_cov);
    mirror_lower(&mut sd_cov);

    let onebit_model = onebit_noise_covariance(&r_x)?;
    let sd_model = model.shaped_covariance(phi);
    Ok(SpectrumRun {
        u_grid: u_grid.to_vec(),
        onebit_sim: spectrum(&onebit_cov, geom, u_grid)?.density,
        onebit_analytic: spectrum(&onebit_model, geom, u_grid)?.density,
        sd_sim: spectrum(&sd_cov, geom, u_grid)?.density,
        sd_analytic: spectrum(&sd_model, geom, u_grid)?.density,
        phi,
        trials: opts.trials,
        onebit_cov,
        sd_cov,
        r_x,
    })
}

/// Simulated noise spectrum of one pipeline.
pub fn empirical_spectrum(
    pipeline: Pipeline,
    scn: &Scenario,
    geom: &ArrayGeometry,
    opts: &SpectrumOptions,
    u_grid: &[f64],
) -> Result<SpectrumCurve> {
    Ok(run_spectrum(scn, geom, opts, u_grid)?.curve(pipeline, true))
}

/// Analytic Sigma-Delta and one-bit spectra (no simulation) for a scenario.
pub fn analytic_spectra(
    scn: &Scenario,
    geom: &ArrayGeometry,
    u_grid: &[f64],
) -> Result<(SpectrumCurve, SpectrumCurve)> {
    let r_x = rx_covariance_analytic(scn, geom)?;
    let onebit = spectrum(&onebit_noise_covariance(&r_x)?, geom, u_grid)?;
    let model = sd_linear_model(&real_diag(&r_x))?;
    let sd = spectrum(&model.shaped_covariance(scn.steering_phase(geom)?), geom, u_grid)?;
    Ok((onebit, sd))
}

/// Angular width in degrees of the contiguous region around `u0` where the
/// Sigma-Delta density is below the one-bit density.
pub fn crossover_width_deg(onebit: &SpectrumCurve, sd: &SpectrumCurve, u0: f64) -> f64 {
    let u = &onebit.u_grid;
    let below: Vec<bool> = sd
        .density
        .iter()
        .zip(&onebit.density)
        .map(|(s, o)| s < o)
        .collect();
    let centre = u
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - u0).abs().total_cmp(&(b.1 - u0).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    if u.is_empty() || !below[centre] {
        return 0.0;
    }
    let (mut lo, mut hi) = (centre, centre);
    while lo > 0 && below[lo - 1] {
        lo -= 1;
    }
    while hi + 1 < u.len() && below[hi + 1] {
        hi += 1;
    }
    (u[hi].clamp(-1.0, 1.0).asin() - u[lo].clamp(-1.0, 1.0).asin()).to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_model::steering_vector;
    use crate::sigma_delta::DISTORTION_RATIO;
    use proptest::prelude::*;

    fn geom(m: usize, d: f64) -> ArrayGeometry {
        ArrayGeometry::new(m, d).unwrap()
    }

    #[test]
    fn density_examples() {
        let g = geom(6, 0.25);
        let white = CMatrix::identity(6, 6) * C64::new(2.5, 0.0);
        for u in [-1.0, -0.3, 0.0, 0.9] {
            assert!((rho_q(&white, u, &g).unwrap() - 2.5).abs() < 1e-12);
        }
        let a = steering_vector(&g, 0.4).unwrap();
        let r = &a * a.adjoint();
        assert!((rho_q(&r, 0.4, &g).unwrap() - 6.0).abs() < 1e-12);

        let mut bad = CMatrix::identity(6, 6);
        bad[(0, 1)] = C64::new(1.0, 0.0);
        assert!(matches!(rho_q(&bad, 0.0, &g), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn shaped_noise_is_pushed_to_endfire() {
        let g = geom(16, 0.25);
        let model = sd_linear_model(&[1.0; 16]).unwrap();
        let r = model.shaped_covariance(0.0);
        assert!(rho_q(&r, 0.0, &g).unwrap() < rho_q(&r, 1.0, &g).unwrap());
    }

    #[test]
    fn zeta_fit() {
        assert!(fit_zeta(0.0).is_err());
        assert!(fit_zeta(1.1).is_err());
        assert!((fit_zeta(1e-6).unwrap().zeta - 1.0).abs() < 1e-10);
        // Oracle: the two integrals by quadrature.
        let rule = GaussLegendre::new(200);
        for x in [1.0, 0.7, 0.3, 0.05, 0.0101, 0.0099] {
            let num = rule.integrate(0.0, x, |t| t * t.asin());
            let den = rule.integrate(0.0, x, |t| t * t);
            let z = fit_zeta(x).unwrap().zeta;
            let tol = if x == 1.0 { 1e-4 } else { 1e-9 };
            assert!((z - num / den).abs() < tol, "x={x}: {z} vs {}", num / den);
        }
        assert!((fit_zeta(1.0).unwrap().zeta - 3.0 * PI / 8.0).abs() < 1e-12);
    }

    #[test]
    fn onebit_double_sum_example() {
        let g = geom(2, 0.25);
        let lags = sector_lag_averages(&g, -0.5, 0.5, CovarianceMethod::Closed);
        let s = sinc_double_sum(&lags);
        let rule = GaussLegendre::new(64);
        let inner = |u: f64, v: f64| (2.0 * PI * 0.25 * (u - v)).cos();
        let quad = 2.0 + 2.0 * rule.integrate(-0.5, 0.5, |u| rule.integrate(-0.5, 0.5, |v| inner(u, v)));
        let exact = 2.0 + 2.0 * sinc(PI / 4.0).powi(2);
        assert!((s - exact).abs() < 1e-12, "{s}");
        // The listed approximation 3.62126 is 1.2e-4 above the exact value.
        assert!((s - 3.621_26).abs() < 2e-4, "{s}");
        assert!((s - quad).abs() < 1e-10);
    }

    #[test]
    fn onebit_power_matches_sector_quadrature() {
        let mut scn = Scenario::new(3, 5, 0.0, 40f64.to_radians(), 0.0).unwrap();
        let g = geom(24, 0.25);
        let zeta = default_zeta(&scn, &g).unwrap();
        let r_x = rx_covariance_analytic(&scn, &g).unwrap();
        let (d1, d2) = scn.sector();
        let quad = sector_power(&onebit_zeta_covariance(&r_x, zeta), &g, d1, d2, SECTOR_NODES).unwrap();
        let closed = pq_onebit_analytic(&scn, &g, zeta).unwrap();
        assert!((closed / quad - 1.0).abs() < 1e-9);

        scn.theta0 = 30f64.to_radians();
        let r_x = rx_covariance_analytic(&scn, &g).unwrap();
        let (d1, d2) = scn.sector();
        let quad = sector_power(&onebit_zeta_covariance(&r_x, zeta), &g, d1, d2, SECTOR_NODES).unwrap();
        let closed = pq_onebit_analytic(&scn, &g, zeta).unwrap();
        assert!((closed / quad - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sigma_delta_power_forms() {
        let g = geom(40, 0.25);
        let model = sd_linear_model(&[1.0; 40]).unwrap();
        let delta = 0.3;
        let quad = sector_power(&model.shaped_covariance(0.0), &g, -delta, delta, SECTOR_NODES).unwrap();
        let closed = pq_sigmadelta_analytic(&model, &g, delta);
        assert!((closed / quad - 1.0).abs() < 1e-9);
        let general = pq_sigmadelta_sector(&model, &g, 0.0, -delta, delta);
        assert!((general - closed).abs() < 1e-14);

        let tiny = geom(40, 1e-9);
        let p = pq_sigmadelta_analytic(&model, &tiny, delta);
        assert!((p - model.last_noise_power() / 40.0).abs() < 1e-12);

        // Large array: the exact form approaches the small-angle form.
        let big = geom(2000, 0.25);
        let model = sd_linear_model(&vec![1.0; 2000]).unwrap();
        let exact = pq_sigmadelta_analytic(&model, &big, 0.5);
        let approx = pq_sigmadelta_small_angle(0.5, 0.25, 1.0);
        assert!((approx - 0.2735).abs() < 1e-3, "{approx}");
        assert!((exact / approx - 1.0).abs() < 0.15, "{exact} vs {approx}");
    }

    #[test]
    fn off_broadside_sigma_delta_power_matches_quadrature() {
        let g = geom(30, 0.2);
        let model = sd_linear_model(&[2.0; 30]).unwrap();
        let (d1, d2) = (0.1, 0.7);
        let phi = 1.1;
        let quad = sector_power(&model.shaped_covariance(phi), &g, d1, d2, SECTOR_NODES).unwrap();
        assert!((pq_sigmadelta_sector(&model, &g, phi, d1, d2) / quad - 1.0).abs() < 1e-9);
    }

    #[test]
    fn full_band_average_of_onebit_density_is_the_distortion_power() {
        // With half-wavelength spacing the full band average of ρ is Tr(R)/M.
        let scn = Scenario::new(2, 3, 0.2, 0.6, 3.0).unwrap();
        let g = geom(10, 0.5);
        let r_x = rx_covariance_analytic(&scn, &g).unwrap();
        let rq = onebit_noise_covariance(&r_x).unwrap();
        let full = sector_power(&rq, &g, -1.0, 1.0, 256).unwrap();
        let trace = rq.trace().re / 10.0;
        assert!((full - trace).abs() < 1e-9 * trace);
        assert!((trace - DISTORTION_RATIO * scn.input_power()).abs() < 1e-9);
    }

    #[test]
    fn crossover_width_of_synthetic_curves() {
        let grid = uniform_grid(201);
        let onebit = SpectrumCurve {
            u_grid: grid.clone(),
            density: vec![1.0; 201],
        };
        let sd = SpectrumCurve {
            u_grid: grid.clone(),
            density: grid.iter().map(|u| 2.0 * u * u * 4.0).collect(),
        };
        let w = crossover_width_deg(&onebit, &sd, 0.0);
        let edge = (0.125f64).sqrt();
        let want = 2.0 * edge.asin().to_degrees();
        assert!((w - want).abs() < 1.0, "{w} vs {want}");
    }

    #[test]
    fn spectrum_run_requires_enough_trials() {
        let scn = Scenario::new(1, 2, 0.0, 0.5, 0.0).unwrap();
        let opts = SpectrumOptions::new(10, 1);
        assert!(matches!(
            run_spectrum(&scn, &geom(4, 0.25), &opts, &uniform_grid(8)),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    proptest! {
        #[test]
        fn density_is_nonnegative_for_psd_covariances(
            seed in 0u64..500, u in -1.0f64..1.0
        ) {
            let mut rng = stream_rng(seed, 0);
            let b = CMatrix::from_fn(5, 3, |_, _| crate::rng::complex_gaussian(&mut rng, 1.0));
            let r = &b * b.adjoint();
            prop_assert!(rho_q(&r, u, &geom(5, 0.3)).unwrap() >= -1e-12);
        }

        #[test]
        fn zeta_is_increasing(a in 0.001f64..0.999, step in 0.0001f64..0.5) {
            let b = (a + step).min(1.0);
            prop_assume!(b > a);
            prop_assert!(fit_zeta(b).unwrap().zeta > fit_zeta(a).unwrap().zeta);
        }

        #[test]
        fn sigma_delta_density_symmetric_at_zero_phase(u in 0.0f64..1.0, m in 2usize..30) {
            let model = sd_linear_model(&vec![1.0; m]).unwrap();
            let r = model.shaped_covariance(0.0);
            let g = geom(m, 0.25);
            let a = rho_q(&r, u, &g).unwrap();
            let b = rho_q(&r, -u, &g).unwrap();
            prop_assert!((a - b).abs() < 1e-10 * a.max(1.0));
        }
    }
}

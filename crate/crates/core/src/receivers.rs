//! Linear receivers and the uplink spectral-efficiency lower bound.
//!
//! For combiner column `w_k` the per-realization SINR is
//! `p_k |w_k^H g_k|² / Ω` with
//! `Ω = Σ_{i≠k} p_i |w_k^H g_i|² + σ_n² ‖w_k‖² + w_k^H R_q w_k`,
//! and the spectral efficiency is the average of `log2(1 + SINR)` over
//! channel draws.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::array_model::{
    draw_channel_with, draw_doa_set, rx_covariance_analytic, rx_covariance_for_doas, ArrayGeometry, DoaMode,
    DoaSet, Scenario,
};
use crate::chan_est::{dft_pilots, ls_estimate_per_user, training_block};
use crate::linalg::{quadratic_form, real_diag};
use crate::montecarlo::fold_trials;
use crate::noise_spectrum::{run_spectrum_unchecked, SpectrumOptions};
use crate::quantization::onebit_noise_covariance;
use crate::rng::{derive_seed, purpose, stream_rng, trial_rng};
use crate::sigma_delta::{sd_linear_model, SdNoiseModel};
use crate::{CMatrix, Error, Result, C64};

/// Minimum trial count for simulated spectral efficiency.
pub const MIN_SE_TRIALS: usize = 100;
/// Largest tolerated condition number of `G` for zero forcing.
pub const ZF_MAX_CONDITION: f64 = 1e8;

macro_rules! text_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl $name {
            pub fn as_str(&self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(format!(
                        "expected one of {}, got `{s}`",
                        [$($text),+].join(", ")
                    )),
                }
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReceiverKind {
    Mrc,
    Zf,
}
text_enum!(ReceiverKind { Mrc => "mrc", Zf => "zf" });

/// Front-end resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Infinite,
    #[serde(rename = "onebit")]
    OneBit,
    SigmaDelta,
}
text_enum!(Architecture { Infinite => "infinite", OneBit => "onebit", SigmaDelta => "sigma_delta" });

impl Architecture {
    pub const ALL: [Architecture; 3] = [Self::Infinite, Self::SigmaDelta, Self::OneBit];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CsiMode {
    #[default]
    Perfect,
    /// Least-squares estimate from DFT pilots with `η = K`.
    Ls,
}
text_enum!(CsiMode { Perfect => "perfect", Ls => "ls" });

/// Source of the quantization-noise covariance used in `Ω`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuantNoiseMode {
    /// Linear model: arcsine law for one-bit, shaped diagonal model for Sigma-Delta.
    #[default]
    Analytic,
    /// Sample covariance of `y − x` from the given number of simulated snapshots.
    Empirical { snapshots: usize },
}

/// Quantization-noise covariance in a form cheap to evaluate against combiners.
#[derive(Debug, Clone)]
pub enum QuantNoise {
    None,
    Dense(CMatrix),
    /// `U^{-1} diag(p_q) U^{-H}` kept factored.
    Shaped {
        p_q: Vec<f64>,
        phi: f64,
    },
}

impl QuantNoise {
    /// `w^H R_q w`.
    pub fn quad(&self, w: &[C64]) -> f64 {
        match self {
            QuantNoise::None => 0.0,
            QuantNoise::Dense(r) => quadratic_form(r, w).0,
            QuantNoise::Shaped { p_q, phi } => {
                let rot = C64::from_polar(1.0, *phi);
                let m = w.len();
                (0..m)
                    .map(|i| {
                        let next = if i + 1 < m { w[i + 1] } else { C64::new(0.0, 0.0) };
                        p_q[i] * (w[i] - rot * next).norm_sqr()
                    })
                    .sum()
            }
        }
    }

    pub fn to_dense(&self, m: usize) -> CMatrix {
        match self {
            QuantNoise::None => CMatrix::zeros(m, m),
            QuantNoise::Dense(r) => r.clone(),
            QuantNoise::Shaped { p_q, phi } => SdNoiseModel {
                p_x: vec![],
                p_r: vec![],
                p_q: p_q.clone(),
                pi: nalgebra::DMatrix::zeros(0, 0),
            }
            .shaped_covariance(*phi),
        }
    }
}

/// Per-user and sum spectral efficiency in bit/s/Hz.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeResult {
    pub per_user: Vec<f64>,
    pub sum: f64,
    pub stderr: Vec<f64>,
    pub sum_stderr: f64,
    pub trials: usize,
    /// Trials dropped because `G` was rank deficient.
    pub skipped: usize,
}

#[derive(Debug, Clone)]
pub struct SeOptions {
    pub trials: usize,
    pub seed: u64,
    pub doa_mode: DoaMode,
    pub csi: CsiMode,
    pub noise_mode: QuantNoiseMode,
}

impl SeOptions {
    pub fn new(trials: usize, seed: u64) -> Self {
        Self {
            trials,
            seed,
            doa_mode: DoaMode::PerTrial,
            csi: CsiMode::Perfect,
            noise_mode: QuantNoiseMode::Analytic,
        }
    }
}

/// `W = G` for MRC, `W = G (G^H G)^{-1}` for ZF.
pub fn combiner(kind: ReceiverKind, g: &CMatrix) -> Result<CMatrix> {
    match kind {
        ReceiverKind::Mrc => Ok(g.clone()),
        ReceiverKind::Zf => {
            let (m, k) = g.shape();
            let gram = g.adjoint() * g;
            let eig = gram.clone().symmetric_eigenvalues();
            let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
            let condition = if min > 0.0 {
                (max / min).sqrt()
            } else {
                f64::INFINITY
            };
            if m < k || condition > ZF_MAX_CONDITION {
                return Err(Error::RankDeficient { condition });
            }
            let inv = gram
                .cholesky()
                .ok_or(Error::RankDeficient { condition })?
                .inverse();
            Ok(g * inv)
        }
    }
}

/// Per-user SINR of combiner `w` against the true channel `g`.
pub fn sinr(w: &CMatrix, g: &CMatrix, powers: &[f64], sigma_n2: f64, rq: &QuantNoise) -> Vec<f64> {
    let k = g.ncols();
    let b = w.adjoint() * g;
    (0..k)
        .map(|kk| {
            let wk: Vec<C64> = w.column(kk).iter().copied().collect();
            let signal = powers[kk] * b[(kk, kk)].norm_sqr();
            let interference: f64 = (0..k)
                .filter(|&i| i != kk)
                .map(|i| powers[i] * b[(kk, i)].norm_sqr())
                .sum();
            let norm2: f64 = wk.iter().map(|z| z.norm_sqr()).sum();
            let omega = interference + sigma_n2 * norm2 + rq.quad(&wk);
            if omega > 0.0 {
                signal / omega
            } else {
                f64::INFINITY
            }
        })
        .collect()
}

/// `log2(1 + SINR)` per user for one realization.
pub fn se_realization(w: &CMatrix, g: &CMatrix, scn: &Scenario, rq: &QuantNoise) -> Vec<f64> {
    sinr(w, g, &scn.powers(), scn.sigma_n2, rq)
        .into_iter()
        .map(|s| (1.0 + s).log2())
        .collect()
}

/// Scenario-level quantization-noise covariance of an architecture.
///
/// With fixed DoAs the input covariance is conditioned on them; otherwise it
/// is the sector average.
pub fn quantization_noise(
    arch: Architecture,
    scn: &Scenario,
    geom: &ArrayGeometry,
    doas: Option<&DoaSet>,
) -> Result<QuantNoise> {
    if arch == Architecture::Infinite {
        return Ok(QuantNoise::None);
    }
    let r_x = match doas {
        Some(d) => rx_covariance_for_doas(scn, geom, d),
        None => rx_covariance_analytic(scn, geom)?,
    };
    match arch {
        Architecture::OneBit => Ok(QuantNoise::Dense(onebit_noise_covariance(&r_x)?)),
        Architecture::SigmaDelta => {
            let model = sd_linear_model(&real_diag(&r_x))?;
            Ok(QuantNoise::Shaped {
                p_q: model.p_q,
                phi: scn.steering_phase(geom)?,
            })
        }
        Architecture::Infinite => unreachable!(),
    }
}

fn resolve_noise(
    arch: Architecture,
    scn: &Scenario,
    geom: &ArrayGeometry,
    opts: &SeOptions,
    fixed: Option<&DoaSet>,
) -> Result<QuantNoise> {
    match (opts.noise_mode, arch) {
        (_, Architecture::Infinite) => Ok(QuantNoise::None),
        (QuantNoiseMode::Analytic, _) => quantization_noise(arch, scn, geom, fixed),
        (QuantNoiseMode::Empirical { snapshots }, _) => {
            let mut so = SpectrumOptions::new(snapshots, derive_seed(opts.seed, purpose::VALIDATE));
            so.doa_mode = opts.doa_mode;
            let run = run_spectrum_unchecked(scn, geom, &so, &[])?;
            Ok(QuantNoise::Dense(match arch {
                Architecture::OneBit => run.onebit_cov,
                _ => run.sd_cov,
            }))
        }
    }
}

fn fixed_doas(scn: &Scenario, opts: &SeOptions) -> Option<DoaSet> {
    match opts.doa_mode {
        DoaMode::Fixed => {
            let mut rng = stream_rng(derive_seed(opts.seed, purpose::FIXED_DOAS), 0);
            Some(draw_doa_set(scn, &mut rng))
        }
        DoaMode::PerTrial => None,
    }
}

#[derive(Clone)]
struct SeAccumulator {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    total: f64,
    total_sq: f64,
    count: usize,
    skipped: usize,
}

impl SeAccumulator {
    fn new(k: usize) -> Self {
        Self {
            sum: vec![0.0; k],
            sum_sq: vec![0.0; k],
            total: 0.0,
            total_sq: 0.0,
            count: 0,
            skipped: 0,
        }
    }

    fn push(&mut self, se: Option<Vec<f64>>) {
        match se {
            None => self.skipped += 1,
            Some(v) => {
                let s: f64 = v.iter().sum();
                for (i, x) in v.iter().enumerate() {
                    self.sum[i] += x;
                    self.sum_sq[i] += x * x;
                }
                self.total += s;
                self.total_sq += s * s;
                self.count += 1;
            }
        }
    }

    fn merge(mut self, o: Self) -> Self {
        for i in 0..self.sum.len() {
            self.sum[i] += o.sum[i];
            self.sum_sq[i] += o.sum_sq[i];
        }
        self.total += o.total;
        self.total_sq += o.total_sq;
        self.count += o.count;
        self.skipped += o.skipped;
        self
    }

    fn finish(self, trials: usize) -> Result<SeResult> {
        if self.skipped * 100 > trials {
            return Err(Error::TooManySkipped {
                skipped: self.skipped,
                trials,
            });
        }
        let n = self.count.max(1) as f64;
        let stderr_of = |s: f64, sq: f64| {
            if self.count < 2 {
                0.0
            } else {
                let mean = s / n;
                ((sq / n - mean * mean).max(0.0) * n / (n - 1.0) / n).sqrt()
            }
        };
        let per_user: Vec<f64> = self.sum.iter().map(|s| s / n).collect();
        let stderr = self
            .sum
            .iter()
            .zip(&self.sum_sq)
            .map(|(s, q)| stderr_of(*s, *q))
            .collect();
        Ok(SeResult {
            sum: self.total / n,
            sum_stderr: stderr_of(self.total, self.total_sq),
            per_user,
            stderr,
            trials: self.count,
            skipped: self.skipped,
        })
    }
}

/// Monte Carlo spectral efficiency.
///
/// Channels for trial `t` depend only on `(seed, t)`, so runs with the same
/// seed are paired across architectures, receivers, SNR points and CSI modes.
pub fn se_simulated(
    kind: ReceiverKind,
    scn: &Scenario,
    geom: &ArrayGeometry,
    arch: Architecture,
    opts: &SeOptions,
) -> Result<SeResult> {
    if opts.trials < MIN_SE_TRIALS {
        return Err(Error::InsufficientSamples {
            required: MIN_SE_TRIALS,
            got: opts.trials,
        });
    }
    se_simulated_unchecked(kind, scn, geom, arch, opts)
}

pub(crate) fn se_simulated_unchecked(
    kind: ReceiverKind,
    scn: &Scenario,
    geom: &ArrayGeometry,
    arch: Architecture,
    opts: &SeOptions,
) -> Result<SeResult> {
    scn.validate()?;
    geom.validate()?;
    if opts.trials == 0 {
        return Err(Error::invalid("trials", "must be at least 1"));
    }
    if kind == ReceiverKind::Zf && geom.m <= scn.k {
        return Err(Error::invalid("M", "zero forcing needs more antennas than users"));
    }
    let fixed = fixed_doas(scn, opts);
    let rq = resolve_noise(arch, scn, geom, opts, fixed.as_ref())?;
    let pilots = match opts.csi {
        CsiMode::Perfect => None,
        CsiMode::Ls => Some(dft_pilots(scn.k, scn.k)?),
    };
    let acc = fold_trials(
        opts.trials,
        || SeAccumulator::new(scn.k),
        |acc, t| {
            let mut rng = trial_rng(opts.seed, t);
            let real = draw_channel_with(scn, geom, fixed.as_ref(), &mut rng).expect("scenario validated");
            let g_used = match &pilots {
                None => real.channel.clone(),
                Some(phi) => {
                    let mut trng = stream_rng(derive_seed(opts.seed, purpose::TRAINING), t as u64);
                    let y = training_block(&real.channel, scn, geom, arch, phi, &mut trng)
                        .expect("dimensions agree");
                    ls_estimate_per_user(&y, &real.steering, phi, scn.p0, scn.k).expect("dimensions agree")
                }
            };
            let se = combiner(kind, &g_used)
                .ok()
                .map(|w| se_realization(&w, &real.channel, scn, &rq));
            acc.push(se);
        },
        SeAccumulator::merge,
    );
    acc.finish(opts.trials)
}

/// Zero-forcing spectral efficiency.
pub fn se_zf(scn: &Scenario, geom: &ArrayGeometry, arch: Architecture, opts: &SeOptions) -> Result<SeResult> {
    if geom.m <= scn.k {
        return Err(Error::invalid("M", "zero forcing needs more antennas than users"));
    }
    se_simulated(ReceiverKind::Zf, scn, geom, arch, opts)
}

/// Closed-form MRC spectral efficiency for the Sigma-Delta array given the DoAs.
///
/// With `Σ_ik = (1/L) A_i^H A_k` the SINR of user `k` is approximated by
/// `p_kβ_k(|Tr Σ_kk|² + Tr Σ_kk²)` over
/// `Σ_{i≠k} p_iβ_i Tr(Σ_ik Σ_ik^H) + σ_n² Tr Σ_kk
///  + (4/L)(Tr R_q − σ²_qM) Σ_ℓ sin²((φ − 2π(d/λ) sin θ_kℓ)/2) + σ²_qM`.
/// Passing `None` for the noise model drops the quantization term.
pub fn se_mrc_closed_form(
    scn: &Scenario,
    geom: &ArrayGeometry,
    doas: &DoaSet,
    noise: Option<&SdNoiseModel>,
    phi: f64,
) -> Result<Vec<f64>> {
    scn.validate()?;
    geom.validate()?;
    let l = scn.l as f64;
    let steer: Vec<CMatrix> = (0..scn.k)
        .map(|k| crate::array_model::steering_matrix(geom, doas.for_user(k)))
        .collect();
    let sigma = |i: usize, k: usize| -> CMatrix { steer[i].adjoint() * &steer[k] * C64::new(1.0 / l, 0.0) };
    let frob2 = |x: &CMatrix| x.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let (trace_q, last) = noise.map_or((0.0, 0.0), |n| (n.trace(), n.last_noise_power()));
    let shared = doas.is_shared();
    let s_shared = if shared { Some(sigma(0, 0)) } else { None };
    let mut out = Vec::with_capacity(scn.k);
    for k in 0..scn.k {
        let skk = s_shared.clone().unwrap_or_else(|| sigma(k, k));
        let tr = skk.trace();
        let tr_sq = (&skk * &skk).trace();
        let num = scn.power(k) * scn.beta[k] * (tr.norm_sqr() + tr_sq.re);
        let mut den = scn.sigma_n2 * tr.re;
        for i in (0..scn.k).filter(|&i| i != k) {
            let f = match &s_shared {
                Some(s) => frob2(s),
                None => frob2(&sigma(i, k)),
            };
            den += scn.power(i) * scn.beta[i] * f;
        }
        if noise.is_some() {
            let s2: f64 = doas
                .for_user(k)
                .iter()
                .map(|th| ((phi - geom.spatial_frequency(th.sin())) / 2.0).sin().powi(2))
                .sum();
            den += 4.0 / l * (trace_q - last) * s2 + last;
        }
        out.push((1.0 + num / den).log2());
    }
    Ok(out)
}

/// Shaping factor `G(φ)`, the sector average of `sin²((φ − 2π(d/λ)u)/2)`.
pub fn g_phi(scn: &Scenario, geom: &ArrayGeometry, phi: f64) -> Result<f64> {
    let (d1, d2) = scn.sector();
    g_phi_bounds(geom, d1, d2, phi)
}

pub fn g_phi_bounds(geom: &ArrayGeometry, d1: f64, d2: f64, phi: f64) -> Result<f64> {
    if !(d2 > d1) {
        return Err(Error::invalid("sector", "upper bound must exceed lower bound"));
    }
    let (b0, b1) = g_coefficients(geom, d1, d2);
    Ok(0.5 + (b0 * phi.sin() - b1 * phi.cos()) / (4.0 * PI * geom.d_over_lambda * (d2 - d1)))
}

fn g_coefficients(geom: &ArrayGeometry, d1: f64, d2: f64) -> (f64, f64) {
    let (w1, w2) = (geom.spatial_frequency(d1), geom.spatial_frequency(d2));
    (w2.cos() - w1.cos(), w2.sin() - w1.sin())
}

/// Discrete counterpart of [`g_phi`] over an explicit DoA list.
pub fn g_phi_discrete(geom: &ArrayGeometry, thetas: &[f64], phi: f64) -> f64 {
    thetas
        .iter()
        .map(|th| ((phi - geom.spatial_frequency(th.sin())) / 2.0).sin().powi(2))
        .sum::<f64>()
        / thetas.len() as f64
}

/// Steering phase minimizing [`g_phi`].
///
/// The stationary points are `−atan(b0/b1)` and that plus π; the one with the
/// smaller `G` is returned, wrapped to `(−π, π]`. A sector symmetric about
/// broadside gives exactly zero.
pub fn phi_star(scn: &Scenario, geom: &ArrayGeometry) -> Result<f64> {
    let (d1, d2) = scn.sector();
    phi_star_bounds(geom, d1, d2)
}

pub fn phi_star_bounds(geom: &ArrayGeometry, d1: f64, d2: f64) -> Result<f64> {
    if !(d2 > d1) {
        return Err(Error::invalid("sector", "upper bound must exceed lower bound"));
    }
    if (d1 + d2).abs() <= 1e-15 * (d2 - d1) {
        return Ok(0.0);
    }
    let (b0, b1) = g_coefficients(geom, d1, d2);
    let a = -(b0 / b1).atan();
    let b = wrap_phase(a + PI);
    let (ga, gb) = (g_phi_bounds(geom, d1, d2, a)?, g_phi_bounds(geom, d1, d2, b)?);
    Ok(if ga <= gb { a } else { b })
}

/// Wraps an angle to `(−π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    let mut y = x % (2.0 * PI);
    if y <= -PI {
        y += 2.0 * PI;
    } else if y > PI {
        y -= 2.0 * PI;
    }
    y
}

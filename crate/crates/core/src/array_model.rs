//! Uniform linear array, multipath uplink channel and received snapshots.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::quadrature::GaussLegendre;
use crate::rng::{complex_gaussian, derive_seed, purpose, stream_rng};
use crate::{CMatrix, CVector, Error, Result, C64};

/// `sin(x) / x` with the removable singularity filled in.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    /// Antenna count.
    pub m: usize,
    /// Element spacing in wavelengths.
    pub d_over_lambda: f64,
}

impl ArrayGeometry {
    pub fn new(m: usize, d_over_lambda: f64) -> Result<Self> {
        let geom = Self { m, d_over_lambda };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::invalid("M", "antenna count must be at least 1"));
        }
        if !(self.d_over_lambda > 0.0 && self.d_over_lambda.is_finite()) {
            return Err(Error::invalid(
                "d_over_lambda",
                format!("spacing must be positive, got {}", self.d_over_lambda),
            ));
        }
        Ok(())
    }

    /// Spatial angular frequency `2π (d/λ) u`.
    pub fn spatial_frequency(&self, u: f64) -> f64 {
        2.0 * PI * self.d_over_lambda * u
    }

    /// Aperture `M · d/λ` in wavelengths.
    pub fn aperture(&self) -> f64 {
        self.m as f64 * self.d_over_lambda
    }
}

/// How the Sigma-Delta feedback phase is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiSetting {
    /// `2π (d/λ) sin θ0`, steering the noise null to the sector centre.
    Auto,
    /// Minimizer of the in-sector shaping factor.
    Optimal,
    /// Fixed phase in radians.
    Manual(f64),
}

/// Whether Monte Carlo runs redraw the directions of arrival each trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DoaMode {
    #[default]
    PerTrial,
    /// One draw derived from the master seed, reused by every trial.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SymbolKind {
    #[default]
    Gaussian,
    /// Unit-energy QPSK, for debugging only.
    Qpsk,
}

/// Uplink user population and propagation statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub k: usize,
    pub l: usize,
    /// Sector centre in radians.
    pub theta0: f64,
    /// Angular spread in radians.
    pub spread: f64,
    /// Large-scale gains `β_k`.
    pub beta: Vec<f64>,
    /// Power-control target: user `k` transmits `p0 / β_k`.
    pub p0: f64,
    pub sigma_n2: f64,
    pub phi: PhiSetting,
    /// All users see the same DoA set.
    pub shared_doas: bool,
}

impl Scenario {
    /// Unit gains, unit noise power and `p0 = 10^(snr_db / 10)`.
    pub fn new(k: usize, l: usize, theta0: f64, spread: f64, snr_db: f64) -> Result<Self> {
        let scn = Self {
            k,
            l,
            theta0,
            spread,
            beta: vec![1.0; k],
            p0: db_to_linear(snr_db),
            sigma_n2: 1.0,
            phi: PhiSetting::Auto,
            shared_doas: true,
        };
        scn.validate()?;
        Ok(scn)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::invalid("K", "need at least one user"));
        }
        if self.l < 1 {
            return Err(Error::invalid("L", "need at least one path"));
        }
        if !(self.spread > 0.0) {
            return Err(Error::invalid("spread", "angular spread must be positive"));
        }
        if self.theta0.abs() + 0.5 * self.spread > FRAC_PI_2 + 1e-12 {
            return Err(Error::invalid("theta0", "sector must lie within [-90°, 90°]"));
        }
        if self.beta.len() != self.k {
            return Err(Error::DimensionMismatch {
                context: "large-scale gains",
                expected: self.k,
                got: self.beta.len(),
            });
        }
        if self.beta.iter().any(|&b| !(b > 0.0)) {
            return Err(Error::invalid("beta", "large-scale gains must be positive"));
        }
        if !(self.p0 > 0.0) {
            return Err(Error::invalid("p0", "power target must be positive"));
        }
        if !(self.sigma_n2 >= 0.0) {
            return Err(Error::invalid("sigma_n2", "noise power must be nonnegative"));
        }
        Ok(())
    }

    /// Transmit power of user `k`.
    pub fn power(&self, k: usize) -> f64 {
        self.p0 / self.beta[k]
    }

    pub fn powers(&self) -> Vec<f64> {
        (0..self.k).map(|k| self.power(k)).collect()
    }

    /// `Σ_k p_k β_k`.
    pub fn received_signal_power(&self) -> f64 {
        (0..self.k).map(|k| self.power(k) * self.beta[k]).sum()
    }

    /// Per-antenna input power `E|x_m|²`, identical on every element.
    pub fn input_power(&self) -> f64 {
        self.received_signal_power() + self.sigma_n2
    }

    /// Sector bounds `(δ1, δ2)` in `u = sin θ`.
    pub fn sector(&self) -> (f64, f64) {
        (
            (self.theta0 - 0.5 * self.spread).sin(),
            (self.theta0 + 0.5 * self.spread).sin(),
        )
    }

    /// `p0 / σ_n²` in dB.
    pub fn snr_db(&self) -> f64 {
        10.0 * (self.p0 / self.sigma_n2).log10()
    }

    /// Same scenario with `p0` reset so that `p0 / σ_n² = snr_db`.
    pub fn with_snr_db(&self, snr_db: f64) -> Self {
        Self {
            p0: db_to_linear(snr_db) * self.sigma_n2,
            ..self.clone()
        }
    }

    /// Resolved Sigma-Delta feedback phase.
    pub fn steering_phase(&self, geom: &ArrayGeometry) -> Result<f64> {
        match self.phi {
            PhiSetting::Auto => Ok(geom.spatial_frequency(self.theta0.sin())),
            PhiSetting::Optimal => crate::receivers::phi_star(self, geom),
            PhiSetting::Manual(phi) => Ok(phi),
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Directions of arrival in radians, one list per user (a single list when shared).
#[derive(Debug, Clone, PartialEq)]
pub struct DoaSet {
    pub per_user: Vec<Vec<f64>>,
}

impl DoaSet {
    pub fn for_user(&self, k: usize) -> &[f64] {
        if self.per_user.len() == 1 {
            &self.per_user[0]
        } else {
            &self.per_user[k]
        }
    }

    pub fn is_shared(&self) -> bool {
        self.per_user.len() == 1
    }
}

/// One Monte Carlo draw of the physical channel.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub doas: DoaSet,
    /// Steering matrices `A_k` (M×L); a single entry when DoAs are shared.
    pub steering: Vec<CMatrix>,
    /// Fast fading `h_k`, length L each.
    pub fading: Vec<CVector>,
    /// `G = [g_1 … g_K]`, M×K.
    pub channel: CMatrix,
}

impl ChannelRealization {
    pub fn steering_for(&self, k: usize) -> &CMatrix {
        if self.steering.len() == 1 {
            &self.steering[0]
        } else {
            &self.steering[k]
        }
    }

    pub fn m(&self) -> usize {
        self.channel.nrows()
    }

    pub fn k(&self) -> usize {
        self.channel.ncols()
    }
}

pub fn steering_vector(geom: &ArrayGeometry, u: f64) -> Result<CVector> {
    if !(u.abs() <= 1.0) {
        return Err(Error::invalid("u", format!("|u| must not exceed 1, got {u}")));
    }
    Ok(CVector::from_iterator(geom.m, steering_entries(geom, u)))
}

fn steering_entries(geom: &ArrayGeometry, u: f64) -> impl Iterator<Item = C64> {
    let w = geom.spatial_frequency(u);
    (0..geom.m).map(move |m| C64::from_polar(1.0, -w * m as f64))
}

/// M×L matrix whose columns steer towards `sin θ` for each angle.
pub fn steering_matrix(geom: &ArrayGeometry, thetas: &[f64]) -> CMatrix {
    let mut a = CMatrix::zeros(geom.m, thetas.len());
    for (l, th) in thetas.iter().enumerate() {
        for (m, z) in steering_entries(geom, th.sin()).enumerate() {
            a[(m, l)] = z;
        }
    }
    a
}

pub fn draw_doa_set<R: Rng + ?Sized>(scn: &Scenario, rng: &mut R) -> DoaSet {
    let lists = if scn.shared_doas { 1 } else { scn.k };
    let lo = scn.theta0 - 0.5 * scn.spread;
    let per_user = (0..lists)
        .map(|_| {
            (0..scn.l)
                .map(|_| lo + scn.spread * rng.random::<f64>())
                .collect()
        })
        .collect();
    DoaSet { per_user }
}

/// Draws DoAs, fading and the channel from a seed.
pub fn draw_channel(scn: &Scenario, geom: &ArrayGeometry, seed: u64) -> Result<ChannelRealization> {
    let mut rng = stream_rng(derive_seed(seed, purpose::CHANNEL), 0);
    draw_channel_with(scn, geom, None, &mut rng)
}

/// Draws a channel; with `fixed` DoAs only the fast fading is random.
pub fn draw_channel_with<R: Rng + ?Sized>(
    scn: &Scenario,
    geom: &ArrayGeometry,
    fixed: Option<&DoaSet>,
    rng: &mut R,
) -> Result<ChannelRealization> {
    scn.validate()?;
    geom.validate()?;
    let doas = match fixed {
        Some(d) => d.clone(),
        None => draw_doa_set(scn, rng),
    };
    let steering: Vec<CMatrix> = doas.per_user.iter().map(|t| steering_matrix(geom, t)).collect();
    let fading: Vec<CVector> = (0..scn.k)
        .map(|_| CVector::from_fn(scn.l, |_, _| complex_gaussian(rng, 1.0)))
        .collect();
    let mut channel = CMatrix::zeros(geom.m, scn.k);
    for k in 0..scn.k {
        let a = if steering.len() == 1 {
            &steering[0]
        } else {
            &steering[k]
        };
        let g = a * &fading[k] * C64::new((scn.beta[k] / scn.l as f64).sqrt(), 0.0);
        channel.set_column(k, &g);
    }
    Ok(ChannelRealization {
        doas,
        steering,
        fading,
        channel,
    })
}

pub fn draw_symbols<R: Rng + ?Sized>(k: usize, kind: SymbolKind, rng: &mut R) -> CVector {
    match kind {
        SymbolKind::Gaussian => CVector::from_fn(k, |_, _| complex_gaussian(rng, 1.0)),
        SymbolKind::Qpsk => {
            let a = std::f64::consts::FRAC_1_SQRT_2;
            CVector::from_fn(k, |_, _| {
                let re = if rng.random::<bool>() { a } else { -a };
                let im = if rng.random::<bool>() { a } else { -a };
                C64::new(re, im)
            })
        }
    }
}

/// `x = G P^{1/2} s + n` with noise drawn from `seed`.
pub fn synthesize_rx(real: &ChannelRealization, scn: &Scenario, s: &CVector, seed: u64) -> Result<CVector> {
    let mut rng = stream_rng(derive_seed(seed, purpose::RECEIVE), 0);
    synthesize_rx_with(real, scn, s, &mut rng)
}

pub fn synthesize_rx_with<R: Rng + ?Sized>(
    real: &ChannelRealization,
    scn: &Scenario,
    s: &CVector,
    rng: &mut R,
) -> Result<CVector> {
    let (m, k) = real.channel.shape();
    if s.len() != k {
        return Err(Error::DimensionMismatch {
            context: "symbol vector",
            expected: k,
            got: s.len(),
        });
    }
    if scn.k != k {
        return Err(Error::DimensionMismatch {
            context: "scenario users",
            expected: k,
            got: scn.k,
        });
    }
    let mut x = CVector::zeros(m);
    for kk in 0..k {
        let amp = s[kk] * scn.power(kk).sqrt();
        x.axpy(amp, &real.channel.column(kk), C64::new(1.0, 0.0));
    }
    if scn.sigma_n2 > 0.0 {
        for v in x.iter_mut() {
            *v += complex_gaussian(rng, scn.sigma_n2);
        }
    }
    Ok(x)
}

/// Evaluation of the sector-averaged steering outer product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovarianceMethod {
    /// Closed form per lag; the sinc form when the sector is at broadside.
    #[default]
    Closed,
    /// Gauss–Legendre over `[δ1, δ2]` with the given node count.
    Quadrature(usize),
}

/// Input covariance with `u` uniform over the sector, closed form.
pub fn rx_covariance_analytic(scn: &Scenario, geom: &ArrayGeometry) -> Result<CMatrix> {
    rx_covariance_with(scn, geom, CovarianceMethod::Closed)
}

/// `R_x = Σ_k p_k β_k E[a(u) a(u)^H] + σ_n² I` with `u ~ U[δ1, δ2]`.
pub fn rx_covariance_with(scn: &Scenario, geom: &ArrayGeometry, method: CovarianceMethod) -> Result<CMatrix> {
    scn.validate()?;
    geom.validate()?;
    let (d1, d2) = scn.sector();
    let lags = sector_lag_averages(geom, d1, d2, method);
    Ok(toeplitz_covariance(
        &lags,
        scn.received_signal_power(),
        scn.sigma_n2,
    ))
}

/// `E[exp(-j 2π (d/λ) u n)]` for lags `n = 0..M`, `u ~ U[δ1, δ2]`.
pub fn sector_lag_averages(geom: &ArrayGeometry, d1: f64, d2: f64, method: CovarianceMethod) -> Vec<C64> {
    let width = d2 - d1;
    match method {
        CovarianceMethod::Closed => {
            let mid = 0.5 * (d1 + d2);
            (0..geom.m)
                .map(|n| {
                    let c = geom.spatial_frequency(1.0) * n as f64;
                    C64::from_polar(sinc(0.5 * c * width), -c * mid)
                })
                .collect()
        }
        CovarianceMethod::Quadrature(nodes) => {
            let rule = GaussLegendre::new(nodes);
            (0..geom.m)
                .map(|n| {
                    let c = geom.spatial_frequency(1.0) * n as f64;
                    let mut acc = C64::new(0.0, 0.0);
                    for (u, w) in rule.points(d1, d2) {
                        acc += C64::from_polar(w, -c * u);
                    }
                    acc / width
                })
                .collect()
        }
    }
}

fn toeplitz_covariance(lags: &[C64], signal: f64, noise: f64) -> CMatrix {
    let m = lags.len();
    CMatrix::from_fn(m, m, |i, j| {
        let v = if i >= j { lags[i - j] } else { lags[j - i].conj() };
        let mut e = v * signal;
        if i == j {
            e += C64::new(noise, 0.0);
        }
        e
    })
}

/// `Σ_k p_k β_k (1/L) A_k A_k^H + σ_n² I`, the covariance given the DoAs.
pub fn rx_covariance_for_doas(scn: &Scenario, geom: &ArrayGeometry, doas: &DoaSet) -> CMatrix {
    let mut r = CMatrix::identity(geom.m, geom.m) * C64::new(scn.sigma_n2, 0.0);
    if doas.is_shared() {
        let a = steering_matrix(geom, &doas.per_user[0]);
        let w = scn.received_signal_power() / scn.l as f64;
        r += &a * a.adjoint() * C64::new(w, 0.0);
    } else {
        for k in 0..scn.k {
            let a = steering_matrix(geom, doas.for_user(k));
            let w = scn.power(k) * scn.beta[k] / scn.l as f64;
            r += &a * a.adjoint() * C64::new(w, 0.0);
        }
    }
    r
}

/// `G P G^H + σ_n² I`, the covariance given the full channel.
pub fn rx_covariance_given_channel(scn: &Scenario, g: &CMatrix) -> CMatrix {
    let m = g.nrows();
    let mut gp = g.clone();
    for k in 0..g.ncols() {
        let s = scn.power(k).sqrt();
        gp.column_mut(k).scale_mut(s);
    }
    &gp * gp.adjoint() + CMatrix::identity(m, m) * C64::new(scn.sigma_n2, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frobenius;

    fn deg(x: f64) -> f64 {
        x.to_radians()
    }

    #[test]
    fn steering_examples() {
        let g = ArrayGeometry::new(4, 0.25).unwrap();
        let a = steering_vector(&g, 0.0).unwrap();
        assert!(a.iter().all(|z| (*z - C64::new(1.0, 0.0)).norm() < 1e-15));

        let g = ArrayGeometry::new(2, 0.5).unwrap();
        let a = steering_vector(&g, 1.0).unwrap();
        assert!((a[0] - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((a[1] - C64::new(-1.0, 0.0)).norm() < 1e-15);

        let g = ArrayGeometry::new(3, 0.25).unwrap();
        let a = steering_vector(&g, 0.5).unwrap();
        for m in 0..3 {
            let want = C64::from_polar(1.0, -PI * m as f64 / 4.0);
            assert!((a[m] - want).norm() < 1e-15);
        }
    }

    #[test]
    fn steering_rejects_non_sine_argument() {
        let g = ArrayGeometry::new(4, 0.25).unwrap();
        assert!(steering_vector(&g, 1.0001).is_err());
        assert!(steering_vector(&g, f64::NAN).is_err());
    }

    #[test]
    fn geometry_and_scenario_validation() {
        assert!(ArrayGeometry::new(0, 0.25).is_err());
        assert!(ArrayGeometry::new(4, 0.0).is_err());
        assert!(Scenario::new(1, 1, 0.0, 0.0, 0.0).is_err());
        assert!(Scenario::new(1, 0, 0.0, 0.1, 0.0).is_err());
        assert!(Scenario::new(1, 1, deg(80.0), deg(40.0), 0.0).is_err());
    }

    #[test]
    fn single_path_channel_collapses() {
        let scn = Scenario::new(2, 1, deg(30.0), deg(40.0), 0.0).unwrap();
        let geom = ArrayGeometry::new(8, 0.25).unwrap();
        let real = draw_channel(&scn, &geom, 11).unwrap();
        for k in 0..2 {
            let a = steering_vector(&geom, real.doas.for_user(k)[0].sin()).unwrap();
            let want = a * real.fading[k][0];
            assert!((real.channel.column(k) - want).norm() < 1e-12);
        }
    }

    #[test]
    fn channel_columns_follow_the_path_model() {
        let mut scn = Scenario::new(3, 5, deg(-10.0), deg(30.0), 3.0).unwrap();
        scn.shared_doas = false;
        scn.beta = vec![0.5, 1.0, 2.0];
        let geom = ArrayGeometry::new(6, 0.3).unwrap();
        let real = draw_channel(&scn, &geom, 5).unwrap();
        for k in 0..3 {
            let a = real.steering_for(k);
            assert!(a.row(0).iter().all(|z| (*z - C64::new(1.0, 0.0)).norm() < 1e-15));
            assert!(a.iter().all(|z| (z.norm() - 1.0).abs() < 1e-14));
            for th in real.doas.for_user(k) {
                assert!((th - scn.theta0).abs() <= 0.5 * scn.spread);
            }
            let want = a * &real.fading[k] * C64::new((scn.beta[k] / 5.0).sqrt(), 0.0);
            assert!((real.channel.column(k) - want).norm() < 1e-12);
        }
    }

    #[test]
    fn channel_draw_is_deterministic() {
        let scn = Scenario::new(4, 7, 0.2, 0.5, 0.0).unwrap();
        let geom = ArrayGeometry::new(16, 0.25).unwrap();
        let a = draw_channel(&scn, &geom, 99).unwrap();
        let b = draw_channel(&scn, &geom, 99).unwrap();
        assert_eq!(a.channel, b.channel);
        let c = draw_channel(&scn, &geom, 100).unwrap();
        assert_ne!(a.channel, c.channel);
    }

    #[test]
    fn noiseless_single_user_receive() {
        let mut scn = Scenario::new(1, 4, 0.0, 0.3, 6.0).unwrap();
        scn.sigma_n2 = 0.0;
        let geom = ArrayGeometry::new(5, 0.5).unwrap();
        let real = draw_channel(&scn, &geom, 1).unwrap();
        let s = CVector::from_element(1, C64::new(1.0, 0.0));
        let x = synthesize_rx(&real, &scn, &s, 2).unwrap();
        let want = real.channel.column(0) * C64::new(scn.power(0).sqrt(), 0.0);
        assert!((x - want).norm() < 1e-12);
    }

    #[test]
    fn receive_checks_symbol_length() {
        let scn = Scenario::new(2, 4, 0.0, 0.3, 0.0).unwrap();
        let geom = ArrayGeometry::new(5, 0.5).unwrap();
        let real = draw_channel(&scn, &geom, 1).unwrap();
        let s = CVector::zeros(3);
        assert!(matches!(
            synthesize_rx(&real, &scn, &s, 2),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn point_source_covariance_is_rank_one_plus_noise() {
        let scn = Scenario::new(2, 1, 0.0, 1e-9, 0.0).unwrap();
        let geom = ArrayGeometry::new(4, 0.25).unwrap();
        let r = rx_covariance_analytic(&scn, &geom).unwrap();
        let want = CMatrix::from_element(4, 4, C64::new(2.0, 0.0)) + CMatrix::identity(4, 4);
        assert!(frobenius(&(r - want)) < 1e-9);
    }

    #[test]
    fn covariance_trace_and_closed_vs_quadrature() {
        let scn = Scenario::new(3, 10, deg(30.0), deg(40.0), 2.0).unwrap();
        let geom = ArrayGeometry::new(12, 0.25).unwrap();
        let closed = rx_covariance_analytic(&scn, &geom).unwrap();
        let quad = rx_covariance_with(&scn, &geom, CovarianceMethod::Quadrature(256)).unwrap();
        assert!(frobenius(&(&closed - &quad)) < 1e-10 * frobenius(&closed));
        let tr = closed.trace().re;
        assert!((tr - 12.0 * scn.input_power()).abs() < 1e-9);
    }
}

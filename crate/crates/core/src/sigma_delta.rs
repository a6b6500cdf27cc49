//! Angle-steered spatial Sigma-Delta array.
//!
//! Antenna `m` quantizes `r_m = x_m + e^{-jφ}(r_{m-1} − y_{m-1})`, so the
//! error of each converter is fed forward to its neighbour with a phase
//! rotation. In matrix form `r = U x − V y`, and with unit Bussgang gains the
//! output is `y = x + U^{-1} q` where `U^{-1} = I − e^{-jφ} Z₋₁`.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::quantization::{alpha_gaussian, check_len, QuantizerBank, MIN_EMPIRICAL_SAMPLES};
use crate::{CMatrix, Error, Result, C64};

/// `π/2 − 1`, the distortion-to-input power ratio of a unit-gain one-bit quantizer.
pub const DISTORTION_RATIO: f64 = PI / 2.0 - 1.0;

/// Asymptotic `p_q / p_x` along a long array with constant input power.
pub fn noise_power_limit() -> f64 {
    DISTORTION_RATIO / (1.0 - DISTORTION_RATIO)
}

/// The structural matrices of the feedback chain for `M` antennas.
#[derive(Debug, Clone)]
pub struct SdStructure {
    pub phi: f64,
    /// `U_mn = e^{-j(m−n)φ}` on and below the diagonal.
    pub u: CMatrix,
    /// `U − I`.
    pub v: CMatrix,
    /// Ones on the first subdiagonal.
    pub z_minus1: DMatrix<f64>,
}

impl SdStructure {
    pub fn new(m: usize, phi: f64) -> Self {
        let u = CMatrix::from_fn(m, m, |i, j| {
            if i >= j {
                C64::from_polar(1.0, -((i - j) as f64) * phi)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let v = &u - CMatrix::identity(m, m);
        let z_minus1 = DMatrix::from_fn(m, m, |i, j| if i == j + 1 { 1.0 } else { 0.0 });
        Self { phi, u, v, z_minus1 }
    }

    pub fn m(&self) -> usize {
        self.u.nrows()
    }

    /// `I − e^{-jφ} Z₋₁`, the noise-shaping filter.
    pub fn u_inverse(&self) -> CMatrix {
        let m = self.m();
        let rot = C64::from_polar(1.0, -self.phi);
        CMatrix::from_fn(m, m, |i, j| {
            if i == j {
                C64::new(1.0, 0.0)
            } else {
                -rot * self.z_minus1[(i, j)]
            }
        })
    }
}

/// Noise powers of the linearized Sigma-Delta array under unit gains.
#[derive(Debug, Clone)]
pub struct SdNoiseModel {
    pub p_x: Vec<f64>,
    /// Quantizer input powers `E|r_m|²`.
    pub p_r: Vec<f64>,
    /// Effective quantization-noise powers `E|q_m|²`.
    pub p_q: Vec<f64>,
    /// `Π_mn = (π/2 − 1)^{m−n}` on and below the diagonal.
    pub pi: DMatrix<f64>,
}

impl SdNoiseModel {
    pub fn m(&self) -> usize {
        self.p_q.len()
    }

    /// Unit-gain levels `sqrt(π p_r) / 2`.
    pub fn levels(&self) -> QuantizerBank {
        alpha_gaussian(&self.p_r).expect("powers validated at construction")
    }

    /// `σ²_qM`, the noise power of the last converter.
    pub fn last_noise_power(&self) -> f64 {
        *self.p_q.last().expect("nonempty model")
    }

    pub fn trace(&self) -> f64 {
        self.p_q.iter().sum()
    }

    /// Diagonal `R_q`.
    pub fn r_q(&self) -> CMatrix {
        let m = self.m();
        CMatrix::from_fn(m, m, |i, j| {
            if i == j {
                C64::new(self.p_q[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    /// `U^{-1} diag(p_q) U^{-H}`, the covariance of the shaped noise `y − x`.
    ///
    /// Tridiagonal: `p_q[m] + p_q[m−1]` on the diagonal, `−e^{-jφ} p_q[m−1]`
    /// below it.
    pub fn shaped_covariance(&self, phi: f64) -> CMatrix {
        let m = self.m();
        let rot = C64::from_polar(1.0, -phi);
        let mut r = CMatrix::zeros(m, m);
        for i in 0..m {
            let prev = if i > 0 { self.p_q[i - 1] } else { 0.0 };
            r[(i, i)] = C64::new(self.p_q[i] + prev, 0.0);
            if i > 0 {
                r[(i, i - 1)] = -rot * prev;
                r[(i - 1, i)] = -rot.conj() * prev;
            }
        }
        r
    }
}

/// Builds the noise-power model from the per-antenna input powers.
pub fn sd_linear_model(p_x: &[f64]) -> Result<SdNoiseModel> {
    if p_x.is_empty() {
        return Err(Error::invalid("p_x", "no input powers given"));
    }
    if let Some(m) = p_x.iter().position(|&p| !(p > 0.0 && p.is_finite())) {
        return Err(Error::invalid(
            "p_x",
            format!("input power at antenna {m} must be positive, got {}", p_x[m]),
        ));
    }
    let m = p_x.len();
    let c = DISTORTION_RATIO;
    let pi = DMatrix::from_fn(m, m, |i, j| if i >= j { c.powi((i - j) as i32) } else { 0.0 });
    let mut p_r = Vec::with_capacity(m);
    let mut prev = 0.0;
    for &p in p_x {
        prev = p + c * prev;
        p_r.push(prev);
    }
    let p_q = p_r.iter().map(|p| c * p).collect();
    Ok(SdNoiseModel {
        p_x: p_x.to_vec(),
        p_r,
        p_q,
        pi,
    })
}

/// Runs the feedback chain on one snapshot, returning `(y, r)`.
pub fn sd_quantize(x: &[C64], bank: &QuantizerBank, phi: f64) -> Result<(Vec<C64>, Vec<C64>)> {
    check_len(bank, x.len())?;
    let mut y = vec![C64::new(0.0, 0.0); x.len()];
    let mut r = vec![C64::new(0.0, 0.0); x.len()];
    sd_quantize_into(x, bank, C64::from_polar(1.0, -phi), &mut y, &mut r);
    Ok((y, r))
}

/// Allocation-free core of [`sd_quantize`]; `rot = e^{-jφ}`.
#[inline]
pub fn sd_quantize_into(x: &[C64], bank: &QuantizerBank, rot: C64, y: &mut [C64], r: &mut [C64]) {
    let mut carry = C64::new(0.0, 0.0);
    for m in 0..x.len() {
        let rm = x[m] + carry;
        let ym = bank.apply(m, rm);
        r[m] = rm;
        y[m] = ym;
        carry = rot * (rm - ym);
    }
}

/// Shaped noise `y − x`.
pub fn sd_effective_noise(y: &[C64], x: &[C64]) -> Result<Vec<C64>> {
    if y.len() != x.len() {
        return Err(Error::DimensionMismatch {
            context: "effective noise",
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok(y.iter().zip(x).map(|(a, b)| a - b).collect())
}

/// Per-antenna first and second moments of `(r, y)` streamed over snapshots.
#[derive(Debug, Clone)]
pub struct QuantizerMoments {
    /// `Σ r_m y_m*`.
    pub ry: Vec<C64>,
    /// `Σ |r_m|²`.
    pub rr: Vec<f64>,
    /// `Σ |y_m − r_m|²`.
    pub qq: Vec<f64>,
    pub count: usize,
}

impl QuantizerMoments {
    pub fn new(m: usize) -> Self {
        Self {
            ry: vec![C64::new(0.0, 0.0); m],
            rr: vec![0.0; m],
            qq: vec![0.0; m],
            count: 0,
        }
    }

    #[inline]
    pub fn push(&mut self, r: &[C64], y: &[C64]) {
        for m in 0..r.len() {
            self.ry[m] += r[m] * y[m].conj();
            self.rr[m] += r[m].norm_sqr();
            self.qq[m] += (y[m] - r[m]).norm_sqr();
        }
        self.count += 1;
    }

    pub fn merge(mut self, other: &Self) -> Self {
        for m in 0..self.rr.len() {
            self.ry[m] += other.ry[m];
            self.rr[m] += other.rr[m];
            self.qq[m] += other.qq[m];
        }
        self.count += other.count;
        self
    }

    /// Sample `E|r_m|²`.
    pub fn input_power(&self) -> Vec<f64> {
        self.rr.iter().map(|v| v / self.count as f64).collect()
    }

    /// Sample `E|y_m − r_m|²`.
    pub fn error_power(&self) -> Vec<f64> {
        self.qq.iter().map(|v| v / self.count as f64).collect()
    }

    pub fn gamma(&self) -> Result<GammaEstimate> {
        if self.count < MIN_EMPIRICAL_SAMPLES {
            return Err(Error::InsufficientSamples {
                required: MIN_EMPIRICAL_SAMPLES,
                got: self.count,
            });
        }
        let ratio: Vec<C64> = self.ry.iter().zip(&self.rr).map(|(a, b)| a / b).collect();
        Ok(GammaEstimate {
            gamma: ratio.iter().map(|z| z.re).collect(),
            imag_residual: ratio.iter().map(|z| z.im).collect(),
            snapshots: self.count,
        })
    }
}

/// Empirical Bussgang gains.
#[derive(Debug, Clone)]
pub struct GammaEstimate {
    pub gamma: Vec<f64>,
    /// Imaginary part of each ratio; zero in expectation.
    pub imag_residual: Vec<f64>,
    pub snapshots: usize,
}

/// `γ_m = mean(r_m y_m*) / mean(|r_m|²)` over paired snapshots.
pub fn gamma_empirical(r: &[Vec<C64>], y: &[Vec<C64>]) -> Result<GammaEstimate> {
    if r.len() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "snapshot pairs",
            expected: r.len(),
            got: y.len(),
        });
    }
    let m = r.first().map_or(0, Vec::len);
    let mut acc = QuantizerMoments::new(m);
    for (rs, ys) in r.iter().zip(y) {
        if rs.len() != m || ys.len() != m {
            return Err(Error::DimensionMismatch {
                context: "snapshot length",
                expected: m,
                got: rs.len().min(ys.len()),
            });
        }
        acc.push(rs, ys);
    }
    acc.gamma()
}

/// Data-driven levels for validation runs.
///
/// The chain is causal, so antenna `m` only sees levels `0..m`; a single
/// sweep setting each level from the observed inputs (sample version of the
/// unit-gain rule, both rails pooled) is therefore exact.
pub fn calibrate_levels(snapshots: &[Vec<C64>], phi: f64) -> Result<QuantizerBank> {
    if snapshots.len() < MIN_EMPIRICAL_SAMPLES {
        return Err(Error::InsufficientSamples {
            required: MIN_EMPIRICAL_SAMPLES,
            got: snapshots.len(),
        });
    }
    let m = snapshots[0].len();
    if snapshots.iter().any(|s| s.len() != m) {
        return Err(Error::invalid("snapshots", "snapshots differ in length"));
    }
    let rot = C64::from_polar(1.0, -phi);
    let mut carry = vec![C64::new(0.0, 0.0); snapshots.len()];
    let mut alpha = Vec::with_capacity(m);
    for ant in 0..m {
        let (mut sq, mut abs) = (0.0, 0.0);
        for (s, c) in snapshots.iter().zip(&carry) {
            let r = s[ant] + c;
            sq += r.norm_sqr();
            abs += r.re.abs() + r.im.abs();
        }
        let a = if abs > 0.0 { sq / abs } else { 1.0 };
        alpha.push(a);
        for (s, c) in snapshots.iter().zip(carry.iter_mut()) {
            let r = s[ant] + *c;
            let y = C64::new(
                a * crate::quantization::sign(r.re),
                a * crate::quantization::sign(r.im),
            );
            *c = rot * (r - y);
        }
    }
    QuantizerBank::new(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frobenius;
    use crate::quantization::quantize_one_bit;
    use crate::rng::{complex_gaussian, stream_rng};
    use proptest::prelude::*;

    fn white(m: usize, n: usize, seed: u64) -> Vec<Vec<C64>> {
        let mut rng = stream_rng(seed, 0);
        (0..n)
            .map(|_| (0..m).map(|_| complex_gaussian(&mut rng, 1.0)).collect())
            .collect()
    }

    #[test]
    fn structure_identities() {
        for &phi in &[0.0, 0.7, -2.1] {
            let s = SdStructure::new(6, phi);
            let id = CMatrix::identity(6, 6);
            assert!(frobenius(&(&s.u * s.u_inverse() - &id)) < 1e-12);
            let rot = C64::from_polar(1.0, -phi);
            let shift = crate::linalg::to_complex(&s.z_minus1) * rot;
            assert!(frobenius(&(s.u_inverse() * &s.v - shift)) < 1e-12);
        }
        let s = SdStructure::new(2, 0.0);
        let ui = s.u_inverse();
        assert_eq!(ui[(1, 0)], C64::new(-1.0, 0.0));
        assert_eq!(ui[(1, 1)], C64::new(1.0, 0.0));
    }

    #[test]
    #[allow(clippy::approx_constant, clippy::needless_range_loop)]
    fn noise_model_examples() {
        let n = sd_linear_model(&[1.0, 1.0, 1.0]).unwrap();
        let c = DISTORTION_RATIO;
        let exact_r = [1.0, 1.0 + c, 1.0 + c + c * c];
        for i in 0..3 {
            assert!((n.p_r[i] - exact_r[i]).abs() < 1e-14);
            assert!((n.p_q[i] - c * exact_r[i]).abs() < 1e-14);
        }
        // Published hand values carry rounding slips of up to 2e-4.
        let listed_r = [1.0, 1.570_796, 1.896_664];
        let listed_q = [0.570_796, 0.896_664, 1.082_744];
        for i in 0..3 {
            assert!((n.p_r[i] - listed_r[i]).abs() < 2e-4);
            assert!((n.p_q[i] - listed_q[i]).abs() < 2e-4);
        }
        let one = sd_linear_model(&[2.5]).unwrap();
        assert!((one.p_q[0] - DISTORTION_RATIO * 2.5).abs() < 1e-15);
        let long = sd_linear_model(&vec![1.0; 101]).unwrap();
        assert!((long.p_q[100] - noise_power_limit()).abs() < 1e-6);
        assert!(sd_linear_model(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn pi_matrix_reproduces_the_recursion() {
        let p_x = [0.5, 2.0, 1.0, 3.0];
        let n = sd_linear_model(&p_x).unwrap();
        let v = &n.pi * nalgebra::DVector::from_column_slice(&p_x);
        for i in 0..4 {
            assert!((v[i] - n.p_r[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn shaped_covariance_matches_matrix_product() {
        let n = sd_linear_model(&[1.0, 2.0, 0.5, 1.5]).unwrap();
        let s = SdStructure::new(4, 0.9);
        let ui = s.u_inverse();
        let direct = &ui * n.r_q() * ui.adjoint();
        assert!(frobenius(&(direct - n.shaped_covariance(0.9))) < 1e-12);
    }

    #[test]
    fn single_antenna_matches_plain_one_bit() {
        let bank = QuantizerBank::uniform(1, 0.8).unwrap();
        for x in white(1, 50, 9) {
            let (y, _) = sd_quantize(&x, &bank, 1.3).unwrap();
            assert_eq!(y, quantize_one_bit(&x, &bank).unwrap());
        }
    }

    #[test]
    fn effective_noise_is_shaped() {
        let x = white(2, 1, 2).remove(0);
        let bank = QuantizerBank::uniform(2, 1.0).unwrap();
        let (y, r) = sd_quantize(&x, &bank, 0.0).unwrap();
        let e = sd_effective_noise(&y, &x).unwrap();
        let q: Vec<C64> = y.iter().zip(&r).map(|(a, b)| a - b).collect();
        assert!((e[0] - q[0]).norm() < 1e-14);
        assert!((e[1] - (q[1] - q[0])).norm() < 1e-14);
    }

    #[test]
    fn gain_and_power_recursion_with_white_input() {
        // Small arrays with white Gaussian input keep the quantizer inputs close
        // enough to Gaussian for the linear model to hold at the 2% level.
        let m = 4;
        let phi = 0.7;
        let model = sd_linear_model(&vec![1.0; m]).unwrap();
        let bank = model.levels();
        let rot = C64::from_polar(1.0, -phi);
        let mut rng = stream_rng(17, 0);
        let mut acc = QuantizerMoments::new(m);
        let (mut x, mut y, mut r) = (
            vec![C64::new(0.0, 0.0); m],
            vec![C64::new(0.0, 0.0); m],
            vec![C64::new(0.0, 0.0); m],
        );
        for _ in 0..100_000 {
            for v in x.iter_mut() {
                *v = complex_gaussian(&mut rng, 1.0);
            }
            sd_quantize_into(&x, &bank, rot, &mut y, &mut r);
            acc.push(&r, &y);
        }
        let g = acc.gamma().unwrap();
        for (i, gm) in g.gamma.iter().enumerate() {
            assert!((gm - 1.0).abs() < 0.02, "gamma[{i}] = {gm}");
        }
        for (i, p) in acc.input_power().iter().enumerate() {
            assert!((p / model.p_r[i] - 1.0).abs() < 0.02, "p_r[{i}] = {p}");
        }

        let doubled = QuantizerBank::uniform(1, 2.0 * bank.levels()[0]).unwrap();
        let mut acc2 = QuantizerMoments::new(1);
        for _ in 0..20_000 {
            let z = [complex_gaussian(&mut rng, 1.0)];
            let (yy, rr) = sd_quantize(&z, &doubled, phi).unwrap();
            acc2.push(&rr, &yy);
        }
        assert!((acc2.gamma().unwrap().gamma[0] - 2.0).abs() < 0.05);
    }

    #[test]
    fn lloyd_max_gain_is_below_one() {
        let bank = crate::quantization::alpha_lloyd_max(&[1.0; 3]).unwrap();
        let xs = white(3, 20_000, 21);
        let (mut rs, mut ys) = (Vec::new(), Vec::new());
        for x in &xs {
            let (y, r) = sd_quantize(x, &bank, 0.0).unwrap();
            rs.push(r);
            ys.push(y);
        }
        let g = gamma_empirical(&rs, &ys).unwrap();
        assert!(g.gamma.iter().all(|&v| v < 1.0));
    }

    #[test]
    fn gamma_needs_enough_snapshots() {
        let v = vec![vec![C64::new(1.0, 0.0)]; 10];
        assert!(matches!(
            gamma_empirical(&v, &v),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn calibration_recovers_unit_gain() {
        let xs = white(5, 40_000, 31);
        let phi = 0.4;
        let bank = calibrate_levels(&xs, phi).unwrap();
        let (mut rs, mut ys) = (Vec::new(), Vec::new());
        for x in &xs {
            let (y, r) = sd_quantize(x, &bank, phi).unwrap();
            rs.push(r);
            ys.push(y);
        }
        let g = gamma_empirical(&rs, &ys).unwrap();
        for v in g.gamma {
            assert!((v - 1.0).abs() < 1e-9, "{v}");
        }
    }

    proptest! {
        #[test]
        fn defining_identity_holds(
            seed in 0u64..1000, m in 1usize..12, phi in -3.2f64..3.2, a in 0.1f64..3.0
        ) {
            let x = white(m, 1, seed).remove(0);
            let bank = QuantizerBank::uniform(m, a).unwrap();
            let (y, r) = sd_quantize(&x, &bank, phi).unwrap();
            let s = SdStructure::new(m, phi);
            let xv = crate::linalg::cvector(&x);
            let yv = crate::linalg::cvector(&y);
            let want = &s.u * xv - &s.v * yv;
            for i in 0..m {
                prop_assert!((r[i] - want[i]).norm() < 1e-12);
            }
        }

        #[test]
        fn noise_powers_are_bounded_and_nondecreasing(m in 1usize..200, p in 0.01f64..100.0) {
            let n = sd_linear_model(&vec![p; m]).unwrap();
            for w in n.p_q.windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
            prop_assert!(n.last_noise_power() <= noise_power_limit() * p * (1.0 + 1e-12));
        }
    }
}

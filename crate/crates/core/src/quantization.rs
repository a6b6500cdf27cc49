//! Per-antenna one-bit quantizers, their level-setting rules and the arcsine law.

use std::f64::consts::PI;

use crate::linalg::{ensure_hermitian, real_diag, scale_symmetric};
use crate::{CMatrix, Error, Result, C64};

/// Minimum per-antenna sample count for empirical level setting.
pub const MIN_EMPIRICAL_SAMPLES: usize = 10_000;

/// One-bit output levels, shared by the real and imaginary rails.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerBank {
    alpha: Vec<f64>,
}

impl QuantizerBank {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::invalid("alpha", "bank must hold at least one level"));
        }
        if let Some(m) = alpha.iter().position(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::invalid(
                "alpha",
                format!("level {m} must be positive, got {}", alpha[m]),
            ));
        }
        Ok(Self { alpha })
    }

    pub fn uniform(m: usize, alpha: f64) -> Result<Self> {
        Self::new(vec![alpha; m])
    }

    pub fn levels(&self) -> &[f64] {
        &self.alpha
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// All levels multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.alpha.iter().map(|a| a * factor).collect())
    }

    /// Quantizes one sample with the level of antenna `m`.
    #[inline]
    pub fn apply(&self, m: usize, z: C64) -> C64 {
        let a = self.alpha[m];
        C64::new(a * sign(z.re), a * sign(z.im))
    }
}

/// Hard limiter with `sign(0) = +1`.
#[inline]
pub fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

pub fn quantize_one_bit(x: &[C64], bank: &QuantizerBank) -> Result<Vec<C64>> {
    check_len(bank, x.len())?;
    Ok(x.iter().enumerate().map(|(m, &z)| bank.apply(m, z)).collect())
}

pub(crate) fn check_len(bank: &QuantizerBank, m: usize) -> Result<()> {
    if bank.len() != m {
        return Err(Error::DimensionMismatch {
            context: "quantizer bank",
            expected: m,
            got: bank.len(),
        });
    }
    Ok(())
}

fn check_powers(p_r: &[f64]) -> Result<()> {
    if p_r.is_empty() {
        return Err(Error::invalid("p_r", "no input powers given"));
    }
    if let Some(m) = p_r.iter().position(|&p| !(p > 0.0 && p.is_finite())) {
        return Err(Error::invalid(
            "p_r",
            format!("input power at antenna {m} must be positive, got {}", p_r[m]),
        ));
    }
    Ok(())
}

/// Unit Bussgang gain for Gaussian inputs: `α = sqrt(π p_r) / 2`.
pub fn alpha_gaussian(p_r: &[f64]) -> Result<QuantizerBank> {
    check_powers(p_r)?;
    QuantizerBank::new(p_r.iter().map(|p| 0.5 * (PI * p).sqrt()).collect())
}

/// Minimum-MSE (Lloyd-Max) levels for Gaussian inputs: `α = sqrt(p_r / π)`.
pub fn alpha_lloyd_max(p_r: &[f64]) -> Result<QuantizerBank> {
    check_powers(p_r)?;
    QuantizerBank::new(p_r.iter().map(|p| (p / PI).sqrt()).collect())
}

/// Sample version of the unit-gain rule, `mean((Re r)²) / mean(|Re r|)`.
///
/// `samples[m]` holds the observed quantizer inputs of antenna `m`.
pub fn alpha_empirical(samples: &[Vec<C64>]) -> Result<QuantizerBank> {
    if samples.is_empty() {
        return Err(Error::InsufficientSamples {
            required: MIN_EMPIRICAL_SAMPLES,
            got: 0,
        });
    }
    let mut alpha = Vec::with_capacity(samples.len());
    for s in samples {
        if s.len() < MIN_EMPIRICAL_SAMPLES {
            return Err(Error::InsufficientSamples {
                required: MIN_EMPIRICAL_SAMPLES,
                got: s.len(),
            });
        }
        let (mut sq, mut abs) = (0.0, 0.0);
        for z in s {
            sq += z.re * z.re;
            abs += z.re.abs();
        }
        if abs == 0.0 {
            return Err(Error::invalid("samples", "all real parts are zero"));
        }
        alpha.push(sq / abs);
    }
    QuantizerBank::new(alpha)
}

/// Covariance of `α_m (sign Re x_m + j sign Im x_m)` for Gaussian `x` with the
/// unit-gain levels `α_m = sqrt(π E|x_m|²) / 2`.
pub fn arcsine_output_covariance(r_x: &CMatrix) -> Result<CMatrix> {
    ensure_hermitian(r_x, 1e-9)?;
    let d = real_diag(r_x);
    if let Some(m) = d.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::ZeroDiagonal(m));
    }
    let inv: Vec<f64> = d.iter().map(|v| 1.0 / v).collect();
    let mut upsilon = scale_symmetric(r_x, &inv);
    // Rounding in the normalization would otherwise leave the diagonal a few ulps
    // off one, where asin is steepest.
    upsilon.fill_diagonal(C64::new(1.0, 0.0));
    let asin = upsilon.map(|z| C64::new(clamped_asin(z.re), clamped_asin(z.im)));
    Ok(scale_symmetric(&asin, &d))
}

/// `R_y − R_x`, the distortion covariance of the unit-gain one-bit array.
pub fn onebit_noise_covariance(r_x: &CMatrix) -> Result<CMatrix> {
    Ok(arcsine_output_covariance(r_x)? - r_x)
}

/// Normalized correlation matrix `Υ = diag(R)^{-1/2} R diag(R)^{-1/2}`.
pub fn normalized_correlation(r_x: &CMatrix) -> Result<CMatrix> {
    let d = real_diag(r_x);
    if let Some(m) = d.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::ZeroDiagonal(m));
    }
    let inv: Vec<f64> = d.iter().map(|v| 1.0 / v).collect();
    let mut upsilon = scale_symmetric(r_x, &inv);
    upsilon.fill_diagonal(C64::new(1.0, 0.0));
    Ok(upsilon)
}

fn clamped_asin(x: f64) -> f64 {
    const TOL: f64 = 1e-9;
    debug_assert!(x.abs() <= 1.0 + TOL, "correlation {x} outside [-1, 1]");
    x.clamp(-1.0, 1.0).asin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frobenius;
    use crate::rng::{complex_gaussian, stream_rng};
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn quantizer_examples() {
        let b = QuantizerBank::uniform(1, 1.0).unwrap();
        assert_eq!(
            quantize_one_bit(&[C64::new(1.0, 1.0)], &b).unwrap(),
            vec![C64::new(1.0, 1.0)]
        );
        let b = QuantizerBank::uniform(1, 2.0).unwrap();
        assert_eq!(
            quantize_one_bit(&[C64::new(-0.3, 0.2)], &b).unwrap(),
            vec![C64::new(-2.0, 2.0)]
        );
        assert_eq!(
            quantize_one_bit(&[C64::new(0.0, -0.0)], &b).unwrap()[0],
            C64::new(2.0, 2.0)
        );
    }

    #[test]
    fn bank_rejects_bad_levels() {
        assert!(QuantizerBank::new(vec![1.0, 0.0]).is_err());
        assert!(QuantizerBank::new(vec![]).is_err());
        assert!(alpha_gaussian(&[1.0, -1.0]).is_err());
        assert!(alpha_lloyd_max(&[0.0]).is_err());
        let b = QuantizerBank::uniform(2, 1.0).unwrap();
        assert!(quantize_one_bit(&[C64::new(1.0, 0.0)], &b).is_err());
    }

    #[test]
    fn level_rules() {
        let g = alpha_gaussian(&[1.0, 4.0]).unwrap();
        assert!((g.levels()[0] - 0.886_226_925_452_758).abs() < 1e-12);
        assert!((g.levels()[1] - 2.0 * g.levels()[0]).abs() < 1e-12);
        let l = alpha_lloyd_max(&[1.0]).unwrap();
        assert!((l.levels()[0] - 0.564_189_583_547_756).abs() < 1e-12);
    }

    #[test]
    fn empirical_levels() {
        let constant = vec![vec![C64::new(-0.7, 3.0); MIN_EMPIRICAL_SAMPLES]];
        assert!((alpha_empirical(&constant).unwrap().levels()[0] - 0.7).abs() < 1e-12);
        assert!(alpha_empirical(&[vec![C64::new(1.0, 0.0); 10]]).is_err());
        assert!(alpha_empirical(&[]).is_err());

        let mut rng = stream_rng(3, 0);
        let s: Vec<C64> = (0..1_000_000).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        let a = alpha_empirical(&[s]).unwrap().levels()[0];
        let want = 0.5 * PI.sqrt();
        assert!((a / want - 1.0).abs() < 0.02, "{a}");
    }

    #[test]
    fn unit_gain_and_lloyd_max_mse() {
        let n = 1_000_000;
        let mut rng = stream_rng(4, 0);
        let g = alpha_gaussian(&[1.0]).unwrap();
        let l = alpha_lloyd_max(&[1.0]).unwrap();
        let (mut ry, mut rr, mut mse_g, mut mse_l) = (C64::new(0.0, 0.0), 0.0, 0.0, 0.0);
        let (mut qy, mut qq, mut yy, mut qr) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let r = complex_gaussian(&mut rng, 1.0);
            let yg = g.apply(0, r);
            let yl = l.apply(0, r);
            ry += r * yg.conj();
            rr += r.norm_sqr();
            mse_g += (r - yg).norm_sqr();
            mse_l += (r - yl).norm_sqr();
            let ql = yl - r;
            qy += (ql * yl.conj()).re;
            qr += (ql * r.conj()).re;
            qq += ql.norm_sqr();
            yy += yl.norm_sqr();
        }
        let gamma = ry.re / rr;
        assert!((gamma - 1.0).abs() < 0.01, "{gamma}");
        assert!(mse_l < mse_g);
        // Distortion under the unit-gain rule is (π/2 − 1) of the input power.
        assert!((mse_g / rr / (PI / 2.0 - 1.0) - 1.0).abs() < 0.01);
        // Lloyd-Max error is orthogonal to the output but not to the input.
        assert!((qy / (qq * yy).sqrt()).abs() < 0.01);
        assert!((qr / (qq * rr).sqrt()).abs() > 0.1);
    }

    #[test]
    fn arcsine_law_basics() {
        let r = CMatrix::identity(3, 3) * C64::new(2.0, 0.0);
        let ry = arcsine_output_covariance(&r).unwrap();
        assert!(frobenius(&(ry - CMatrix::identity(3, 3) * C64::new(PI, 0.0))) < 1e-12);
        let mut z = CMatrix::identity(2, 2);
        z[(1, 1)] = C64::new(0.0, 0.0);
        assert!(matches!(
            arcsine_output_covariance(&z),
            Err(Error::ZeroDiagonal(1))
        ));
    }

    #[test]
    fn arcsine_law_matches_brute_force() {
        let rho: f64 = 0.5;
        let n = 1_000_000;
        let mut rng = stream_rng(5, 0);
        let bank = alpha_gaussian(&[1.0, 1.0]).unwrap();
        let c = (1.0 - rho * rho).sqrt();
        let mut s = Vec::with_capacity(n);
        for _ in 0..n {
            let mut draw = || -> (f64, f64) {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                (a, rho * a + c * b)
            };
            let (a_re, b_re) = draw();
            let (a_im, b_im) = draw();
            let h = std::f64::consts::FRAC_1_SQRT_2;
            let x0 = C64::new(a_re, a_im) * h;
            let x1 = C64::new(b_re, b_im) * h;
            s.push((bank.apply(0, x0) * bank.apply(1, x1).conj()).re);
        }
        let mean = s.iter().sum::<f64>() / n as f64;
        let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        let r = CMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(1.0, 0.0),
                C64::new(rho, 0.0),
                C64::new(rho, 0.0),
                C64::new(1.0, 0.0),
            ],
        );
        let want = arcsine_output_covariance(&r).unwrap()[(0, 1)].re;
        assert!((mean - want).abs() < 3.0 * se, "{mean} vs {want} (se {se})");
    }

    proptest! {
        #[test]
        fn outputs_live_on_the_four_point_constellation(
            re in -10.0f64..10.0, im in -10.0f64..10.0, a in 0.01f64..5.0
        ) {
            let bank = QuantizerBank::uniform(1, a).unwrap();
            let y = quantize_one_bit(&[C64::new(re, im)], &bank).unwrap()[0];
            prop_assert!((y.norm_sqr() - 2.0 * a * a).abs() < 1e-12);
            prop_assert!(y.re.abs() == a && y.im.abs() == a);
        }

        #[test]
        fn arcsine_diagonal_is_pi_over_two(p in 0.1f64..10.0, c in -0.9f64..0.9) {
            let off = C64::new(c * p, 0.0);
            let r = CMatrix::from_row_slice(2, 2, &[C64::new(p, 0.0), off, off, C64::new(p, 0.0)]);
            let ry = arcsine_output_covariance(&r).unwrap();
            prop_assert!((ry[(0, 0)].re - PI / 2.0 * p).abs() < 1e-12);
        }

        #[test]
        fn gaussian_levels_are_homogeneous(p in 0.01f64..100.0, c in 0.1f64..10.0) {
            let a = alpha_gaussian(&[p]).unwrap().levels()[0];
            let b = alpha_gaussian(&[p * c * c]).unwrap().levels()[0];
            prop_assert!((b - c * a).abs() < 1e-12 * b.max(1.0));
        }
    }
}

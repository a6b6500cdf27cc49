//! Reduced-scale self-check of every analytic result against an independent oracle.

use std::f64::consts::PI;
use std::fmt;

use rand_distr::{Distribution, StandardNormal};

use crate::array_model::{
    draw_channel, draw_channel_with, draw_symbols, rx_covariance_analytic, steering_vector,
    synthesize_rx_with, ArrayGeometry, Scenario, SymbolKind,
};
use crate::chan_est::{dft_pilots, ls_estimate, quantized_training};
use crate::experiments::se_mrc_closed_form_averaged;
use crate::linalg::{frobenius, real_diag};
use crate::montecarlo::fold_trials;
use crate::noise_spectrum::{
    analytic_spectra, default_zeta, fit_zeta, onebit_zeta_covariance, pq_onebit_analytic,
    pq_sigmadelta_analytic, sector_power, SECTOR_NODES,
};
use crate::quadrature::GaussLegendre;
use crate::quantization::{alpha_gaussian, alpha_lloyd_max, arcsine_output_covariance, QuantizerBank};
use crate::receivers::{combiner, g_phi, phi_star, se_simulated, Architecture, ReceiverKind, SeOptions};
use crate::rng::{complex_gaussian, derive_seed, purpose, stream_rng, trial_rng};
use crate::sigma_delta::{
    noise_power_limit, sd_linear_model, sd_quantize, sd_quantize_into, QuantizerMoments, SdStructure,
};
use crate::{CMatrix, Result, C64};

/// Deliberate model errors used to confirm that the checks can fail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perturbation {
    /// Multiplies the Sigma-Delta levels in the gain check.
    pub alpha_scale: f64,
    /// Added to the steering phase in the in-sector noise check, radians.
    pub phi_offset: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self {
            alpha_scale: 1.0,
            phi_offset: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub measured: f64,
    pub expected: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &'static str, measured: f64, expected: impl Into<String>, pass: bool) {
        self.checks.push(Check {
            name,
            measured,
            expected: expected.into(),
            pass,
        });
    }

    /// `|measured − target| ≤ tol`.
    fn near(&mut self, name: &'static str, measured: f64, target: f64, tol: f64) {
        let pass = (measured - target).abs() <= tol;
        self.push(name, measured, format!("{target:.6} ± {tol:.2e}"), pass);
    }

    fn below(&mut self, name: &'static str, measured: f64, limit: f64) {
        self.push(name, measured, format!("< {limit:.3e}"), measured < limit);
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<44} {:>14}  {:<26} result", "check", "measured", "expected")?;
        for c in &self.checks {
            writeln!(
                f,
                "{:<44} {:>14.6e}  {:<26} {}",
                c.name,
                c.measured,
                c.expected,
                if c.pass { "PASS" } else { "FAIL" }
            )?;
        }
        let failed = self.failures().len();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

fn deg(x: f64) -> f64 {
    x.to_radians()
}

fn seed_for(tag: u64) -> u64 {
    derive_seed(0x05d1_u64, purpose::VALIDATE ^ (tag << 8))
}

/// Runs every check. A clean build passes all of them.
pub fn validate_suite(perturbation: Perturbation) -> Result<ValidationReport> {
    let mut rep = ValidationReport::default();
    array_checks(&mut rep)?;
    quantizer_checks(&mut rep)?;
    sigma_delta_checks(&mut rep, perturbation)?;
    spectrum_checks(&mut rep, perturbation)?;
    receiver_checks(&mut rep)?;
    estimation_checks(&mut rep)?;
    Ok(rep)
}

fn array_checks(rep: &mut ValidationReport) -> Result<()> {
    let geom = ArrayGeometry::new(9, 0.3)?;
    let worst = [-1.0, -0.4, 0.0, 0.77, 1.0]
        .iter()
        .map(|&u| (steering_vector(&geom, u).map(|a| a.norm_squared()).unwrap_or(0.0) - 9.0).abs())
        .fold(0.0, f64::max);
    rep.below("steering vector norm equals M", worst, 1e-12);

    let scn = Scenario::new(1, 3, deg(20.0), deg(30.0), 0.0)?;
    let geom = ArrayGeometry::new(6, 0.25)?;
    let n = 10_000;
    let vals: Vec<f64> = (0..n)
        .map(|t| draw_channel(&scn, &geom, seed_for(1) + t as u64).map(|r| r.channel.norm_squared() / 6.0))
        .collect::<Result<_>>()?;
    let mean = vals.iter().sum::<f64>() / n as f64;
    let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let se = sd / (n as f64).sqrt();
    rep.near("channel gain E||g||^2/M equals beta", mean, 1.0, 3.0 * se);

    // Sample covariance of the received snapshots against the sector average.
    let scn = Scenario::new(2, 4, deg(10.0), deg(40.0), 0.0)?;
    let geom = ArrayGeometry::new(4, 0.25)?;
    let r_x = rx_covariance_analytic(&scn, &geom)?;
    let trials = 100_000;
    let seed = seed_for(2);
    let (acc, acc_sq) = fold_trials(
        trials,
        || (CMatrix::zeros(4, 4), CMatrix::zeros(4, 4)),
        |acc, t| {
            let mut rng = trial_rng(seed, t);
            let real = draw_channel_with(&scn, &geom, None, &mut rng).expect("valid");
            let s = draw_symbols(2, SymbolKind::Gaussian, &mut rng);
            let x = synthesize_rx_with(&real, &scn, &s, &mut rng).expect("valid");
            let outer = &x * x.adjoint();
            acc.0 += &outer;
            acc.1 += outer.map(|z| C64::new(z.re * z.re, z.im * z.im));
        },
        |mut a, b| {
            a.0 += b.0;
            a.1 += b.1;
            a
        },
    );
    let nt = trials as f64;
    let mut worst_z: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            let m = acc[(i, j)] / nt;
            let v = acc_sq[(i, j)] / nt;
            let se_re = ((v.re - m.re * m.re).max(1e-300) / nt).sqrt();
            let se_im = ((v.im - m.im * m.im).max(1e-300) / nt).sqrt();
            let d = m - r_x[(i, j)];
            worst_z = worst_z.max(d.re.abs() / se_re);
            if i != j {
                worst_z = worst_z.max(d.im.abs() / se_im);
            }
        }
    }
    rep.below("sample covariance within 5 standard errors", worst_z, 5.0);
    Ok(())
}

fn quantizer_checks(rep: &mut ValidationReport) -> Result<()> {
    let n = 1_000_000;
    let mut rng = stream_rng(seed_for(3), 0);
    let g = alpha_gaussian(&[1.0])?;
    let l = alpha_lloyd_max(&[1.0])?;
    let (mut ry, mut rr, mut mse_g, mut mse_l) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..n {
        let r = complex_gaussian(&mut rng, 1.0);
        let yg = g.apply(0, r);
        ry += (r * yg.conj()).re;
        rr += r.norm_sqr();
        mse_g += (r - yg).norm_sqr();
        mse_l += (r - l.apply(0, r)).norm_sqr();
    }
    rep.near("unit-gain levels give gamma = 1", ry / rr, 1.0, 0.01);
    rep.near(
        "one-bit distortion is (pi/2 - 1) p_r",
        mse_g / rr,
        PI / 2.0 - 1.0,
        0.01,
    );
    rep.below("Lloyd-Max MSE below unit-gain MSE", mse_l / mse_g, 1.0);

    let rho = 0.5f64;
    let c = (1.0 - rho * rho).sqrt();
    let mut s = Vec::with_capacity(n);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for _ in 0..n {
        let a: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        let x0 = C64::new(a[0], a[2]) * h;
        let x1 = C64::new(rho * a[0] + c * a[1], rho * a[2] + c * a[3]) * h;
        s.push((g.apply(0, x0) * g.apply(0, x1).conj()).re);
    }
    let mean = s.iter().sum::<f64>() / n as f64;
    let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
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
    let want = arcsine_output_covariance(&r)?[(0, 1)].re;
    rep.near(
        "arcsine law off-diagonal (3 std errors)",
        mean,
        want,
        3.0 * (var / n as f64).sqrt(),
    );
    Ok(())
}

fn sigma_delta_checks(rep: &mut ValidationReport, pert: Perturbation) -> Result<()> {
    let m = 6;
    let phi = 0.7;
    let s = SdStructure::new(m, phi);
    let mut worst: f64 = 0.0;
    let mut rng = stream_rng(seed_for(4), 0);
    let bank = QuantizerBank::uniform(m, 0.9)?;
    for _ in 0..200 {
        let x: Vec<C64> = (0..m).map(|_| complex_gaussian(&mut rng, 2.0)).collect();
        let (y, r) = sd_quantize(&x, &bank, phi)?;
        let want = &s.u * crate::linalg::cvector(&x) - &s.v * crate::linalg::cvector(&y);
        for i in 0..m {
            worst = worst.max((r[i] - want[i]).norm());
        }
    }
    rep.below("r = U x - V y", worst, 1e-12);
    let id = CMatrix::identity(m, m);
    rep.below("U U^-1 = I", frobenius(&(&s.u * s.u_inverse() - id)), 1e-12);

    let long = sd_linear_model(&vec![1.0; 101])?;
    rep.near(
        "noise power limit at m = 100",
        long.p_q[100],
        noise_power_limit(),
        1e-6,
    );

    // Small white-input array: the regime where the Gaussian model holds.
    let m = 4;
    let phi = 0.7;
    let model = sd_linear_model(&vec![1.0; m])?;
    let bank = model.levels().scaled(pert.alpha_scale)?;
    let rot = C64::from_polar(1.0, -phi);
    let mut acc = QuantizerMoments::new(m);
    let (mut y, mut r) = (vec![C64::new(0.0, 0.0); m], vec![C64::new(0.0, 0.0); m]);
    let n = 100_000;
    let (mut q01, mut q00, mut q11, mut xq, mut xx) = (C64::new(0.0, 0.0), 0.0, 0.0, C64::new(0.0, 0.0), 0.0);
    for _ in 0..n {
        let x: Vec<C64> = (0..m).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        sd_quantize_into(&x, &bank, rot, &mut y, &mut r);
        acc.push(&r, &y);
        let q0 = y[1] - r[1];
        let q1 = y[2] - r[2];
        q01 += q0 * q1.conj();
        q00 += q0.norm_sqr();
        q11 += q1.norm_sqr();
        xq += x[2] * q0.conj();
        xx += x[2].norm_sqr();
    }
    let gamma = acc.gamma()?;
    let worst_gamma = gamma.gamma.iter().map(|g| (g - 1.0).abs()).fold(0.0, f64::max);
    rep.below("Sigma-Delta gains within 2% of one", worst_gamma, 0.02);
    let worst_pr = acc
        .input_power()
        .iter()
        .zip(&model.p_r)
        .map(|(a, b)| (a / b - 1.0).abs())
        .fold(0.0, f64::max);
    rep.below("quantizer input power recursion (relative)", worst_pr, 0.02);
    rep.below(
        "noise cross-correlation between antennas",
        q01.norm() / (q00 * q11).sqrt(),
        0.05,
    );
    rep.below("noise-input correlation", xq.norm() / (q00 * xx).sqrt(), 0.05);

    // M = 1 degenerates to the plain quantizer.
    let b1 = QuantizerBank::uniform(1, 0.8)?;
    let same = (0..1000).all(|_| {
        let x = [complex_gaussian(&mut rng, 1.0)];
        sd_quantize(&x, &b1, 1.1).map(|(y, _)| y).ok() == crate::quantization::quantize_one_bit(&x, &b1).ok()
    });
    rep.push(
        "single antenna equals plain one-bit",
        same as u8 as f64,
        "1",
        same,
    );
    Ok(())
}

fn spectrum_checks(rep: &mut ValidationReport, pert: Perturbation) -> Result<()> {
    let rule = GaussLegendre::new(200);
    let num = rule.integrate(0.0, 1.0, |t| t * t.asin());
    let den = rule.integrate(0.0, 1.0, |t| t * t);
    rep.near(
        "zeta fit at x = 1 vs quadrature",
        fit_zeta(1.0)?.zeta,
        num / den,
        1e-4,
    );

    let scn = Scenario::new(10, 50, 0.0, deg(40.0), 0.0)?;
    let geom = ArrayGeometry::new(100, 0.25)?;
    let zeta = default_zeta(&scn, &geom)?;
    let r_x = rx_covariance_analytic(&scn, &geom)?;
    let (d1, d2) = scn.sector();
    let quad = sector_power(&onebit_zeta_covariance(&r_x, zeta), &geom, d1, d2, SECTOR_NODES)?;
    let closed = pq_onebit_analytic(&scn, &geom, zeta)?;
    rep.below(
        "one-bit sector power closed form vs quadrature",
        (closed / quad - 1.0).abs(),
        0.005,
    );
    let model = sd_linear_model(&real_diag(&r_x))?;
    let quad = sector_power(&model.shaped_covariance(0.0), &geom, d1, d2, SECTOR_NODES)?;
    let closed = pq_sigmadelta_analytic(&model, &geom, d2);
    rep.below(
        "Sigma-Delta sector power closed form vs quadrature",
        (closed / quad - 1.0).abs(),
        0.005,
    );

    let mut scn = Scenario::new(10, 50, deg(30.0), deg(40.0), 0.0)?;
    scn.phi = crate::PhiSetting::Manual(scn.steering_phase(&geom)? + pert.phi_offset);
    let (d1, d2) = scn.sector();
    let grid: Vec<f64> = (0..=64).map(|i| d1 + (d2 - d1) * i as f64 / 64.0).collect();
    let (onebit, sd) = analytic_spectra(&scn, &geom, &grid)?;
    let margin = onebit
        .density
        .iter()
        .zip(&sd.density)
        .map(|(o, s)| s / o)
        .fold(0.0, f64::max);
    rep.below("in-sector Sigma-Delta noise below one-bit", margin, 1.0);
    Ok(())
}

fn receiver_checks(rep: &mut ValidationReport) -> Result<()> {
    let geom = ArrayGeometry::new(8, 0.25)?;
    let sym = Scenario::new(1, 1, 0.0, deg(50.0), 0.0)?;
    rep.near(
        "symmetric sector gives phi* = 0",
        phi_star(&sym, &geom)?,
        0.0,
        0.0,
    );
    let mut worst: f64 = 0.0;
    let mut rng = stream_rng(seed_for(5), 0);
    for _ in 0..50 {
        use rand::Rng;
        let spread = 5.0 + 75.0 * rng.random::<f64>();
        let t0 = (90.0 - spread / 2.0) * (2.0 * rng.random::<f64>() - 1.0);
        let d = 0.05 + 0.45 * rng.random::<f64>();
        let scn = Scenario::new(1, 1, deg(t0), deg(spread), 0.0)?;
        let g = ArrayGeometry::new(8, d)?;
        let best = phi_star(&scn, &g)?;
        let mut grid_best = (0.0, f64::INFINITY);
        for i in 0..720 {
            let p = -PI + 2.0 * PI * i as f64 / 720.0;
            let v = g_phi(&scn, &g, p)?;
            if v < grid_best.1 {
                grid_best = (p, v);
            }
        }
        // Refine the grid minimizer with golden-section search.
        let (mut a, mut b) = (grid_best.0 - 2.0 * PI / 720.0, grid_best.0 + 2.0 * PI / 720.0);
        let gr = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..80 {
            let c = b - gr * (b - a);
            let e = a + gr * (b - a);
            if g_phi(&scn, &g, c)? < g_phi(&scn, &g, e)? {
                b = e;
            } else {
                a = c;
            }
        }
        let diff = crate::receivers::wrap_phase(best - 0.5 * (a + b)).abs();
        worst = worst.max(diff);
    }
    rep.below("phi* matches refined grid search (rad)", worst, 1e-3);

    let scn = Scenario::new(4, 6, deg(30.0), deg(40.0), 0.0)?;
    let geom = ArrayGeometry::new(24, 0.25)?;
    let g = draw_channel(&scn, &geom, seed_for(6))?.channel;
    let w = combiner(ReceiverKind::Zf, &g)?;
    rep.below(
        "zero forcing W^H G = I",
        frobenius(&(w.adjoint() * &g - CMatrix::identity(4, 4))),
        1e-10,
    );

    // The closed form relies on large-array averaging, so it gets a wider array.
    let big = Scenario::new(10, 50, deg(30.0), deg(40.0), 0.0)?;
    let big_geom = ArrayGeometry::new(100, 0.25)?;
    let big_opts = SeOptions::new(100, seed_for(9));
    let sim = se_simulated(
        ReceiverKind::Mrc,
        &big,
        &big_geom,
        Architecture::SigmaDelta,
        &big_opts,
    )?;
    let closed = se_mrc_closed_form_averaged(&big, &big_geom, &big_opts)?;
    let opts = SeOptions::new(300, seed_for(7));
    rep.below(
        "MRC closed form vs simulation (relative)",
        (closed.sum / sim.sum - 1.0).abs(),
        0.05,
    );

    let inf = se_simulated(ReceiverKind::Zf, &scn, &geom, Architecture::Infinite, &opts)?;
    let sd = se_simulated(ReceiverKind::Zf, &scn, &geom, Architecture::SigmaDelta, &opts)?;
    let ob = se_simulated(ReceiverKind::Zf, &scn, &geom, Architecture::OneBit, &opts)?;
    let ordered = inf.sum >= sd.sum && sd.sum >= ob.sum;
    rep.push(
        "ZF ordering infinite >= Sigma-Delta >= one-bit",
        sd.sum / ob.sum,
        "ordered",
        ordered,
    );

    let again = se_simulated(ReceiverKind::Zf, &scn, &geom, Architecture::OneBit, &opts)?;
    rep.push(
        "identical seeds give identical results",
        again.sum,
        format!("{:.12e}", ob.sum),
        again == ob,
    );
    Ok(())
}

fn estimation_checks(rep: &mut ValidationReport) -> Result<()> {
    let mut scn = Scenario::new(3, 4, deg(30.0), deg(40.0), 0.0)?;
    scn.sigma_n2 = 0.0;
    let geom = ArrayGeometry::new(16, 0.25)?;
    let phi = dft_pilots(3, 3)?;
    let (real, block) = quantized_training(&scn, &geom, Architecture::Infinite, &phi, seed_for(8))?;
    let g_hat = ls_estimate(&block.y, &real.steering[0], &phi, scn.p0, 3)?;
    rep.below(
        "noiseless LS estimate is exact",
        frobenius(&(g_hat - &real.channel)) / frobenius(&real.channel),
        1e-10,
    );
    let mut scn = Scenario::new(10, 20, deg(30.0), deg(40.0), 0.0)?;
    scn.sigma_n2 = 1.0;
    let geom = ArrayGeometry::new(100, 0.25)?;
    let mse = |arch| {
        crate::experiments::channel_estimation_nmse(
            &scn,
            &geom,
            arch,
            100,
            seed_for(9),
            crate::DoaMode::PerTrial,
        )
        .map(|v| v.0)
    };
    let (sd, ob) = (mse(Architecture::SigmaDelta)?, mse(Architecture::OneBit)?);
    rep.below("Sigma-Delta LS error below one-bit", sd / ob, 1.0);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_suite_passes_and_canaries_fail() {
        let rep = validate_suite(Perturbation::default()).unwrap();
        assert!(rep.passed(), "{rep}");

        let rep = validate_suite(Perturbation {
            alpha_scale: 1.1,
            phi_offset: 0.0,
        })
        .unwrap();
        assert!(!rep.check("Sigma-Delta gains within 2% of one").unwrap().pass);

        let rep = validate_suite(Perturbation {
            alpha_scale: 1.0,
            phi_offset: PI,
        })
        .unwrap();
        assert!(
            !rep.check("in-sector Sigma-Delta noise below one-bit")
                .unwrap()
                .pass
        );
    }
}

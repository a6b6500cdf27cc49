//! Least-squares channel estimation from (quantized) orthogonal pilots.

use std::f64::consts::PI;

use rand::Rng;

use crate::array_model::{draw_channel, ArrayGeometry, ChannelRealization, Scenario};
use crate::linalg::column_space_projector;
use crate::quantization::alpha_gaussian;
use crate::receivers::Architecture;
use crate::rng::{complex_gaussian, derive_seed, purpose, stream_rng};
use crate::sigma_delta::{sd_linear_model, sd_quantize_into};
use crate::{CMatrix, Error, Result, C64};

/// One training block.
#[derive(Debug, Clone)]
pub struct PilotBlock {
    /// η×K pilot matrix with `Φ^H Φ = η I`.
    pub phi: CMatrix,
    pub eta: usize,
    /// M×η received (and possibly quantized) block.
    pub y: CMatrix,
}

/// `K` leading columns of the η-point DFT matrix.
pub fn dft_pilots(eta: usize, k: usize) -> Result<CMatrix> {
    if k == 0 {
        return Err(Error::invalid("K", "need at least one user"));
    }
    if eta < k {
        return Err(Error::invalid(
            "eta",
            format!("training length {eta} is shorter than the user count {k}"),
        ));
    }
    Ok(CMatrix::from_fn(eta, k, |t, c| {
        C64::from_polar(1.0, -2.0 * PI * ((t * c) % eta) as f64 / eta as f64)
    }))
}

/// `Ĝ = P_A Y Φ^* / (η sqrt(p0))` with `P_A` the projector onto span(A).
pub fn ls_estimate(y: &CMatrix, a: &CMatrix, phi: &CMatrix, p0: f64, eta: usize) -> Result<CMatrix> {
    let raw = despread(y, phi, p0, eta)?;
    if a.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch {
            context: "steering matrix rows",
            expected: y.nrows(),
            got: a.nrows(),
        });
    }
    Ok(column_space_projector(a) * raw)
}

/// Same as [`ls_estimate`] with a separate subspace per user.
pub fn ls_estimate_per_user(
    y: &CMatrix,
    steering: &[CMatrix],
    phi: &CMatrix,
    p0: f64,
    eta: usize,
) -> Result<CMatrix> {
    if steering.len() == 1 {
        return ls_estimate(y, &steering[0], phi, p0, eta);
    }
    let mut g = despread(y, phi, p0, eta)?;
    if steering.len() != g.ncols() {
        return Err(Error::DimensionMismatch {
            context: "per-user steering matrices",
            expected: g.ncols(),
            got: steering.len(),
        });
    }
    for (k, a) in steering.iter().enumerate() {
        let col = column_space_projector(a) * g.column(k);
        g.set_column(k, &col);
    }
    Ok(g)
}

fn despread(y: &CMatrix, phi: &CMatrix, p0: f64, eta: usize) -> Result<CMatrix> {
    if phi.nrows() != eta || y.ncols() != eta {
        return Err(Error::DimensionMismatch {
            context: "training length",
            expected: eta,
            got: if phi.nrows() != eta {
                phi.nrows()
            } else {
                y.ncols()
            },
        });
    }
    if !(p0 > 0.0) {
        return Err(Error::invalid("p0", "pilot power must be positive"));
    }
    let scale = C64::new(1.0 / (eta as f64 * p0.sqrt()), 0.0);
    Ok(y * phi.map(|z| z.conj()) * scale)
}

/// Per-antenna power of the unquantized training signal, `p0 Σ β_k + σ_n²`.
pub fn training_input_power(scn: &Scenario) -> f64 {
    scn.p0 * scn.beta.iter().sum::<f64>() + scn.sigma_n2
}

/// Draws a channel from `seed` and returns it with its training block.
///
/// The same seed yields the same channel and thermal noise for every
/// architecture, so estimates can be compared pairwise.
pub fn quantized_training(
    scn: &Scenario,
    geom: &ArrayGeometry,
    arch: Architecture,
    phi: &CMatrix,
    seed: u64,
) -> Result<(ChannelRealization, PilotBlock)> {
    let real = draw_channel(scn, geom, seed)?;
    let mut rng = stream_rng(derive_seed(seed, purpose::TRAINING), 0);
    let y = training_block(&real.channel, scn, geom, arch, phi, &mut rng)?;
    Ok((
        real,
        PilotBlock {
            phi: phi.clone(),
            eta: phi.nrows(),
            y,
        },
    ))
}

/// `Y = sqrt(p0) G Φ^T + N`, each column passed through the architecture.
pub fn training_block<R: Rng + ?Sized>(
    g: &CMatrix,
    scn: &Scenario,
    geom: &ArrayGeometry,
    arch: Architecture,
    phi: &CMatrix,
    rng: &mut R,
) -> Result<CMatrix> {
    let (m, k) = g.shape();
    if phi.ncols() != k {
        return Err(Error::DimensionMismatch {
            context: "pilot matrix columns",
            expected: k,
            got: phi.ncols(),
        });
    }
    let eta = phi.nrows();
    let mut y = g * phi.transpose() * C64::new(scn.p0.sqrt(), 0.0);
    for v in y.iter_mut() {
        *v += complex_gaussian(rng, scn.sigma_n2);
    }
    let p_x = vec![training_input_power(scn); m];
    match arch {
        Architecture::Infinite => {}
        Architecture::OneBit => {
            let bank = alpha_gaussian(&p_x)?;
            for t in 0..eta {
                for i in 0..m {
                    y[(i, t)] = bank.apply(i, y[(i, t)]);
                }
            }
        }
        Architecture::SigmaDelta => {
            let bank = sd_linear_model(&p_x)?.levels();
            let rot = C64::from_polar(1.0, -scn.steering_phase(geom)?);
            let (mut out, mut r) = (vec![C64::new(0.0, 0.0); m], vec![C64::new(0.0, 0.0); m]);
            for t in 0..eta {
                let col: Vec<C64> = y.column(t).iter().copied().collect();
                sd_quantize_into(&col, &bank, rot, &mut out, &mut r);
                for i in 0..m {
                    y[(i, t)] = out[i];
                }
            }
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frobenius;

    #[test]
    fn pilot_examples() {
        let p = dft_pilots(2, 2).unwrap();
        let want = [[1.0, 1.0], [1.0, -1.0]];
        for t in 0..2 {
            for c in 0..2 {
                assert!((p[(t, c)] - C64::new(want[t][c], 0.0)).norm() < 1e-15);
            }
        }
        let p = dft_pilots(16, 10).unwrap();
        let gram = p.adjoint() * &p;
        assert!(frobenius(&(gram - CMatrix::identity(10, 10) * C64::new(16.0, 0.0))) < 1e-12);
        assert!(p.iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
        assert!(dft_pilots(3, 4).is_err());
    }

    #[test]
    fn noiseless_estimate_is_exact() {
        let mut scn = Scenario::new(3, 4, 0.3, 0.6, 5.0).unwrap();
        scn.sigma_n2 = 0.0;
        let geom = ArrayGeometry::new(12, 0.25).unwrap();
        let phi = dft_pilots(3, 3).unwrap();
        let (real, block) = quantized_training(&scn, &geom, Architecture::Infinite, &phi, 4).unwrap();
        let g_hat = ls_estimate(&block.y, &real.steering[0], &phi, scn.p0, 3).unwrap();
        assert!(frobenius(&(g_hat - &real.channel)) < 1e-10 * frobenius(&real.channel));
    }

    #[test]
    fn estimate_lies_in_the_steering_subspace() {
        let scn = Scenario::new(2, 3, 0.0, 0.5, 0.0).unwrap();
        let geom = ArrayGeometry::new(10, 0.25).unwrap();
        let phi = dft_pilots(2, 2).unwrap();
        let (real, block) = quantized_training(&scn, &geom, Architecture::OneBit, &phi, 8).unwrap();
        let a = &real.steering[0];
        let g_hat = ls_estimate(&block.y, a, &phi, scn.p0, 2).unwrap();
        let p = column_space_projector(a);
        assert!(frobenius(&(&p * &g_hat - &g_hat)) < 1e-10);
        assert!(frobenius(&(&p * &p - &p)) < 1e-10);
    }

    #[test]
    fn quantized_outputs_and_pairing() {
        let scn = Scenario::new(2, 5, 0.2, 0.5, 0.0).unwrap();
        let geom = ArrayGeometry::new(8, 0.25).unwrap();
        let phi = dft_pilots(2, 2).unwrap();
        let (r1, b1) = quantized_training(&scn, &geom, Architecture::OneBit, &phi, 3).unwrap();
        let (r2, _) = quantized_training(&scn, &geom, Architecture::SigmaDelta, &phi, 3).unwrap();
        assert_eq!(r1.channel, r2.channel);
        let a = alpha_gaussian(&[training_input_power(&scn)]).unwrap().levels()[0];
        assert!(b1
            .y
            .iter()
            .all(|z| (z.re.abs() - a).abs() < 1e-12 && (z.im.abs() - a).abs() < 1e-12));
    }

    #[test]
    fn estimation_error_halves_when_training_doubles() {
        let scn = Scenario::new(2, 4, 0.0, 0.6, 0.0).unwrap();
        let geom = ArrayGeometry::new(16, 0.25).unwrap();
        let trials = 4000;
        let mse = |eta: usize| {
            let phi = dft_pilots(eta, 2).unwrap();
            let mut acc = 0.0;
            for t in 0..trials {
                let (real, block) =
                    quantized_training(&scn, &geom, Architecture::Infinite, &phi, t as u64).unwrap();
                let g_hat = ls_estimate(&block.y, &real.steering[0], &phi, scn.p0, eta).unwrap();
                acc += frobenius(&(g_hat - &real.channel)).powi(2);
            }
            acc / trials as f64
        };
        let (a, b) = (mse(2), mse(4));
        // E‖Ĝ − G‖² = σ² K L / (η p0).
        assert!((a / 4.0 - 1.0).abs() < 0.05, "{a}");
        assert!((a / b - 2.0).abs() < 0.1, "{a} / {b}");
    }
}

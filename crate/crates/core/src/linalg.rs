//! Small complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::DMatrix;

use crate::{CMatrix, CVector, Error, Result, C64};

/// Largest `|R_mn - conj(R_nm)|` relative to the largest entry magnitude.
pub fn hermitian_deviation(r: &CMatrix) -> f64 {
    let n = r.nrows();
    let scale = r
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..=i {
            worst = worst.max((r[(i, j)] - r[(j, i)].conj()).norm());
        }
    }
    worst / scale
}

pub fn ensure_square(r: &CMatrix, context: &'static str) -> Result<()> {
    if r.nrows() != r.ncols() {
        return Err(Error::DimensionMismatch {
            context,
            expected: r.nrows(),
            got: r.ncols(),
        });
    }
    Ok(())
}

pub fn ensure_hermitian(r: &CMatrix, tol: f64) -> Result<()> {
    ensure_square(r, "hermitian check")?;
    let dev = hermitian_deviation(r);
    if dev > tol {
        return Err(Error::NotHermitian(dev));
    }
    Ok(())
}

/// `v^H R v`, real part and imaginary residual.
pub fn quadratic_form(r: &CMatrix, v: &[C64]) -> (f64, f64) {
    let n = v.len();
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..n {
        let col = r.column(j);
        let mut s = C64::new(0.0, 0.0);
        for i in 0..n {
            s += v[i].conj() * col[i];
        }
        acc += s * v[j];
    }
    (acc.re, acc.im)
}

/// `A A^†`, the orthogonal projector onto the column space of `A`.
///
/// Singular values below `1e-10 · σ_max` are treated as zero.
pub fn column_space_projector(a: &CMatrix) -> CMatrix {
    let m = a.nrows();
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 1e-10 * smax)
        .map(|(i, _)| i)
        .collect();
    let mut basis = CMatrix::zeros(m, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        basis.set_column(c, &u.column(i));
    }
    &basis * basis.adjoint()
}

/// Ratio of the largest to smallest singular value (infinite when singular).
pub fn condition_number(a: &CMatrix) -> f64 {
    let s = a.clone().singular_values();
    let max = s.iter().cloned().fold(0.0, f64::max);
    let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse of a Hermitian positive-definite matrix by Cholesky.
pub fn hpd_inverse(a: &CMatrix) -> Option<CMatrix> {
    a.clone().cholesky().map(|c| c.inverse())
}

pub fn frobenius(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn real_diag(a: &CMatrix) -> Vec<f64> {
    (0..a.nrows()).map(|i| a[(i, i)].re).collect()
}

pub fn to_complex(a: &DMatrix<f64>) -> CMatrix {
    a.map(|x| C64::new(x, 0.0))
}

/// `D^{1/2} X D^{1/2}` for a diagonal `D` given by its entries.
pub fn scale_symmetric(x: &CMatrix, d: &[f64]) -> CMatrix {
    let s: Vec<f64> = d.iter().map(|v| v.sqrt()).collect();
    CMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * (s[i] * s[j]))
}

/// Adds `v v^H` into the lower triangle of `acc`.
pub fn accumulate_outer_lower(acc: &mut CMatrix, v: &[C64]) {
    let n = v.len();
    for j in 0..n {
        let cj = v[j].conj();
        for i in j..n {
            acc[(i, j)] += v[i] * cj;
        }
    }
}

/// Copies the conjugated lower triangle into the upper triangle.
pub fn mirror_lower(acc: &mut CMatrix) {
    let n = acc.nrows();
    for j in 0..n {
        for i in 0..j {
            acc[(i, j)] = acc[(j, i)].conj();
        }
        acc[(j, j)].im = 0.0;
    }
}

pub fn cvector(values: &[C64]) -> CVector {
    CVector::from_column_slice(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projector_is_idempotent_and_hermitian() {
        let a = CMatrix::from_fn(5, 2, |i, j| C64::new((i + j) as f64, (i * j) as f64 - 1.0));
        let p = column_space_projector(&a);
        assert!(frobenius(&(&p * &p - &p)) < 1e-10);
        assert!(hermitian_deviation(&p) < 1e-12);
        assert!(frobenius(&(&p * &a - &a)) < 1e-10);
    }

    #[test]
    fn projector_handles_rank_deficiency() {
        let col = CVector::from_fn(4, |i, _| C64::new(1.0, i as f64));
        let a = CMatrix::from_columns(&[col.clone(), col.clone() * C64::new(0.0, 2.0)]);
        let p = column_space_projector(&a);
        assert!((p.trace().re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn quadratic_form_matches_matrix_product() {
        let r = CMatrix::from_fn(3, 3, |i, j| C64::new((i * 3 + j) as f64, i as f64 - j as f64));
        let v = [C64::new(1.0, 2.0), C64::new(-0.5, 0.0), C64::new(0.0, 1.0)];
        let (re, im) = quadratic_form(&r, &v);
        let vv = cvector(&v);
        let direct = (vv.adjoint() * &r * &vv)[(0, 0)];
        assert!((re - direct.re).abs() < 1e-12 && (im - direct.im).abs() < 1e-12);
    }
}

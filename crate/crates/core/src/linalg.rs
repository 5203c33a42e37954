//! Dense complex helpers shared by the propagators and the oracle.

use faer::{c64, Mat, MatRef, Side};

use crate::{Error, Result};

/// `exp(-i tau H)` for a Hermitian `H`, through its eigendecomposition.
///
/// Only the lower triangle of `h` is read.
pub fn hermitian_exp(h: MatRef<'_, c64>, tau: f64) -> Result<Mat<c64>> {
    let n = h.nrows();
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let evd = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let vecs = evd.U();
    let vals = evd.S().column_vector();
    let mut scaled = vecs.to_owned();
    for k in 0..n {
        let phase = c64::cis(-tau * vals[k].re);
        for i in 0..n {
            scaled[(i, k)] *= phase;
        }
    }
    Ok(&scaled * vecs.adjoint())
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(h: MatRef<'_, c64>) -> Result<(Vec<f64>, Mat<c64>)> {
    let evd = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let vals = evd.S().column_vector().iter().map(|z| z.re).collect();
    Ok((vals, evd.U().to_owned()))
}

/// `max_ij |(A^dagger A - 1)_ij|`.
pub fn unitarity_defect(a: MatRef<'_, c64>) -> f64 {
    let gram = a.adjoint() * a;
    let mut worst = 0.0f64;
    for j in 0..gram.ncols() {
        for i in 0..gram.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - c64::new(target, 0.0)).norm());
        }
    }
    worst
}

/// `max_ij |(A - A^dagger)_ij|`.
pub fn hermiticity_defect(a: MatRef<'_, c64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..=j.min(a.nrows().saturating_sub(1)) {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `max_ij |A_ij - B_ij|`; panics on shape mismatch.
pub fn max_abs_diff(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            worst = worst.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    worst
}

pub fn identity(n: usize) -> Mat<c64> {
    Mat::from_fn(n, n, |i, j| {
        if i == j {
            c64::new(1.0, 0.0)
        } else {
            c64::new(0.0, 0.0)
        }
    })
}

/// Singular values of `a`, nonincreasing.
pub fn singular_values(a: MatRef<'_, c64>) -> Result<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Vec::new());
    }
    a.singular_values()
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))
}

/// Thin SVD `A = U diag(s) V^dagger`, singular values nonincreasing.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Mat<c64>,
    pub s: Vec<f64>,
    pub v: Mat<c64>,
}

pub fn thin_svd(a: MatRef<'_, c64>) -> Result<Svd> {
    let k = a.nrows().min(a.ncols());
    if k == 0 {
        return Ok(Svd {
            u: Mat::zeros(a.nrows(), 0),
            s: Vec::new(),
            v: Mat::zeros(a.ncols(), 0),
        });
    }
    let svd = a
        .thin_svd()
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let s: Vec<f64> = svd.S().column_vector().iter().map(|z| z.re).collect();
    let (u, v) = (svd.U(), svd.V());
    if s.windows(2).all(|w| w[0] >= w[1]) {
        return Ok(Svd {
            u: u.to_owned(),
            s,
            v: v.to_owned(),
        });
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    Ok(Svd {
        u: Mat::from_fn(a.nrows(), k, |i, j| u[(i, order[j])]),
        s: order.iter().map(|&i| s[i]).collect(),
        v: Mat::from_fn(a.ncols(), k, |i, j| v[(i, order[j])]),
    })
}

/// Inner product `<x|y>`.
pub fn inner(x: &[c64], y: &[c64]) -> c64 {
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm(x: &[c64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_of_diagonal_is_phases() {
        let h = Mat::from_fn(3, 3, |i, j| {
            if i == j {
                c64::new(i as f64 + 0.5, 0.0)
            } else {
                c64::new(0.0, 0.0)
            }
        });
        let u = hermitian_exp(h.as_ref(), 0.7).unwrap();
        for i in 0..3 {
            let expected = c64::cis(-0.7 * (i as f64 + 0.5));
            assert!((u[(i, i)] - expected).norm() < 1e-14);
        }
        assert!(unitarity_defect(u.as_ref()) < 1e-14);
    }

    #[test]
    fn exp_of_pauli_x() {
        // exp(-i t X) = cos t - i sin t X
        let h = Mat::from_fn(2, 2, |i, j| c64::new(if i != j { 1.0 } else { 0.0 }, 0.0));
        let t = 0.3;
        let u = hermitian_exp(h.as_ref(), t).unwrap();
        assert!((u[(0, 0)] - c64::new(t.cos(), 0.0)).norm() < 1e-14);
        assert!((u[(1, 0)] - c64::new(0.0, -t.sin())).norm() < 1e-14);
    }

    #[test]
    fn defect_of_scaled_identity() {
        let mut a = identity(2);
        a[(1, 1)] = c64::new(0.5, 0.0);
        assert!((unitarity_defect(a.as_ref()) - 0.75).abs() < 1e-15);
    }
}

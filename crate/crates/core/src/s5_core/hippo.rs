//! HiPPO-N state matrix and its complex eigendecomposition.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{CssmError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct HippoSpec {
    pub q: usize,
    /// `[Q x Q]`, row-major.
    pub a: Vec<f64>,
}

impl HippoSpec {
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.q, self.q, &self.a)
    }
}

/// The normal part of HiPPO-LegS: `A = A_LegS + p p^T` with
/// `A_LegS(n,k) = -sqrt(2n+1) sqrt(2k+1)` (n > k), `-(n+1)` (n = k), 0 (n < k)
/// and `p(n) = sqrt(n + 1/2)`, zero-indexed.
pub fn build_hippo_n(q: usize) -> Result<HippoSpec> {
    if q < 2 || q % 2 != 0 {
        return Err(CssmError::config(format!(
            "state dimension must be even and >= 2, got {q}"
        )));
    }
    let mut a = vec![0.0; q * q];
    for n in 0..q {
        for k in 0..q {
            let legs = if n > k {
                -((2 * n + 1) as f64).sqrt() * ((2 * k + 1) as f64).sqrt()
            } else if n == k {
                -((n + 1) as f64)
            } else {
                0.0
            };
            let low_rank = (n as f64 + 0.5).sqrt() * (k as f64 + 0.5).sqrt();
            a[n * q + k] = legs + low_rank;
        }
    }
    Ok(HippoSpec { q, a })
}

/// `||A A^T - A^T A||_F / ||A||_F`.
pub fn normality_residual(a: &DMatrix<f64>) -> f64 {
    let at = a.transpose();
    (a * &at - &at * a).norm() / a.norm()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalizedSSM {
    pub lambda: Vec<Complex64>,
    /// Eigenvectors as columns, `[Q x Q]`.
    pub eigen_basis: DMatrix<Complex64>,
    pub eigen_basis_inv: DMatrix<Complex64>,
}

impl DiagonalizedSSM {
    pub fn reconstruct(&self) -> DMatrix<Complex64> {
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.lambda.clone()));
        &self.eigen_basis * d * &self.eigen_basis_inv
    }

    /// `||V diag(L) V^-1 - A||_F / ||A||_F`.
    pub fn reconstruction_error(&self, a: &DMatrix<f64>) -> f64 {
        let r = self.reconstruct();
        let diff = r - a.map(|v| Complex64::new(v, 0.0));
        let num: f64 = diff.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        num / a.norm().max(f64::MIN_POSITIVE)
    }
}

/// Relative tolerance below which an imaginary part counts as zero.
const REAL_EIG_TOL: f64 = 1e-9;
const RECONSTRUCTION_TOL: f64 = 1e-8;

/// Complex eigendecomposition of a real normal matrix.
///
/// The symmetric and skew-symmetric parts of a normal matrix commute, so a
/// generic Hermitian combination of the two shares their eigenvectors. The
/// result lists real eigenvalues first, then conjugate pairs ordered by
/// increasing imaginary part with the `+` member first; each pair's second
/// eigenvector is the exact conjugate of the first.
pub fn diagonalize(spec: &HippoSpec) -> Result<DiagonalizedSSM> {
    diagonalize_normal(&spec.matrix())
}

pub fn diagonalize_normal(a: &DMatrix<f64>) -> Result<DiagonalizedSSM> {
    let q = a.nrows();
    if q == 0 || a.ncols() != q {
        return Err(CssmError::dim(
            "diagonalize needs a non-empty square matrix",
        ));
    }
    let scale = a.norm().max(f64::MIN_POSITIVE);
    let sym = (a + a.transpose()) * 0.5;
    let skew = (a - a.transpose()) * 0.5;
    // irrational mixing weight avoids accidental eigenvalue collisions
    let gamma = std::f64::consts::FRAC_1_SQRT_2;
    let herm = DMatrix::from_fn(q, q, |i, j| {
        Complex64::new(sym[(i, j)], 0.0) + Complex64::new(0.0, -gamma) * skew[(i, j)]
    });
    let eig = nalgebra::SymmetricEigen::new(herm);
    let v = eig.eigenvectors;
    let ac = a.map(|x| Complex64::new(x, 0.0));
    let projected = v.adjoint() * &ac * &v;
    let raw: Vec<Complex64> = (0..q).map(|i| projected[(i, i)]).collect();

    let mut real_idx: Vec<usize> = (0..q)
        .filter(|&i| raw[i].im.abs() <= REAL_EIG_TOL * scale)
        .collect();
    let mut pos_idx: Vec<usize> = (0..q)
        .filter(|&i| raw[i].im > REAL_EIG_TOL * scale)
        .collect();
    let neg_count = q - real_idx.len() - pos_idx.len();
    if neg_count != pos_idx.len() {
        return Err(CssmError::Numerical(format!(
            "eigenvalues of a real matrix must pair up: {} with Im > 0, {} with Im < 0",
            pos_idx.len(),
            neg_count
        )));
    }
    real_idx.sort_by(|&i, &j| raw[i].re.total_cmp(&raw[j].re));
    pos_idx.sort_by(|&i, &j| raw[i].im.total_cmp(&raw[j].im));

    let mut lambda = Vec::with_capacity(q);
    let mut cols: Vec<nalgebra::DVector<Complex64>> = Vec::with_capacity(q);
    for &i in &real_idx {
        lambda.push(Complex64::new(raw[i].re, 0.0));
        cols.push(v.column(i).into_owned());
    }
    for &i in &pos_idx {
        let col = v.column(i).into_owned();
        lambda.push(raw[i]);
        lambda.push(raw[i].conj());
        cols.push(col.clone());
        cols.push(col.map(|z| z.conj()));
    }
    let basis = DMatrix::from_columns(&cols);
    let inv = basis
        .clone()
        .try_inverse()
        .ok_or_else(|| CssmError::Numerical("eigenvector matrix is singular".to_string()))?;
    let out = DiagonalizedSSM {
        lambda,
        eigen_basis: basis,
        eigen_basis_inv: inv,
    };
    let err = out.reconstruction_error(a);
    if !(err <= RECONSTRUCTION_TOL) {
        let off: f64 = (0..q)
            .flat_map(|i| (0..q).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| projected[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        return Err(CssmError::Numerical(format!(
            "eigendecomposition failed: reconstruction error {err:.3e}, \
             off-diagonal residual {off:.3e}, normality residual {:.3e}",
            normality_residual(a)
        )));
    }
    Ok(out)
}

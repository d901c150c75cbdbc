//! Dense complex eigen-decomposition.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EigError {
    #[error("Schur iteration did not converge within {0} sweeps")]
    NoConvergence(usize),
    #[error("empty matrix")]
    Empty,
}

#[derive(Clone, Debug)]
pub struct EigenPair {
    pub value: Complex64,
    /// Unit 2-norm right eigenvector.
    pub vector: CVec,
}

const MAX_SWEEPS: usize = 10_000;

/// Full spectrum with right eigenvectors from a complex Schur form and triangular back-substitution.
pub fn eig_dense(m: &CMat) -> Result<Vec<EigenPair>, EigError> {
    let n = m.nrows();
    if n == 0 {
        return Err(EigError::Empty);
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), f64::EPSILON, MAX_SWEEPS).ok_or(EigError::NoConvergence(MAX_SWEEPS))?;
    let (q, t) = schur.unpack();
    let scale = t.iter().fold(0.0f64, |a, z| a.max(z.norm())).max(f64::MIN_POSITIVE);
    let smin = f64::EPSILON * scale;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lam = t[(i, i)];
        let mut y = CVec::zeros(n);
        y[i] = Complex64::new(1.0, 0.0);
        for j in (0..i).rev() {
            let mut acc = Complex64::new(0.0, 0.0);
            for l in j + 1..=i {
                acc += t[(j, l)] * y[l];
            }
            let mut den = t[(j, j)] - lam;
            if den.norm() < smin {
                den = Complex64::new(smin, 0.0);
            }
            y[j] = -acc / den;
            // Rescale to avoid overflow in strongly defective cases.
            let big = y.iter().fold(0.0f64, |m, z| m.max(z.norm()));
            if big > 1e150 {
                y /= Complex64::new(big, 0.0);
            }
        }
        let mut v = &q * y;
        let nv = v.norm();
        v /= Complex64::new(nv, 0.0);
        out.push(EigenPair { value: lam, vector: v });
    }
    Ok(out)
}

/// Eigenvalues only.
pub fn eigenvalues(m: &CMat) -> Result<Vec<Complex64>, EigError> {
    Ok(eig_dense(m)?.into_iter().map(|p| p.value).collect())
}

pub fn to_complex(m: &DMatrix<f64>) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

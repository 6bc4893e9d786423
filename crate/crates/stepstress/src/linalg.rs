//! Internal symmetric positive-definite solves with condition-number
//! guards. All information-matrix inversions in the crate go through these
//! so ill-conditioned systems are refused with a diagnostic instead of
//! silently amplifying noise.

use nalgebra::{DMatrix, Matrix3};

use crate::{Error, Result};

/// Condition numbers above this are refused.
pub(crate) const MAX_CONDITION: f64 = 1e12;

/// Inverts a symmetric positive-definite 3×3 matrix via its eigensystem.
/// Returns the inverse and the condition number (ratio of extreme
/// eigenvalues).
pub(crate) fn spd_inverse3(m: &Matrix3<f64>, what: &str) -> Result<(Matrix3<f64>, f64)> {
    let eigen = nalgebra::SymmetricEigen::new(*m);
    let min = eigen.eigenvalues.min();
    let max = eigen.eigenvalues.max();
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    if min <= 0.0 || cond > MAX_CONDITION {
        return Err(Error::Singular { what: what.to_string(), cond });
    }
    let mut inv_diag = Matrix3::zeros();
    for i in 0..3 {
        inv_diag[(i, i)] = 1.0 / eigen.eigenvalues[i];
    }
    let inv = eigen.eigenvectors * inv_diag * eigen.eigenvectors.transpose();
    // Symmetrize so downstream quadratic forms see an exactly symmetric matrix.
    Ok((0.5 * (inv + inv.transpose()), cond))
}

/// As [`spd_inverse3`] for a dynamically sized symmetric matrix (the r×r
/// systems arising from constraints, r ≤ 3).
pub(crate) fn spd_inverse_dyn(m: &DMatrix<f64>, what: &str) -> Result<(DMatrix<f64>, f64)> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Internal(format!("spd_inverse_dyn on a {}x{} matrix", n, m.ncols())));
    }
    let eigen = nalgebra::SymmetricEigen::new(m.clone());
    let min = eigen.eigenvalues.min();
    let max = eigen.eigenvalues.max();
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    if min <= 0.0 || cond > MAX_CONDITION {
        return Err(Error::Singular { what: what.to_string(), cond });
    }
    let mut inv = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let mut sum = 0.0;
            for i in 0..n {
                sum += eigen.eigenvectors[(a, i)] * eigen.eigenvectors[(b, i)]
                    / eigen.eigenvalues[i];
            }
            inv[(a, b)] = sum;
        }
    }
    Ok((inv, cond))
}

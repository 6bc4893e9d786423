//! Internal smooth optimizer: BFGS with backtracking line search, plus an
//! augmented-Lagrangian outer loop for equality constraints.
//!
//! The estimation module runs these in the reparameterized space
//! `z = (a0, a1, log eta)`, which is unconstrained, so no bound handling is
//! needed here.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub(crate) struct BfgsOptions {
    /// Gradient tolerance, scaled by `1 + |loss|`.
    pub grad_tol: f64,
    /// Step-size tolerance, scaled by `1 + |z|_inf`.
    pub step_tol: f64,
    pub max_iters: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { grad_tol: 1e-8, step_tol: 1e-10, max_iters: 500 }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct OptimOutcome {
    pub z: Vector3<f64>,
    pub value: f64,
    pub grad: Vector3<f64>,
    pub iterations: usize,
    pub converged: bool,
}

const ARMIJO_C1: f64 = 1e-4;
const BACKTRACK_SHRINK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 40;

/// Minimizes a smooth function given by value + gradient. The objective may
/// return an error (e.g. overflow far from the optimum); trial points that
/// error or produce non-finite values are treated as line-search rejections.
pub(crate) fn bfgs<F>(f: &mut F, z0: Vector3<f64>, opts: &BfgsOptions) -> Result<OptimOutcome>
where
    F: FnMut(&Vector3<f64>) -> Result<(f64, Vector3<f64>)>,
{
    let (mut value, mut grad) = f(&z0)?;
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("objective not finite at the starting point".into()));
    }
    let mut z = z0;
    let mut h = Matrix3::identity();

    for iter in 0..opts.max_iters {
        // Check first so a start that is already optimal returns itself
        // unchanged (idempotent refits).
        if grad.amax() <= opts.grad_tol * (1.0 + value.abs()) {
            return Ok(OptimOutcome { z, value, grad, iterations: iter, converged: true });
        }

        let mut dir = -(h * grad);
        if dir.dot(&grad) >= 0.0 {
            // Curvature information has gone bad; restart from steepest descent.
            h = Matrix3::identity();
            dir = -grad;
        }

        let mut accepted = None;
        let slope = grad.dot(&dir);
        let mut step = 1.0;
        for _ in 0..MAX_BACKTRACKS {
            let trial = z + step * dir;
            match f(&trial) {
                Ok((v, g))
                    if v.is_finite()
                        && g.iter().all(|x| x.is_finite())
                        && v <= value + ARMIJO_C1 * step * slope =>
                {
                    accepted = Some((trial, v, g));
                    break;
                }
                _ => step *= BACKTRACK_SHRINK,
            }
        }
        let Some((z_new, v_new, g_new)) = accepted else {
            // No acceptable step along this direction; if we were not
            // already on steepest descent, one more restart could help, but
            // in practice this happens only at machine-precision stalls.
            let converged = grad.amax() <= 1e3 * opts.grad_tol * (1.0 + value.abs());
            return Ok(OptimOutcome { z, value, grad, iterations: iter, converged });
        };

        let s = z_new - z;
        let y = g_new - grad;
        let sy = s.dot(&y);
        if sy > 1e-10 * s.norm() * y.norm() {
            // Standard BFGS update of the inverse Hessian.
            let rho = 1.0 / sy;
            let hy = h * y;
            let yhy = y.dot(&hy);
            h += (rho * rho * yhy + rho) * (s * s.transpose())
                - rho * (hy * s.transpose() + s * hy.transpose());
        }

        let stalled = s.amax() <= opts.step_tol * (1.0 + z.amax());
        z = z_new;
        value = v_new;
        grad = g_new;
        if stalled {
            let converged = grad.amax() <= 1e3 * opts.grad_tol * (1.0 + value.abs());
            return Ok(OptimOutcome { z, value, grad, iterations: iter + 1, converged });
        }
    }
    Ok(OptimOutcome { z, value, grad, iterations: opts.max_iters, converged: false })
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct AugLagOptions {
    pub feasibility_tol: f64,
    pub max_outer: usize,
    pub inner: BfgsOptions,
}

impl Default for AugLagOptions {
    fn default() -> Self {
        Self { feasibility_tol: 1e-9, max_outer: 25, inner: BfgsOptions::default() }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct AugLagOutcome {
    pub inner: OptimOutcome,
    /// Augmented-Lagrangian multiplier estimates at the solution.
    pub multipliers: DVector<f64>,
    /// `max |m(z)|` at the solution.
    pub feasibility: f64,
    /// Total inner iterations across outer rounds.
    pub total_iterations: usize,
}

/// Minimizes `f` subject to `m(z) = 0` by the classic augmented-Lagrangian
/// scheme: inner BFGS on `f + λᵀm + (μ/2)|m|²`, multiplier update
/// `λ ← λ + μ m`, penalty growth ×10 whenever feasibility fails to shrink
/// by 4x between rounds.
pub(crate) fn augmented_lagrangian<F, C>(
    f: &mut F,
    constraint: &mut C,
    z0: Vector3<f64>,
    opts: &AugLagOptions,
) -> Result<AugLagOutcome>
where
    F: FnMut(&Vector3<f64>) -> Result<(f64, Vector3<f64>)>,
    // Returns (m(z), M_z(z)) with M_z the 3×r Jacobian ∂mᵀ/∂z.
    C: FnMut(&Vector3<f64>) -> Result<(DVector<f64>, DMatrix<f64>)>,
{
    let (m0, _) = constraint(&z0)?;
    let r = m0.len();
    let mut lambda = DVector::zeros(r);
    let mut mu = 10.0;
    let mut z = z0;
    let mut prev_infeas = f64::INFINITY;
    let mut total_iterations = 0;
    let mut last: Option<(OptimOutcome, DVector<f64>)> = None;

    for _ in 0..opts.max_outer {
        let mut augmented = |zt: &Vector3<f64>| -> Result<(f64, Vector3<f64>)> {
            let (v, g) = f(zt)?;
            let (m, mz) = constraint(zt)?;
            let penalty_vec = &lambda + &m * mu;
            let value = v + lambda.dot(&m) + 0.5 * mu * m.norm_squared();
            let extra = &mz * &penalty_vec;
            Ok((value, g + Vector3::new(extra[0], extra[1], extra[2])))
        };
        let inner = bfgs(&mut augmented, z, &opts.inner)?;
        total_iterations += inner.iterations;
        z = inner.z;

        let (m, _) = constraint(&z)?;
        let infeas = m.amax();
        lambda += &m * mu;
        last = Some((inner, m));

        if infeas <= opts.feasibility_tol {
            break;
        }
        if infeas > 0.25 * prev_infeas {
            mu = (mu * 10.0).min(1e12);
        }
        prev_infeas = infeas;
    }

    let (inner, m) = last.expect("at least one outer round");
    Ok(AugLagOutcome {
        inner,
        multipliers: lambda,
        feasibility: m.amax(),
        total_iterations,
    })
}

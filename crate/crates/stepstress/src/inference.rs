//! Rao-type score tests built on the restricted estimator, chi-square
//! calibration, and influence functions.
//!
//! The test of `H0 : m(θ) = 0` evaluates the β-score at the restricted fit
//! θ̃ and forms `R_β = N U_βᵀ Q_β [Q_βᵀ K_β Q_β]^{-1} Q_βᵀ U_β`, which is
//! asymptotically chi-square with `r` degrees of freedom under the null. No
//! unrestricted estimate is needed; for a simple point null no estimation is
//! needed at all.
//!
//! Influence functions quantify first-order sensitivity of the estimators to
//! point contamination at a time `t0`; a bounded influence function across
//! `t0` is the hallmark of a robust choice of β.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::divergence::{self, FailureCounts, TuningParameter};
use crate::estimation::{asymptotic_covariance, fit_rmdpde, Constraint, FitOptions, FitResult};
use crate::model::{cell_probabilities, InspectionGrid, ModelParams, StressPlan};
use crate::{Error, Result};

pub use crate::special::{chi2_quantile, chi2_survival};

/// Outcome of a Rao-type test. The decision, the p-value and the chi-square
/// threshold are mutually consistent: `reject ⇔ p_value < alpha ⇔
/// statistic > χ²_{df, alpha}`.
#[derive(Debug, Clone)]
pub struct TestResult {
    pub statistic: f64,
    /// Degrees of freedom = number of scalar restrictions `r`.
    pub df: usize,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub beta: f64,
    /// The restricted fit the statistic was evaluated at.
    pub fit: FitResult,
}

/// A point-contamination location: all contaminating mass falls in the
/// observation cell containing the time `t0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationPoint {
    t0: f64,
    cell: usize,
    n_cells: usize,
}

impl PerturbationPoint {
    /// # Errors
    /// `t0` outside the observation window `[0, t_L]`.
    pub fn new(t0: f64, grid: &InspectionGrid) -> Result<Self> {
        let cell = grid.cell_of_time(t0)?;
        Ok(Self { t0, cell, n_cells: grid.num_intervals() + 1 })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// One-based index of the cell containing `t0`.
    pub fn cell(&self) -> usize {
        self.cell
    }

    /// The degenerate probability vector `δ_{t0}` with unit mass in the
    /// contaminated cell.
    pub fn delta(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_cells];
        d[self.cell - 1] = 1.0;
        d
    }
}

/// The Rao-type statistic at a restricted fit:
/// `R_β = N U_βᵀ Q_β [Q_βᵀ K_β Q_β]^{-1} Q_βᵀ U_β` with all quantities
/// evaluated at θ̃ and `Q_β = J^{-1} M [Mᵀ J^{-1} M]^{-1}`.
///
/// # Errors
/// The fit carries no constraint information, or one of the inner systems is
/// singular.
pub fn rao_statistic(
    counts: &FailureCounts,
    restricted_fit: &FitResult,
    plan: &StressPlan,
    grid: &InspectionGrid,
    beta: TuningParameter,
) -> Result<f64> {
    let m = restricted_fit.constraint_m.as_ref().ok_or_else(|| {
        Error::InvalidConstraint("the Rao statistic requires a restricted fit".into())
    })?;
    let (u, j, k) = divergence::score_and_information(
        &counts.frequencies(),
        &restricted_fit.theta_hat,
        plan,
        grid,
        beta.value(),
    )?;
    let (j_inv, _) = crate::linalg::spd_inverse3(&j, "J_beta")?;
    let j_inv_d = DMatrix::from_fn(3, 3, |a, b| j_inv[(a, b)]);

    let core = m.transpose() * &j_inv_d * m;
    let core = 0.5 * (&core + &core.transpose());
    let (core_inv, _) = crate::linalg::spd_inverse_dyn(&core, "M' J^-1 M")?;
    let q = &j_inv_d * m * core_inv;

    let u_d = DVector::from_column_slice(u.as_slice());
    let qku = {
        let k_d = DMatrix::from_fn(3, 3, |a, b| k[(a, b)]);
        let qkq = q.transpose() * &k_d * &q;
        let qkq = 0.5 * (&qkq + &qkq.transpose());
        let (qkq_inv, _) = crate::linalg::spd_inverse_dyn(&qkq, "Q' K Q")?;
        let v = q.transpose() * &u_d;
        (v.transpose() * qkq_inv * v)[(0, 0)]
    };
    Ok((counts.total() as f64 * qku).max(0.0))
}

/// The Rao statistic for nulls fixing a sub-vector of θ at given values.
///
/// For that constraint shape the general statistic collapses: with `B` the
/// rows of `J^{-1}` selected by `fixed_indices`, the normalizing factors
/// `[Mᵀ J^{-1} M]^{-1}` cancel and
/// `R_β = N (B U)ᵀ [B K Bᵀ]^{-1} (B U)` exactly. With all three components
/// fixed this is `N Uᵀ K^{-1} U`, computable without any estimation.
///
/// # Errors
/// Indices invalid, or the fit's constraint is not of the required
/// fixed-component form.
pub fn rao_statistic_partial(
    counts: &FailureCounts,
    restricted_fit: &FitResult,
    plan: &StressPlan,
    grid: &InspectionGrid,
    beta: TuningParameter,
    fixed_indices: &[usize],
) -> Result<f64> {
    let r = fixed_indices.len();
    if r == 0 || r > 3 || fixed_indices.iter().any(|&i| i > 2) {
        return Err(Error::InvalidConstraint(format!(
            "fixed_indices must name between one and three distinct components, got {fixed_indices:?}"
        )));
    }
    let mut seen = [false; 3];
    for &i in fixed_indices {
        if seen[i] {
            return Err(Error::InvalidConstraint(format!(
                "fixed_indices contains a duplicate: {fixed_indices:?}"
            )));
        }
        seen[i] = true;
    }
    let m = restricted_fit.constraint_m.as_ref().ok_or_else(|| {
        Error::InvalidConstraint("the Rao statistic requires a restricted fit".into())
    })?;
    // The shortcut is valid only when M really selects the named components.
    if m.ncols() != r {
        return Err(Error::InvalidConstraint(format!(
            "fit constrains {} components, fixed_indices names {r}",
            m.ncols()
        )));
    }
    for (col, &idx) in fixed_indices.iter().enumerate() {
        for row in 0..3 {
            let expected = if row == idx { 1.0 } else { 0.0 };
            if (m[(row, col)] - expected).abs() > 1e-9 {
                return Err(Error::InvalidConstraint(
                    "the fit's constraint is not a fixed-component selection matching fixed_indices"
                        .into(),
                ));
            }
        }
    }

    let (u, j, k) = divergence::score_and_information(
        &counts.frequencies(),
        &restricted_fit.theta_hat,
        plan,
        grid,
        beta.value(),
    )?;
    let (j_inv, _) = crate::linalg::spd_inverse3(&j, "J_beta")?;

    // B = selected rows of J^{-1}; y = B U; R = N yᵀ (B K Bᵀ)^{-1} y.
    let mut y = DVector::zeros(r);
    let mut bkb = DMatrix::zeros(r, r);
    for (a, &ia) in fixed_indices.iter().enumerate() {
        for c in 0..3 {
            y[a] += j_inv[(ia, c)] * u[c];
        }
        for (b, &ib) in fixed_indices.iter().enumerate() {
            let mut sum = 0.0;
            for c in 0..3 {
                for d in 0..3 {
                    sum += j_inv[(ia, c)] * k[(c, d)] * j_inv[(ib, d)];
                }
            }
            bkb[(a, b)] = sum;
        }
    }
    let bkb = 0.5 * (&bkb + &bkb.transpose());
    let (bkb_inv, _) = crate::linalg::spd_inverse_dyn(&bkb, "B K B'")?;
    let solved: DVector<f64> = &bkb_inv * &y;
    let quad = y.dot(&solved);
    Ok((counts.total() as f64 * quad).max(0.0))
}

/// Fits the restricted estimator under `H0 : m(θ) = 0` (skipping estimation
/// when the constraint pins θ to a single point), evaluates the Rao
/// statistic, and calibrates it against the chi-square law with `r` degrees
/// of freedom.
pub fn run_rao_test(
    counts: &FailureCounts,
    plan: &StressPlan,
    grid: &InspectionGrid,
    beta: TuningParameter,
    constraint: &Constraint,
    alpha: f64,
) -> Result<TestResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let fit = match constraint.feasible_point() {
        Some(theta0) if constraint.arity() == 3 => {
            point_null_fit(counts, plan, grid, beta, constraint, theta0)?
        }
        _ => fit_rmdpde(counts, plan, grid, beta, Some(constraint), &FitOptions::default())?,
    };
    let statistic = rao_statistic(counts, &fit, plan, grid, beta)?;
    let df = constraint.arity();
    let p_value = chi2_survival(statistic, df as u32)?;
    Ok(TestResult {
        statistic,
        df,
        p_value,
        alpha,
        reject: p_value < alpha,
        beta: beta.value(),
        fit,
    })
}

/// A point null fixes θ completely, so the "restricted fit" is just an
/// evaluation at the null point — no optimization runs.
fn point_null_fit(
    counts: &FailureCounts,
    plan: &StressPlan,
    grid: &InspectionGrid,
    beta: TuningParameter,
    constraint: &Constraint,
    theta0: &ModelParams,
) -> Result<FitResult> {
    let p_hat = counts.frequencies();
    let (loss, grad_theta) =
        divergence::objective_and_gradient(&p_hat, theta0, plan, grid, beta.value())?;
    let m = constraint.jacobian_at(theta0)?;
    // Stationarity U + M λ = 0 with M invertible (arity 3).
    let u = -grad_theta / (1.0 + beta.value());
    let u_d = DVector::from_column_slice(u.as_slice());
    let lagrange_multipliers = m
        .clone()
        .lu()
        .solve(&(-u_d))
        .ok_or_else(|| Error::Singular { what: "M at the point null".into(), cond: f64::INFINITY })?;
    let gradient_norm = {
        // Residual of the Lagrangian stationarity system the multipliers solve.
        let lambda_al = -(1.0 + beta.value()) * &lagrange_multipliers;
        let extra = &m * lambda_al;
        (grad_theta + Vector3::new(extra[0], extra[1], extra[2])).amax()
    };
    let (covariance, condition_j) =
        match asymptotic_covariance(theta0, plan, grid, beta, Some(constraint)) {
            Ok(cov) => (Some(cov.sigma), Some(cov.condition_j)),
            Err(e) => {
                log::warn!("asymptotic covariance unavailable at the point null: {e}");
                (None, None)
            }
        };
    let floored_cells = divergence::floored_cells(&cell_probabilities(theta0, plan, grid)?);
    Ok(FitResult {
        theta_hat: *theta0,
        beta: beta.value(),
        loss,
        converged: true,
        iterations: 0,
        gradient_norm,
        lagrange_multipliers,
        covariance,
        condition_j,
        constraint_violation: constraint.evaluate(theta0)?.amax(),
        n_units: counts.total(),
        floored_cells,
        constraint_m: Some(m),
    })
}

/// Influence function of the unrestricted estimator under point
/// contamination at `t0`: `IF = J_β^{-1} Wᵀ D_π^{β−1} (δ_{t0} − π)`.
/// Bounded in `t0` for β > 0; the β = 0 version inherits the unbounded
/// likelihood-score behaviour on vanishing cells.
pub fn influence_unrestricted(
    point: &PerturbationPoint,
    params: &ModelParams,
    plan: &StressPlan,
    grid: &InspectionGrid,
    beta: TuningParameter,
) -> Result<Vector3<f64>> {
    let delta = point.delta();
    if delta.len() != grid.num_intervals() + 1 {
        return Err(Error::MismatchedLengths {
            expected: grid.num_intervals() + 1,
            got: delta.len(),
        });
    }
    let u = divergence::beta_score(&delta, params, plan, grid, beta)?;
    let (j, _) = divergence::information_matrices(params, plan, grid, beta.value())?;
    let (j_inv, _) = crate::linalg::spd_inverse3(&j, "J_beta")?;
    Ok(j_inv * u)
}

/// Influence function of the restricted estimator. The restricted functional
/// cannot leave the feasible manifold, so the unrestricted influence is
/// projected through `P_β` onto directions compatible with the constraint:
/// `IF = P_β Wᵀ D_π^{β−1} (δ_{t0} − π)`, which satisfies `Mᵀ · IF = 0`.
///
/// Passing `None` for the constraint reduces to the unrestricted influence
/// (`P_β = J_β^{-1}` in that degenerate case).
pub fn influence_restricted(
    point: &PerturbationPoint,
    params: &ModelParams,
    plan: &StressPlan,
    grid: &InspectionGrid,
    beta: TuningParameter,
    constraint: Option<&Constraint>,
) -> Result<Vector3<f64>> {
    let Some(c) = constraint else {
        return influence_unrestricted(point, params, plan, grid, beta);
    };
    let delta = point.delta();
    if delta.len() != grid.num_intervals() + 1 {
        return Err(Error::MismatchedLengths {
            expected: grid.num_intervals() + 1,
            got: delta.len(),
        });
    }
    let u = divergence::beta_score(&delta, params, plan, grid, beta)?;
    let cov = asymptotic_covariance(params, plan, grid, beta, Some(c))?;
    Ok(cov.p * u)
}

//! Density power divergence machinery between the empirical cell
//! frequencies and the model cell probabilities.
//!
//! The density power divergence (DPD) with tuning parameter β > 0 compares
//! an empirical probability vector `p̂` with the model vector `π(θ)`; its
//! β → 0 limit is the Kullback–Leibler divergence, whose minimizer is the
//! maximum-likelihood estimator. Estimators and tests are driven by the
//! β-score `U_β(θ) = Wᵀ D_π^{β−1} (p̂ − π)` and by the information-style
//! matrices `J_β = Wᵀ D^{β−1} W` and `K_β = Wᵀ (D^{2β−1} − π^β π^{βᵀ}) W`,
//! where `W = ∂π/∂θ` and `D_π` is the diagonal matrix of cell probabilities.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::model::{cell_probabilities, jacobian_w, CellProbabilities, InspectionGrid, ModelParams, StressPlan};
use crate::{Error, Result};

/// Cells below this value are floored inside the diagonal powers `D^e` with
/// `e < 0`, which would otherwise amplify them without bound.
pub(crate) const CELL_FLOOR: f64 = 1e-12;

/// Observed failure counts per observation cell: `L` inspection intervals
/// followed by the right-censored cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FailureCounts {
    n: Vec<u64>,
    total: u64,
}

impl FailureCounts {
    /// Validates that at least one unit was observed.
    pub fn new(n: Vec<u64>) -> Result<Self> {
        let total: u64 = n.iter().sum();
        if total == 0 {
            return Err(Error::InvalidCounts("total count must be at least one".into()));
        }
        Ok(Self { n, total })
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.n
    }

    pub fn len(&self) -> usize {
        self.n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n.is_empty()
    }

    /// Total number of units `N`.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Empirical frequencies `p̂_j = n_j / N`.
    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.total as f64;
        self.n.iter().map(|&c| c as f64 / n).collect()
    }
}

/// The DPD tuning parameter β ≥ 0; β = 0 selects the Kullback–Leibler /
/// likelihood limit, larger values trade efficiency for robustness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningParameter {
    beta: f64,
}

impl TuningParameter {
    pub fn new(beta: f64) -> Result<Self> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::Domain(format!(
                "tuning parameter must be finite and nonnegative, got {beta}"
            )));
        }
        Ok(Self { beta })
    }

    pub fn value(&self) -> f64 {
        self.beta
    }

    /// Whether this is the KL/likelihood limit β = 0.
    pub fn is_zero(&self) -> bool {
        self.beta == 0.0
    }
}

/// Raises each cell to the power `e`, flooring cells at `CELL_FLOOR` first
/// when `e` is negative (with a warning naming the smallest offender).
fn d_power(pi: &[f64], e: f64) -> Vec<f64> {
    if e < 0.0 {
        if let Some(&worst) = pi.iter().filter(|&&p| p < CELL_FLOOR).reduce(|a, b| if a < b { a } else { b }) {
            log::warn!(
                "cell probability {worst:e} floored at {CELL_FLOOR:e} inside a negative diagonal power; \
                 the design is near-degenerate at these parameters"
            );
        }
        pi.iter().map(|&p| p.max(CELL_FLOOR).powf(e)).collect()
    } else {
        pi.iter().map(|&p| p.powf(e)).collect()
    }
}

/// DPD between an empirical vector and the model cell probabilities:
/// `Σ_j (π_j^{1+β} − (1 + 1/β) p̂_j π_j^β + (1/β) p̂_j^{1+β})`.
///
/// Nonnegative, and zero exactly when `p_hat` equals `pi`. At β = 1 this is
/// the squared Euclidean distance between the two vectors.
///
/// # Errors
/// β = 0 (use [`kl_loss`] instead) or mismatched lengths.
pub fn dpd_loss(p_hat: &[f64], pi: &CellProbabilities, beta: TuningParameter) -> Result<f64> {
    if beta.is_zero() {
        return Err(Error::Domain(
            "the DPD loss is undefined at beta = 0; use kl_loss for the KL limit".into(),
        ));
    }
    if p_hat.len() != pi.len() {
        return Err(Error::MismatchedLengths { expected: pi.len(), got: p_hat.len() });
    }
    let b = beta.value();
    let loss = p_hat
        .iter()
        .zip(pi.as_slice())
        .map(|(&ph, &p)| {
            p.powf(1.0 + b) - (1.0 + 1.0 / b) * ph * p.powf(b) + ph.powf(1.0 + b) / b
        })
        .sum();
    Ok(loss)
}

/// Kullback–Leibler divergence `Σ_j p̂_j log(p̂_j / π_j)`; cells with
/// `p̂_j = 0` contribute zero. Minimizing this over θ is maximum likelihood.
///
/// A cell with positive frequency but zero model probability makes the
/// divergence infinite; that sentinel is returned (with a warning) rather
/// than treated as an error so optimizers can step away from it.
pub fn kl_loss(p_hat: &[f64], pi: &CellProbabilities) -> Result<f64> {
    if p_hat.len() != pi.len() {
        return Err(Error::MismatchedLengths { expected: pi.len(), got: p_hat.len() });
    }
    let mut total = 0.0;
    for (j, (&ph, &p)) in p_hat.iter().zip(pi.as_slice()).enumerate() {
        if ph == 0.0 {
            continue;
        }
        if p <= 0.0 {
            log::warn!("cell {} has zero model probability but frequency {ph}", j + 1);
            return Ok(f64::INFINITY);
        }
        if p < crate::model::LOG_PROB_FLOOR {
            log::warn!("cell {} probability {p:e} clamped before logarithm", j + 1);
        }
        total += ph * (ph / p.max(crate::model::LOG_PROB_FLOOR)).ln();
    }
    Ok(total)
}

/// The β-score `U_β(θ) = Wᵀ D_π^{β−1} (p̂ − π)`.
///
/// At β = 0 this is the likelihood score divided by `N`. The sign convention
/// follows the estimating equations: the gradient of the DPD loss in θ is
/// `−(1+β) U_β`, and the gradient of the KL loss is `−U_0`.
pub fn beta_score(
    p_hat: &[f64],
    params: &ModelParams,
    plan: &StressPlan,
    grid: &InspectionGrid,
    beta: TuningParameter,
) -> Result<Vector3<f64>> {
    let pi = cell_probabilities(params, plan, grid)?;
    let w = jacobian_w(params, plan, grid)?;
    score_from_parts(p_hat, &pi, &w, beta.value())
}

fn score_from_parts(
    p_hat: &[f64],
    pi: &CellProbabilities,
    w: &DMatrix<f64>,
    beta: f64,
) -> Result<Vector3<f64>> {
    if p_hat.len() != pi.len() {
        return Err(Error::MismatchedLengths { expected: pi.len(), got: p_hat.len() });
    }
    let d = d_power(pi.as_slice(), beta - 1.0);
    let weighted: DVector<f64> = DVector::from_iterator(
        p_hat.len(),
        p_hat
            .iter()
            .zip(pi.as_slice())
            .zip(&d)
            .map(|((&ph, &p), &dj)| dj * (ph - p)),
    );
    let u = w.transpose() * weighted;
    Ok(Vector3::new(u[0], u[1], u[2]))
}

/// The matrix `J_β(θ) = Wᵀ D_π^{β−1} W`: symmetric, positive semidefinite,
/// and positive definite for identifiable designs.
pub fn j_matrix(
    params: &ModelParams,
    plan: &StressPlan,
    grid: &InspectionGrid,
    beta: TuningParameter,
) -> Result<Matrix3<f64>> {
    let pi = cell_probabilities(params, plan, grid)?;
    let w = jacobian_w(params, plan, grid)?;
    Ok(j_from_parts(&pi, &w, beta.value()))
}

fn j_from_parts(pi: &CellProbabilities, w: &DMatrix<f64>, beta: f64) -> Matrix3<f64> {
    let d = d_power(pi.as_slice(), beta - 1.0);
    let mut j = Matrix3::zeros();
    for (row, &dj) in d.iter().enumerate() {
        for a in 0..3 {
            for b in a..3 {
                j[(a, b)] += dj * w[(row, a)] * w[(row, b)];
            }
        }
    }
    // Fill the lower triangle so symmetry is exact, not merely numerical.
    for a in 0..3 {
        for b in 0..a {
            j[(a, b)] = j[(b, a)];
        }
    }
    j
}

/// The matrix `K_β(θ) = Wᵀ (D_π^{2β−1} − π^β π^{βᵀ}) W`: the asymptotic
/// variance core of the β-score. Because the columns of `W` sum to zero,
/// `K_0 = J_0` exactly.
pub fn k_matrix(
    params: &ModelParams,
    plan: &StressPlan,
    grid: &InspectionGrid,
    beta: TuningParameter,
) -> Result<Matrix3<f64>> {
    let pi = cell_probabilities(params, plan, grid)?;
    let w = jacobian_w(params, plan, grid)?;
    Ok(k_from_parts(&pi, &w, beta.value()))
}

fn k_from_parts(pi: &CellProbabilities, w: &DMatrix<f64>, beta: f64) -> Matrix3<f64> {
    let d = d_power(pi.as_slice(), 2.0 * beta - 1.0);
    let mut k = Matrix3::zeros();
    for (row, &dj) in d.iter().enumerate() {
        for a in 0..3 {
            for b in a..3 {
                k[(a, b)] += dj * w[(row, a)] * w[(row, b)];
            }
        }
    }
    // Rank-one correction: s = Wᵀ π^β (at β = 0 this is the zero column sum).
    let pb = d_power(pi.as_slice(), beta);
    let mut s = [0.0; 3];
    for (row, &pj) in pb.iter().enumerate() {
        for (a, sa) in s.iter_mut().enumerate() {
            *sa += pj * w[(row, a)];
        }
    }
    for a in 0..3 {
        for b in a..3 {
            k[(a, b)] -= s[a] * s[b];
        }
    }
    for a in 0..3 {
        for b in 0..a {
            k[(a, b)] = k[(b, a)];
        }
    }
    k
}

/// Loss value and its θ-gradient in one evaluation (π and W computed once),
/// dispatching β = 0 to the KL/likelihood path.
pub(crate) fn objective_and_gradient(
    p_hat: &[f64],
    params: &ModelParams,
    plan: &StressPlan,
    grid: &InspectionGrid,
    beta: f64,
) -> Result<(f64, Vector3<f64>)> {
    let pi = cell_probabilities(params, plan, grid)?;
    let w = jacobian_w(params, plan, grid)?;
    let u = score_from_parts(p_hat, &pi, &w, beta)?;
    if beta == 0.0 {
        let loss = kl_loss(p_hat, &pi)?;
        Ok((loss, -u))
    } else {
        let loss = dpd_loss(p_hat, &pi, TuningParameter { beta })?;
        Ok((loss, -(1.0 + beta) * u))
    }
}

/// β-score together with `J_β` and `K_β`, sharing a single (π, W)
/// evaluation; used by the test statistics so both code paths see literally
/// the same numbers.
pub(crate) fn score_and_information(
    p_hat: &[f64],
    params: &ModelParams,
    plan: &StressPlan,
    grid: &InspectionGrid,
    beta: f64,
) -> Result<(Vector3<f64>, Matrix3<f64>, Matrix3<f64>)> {
    let pi = cell_probabilities(params, plan, grid)?;
    let w = jacobian_w(params, plan, grid)?;
    let u = score_from_parts(p_hat, &pi, &w, beta)?;
    let j = j_from_parts(&pi, &w, beta);
    let k = k_from_parts(&pi, &w, beta);
    Ok((u, j, k))
}

/// `J_β` and `K_β` from one shared (π, W) evaluation.
pub(crate) fn information_matrices(
    params: &ModelParams,
    plan: &StressPlan,
    grid: &InspectionGrid,
    beta: f64,
) -> Result<(Matrix3<f64>, Matrix3<f64>)> {
    let pi = cell_probabilities(params, plan, grid)?;
    let w = jacobian_w(params, plan, grid)?;
    Ok((j_from_parts(&pi, &w, beta), k_from_parts(&pi, &w, beta)))
}

/// Number of cells that would be floored in negative diagonal powers at
/// these parameters; used by fit diagnostics.
pub(crate) fn floored_cells(pi: &CellProbabilities) -> usize {
    pi.as_slice().iter().filter(|&&p| p < CELL_FLOOR).count()
}

//! Cumulative-exposure step-stress lifetime model under Weibull distributions.
//!
//! Units on test see a piecewise-constant stress that is raised at fixed
//! change times. Under each stress level x the lifetime is Weibull with a
//! common shape `eta` and a scale tied to stress through the log-linear link
//! `lambda = exp(a0 + a1 * x)`. The cumulative-exposure rule splices the
//! per-level distributions into one lifetime distribution by shifting the
//! clock so the CDF stays continuous at every stress change.
//!
//! Failures are only observed as interval counts on an inspection grid, so
//! the statistical object of interest is the vector of multinomial cell
//! probabilities together with its Jacobian in the three model parameters.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Smallest probability allowed inside a logarithm; anything smaller is
/// clamped (with a warning) so log-likelihoods stay finite.
pub(crate) const LOG_PROB_FLOOR: f64 = 1e-300;

/// Model parameters `(a0, a1, eta)`: log-scale intercept, log-scale slope
/// (negative when higher stress shortens life), and Weibull shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub a0: f64,
    pub a1: f64,
    pub eta: f64,
}

impl ModelParams {
    /// Validates finiteness and `eta > 0`.
    pub fn new(a0: f64, a1: f64, eta: f64) -> Result<Self> {
        if !(a0.is_finite() && a1.is_finite() && eta.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "parameters must be finite, got ({a0}, {a1}, {eta})"
            )));
        }
        if eta <= 0.0 {
            return Err(Error::InvalidParams(format!("shape eta must be positive, got {eta}")));
        }
        Ok(Self { a0, a1, eta })
    }

    /// Parameters as an array in the canonical order `(a0, a1, eta)`.
    pub fn as_array(&self) -> [f64; 3] {
        [self.a0, self.a1, self.eta]
    }
}

/// A step-stress plan: strictly increasing stress levels `x_1 < … < x_k`,
/// the times at which stress is raised, and the termination time.
#[derive(Debug, Clone, PartialEq)]
pub struct StressPlan {
    levels: Vec<f64>,
    change_times: Vec<f64>,
    termination: f64,
}

impl StressPlan {
    /// Validates ordering: levels strictly increasing, change times strictly
    /// increasing and positive, and the last change strictly before
    /// termination. A single-level plan has no change times.
    pub fn new(levels: Vec<f64>, change_times: Vec<f64>, termination: f64) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidPlan("at least one stress level is required".into()));
        }
        if change_times.len() + 1 != levels.len() {
            return Err(Error::InvalidPlan(format!(
                "{} stress levels require {} change times, got {}",
                levels.len(),
                levels.len() - 1,
                change_times.len()
            )));
        }
        if levels.iter().any(|x| !x.is_finite()) || !termination.is_finite() {
            return Err(Error::InvalidPlan("stress levels and times must be finite".into()));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidPlan("stress levels must be strictly increasing".into()));
        }
        if change_times.first().is_some_and(|&t| t <= 0.0)
            || change_times.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidPlan(
                "change times must be positive and strictly increasing".into(),
            ));
        }
        if change_times.last().is_some_and(|&t| t >= termination) || termination <= 0.0 {
            return Err(Error::InvalidPlan(
                "termination must be positive and after the last stress change".into(),
            ));
        }
        Ok(Self { levels, change_times, termination })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn change_times(&self) -> &[f64] {
        &self.change_times
    }

    pub fn termination(&self) -> f64 {
        self.termination
    }

    /// Number of stress levels `k`.
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Zero-based index of the stress level active at time `t`, using the
    /// left-continuous convention: a change time itself still belongs to the
    /// piece it terminates.
    pub fn level_index_at(&self, t: f64) -> usize {
        self.change_times.iter().take_while(|&&tau| tau < t).count()
    }
}

/// Inspection times `0 < t_1 < … < t_L` with `t_L` equal to the plan's
/// termination; every stress-change time must be an inspection time so each
/// observation interval sits inside a single stress piece.
#[derive(Debug, Clone, PartialEq)]
pub struct InspectionGrid {
    times: Vec<f64>,
    /// Stress level (zero-based) active on each interval `(t_{j-1}, t_j]`.
    stress_index: Vec<usize>,
}

impl InspectionGrid {
    pub fn new(times: Vec<f64>, plan: &StressPlan) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidGrid("at least one inspection time is required".into()));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidGrid("inspection times must be finite".into()));
        }
        if times[0] <= 0.0 || times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGrid(
                "inspection times must be positive and strictly increasing".into(),
            ));
        }
        let last = *times.last().expect("nonempty");
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
        if !close(last, plan.termination()) {
            return Err(Error::InvalidGrid(format!(
                "last inspection time {last} must equal the termination time {}",
                plan.termination()
            )));
        }
        for &tau in plan.change_times() {
            if !times.iter().any(|&t| close(t, tau)) {
                return Err(Error::InvalidGrid(format!(
                    "stress change time {tau} must be an inspection time"
                )));
            }
        }
        let mut stress_index = Vec::with_capacity(times.len());
        let mut prev = 0.0;
        for &t in &times {
            stress_index.push(plan.level_index_at(0.5 * (prev + t)));
            prev = t;
        }
        Ok(Self { times, stress_index })
    }

    /// Inspection times `t_1 … t_L` (the implicit `t_0 = 0` is not stored).
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of finite inspection intervals `L`; counts vectors have
    /// `L + 1` entries including the right-censored cell.
    pub fn num_intervals(&self) -> usize {
        self.times.len()
    }

    /// Zero-based stress level active on interval `j` (zero-based,
    /// `0..num_intervals()`).
    pub fn stress_index(&self, interval: usize) -> usize {
        self.stress_index[interval]
    }

    /// One-based index of the observation cell containing time `t0`
    /// (`t0 = 0` belongs to the first cell).
    ///
    /// # Errors
    /// `t0` outside `[0, t_L]`.
    pub fn cell_of_time(&self, t0: f64) -> Result<usize> {
        if !t0.is_finite() || t0 < 0.0 || t0 > *self.times.last().expect("nonempty") {
            return Err(Error::Domain(format!(
                "perturbation time {t0} lies outside the observation window"
            )));
        }
        Ok(self.times.iter().position(|&t| t0 <= t).expect("t0 <= t_L") + 1)
    }
}

/// Multinomial cell probabilities over the `L` inspection intervals plus the
/// right-censored cell; entries are nonnegative and sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct CellProbabilities {
    probs: Vec<f64>,
}

impl CellProbabilities {
    /// Wraps a vector that is already a probability simplex; callers inside
    /// the crate are responsible for preserving the sum-to-one invariant.
    pub(crate) fn from_raw(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

impl std::ops::Index<usize> for CellProbabilities {
    type Output = f64;
    fn index(&self, j: usize) -> &f64 {
        &self.probs[j]
    }
}

/// Clock shifts `h_0 = 0, h_1, …, h_{k-1}` that keep the spliced CDF
/// continuous at each stress change.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftingTimes {
    h: Vec<f64>,
}

impl ShiftingTimes {
    pub fn as_slice(&self) -> &[f64] {
        &self.h
    }
}

/// Weibull scale at stress `x`: `exp(a0 + a1 * x)`.
///
/// # Errors
/// Overflow to a non-finite value.
pub fn scale_parameter(params: &ModelParams, x: f64) -> Result<f64> {
    let lambda = (params.a0 + params.a1 * x).exp();
    if !lambda.is_finite() {
        return Err(Error::Overflow(format!(
            "scale exp({} + {} * {x}) overflows",
            params.a0, params.a1
        )));
    }
    Ok(lambda)
}

/// Shifting times for the cumulative-exposure splice: `h_0 = 0` and
/// `h_i = (lambda_{i+1}/lambda_i) * (tau_i + h_{i-1}) - tau_i`, the unique
/// choice making the CDF continuous at each change time when all levels
/// share the Weibull shape.
pub fn shifting_times(params: &ModelParams, plan: &StressPlan) -> Result<ShiftingTimes> {
    let levels = plan.levels();
    let mut h = vec![0.0; levels.len()];
    for i in 1..levels.len() {
        let tau = plan.change_times()[i - 1];
        // Scale ratio in log space: exp(a1 * (x_{i+1} - x_i)).
        let rho = (params.a1 * (levels[i] - levels[i - 1])).exp();
        h[i] = rho * (tau + h[i - 1]) - tau;
        if !h[i].is_finite() {
            return Err(Error::Overflow(format!("shifting time h_{i} overflows")));
        }
    }
    Ok(ShiftingTimes { h })
}

/// Derivatives of the shifting times with respect to the slope `a1`:
/// differentiating the recursion gives
/// `h*_i = rho_i * ((x_{i+1} - x_i) * (tau_i + h_{i-1}) + h*_{i-1})`.
fn shifting_time_slopes(params: &ModelParams, plan: &StressPlan, shifts: &ShiftingTimes) -> Vec<f64> {
    let levels = plan.levels();
    let h = shifts.as_slice();
    let mut hs = vec![0.0; levels.len()];
    for i in 1..levels.len() {
        let tau = plan.change_times()[i - 1];
        let dx = levels[i] - levels[i - 1];
        let rho = (params.a1 * dx).exp();
        hs[i] = rho * (dx * (tau + h[i - 1]) + hs[i - 1]);
    }
    hs
}

/// Lifetime CDF of the spliced model: on stress piece `i`,
/// `F_T(t) = 1 - exp(-((t + h_{i-1}) / lambda_i)^eta)`.
///
/// # Errors
/// Negative shifted time (cannot occur for shifts satisfying their
/// continuity invariant; kept as a defensive check).
pub fn cdf_t(t: f64, params: &ModelParams, plan: &StressPlan, shifts: &ShiftingTimes) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::Domain(format!("lifetime CDF evaluated at negative time {t}")));
    }
    let i = plan.level_index_at(t);
    let shifted = t + shifts.as_slice()[i];
    if shifted < 0.0 {
        return Err(Error::Domain(format!(
            "shifted time {shifted} is negative at t = {t} on stress piece {i}"
        )));
    }
    let lambda = scale_parameter(params, plan.levels()[i])?;
    let u = shifted / lambda;
    Ok(-(-u.powf(params.eta)).exp_m1())
}

/// Lifetime density of the spliced model (left-continuous at change times):
/// `(eta/lambda_i) * u^(eta-1) * exp(-u^eta)` with `u = (t + h_{i-1})/lambda_i`.
///
/// # Errors
/// `t = 0` with `eta < 1` (the density diverges there) and overflow.
pub fn pdf_t(t: f64, params: &ModelParams, plan: &StressPlan, shifts: &ShiftingTimes) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::Domain(format!("lifetime density evaluated at negative time {t}")));
    }
    let i = plan.level_index_at(t);
    let shifted = t + shifts.as_slice()[i];
    if shifted < 0.0 {
        return Err(Error::Domain(format!(
            "shifted time {shifted} is negative at t = {t} on stress piece {i}"
        )));
    }
    if shifted == 0.0 && params.eta < 1.0 {
        return Err(Error::Domain(
            "density is unbounded at time zero for shape below one".into(),
        ));
    }
    let lambda = scale_parameter(params, plan.levels()[i])?;
    let u = shifted / lambda;
    let density = if u == 0.0 {
        // eta > 1 here (eta == 1 gives u^0 = 1); the power vanishes.
        if params.eta == 1.0 {
            1.0 / lambda
        } else {
            0.0
        }
    } else {
        (params.eta / lambda) * u.powf(params.eta - 1.0) * (-u.powf(params.eta)).exp()
    };
    if !density.is_finite() {
        return Err(Error::Overflow(format!("density overflows at t = {t}")));
    }
    Ok(density)
}

/// Hazard rate of the spliced model, `pdf / (1 - cdf)`; increasing on each
/// piece when `eta > 1` and decreasing when `eta < 1`.
///
/// # Errors
/// Survival numerically zero at `t`.
pub fn hazard_t(t: f64, params: &ModelParams, plan: &StressPlan, shifts: &ShiftingTimes) -> Result<f64> {
    let survival = 1.0 - cdf_t(t, params, plan, shifts)?;
    if survival <= 0.0 {
        return Err(Error::Domain(format!(
            "hazard undefined: survival is numerically zero at t = {t}"
        )));
    }
    Ok(pdf_t(t, params, plan, shifts)? / survival)
}

/// Mean time to failure at stress `x`: `exp(a0 + a1 x) * Gamma(1 + 1/eta)`.
pub fn mttf(params: &ModelParams, x: f64) -> f64 {
    (params.a0 + params.a1 * x).exp() * crate::special::gamma(1.0 + 1.0 / params.eta)
}

/// Cell probabilities on the inspection grid: interval `j` gets
/// `F_T(t_j) - F_T(t_{j-1})` and the final cell carries the censored mass
/// `1 - F_T(t_L)`. The entries telescope, so they sum to one exactly.
///
/// # Errors
/// Internal-consistency failure (an interval probability below `-1e-12`,
/// which would indicate a non-monotone CDF) or propagated domain errors.
pub fn cell_probabilities(
    params: &ModelParams,
    plan: &StressPlan,
    grid: &InspectionGrid,
) -> Result<CellProbabilities> {
    let shifts = shifting_times(params, plan)?;
    let mut probs = Vec::with_capacity(grid.num_intervals() + 1);
    let mut prev = 0.0;
    for &t in grid.times() {
        let f = cdf_t(t, params, plan, &shifts)?;
        let p = f - prev;
        if p < -1e-12 {
            return Err(Error::Internal(format!(
                "negative cell probability {p} at inspection time {t}"
            )));
        }
        probs.push(p.max(0.0));
        prev = f;
    }
    probs.push((1.0 - prev).max(0.0));
    Ok(CellProbabilities { probs })
}

/// Jacobian of the cell probabilities in `(a0, a1, eta)`: an `(L+1) x 3`
/// matrix whose row `j` is the gradient of cell `j`'s probability. Rows are
/// differences `z_j - z_{j-1}` of per-node terms, with `z` at time zero and
/// at the censoring boundary both zero, so the columns sum to zero exactly.
///
/// The per-node terms are evaluated in the scaled form
/// `eta * s * exp(-s)` with `s = u^eta`, which stays bounded even when the
/// density factor alone would overflow for small shapes.
pub fn jacobian_w(params: &ModelParams, plan: &StressPlan, grid: &InspectionGrid) -> Result<DMatrix<f64>> {
    let shifts = shifting_times(params, plan)?;
    let slopes = shifting_time_slopes(params, plan, &shifts);
    let h = shifts.as_slice();
    let l = grid.num_intervals();
    let eta = params.eta;

    // z-node values for t_1 … t_L; the node at t_0 = 0 and the censoring
    // boundary contribute zero rows.
    let mut z = vec![[0.0_f64; 3]; l];
    for (j, &t) in grid.times().iter().enumerate() {
        let piece = grid.stress_index(j);
        let shifted = t + h[piece];
        if shifted < 0.0 {
            return Err(Error::Domain(format!(
                "shifted time {shifted} is negative at inspection time {t}"
            )));
        }
        if shifted == 0.0 {
            continue; // analytic limit: the whole node term vanishes
        }
        let x = plan.levels()[piece];
        let lambda = scale_parameter(params, x)?;
        let u = shifted / lambda;
        let s = u.powf(eta);
        let core = s * (-s).exp(); // bounded by exp(-1)
        z[j] = [
            -eta * core,
            eta * core * (slopes[piece] / shifted - x),
            core * u.ln(),
        ];
        if z[j].iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "Jacobian node term is not finite at inspection time {t}"
            )));
        }
    }

    let mut w = DMatrix::zeros(l + 1, 3);
    for j in 0..=l {
        let hi = if j < l { z[j] } else { [0.0; 3] };
        let lo = if j > 0 { z[j - 1] } else { [0.0; 3] };
        for c in 0..3 {
            w[(j, c)] = hi[c] - lo[c];
        }
    }
    Ok(w)
}

/// Multinomial log-likelihood `sum_j n_j log pi_j(theta)` up to the additive
/// multinomial coefficient, which is constant in `theta` and omitted.
///
/// Cells with zero probability but positive count yield negative infinity
/// (flagged via a warning); probabilities below `1e-300` are clamped before
/// the logarithm, also with a warning.
pub fn log_likelihood(
    counts: &crate::divergence::FailureCounts,
    params: &ModelParams,
    plan: &StressPlan,
    grid: &InspectionGrid,
) -> Result<f64> {
    let pi = cell_probabilities(params, plan, grid)?;
    if counts.len() != pi.len() {
        return Err(Error::MismatchedLengths {
            expected: pi.len(),
            got: counts.len(),
        });
    }
    let mut total = 0.0;
    for (j, &n) in counts.as_slice().iter().enumerate() {
        if n == 0 {
            continue;
        }
        let p = pi[j];
        if p <= 0.0 {
            log::warn!("cell {} has zero probability but {} observed failures", j + 1, n);
            return Ok(f64::NEG_INFINITY);
        }
        if p < LOG_PROB_FLOOR {
            log::warn!("cell {} probability {p:e} clamped before logarithm", j + 1);
        }
        total += n as f64 * p.max(LOG_PROB_FLOOR).ln();
    }
    Ok(total)
}

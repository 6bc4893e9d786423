//! Result rendering: human tables with 6 significant digits, JSON reports
//! at full precision.

use serde::Serialize;
use stepstress::estimation::{FitResult, WaldIntervals};
use stepstress::inference::TestResult;
use stepstress::montecarlo::StudyTable;

/// Formats `x` with 6 significant digits, switching to scientific notation
/// outside a comfortable table range.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0.00000".to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&exp) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

const PARAM_NAMES: [&str; 3] = ["a0", "a1", "eta"];

#[derive(Serialize)]
pub struct ThetaReport {
    pub a0: f64,
    pub a1: f64,
    pub eta: f64,
}

impl ThetaReport {
    fn new(theta: [f64; 3]) -> Self {
        Self { a0: theta[0], a1: theta[1], eta: theta[2] }
    }
}

/// Machine-readable fit output (full floating-point precision).
#[derive(Serialize)]
pub struct FitReport {
    pub theta_hat: ThetaReport,
    pub beta: f64,
    pub loss: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub constraint_violation: f64,
    pub lagrange_multipliers: Vec<f64>,
    pub n_units: u64,
    pub floored_cells: usize,
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub standard_errors: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wald_lower: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wald_upper: Option<[f64; 3]>,
}

impl FitReport {
    pub fn new(fit: &FitResult, wald: Option<&WaldIntervals>, alpha: f64) -> Self {
        Self {
            theta_hat: ThetaReport::new(fit.theta_hat.as_array()),
            beta: fit.beta,
            loss: fit.loss,
            converged: fit.converged,
            iterations: fit.iterations,
            gradient_norm: fit.gradient_norm,
            constraint_violation: fit.constraint_violation,
            lagrange_multipliers: fit.lagrange_multipliers.iter().copied().collect(),
            n_units: fit.n_units,
            floored_cells: fit.floored_cells,
            alpha,
            standard_errors: wald.map(|w| w.standard_error),
            wald_lower: wald.map(|w| w.lower),
            wald_upper: wald.map(|w| w.upper),
        }
    }
}

pub fn print_fit_table(fit: &FitResult, wald: Option<&WaldIntervals>, alpha: f64) {
    let kind = if fit.lagrange_multipliers.is_empty() { "unrestricted" } else { "restricted" };
    println!("{kind} minimum DPD fit, beta = {}", sig6(fit.beta));
    println!(
        "  converged: {} after {} iterations (gradient norm {})",
        if fit.converged { "yes" } else { "NO" },
        fit.iterations,
        sig6(fit.gradient_norm)
    );
    println!("  loss: {}   units: {}", sig6(fit.loss), fit.n_units);
    let level = 100.0 * (1.0 - alpha);
    println!(
        "  {:<10}{:>14}{:>14}{:>14}{:>14}",
        "parameter",
        "estimate",
        "std. error",
        format!("{level}% lower"),
        format!("{level}% upper")
    );
    let estimate = fit.theta_hat.as_array();
    for i in 0..3 {
        let (se, lo, hi) = match wald {
            Some(w) => (sig6(w.standard_error[i]), sig6(w.lower[i]), sig6(w.upper[i])),
            None => ("--".to_string(), "--".to_string(), "--".to_string()),
        };
        println!("  {:<10}{:>14}{:>14}{:>14}{:>14}", PARAM_NAMES[i], sig6(estimate[i]), se, lo, hi);
    }
    if !fit.lagrange_multipliers.is_empty() {
        let lambda: Vec<String> = fit.lagrange_multipliers.iter().map(|&l| sig6(l)).collect();
        println!("  multipliers: [{}]   |m(theta)|: {}", lambda.join(", "), sig6(fit.constraint_violation));
    }
    if fit.floored_cells > 0 {
        println!("  warning: {} model cells were floored; treat the fit with caution", fit.floored_cells);
    }
}

/// Machine-readable test output.
#[derive(Serialize)]
pub struct TestReport {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub beta: f64,
    pub restricted_estimate: ThetaReport,
}

impl TestReport {
    pub fn new(result: &TestResult) -> Self {
        Self {
            statistic: result.statistic,
            df: result.df,
            p_value: result.p_value,
            alpha: result.alpha,
            reject: result.reject,
            beta: result.beta,
            restricted_estimate: ThetaReport::new(result.fit.theta_hat.as_array()),
        }
    }
}

pub fn print_test_table(result: &TestResult) {
    println!("Rao-type test, beta = {}", sig6(result.beta));
    println!(
        "  statistic: {}   df: {}   p-value: {}",
        sig6(result.statistic),
        result.df,
        sig6(result.p_value)
    );
    println!(
        "  decision at alpha = {}: {}",
        sig6(result.alpha),
        if result.reject { "REJECT the null" } else { "fail to reject the null" }
    );
    let theta = result.fit.theta_hat.as_array();
    println!(
        "  restricted estimate: a0 = {}, a1 = {}, eta = {}",
        sig6(theta[0]),
        sig6(theta[1]),
        sig6(theta[2])
    );
}

pub fn print_study_table(table: &StudyTable) {
    println!(
        "{:>8}{:>10}{:>14}{:>14}{:>14}{:>8}{:>10}",
        "beta", "epsilon", "metric", "value", "mc_se", "reps", "failures"
    );
    for row in &table.rows {
        println!(
            "{:>8}{:>10}{:>14}{:>14}{:>14}{:>8}{:>10}",
            sig6(row.beta),
            sig6(row.epsilon),
            row.metric,
            sig6(row.value),
            sig6(row.mc_se),
            row.reps,
            row.failures
        );
    }
}

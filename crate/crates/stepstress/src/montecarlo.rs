//! Reproducible Monte Carlo studies: estimation error, test level, test
//! power, and interval coverage under cell contamination.
//!
//! Data are multinomial draws from the model cell probabilities, optionally
//! contaminated by moving a fraction ε of the mass into one cell:
//! `π̃ = (1 − ε) π + ε e_c`. Every replication draws from its own
//! counter-based RNG stream keyed by (contamination index, replication
//! index), so results are bit-identical regardless of how replications are
//! scheduled across worker threads.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::{FailureCounts, TuningParameter};
use crate::estimation::{
    confidence_region_test, default_starts, fit_rmdpde, wald_intervals, Constraint, FitOptions,
    FitResult,
};
use crate::inference::rao_statistic;
use crate::model::{
    cell_probabilities, mttf, CellProbabilities, InspectionGrid, ModelParams, StressPlan,
};
use crate::special::chi2_survival;
use crate::{Error, Result};

/// Point contamination: a fraction `epsilon` of the probability mass is
/// moved into observation cell `cell` (one-based, `1..=L+1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContaminationSpec {
    cell: usize,
    epsilon: f64,
}

impl ContaminationSpec {
    pub fn new(cell: usize, epsilon: f64) -> Result<Self> {
        if cell == 0 {
            return Err(Error::InvalidConfig("contamination cell index is one-based".into()));
        }
        if !(0.0..1.0).contains(&epsilon) {
            return Err(Error::InvalidConfig(format!(
                "contamination proportion must lie in [0, 1), got {epsilon}"
            )));
        }
        Ok(Self { cell, epsilon })
    }

    pub fn cell(&self) -> usize {
        self.cell
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// Contaminated cell probabilities `π̃ = (1 − ε) π + ε e_c`: the target cell
/// gains mass ε while every other cell shrinks by exactly the factor (1−ε).
///
/// # Errors
/// Cell index beyond the vector length.
pub fn contaminate(pi: &CellProbabilities, spec: &ContaminationSpec) -> Result<CellProbabilities> {
    if spec.cell > pi.len() {
        return Err(Error::InvalidConfig(format!(
            "contamination cell {} exceeds the {} observation cells",
            spec.cell,
            pi.len()
        )));
    }
    let eps = spec.epsilon;
    let mut probs: Vec<f64> = pi.as_slice().iter().map(|&p| (1.0 - eps) * p).collect();
    probs[spec.cell - 1] += eps;
    Ok(CellProbabilities::from_raw(probs))
}

/// One multinomial draw of `n_units` failures across the cells, by inverse
/// CDF per unit. Deterministic given the RNG state.
pub fn sample_counts(
    pi: &CellProbabilities,
    n_units: u64,
    rng: &mut impl Rng,
) -> Result<FailureCounts> {
    if n_units == 0 {
        return Err(Error::InvalidConfig("n_units must be at least one".into()));
    }
    let probs = pi.as_slice();
    let mut counts = vec![0u64; probs.len()];
    for _ in 0..n_units {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut cell = probs.len() - 1; // rounding residue lands in the last cell
        for (j, &p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                cell = j;
                break;
            }
        }
        counts[cell] += 1;
    }
    FailureCounts::new(counts)
}

/// An experimental design: the stress plan, inspection grid, generating
/// parameters, and number of units per experiment.
#[derive(Debug, Clone)]
pub struct Design {
    pub plan: StressPlan,
    pub grid: InspectionGrid,
    pub theta0: ModelParams,
    pub n_units: u64,
}

/// The solar-lighting reference design: two stress levels 0.1 and 0.5 with
/// the step at time 1, fourteen inspection times up to termination at 20
/// (hundreds of hours), generating parameters (3.6597, −2.4131, 1.4), and
/// 200 units on test.
pub fn default_solar_design() -> Design {
    let plan = StressPlan::new(vec![0.1, 0.5], vec![1.0], 20.0).expect("valid reference plan");
    let times = vec![
        1.0, 3.0, 5.0, 7.0, 8.0, 9.0, 10.0, 12.0, 13.0, 14.0, 15.0, 17.0, 19.0, 20.0,
    ];
    let grid = InspectionGrid::new(times, &plan).expect("valid reference grid");
    let theta0 = ModelParams::new(3.6597, -2.4131, 1.4).expect("valid reference parameters");
    Design { plan, grid, theta0, n_units: 200 }
}

/// Which null hypothesis a level or power study exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestProblem {
    /// H0 fixes the intercept `a0` at its generating value (null true).
    Intercept,
    /// H0 fixes the slope `a1` at its generating value (null true).
    Slope,
    /// H0 fixes the shape at 1.3 and the generator's shape is also set to
    /// 1.3 (null true).
    Shape,
    /// H0 fixes the shape at 1.0 while data keep the design's shape (null
    /// false; this is the power scenario).
    ShapePower,
}

impl TestProblem {
    /// Component index fixed by the null and the value it is fixed at.
    pub fn null_component(&self, theta0: &ModelParams) -> (usize, f64) {
        match self {
            TestProblem::Intercept => (0, theta0.a0),
            TestProblem::Slope => (1, theta0.a1),
            TestProblem::Shape => (2, 1.3),
            TestProblem::ShapePower => (2, 1.0),
        }
    }

    /// The generating parameters for this problem: the shape-at-1.3 null
    /// moves the generator onto the null; the others leave it unchanged.
    pub fn generator(&self, theta0: &ModelParams) -> ModelParams {
        match self {
            TestProblem::Shape => ModelParams { eta: 1.3, ..*theta0 },
            _ => *theta0,
        }
    }

    pub fn constraint(&self, theta0: &ModelParams) -> Constraint {
        let (index, value) = self.null_component(theta0);
        Constraint::fix_component(index, value).expect("valid fixed-component constraint")
    }
}

/// Configuration shared by all studies. `problem` only matters for level and
/// power studies; `contamination_cell` names the cell receiving the ε mass.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub reps: usize,
    pub seed: u64,
    pub betas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub design: Design,
    pub alpha: f64,
    pub problem: TestProblem,
    pub contamination_cell: usize,
}

impl StudyConfig {
    /// Estimation-error study defaults: the full β grid, contamination of a
    /// late cell (where the model cannot absorb the extra mass by shifting
    /// its parameters, so non-robust fits visibly degrade), and the ε grid
    /// up to 0.2.
    pub fn default_mse() -> Self {
        Self {
            reps: 1000,
            seed: 2024,
            betas: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            epsilons: vec![0.0, 0.05, 0.1, 0.2],
            design: default_solar_design(),
            alpha: 0.05,
            problem: TestProblem::Intercept,
            contamination_cell: 14,
        }
    }

    /// Level study defaults for a given null-true problem; same late-cell
    /// contamination as the estimation study.
    pub fn default_level(problem: TestProblem) -> Self {
        Self {
            reps: 1000,
            seed: 2024,
            betas: vec![0.0, 0.4, 0.6, 0.8],
            epsilons: vec![0.0, 0.05, 0.1, 0.2],
            design: default_solar_design(),
            alpha: 0.05,
            problem,
            contamination_cell: 14,
        }
    }

    /// Power study defaults: shape-at-one null against shape-1.4 data, with
    /// contamination in the first post-step cell, which pulls fitted shapes
    /// toward the null and erodes non-robust power.
    pub fn default_power() -> Self {
        Self {
            reps: 1000,
            seed: 2024,
            betas: vec![0.0, 0.4, 0.8],
            epsilons: vec![0.0, 0.1, 0.2],
            design: default_solar_design(),
            alpha: 0.05,
            problem: TestProblem::ShapePower,
            contamination_cell: 2,
        }
    }

    /// Coverage study defaults: pure data only, and 2000 units per experiment
    /// so the normal asymptotics have taken hold for all three components
    /// (smaller experiments leave the intercept and slope intervals visibly
    /// conservative and the shape interval anti-conservative).
    pub fn default_coverage() -> Self {
        let mut design = default_solar_design();
        design.n_units = 2000;
        Self {
            reps: 2000,
            seed: 2024,
            betas: vec![0.0, 0.4],
            epsilons: vec![0.0],
            design,
            alpha: 0.05,
            problem: TestProblem::Intercept,
            contamination_cell: 14,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidConfig("reps must be at least one".into()));
        }
        if self.betas.is_empty() || self.epsilons.is_empty() {
            return Err(Error::InvalidConfig("beta and epsilon grids must be nonempty".into()));
        }
        if self.betas.iter().any(|&b| !b.is_finite() || b < 0.0) {
            return Err(Error::InvalidConfig("betas must be finite and nonnegative".into()));
        }
        for &eps in &self.epsilons {
            ContaminationSpec::new(self.contamination_cell.max(1), eps)?;
        }
        let n_cells = self.design.grid.num_intervals() + 1;
        if self.contamination_cell == 0 || self.contamination_cell > n_cells {
            return Err(Error::InvalidConfig(format!(
                "contamination cell {} out of range 1..={n_cells}",
                self.contamination_cell
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// One row of a study table: a metric value for a (β, ε) pair with its
/// Monte Carlo standard error. `reps` is the configured replication count;
/// `failures` counts replications excluded because the fit failed, so the
/// value aggregates `reps − failures` replications.
#[derive(Debug, Clone, Serialize)]
pub struct StudyRow {
    pub beta: f64,
    pub epsilon: f64,
    pub metric: String,
    pub value: f64,
    pub mc_se: f64,
    pub reps: usize,
    pub failures: usize,
}

/// A study result: rows over the (β, ε, metric) grid.
#[derive(Debug, Clone, Serialize)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
}

impl StudyTable {
    /// CSV rendering with the header
    /// `beta,epsilon,metric,value,mc_se,reps,failures`. Floats use the
    /// shortest exact decimal representation, so equal tables render to
    /// byte-identical text.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("beta,epsilon,metric,value,mc_se,reps,failures\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.beta, r.epsilon, r.metric, r.value, r.mc_se, r.reps, r.failures
            ));
        }
        out
    }

    /// Rows for one metric, in grid order.
    pub fn metric_rows(&self, metric: &str) -> Vec<&StudyRow> {
        self.rows.iter().filter(|r| r.metric == metric).collect()
    }

    /// The single row for (metric, β, ε), if present.
    pub fn lookup(&self, metric: &str, beta: f64, epsilon: f64) -> Option<&StudyRow> {
        self.rows
            .iter()
            .find(|r| r.metric == metric && r.beta == beta && r.epsilon == epsilon)
    }
}

/// RNG for replication `rep` under contamination grid index `eps_idx`:
/// one stream per (ε, rep) pair, independent of scheduling.
fn rep_rng(seed: u64, eps_idx: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((eps_idx as u64) << 32) | rep as u64);
    rng
}

/// Mean and Monte Carlo standard error of a sample.
fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        // A single replication carries no spread information; report zero
        // rather than poisoning the CSV with NaN.
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Median with an order-statistic standard error (half the width of the
/// ±√R band around the middle ranks).
fn median_se(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let half_band = 0.5 * (n as f64).sqrt();
    let mid = (n as f64 - 1.0) / 2.0;
    let lo = (mid - half_band).floor().max(0.0) as usize;
    let hi = ((mid + half_band).ceil() as usize).min(n - 1);
    (median, 0.5 * (sorted[hi] - sorted[lo]))
}

/// Proportion and its binomial standard error.
fn proportion_se(hits: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let p = hits as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

/// Per-replication fits for every β on one dataset, reusing the β = 0
/// solution as the anchor start for the β > 0 fits (exactly the default
/// start policy of `fit_mdpde`, computed once instead of per β).
fn fits_over_betas(
    counts: &FailureCounts,
    design: &Design,
    betas: &[f64],
    constraint: Option<&Constraint>,
) -> Vec<Option<FitResult>> {
    let options = FitOptions::default();
    let base = if betas.iter().any(|&b| b > 0.0) {
        fit_rmdpde(
            counts,
            &design.plan,
            &design.grid,
            TuningParameter::new(0.0).expect("zero is valid"),
            constraint,
            &options,
        )
        .ok()
    } else {
        None
    };
    betas
        .iter()
        .map(|&beta| {
            let tuning = TuningParameter::new(beta).expect("validated by the config");
            if beta == 0.0 {
                if let Some(fit) = &base {
                    return Some(fit.clone());
                }
            }
            let opts = if beta > 0.0 {
                FitOptions {
                    starts: Some(default_starts(base.as_ref().map(|f| &f.theta_hat))),
                    ..FitOptions::default()
                }
            } else {
                FitOptions::default()
            };
            fit_rmdpde(counts, &design.plan, &design.grid, tuning, constraint, &opts).ok()
        })
        .collect()
}

/// Estimation-error study: for each (β, ε) reports the mean over
/// replications of the squared relative-error norm
/// `‖(θ̂ − θ0) / θ0‖²` (metric `mse`), its median (metric `mse_median`),
/// and the mean squared relative error of the plugged-in mean time to
/// failure at stress 0.1 (metric `mse_mttf`).
pub fn mse_study(config: &StudyConfig) -> Result<StudyTable> {
    config.validate()?;
    let design = &config.design;
    let theta0 = design.theta0;
    let pi0 = cell_probabilities(&theta0, &design.plan, &design.grid)?;
    let mttf0 = mttf(&theta0, 0.1);
    let truth = theta0.as_array();

    let mut rows = Vec::new();
    for (eps_idx, &eps) in config.epsilons.iter().enumerate() {
        let spec = ContaminationSpec::new(config.contamination_cell, eps)?;
        let pi = contaminate(&pi0, &spec)?;

        // (squared norm, squared MTTF error) per β per replication.
        let per_rep: Vec<Vec<Option<(f64, f64)>>> = (0..config.reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = rep_rng(config.seed, eps_idx, rep);
                let counts = match sample_counts(&pi, design.n_units, &mut rng) {
                    Ok(c) => c,
                    Err(_) => return vec![None; config.betas.len()],
                };
                fits_over_betas(&counts, design, &config.betas, None)
                    .into_iter()
                    .map(|fit| {
                        fit.map(|f| {
                            let hat = f.theta_hat.as_array();
                            let sq_norm: f64 = (0..3)
                                .map(|i| ((hat[i] - truth[i]) / truth[i]).powi(2))
                                .sum();
                            let mttf_hat = mttf(&f.theta_hat, 0.1);
                            let mttf_err = ((mttf_hat - mttf0) / mttf0).powi(2);
                            (sq_norm, mttf_err)
                        })
                    })
                    .collect()
            })
            .collect();

        for (b_idx, &beta) in config.betas.iter().enumerate() {
            let successes: Vec<(f64, f64)> =
                per_rep.iter().filter_map(|row| row[b_idx]).collect();
            let failures = config.reps - successes.len();
            if failures > 0 {
                log::warn!(
                    "mse study: {failures}/{} replications failed at beta {beta}, eps {eps}",
                    config.reps
                );
            }
            let norms: Vec<f64> = successes.iter().map(|s| s.0).collect();
            let mttfs: Vec<f64> = successes.iter().map(|s| s.1).collect();
            let (mean, mean_err) = mean_se(&norms);
            let (median, median_err) = median_se(&norms);
            let (mttf_mean, mttf_err) = mean_se(&mttfs);
            for (metric, value, se) in [
                ("mse", mean, mean_err),
                ("mse_median", median, median_err),
                ("mse_mttf", mttf_mean, mttf_err),
            ] {
                rows.push(StudyRow {
                    beta,
                    epsilon: eps,
                    metric: metric.to_string(),
                    value,
                    mc_se: se,
                    reps: config.reps,
                    failures,
                });
            }
        }
    }
    Ok(StudyTable { rows })
}

/// Shared engine for level and power studies: the rejection fraction of the
/// Rao test of the configured problem at each (β, ε).
fn rejection_study(config: &StudyConfig, metric: &str) -> Result<StudyTable> {
    config.validate()?;
    let design = &config.design;
    let generator = config.problem.generator(&design.theta0);
    let constraint = config.problem.constraint(&design.theta0);
    let df = constraint.arity() as u32;
    let pi_gen = cell_probabilities(&generator, &design.plan, &design.grid)?;

    let mut rows = Vec::new();
    for (eps_idx, &eps) in config.epsilons.iter().enumerate() {
        let spec = ContaminationSpec::new(config.contamination_cell, eps)?;
        let pi = contaminate(&pi_gen, &spec)?;

        let per_rep: Vec<Vec<Option<bool>>> = (0..config.reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = rep_rng(config.seed, eps_idx, rep);
                let counts = match sample_counts(&pi, design.n_units, &mut rng) {
                    Ok(c) => c,
                    Err(_) => return vec![None; config.betas.len()],
                };
                let fits = fits_over_betas(&counts, design, &config.betas, Some(&constraint));
                config
                    .betas
                    .iter()
                    .zip(fits)
                    .map(|(&beta, fit)| {
                        let fit = fit?;
                        let tuning = TuningParameter::new(beta).ok()?;
                        let stat =
                            rao_statistic(&counts, &fit, &design.plan, &design.grid, tuning)
                                .ok()?;
                        let p = chi2_survival(stat, df).ok()?;
                        Some(p < config.alpha)
                    })
                    .collect()
            })
            .collect();

        for (b_idx, &beta) in config.betas.iter().enumerate() {
            let decisions: Vec<bool> = per_rep.iter().filter_map(|row| row[b_idx]).collect();
            let failures = config.reps - decisions.len();
            if failures > 0 {
                log::warn!(
                    "{metric} study: {failures}/{} replications failed at beta {beta}, eps {eps}",
                    config.reps
                );
            }
            let hits = decisions.iter().filter(|&&d| d).count();
            let (value, mc_se) = proportion_se(hits, decisions.len());
            rows.push(StudyRow {
                beta,
                epsilon: eps,
                metric: metric.to_string(),
                value,
                mc_se,
                reps: config.reps,
                failures,
            });
        }
    }
    Ok(StudyTable { rows })
}

/// Empirical level of the Rao test for a null-true problem at each (β, ε);
/// the metric name is `level`.
///
/// # Errors
/// A configuration whose problem violates the null (the power scenario).
pub fn level_study(config: &StudyConfig) -> Result<StudyTable> {
    if config.problem == TestProblem::ShapePower {
        return Err(Error::InvalidConfig(
            "the shape-at-one problem violates the null; use power_study".into(),
        ));
    }
    rejection_study(config, "level")
}

/// Empirical power of the Rao test for the shape-at-one problem against
/// data generated at the design's shape; the metric name is `power`.
pub fn power_study(config: &StudyConfig) -> Result<StudyTable> {
    if config.problem != TestProblem::ShapePower {
        return Err(Error::InvalidConfig(
            "power_study requires the shape-at-one problem".into(),
        ));
    }
    rejection_study(config, "power")
}

/// Coverage study for the unrestricted estimator: per (β, ε), the fraction
/// of replications whose Wald intervals cover each true component (metrics
/// `coverage_a0`, `coverage_a1`, `coverage_eta`) and whose elliptical
/// region covers the full vector (metric `coverage_region`), at level
/// `1 − alpha`.
pub fn coverage_study(config: &StudyConfig) -> Result<StudyTable> {
    config.validate()?;
    let design = &config.design;
    let theta0 = design.theta0;
    let truth = theta0.as_array();
    let pi0 = cell_probabilities(&theta0, &design.plan, &design.grid)?;

    let mut rows = Vec::new();
    for (eps_idx, &eps) in config.epsilons.iter().enumerate() {
        let spec = ContaminationSpec::new(config.contamination_cell, eps)?;
        let pi = contaminate(&pi0, &spec)?;

        let per_rep: Vec<Vec<Option<[bool; 4]>>> = (0..config.reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = rep_rng(config.seed, eps_idx, rep);
                let counts = match sample_counts(&pi, design.n_units, &mut rng) {
                    Ok(c) => c,
                    Err(_) => return vec![None; config.betas.len()],
                };
                fits_over_betas(&counts, design, &config.betas, None)
                    .into_iter()
                    .map(|fit| {
                        let fit = fit?;
                        let wald = wald_intervals(&fit, config.alpha).ok()?;
                        let region = confidence_region_test(&fit, &theta0, config.alpha).ok()?;
                        let mut cover = [false; 4];
                        for i in 0..3 {
                            cover[i] = wald.lower[i] <= truth[i] && truth[i] <= wald.upper[i];
                        }
                        cover[3] = region;
                        Some(cover)
                    })
                    .collect()
            })
            .collect();

        for (b_idx, &beta) in config.betas.iter().enumerate() {
            let covers: Vec<[bool; 4]> = per_rep.iter().filter_map(|row| row[b_idx]).collect();
            let failures = config.reps - covers.len();
            if failures > 0 {
                log::warn!(
                    "coverage study: {failures}/{} replications failed at beta {beta}, eps {eps}",
                    config.reps
                );
            }
            for (slot, metric) in
                ["coverage_a0", "coverage_a1", "coverage_eta", "coverage_region"]
                    .iter()
                    .enumerate()
            {
                let hits = covers.iter().filter(|c| c[slot]).count();
                let (value, mc_se) = proportion_se(hits, covers.len());
                rows.push(StudyRow {
                    beta,
                    epsilon: eps,
                    metric: metric.to_string(),
                    value,
                    mc_se,
                    reps: config.reps,
                    failures,
                });
            }
        }
    }
    Ok(StudyTable { rows })
}

/// Empirical covariance of `√N (θ̂ − θ0)` over replications at a fixed β —
/// the simulation-side counterpart of the sandwich covariance, used to
/// validate the asymptotics.
pub fn empirical_scaled_covariance(
    config: &StudyConfig,
    beta: f64,
    constraint: Option<&Constraint>,
) -> Result<nalgebra::Matrix3<f64>> {
    config.validate()?;
    let design = &config.design;
    let theta0 = design.theta0;
    let truth = theta0.as_array();
    let pi0 = cell_probabilities(&theta0, &design.plan, &design.grid)?;
    let betas = vec![beta];

    let samples: Vec<Option<DVector<f64>>> = (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rep_rng(config.seed, 0, rep);
            let counts = sample_counts(&pi0, design.n_units, &mut rng).ok()?;
            let fit = fits_over_betas(&counts, design, &betas, constraint)
                .pop()
                .flatten()?;
            let hat = fit.theta_hat.as_array();
            let scale = (design.n_units as f64).sqrt();
            Some(DVector::from_iterator(3, (0..3).map(|i| scale * (hat[i] - truth[i]))))
        })
        .collect();

    let kept: Vec<&DVector<f64>> = samples.iter().flatten().collect();
    if kept.len() < 2 {
        return Err(Error::NonConvergence(
            "too few successful replications for an empirical covariance".into(),
        ));
    }
    let n = kept.len() as f64;
    let mut mean = DVector::zeros(3);
    for v in &kept {
        mean += *v;
    }
    mean /= n;
    let mut cov = nalgebra::Matrix3::zeros();
    for v in &kept {
        let d = *v - &mean;
        for a in 0..3 {
            for b in 0..3 {
                cov[(a, b)] += d[a] * d[b];
            }
        }
    }
    Ok(cov / (n - 1.0))
}

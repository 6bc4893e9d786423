//! The JSON experiment configuration shared by every subcommand.
//!
//! The schema is strict: unknown or misspelled keys are rejected with an
//! error naming the offender, so a config emitted by `simulate
//! --emit-config` always re-parses to the identical structure.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use stepstress::estimation::Constraint;
use stepstress::model::{InspectionGrid, ModelParams, StressPlan};
use stepstress::montecarlo::{Design, StudyConfig, TestProblem};

/// Which Monte Carlo study `simulate` runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Study {
    Mse,
    Level,
    Power,
}

impl Study {
    /// Parses a study name; unknown names are an ordinary error (exit 1),
    /// not a usage error.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "mse" => Ok(Study::Mse),
            "level" => Ok(Study::Level),
            "power" => Ok(Study::Power),
            other => bail!("unknown study {other:?}; expected mse, level, or power"),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Study::Mse => "mse",
            Study::Level => "level",
            Study::Power => "power",
        }
    }
}

/// Top-level configuration. `plan` and `grid` are always required; the
/// remaining fields are consumed by the subcommands that need them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub plan: PlanConfig,
    pub grid: GridConfig,
    /// Tuning parameter β: a single value for fit/test, a list for studies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<BetaField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<ConstraintConfig>,
    /// Generating parameters, required by influence and simulate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<ThetaConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contamination: Option<ContaminationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Units per simulated experiment (default 200).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_units: Option<u64>,
    /// Null hypothesis for level/power studies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<TestProblem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    pub levels: Vec<f64>,
    pub change_times: Vec<f64>,
    pub termination: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaConfig {
    pub a0: f64,
    pub a1: f64,
    pub eta: f64,
}

/// `beta` accepts either `0.4` or `[0.0, 0.4, 0.8]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaField {
    Single(f64),
    List(Vec<f64>),
}

impl BetaField {
    pub fn to_list(&self) -> Vec<f64> {
        match self {
            BetaField::Single(b) => vec![*b],
            BetaField::List(list) => list.clone(),
        }
    }
}

/// `epsilon` accepts either a single contamination level (the study then
/// runs the pure baseline plus that level) or an explicit grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsilonField {
    Single(f64),
    List(Vec<f64>),
}

impl EpsilonField {
    pub fn to_grid(&self) -> Vec<f64> {
        match self {
            EpsilonField::Single(e) if *e == 0.0 => vec![0.0],
            EpsilonField::Single(e) => vec![0.0, *e],
            EpsilonField::List(list) => list.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContaminationConfig {
    /// One-based index of the cell receiving the contaminating mass.
    pub cell: usize,
    pub epsilon: EpsilonField,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    FixComponent,
    Linear,
}

/// The component fixed by a `fix_component` constraint, by name or index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComponentField {
    Index(usize),
    Name(String),
}

impl ComponentField {
    fn index(&self) -> Result<usize> {
        match self {
            ComponentField::Index(i) if *i <= 2 => Ok(*i),
            ComponentField::Index(i) => {
                bail!("constraint field `component`: index {i} out of range 0..=2")
            }
            ComponentField::Name(name) => match name.as_str() {
                "a0" => Ok(0),
                "a1" => Ok(1),
                "eta" => Ok(2),
                other => bail!(
                    "constraint field `component`: expected \"a0\", \"a1\", \"eta\" \
                     or an index 0..=2, got {other:?}"
                ),
            },
        }
    }
}

/// A constraint `m(θ) = 0`: either one component fixed at a value, or a
/// linear system `Aθ = b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintConfig {
    pub kind: ConstraintKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub component: Option<ComponentField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
}

impl ConstraintConfig {
    pub fn build(&self) -> Result<Constraint> {
        match self.kind {
            ConstraintKind::FixComponent => {
                if self.a.is_some() || self.b.is_some() {
                    bail!("constraint fields `a`/`b` only apply to kind \"linear\"");
                }
                let component = self
                    .component
                    .as_ref()
                    .context("constraint field `component` is required for kind \"fix_component\"")?
                    .index()?;
                let value = self
                    .value
                    .context("constraint field `value` is required for kind \"fix_component\"")?;
                Ok(Constraint::fix_component(component, value)?)
            }
            ConstraintKind::Linear => {
                if self.component.is_some() || self.value.is_some() {
                    bail!("constraint fields `component`/`value` only apply to kind \"fix_component\"");
                }
                let a = self.a.as_ref().context("constraint field `a` is required for kind \"linear\"")?;
                let b = self.b.as_ref().context("constraint field `b` is required for kind \"linear\"")?;
                if a.is_empty() || a.iter().any(|row| row.len() != 3) {
                    bail!("constraint field `a` must be a nonempty matrix with rows of length 3");
                }
                if b.len() != a.len() {
                    bail!(
                        "constraint field `b` must have one entry per row of `a` ({} != {})",
                        b.len(),
                        a.len()
                    );
                }
                let flat: Vec<f64> = a.iter().flatten().copied().collect();
                let a = DMatrix::from_row_slice(a.len(), 3, &flat);
                let b = DVector::from_column_slice(b);
                Ok(Constraint::linear(a, b)?)
            }
        }
    }
}

/// Overrides taken from `simulate` command-line flags.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimulateOverrides {
    pub reps: Option<usize>,
    pub seed: Option<u64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn to_plan(&self) -> Result<StressPlan> {
        Ok(StressPlan::new(
            self.plan.levels.clone(),
            self.plan.change_times.clone(),
            self.plan.termination,
        )
        .context("config field `plan`")?)
    }

    pub fn to_grid(&self, plan: &StressPlan) -> Result<InspectionGrid> {
        Ok(InspectionGrid::new(self.grid.times.clone(), plan).context("config field `grid`")?)
    }

    pub fn require_theta0(&self, needed_by: &str) -> Result<ModelParams> {
        let theta = self
            .theta0
            .as_ref()
            .with_context(|| format!("config field `theta0` is required by {needed_by}"))?;
        Ok(ModelParams::new(theta.a0, theta.a1, theta.eta).context("config field `theta0`")?)
    }

    pub fn require_constraint(&self, needed_by: &str) -> Result<Constraint> {
        self.constraint
            .as_ref()
            .with_context(|| format!("config field `constraint` is required by {needed_by}"))?
            .build()
    }

    /// The single β a fit or test runs at: the flag wins over the config;
    /// a config list is rejected because these commands need one value.
    pub fn single_beta(&self, flag: Option<f64>) -> Result<f64> {
        if let Some(beta) = flag {
            return Ok(beta);
        }
        match &self.beta {
            None => Ok(0.0),
            Some(BetaField::Single(beta)) => Ok(*beta),
            Some(BetaField::List(_)) => {
                bail!("config field `beta` is a list; fit and test need a single value (use --beta)")
            }
        }
    }

    /// Resolves this config into a full study configuration, applying the
    /// study's defaults for everything the config leaves unset.
    pub fn study_config(&self, study: Study, overrides: &SimulateOverrides) -> Result<StudyConfig> {
        let plan = self.to_plan()?;
        let grid = self.to_grid(&plan)?;
        let theta0 = self.require_theta0("simulate")?;
        let n_units = self.n_units.unwrap_or(200);
        if n_units == 0 {
            bail!("config field `n_units` must be at least 1");
        }
        let mut cfg = match study {
            Study::Mse => {
                if self.problem.is_some() {
                    bail!("config field `problem` only applies to level and power studies");
                }
                StudyConfig::default_mse()
            }
            Study::Level => StudyConfig::default_level(self.problem.unwrap_or(TestProblem::Intercept)),
            Study::Power => {
                if matches!(self.problem, Some(p) if p != TestProblem::ShapePower) {
                    bail!("config field `problem` must be \"shape_power\" for the power study");
                }
                StudyConfig::default_power()
            }
        };
        cfg.design = Design { plan, grid, theta0, n_units };
        if let Some(reps) = overrides.reps.or(self.reps) {
            cfg.reps = reps;
        }
        if let Some(seed) = overrides.seed.or(self.seed) {
            cfg.seed = seed;
        }
        if let Some(alpha) = self.alpha {
            cfg.alpha = alpha;
        }
        if let Some(beta) = &self.beta {
            cfg.betas = beta.to_list();
        }
        if let Some(contamination) = &self.contamination {
            cfg.contamination_cell = contamination.cell;
            cfg.epsilons = contamination.epsilon.to_grid();
        }
        Ok(cfg)
    }
}

/// The fully resolved config a study ran with, for `--emit-config`.
pub fn resolved(study: Study, cfg: &StudyConfig) -> ExperimentConfig {
    ExperimentConfig {
        plan: PlanConfig {
            levels: cfg.design.plan.levels().to_vec(),
            change_times: cfg.design.plan.change_times().to_vec(),
            termination: cfg.design.plan.termination(),
        },
        grid: GridConfig { times: cfg.design.grid.times().to_vec() },
        beta: Some(BetaField::List(cfg.betas.clone())),
        alpha: Some(cfg.alpha),
        constraint: None,
        theta0: Some(ThetaConfig {
            a0: cfg.design.theta0.a0,
            a1: cfg.design.theta0.a1,
            eta: cfg.design.theta0.eta,
        }),
        contamination: Some(ContaminationConfig {
            cell: cfg.contamination_cell,
            epsilon: EpsilonField::List(cfg.epsilons.clone()),
        }),
        reps: Some(cfg.reps),
        seed: Some(cfg.seed),
        n_units: Some(cfg.design.n_units),
        problem: match study {
            Study::Mse => None,
            Study::Level | Study::Power => Some(cfg.problem),
        },
    }
}

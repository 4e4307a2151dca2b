//! Experiment configuration.
//!
//! Files are TOML (or JSON when the path ends in `.json`). Every field is
//! optional; [`Config::resolve`] fills the per-experiment defaults and the
//! resolved value is what reports echo back.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use udrra_core::instance::{random_distribution, random_policy, random_reward};
use udrra_core::optimize::{StepSchedule, TrainingMode};
use udrra_core::preference::{OmegaModel, OmegaVariant};
use udrra_core::rng::{stream, Purpose};
use udrra_core::{ConditionalDistribution, FiniteSpaces, LossKind, RewardTable, SoftmaxPolicy};

use crate::error::{HarnessError, Result};
use crate::experiments::Experiment;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpacesSpec {
    pub prompts: usize,
    pub responses: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RewardSpec {
    /// Independent `U[lo, hi]` entries. With `min_gap`, rows are redrawn
    /// until the top two entries differ by at least that much.
    Uniform {
        lo: f64,
        hi: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min_gap: Option<f64>,
    },
    Explicit { values: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    Uniform,
    /// `U[floor, 1)` weights, normalized per row.
    Random { floor: f64 },
    Explicit { values: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplerSpec {
    Uniform,
    Random { floor: f64 },
    Explicit { values: Vec<Vec<f64>> },
    /// Margin-weighted pairs: uniform baseline plus one run per `μ`.
    Pi1 { epsilon0: f64, mu: Vec<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSpec {
    Zero,
    Reference,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSpec {
    Exact,
    Stochastic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmegaSpec {
    pub variant: String,
    pub eta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kto_ref: Option<f64>,
}

/// Raw file contents. Unknown keys are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub instances: Option<usize>,
    pub tau: Option<f64>,
    pub tau_grid: Option<Vec<f64>>,
    pub steps: Option<usize>,
    pub kinds: Option<Vec<String>>,
    pub spaces: Option<SpacesSpec>,
    pub reward: Option<RewardSpec>,
    pub reference: Option<DistributionSpec>,
    pub pi0: Option<SamplerSpec>,
    pub schedule: Option<StepSchedule>,
    pub omega: Option<OmegaSpec>,
    pub mode: Option<ModeSpec>,
    pub batch: Option<usize>,
    pub init: Option<InitSpec>,
    /// Random policies per kind for the smoothness sweep.
    pub policies: Option<usize>,
    pub policy_scale: Option<f64>,
    /// Draws for sampling-frequency checks.
    pub samples: Option<usize>,
    /// Pass threshold: KL, residual, gradient norm or frequency error,
    /// depending on the experiment.
    pub tolerance: Option<f64>,
    /// Gradient-norm² level used for steps-to-threshold.
    pub grad_threshold: Option<f64>,
    pub max_inversions: Option<usize>,
    /// Early stopping at the gradient threshold waits for this many steps.
    pub min_steps: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Fully specified settings for one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Resolved {
    pub experiment: String,
    pub seed: u64,
    pub instances: usize,
    pub tau: f64,
    pub tau_grid: Vec<f64>,
    pub steps: usize,
    pub kinds: Vec<String>,
    pub spaces: SpacesSpec,
    pub reward: RewardSpec,
    pub reference: DistributionSpec,
    pub pi0: SamplerSpec,
    pub schedule: StepSchedule,
    pub omega: OmegaSpec,
    pub mode: ModeSpec,
    pub batch: usize,
    pub init: InitSpec,
    pub policies: usize,
    pub policy_scale: f64,
    pub samples: usize,
    pub tolerance: f64,
    pub grad_threshold: f64,
    pub max_inversions: usize,
    pub min_steps: usize,
}

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    /// Accepts either a bare config object or a `summary.json` whose
    /// `config` field holds the resolved settings.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        let mut body = match value.get("config") {
            Some(inner) => inner.clone(),
            None => value,
        };
        if let Some(map) = body.as_object_mut() {
            map.remove("experiment");
        }
        serde_json::from_value(body).map_err(|e| config_err(e.to_string()))
    }

    /// An otherwise empty config carrying only a seed.
    pub fn default_with_seed(seed: u64) -> Self {
        Config { seed: Some(seed), ..Config::default() }
    }

    pub fn resolve(&self, experiment: Experiment) -> Result<Resolved> {
        let d = Defaults::for_experiment(experiment);
        let r = Resolved {
            experiment: experiment.name().to_string(),
            seed: self.seed.ok_or_else(|| config_err("seed is required (config key `seed` or --seed)"))?,
            instances: self.instances.unwrap_or(d.instances),
            tau: self.tau.unwrap_or(1.0),
            tau_grid: self.tau_grid.clone().unwrap_or(d.tau_grid),
            steps: self.steps.unwrap_or(d.steps),
            kinds: self.kinds.clone().unwrap_or_else(|| d.kinds.iter().map(|k| k.name().to_string()).collect()),
            spaces: self.spaces.unwrap_or(SpacesSpec { prompts: 3, responses: 6 }),
            reward: self.reward.clone().unwrap_or(RewardSpec::Uniform { lo: 0.0, hi: 1.0, min_gap: d.min_gap }),
            reference: self.reference.clone().unwrap_or(DistributionSpec::Random { floor: 0.2 }),
            pi0: self.pi0.clone().unwrap_or(d.pi0),
            schedule: self.schedule.unwrap_or(d.schedule),
            omega: self.omega.clone().unwrap_or(OmegaSpec { variant: "bt".into(), eta: 1.0, kto_ref: None }),
            mode: self.mode.unwrap_or(d.mode),
            batch: self.batch.unwrap_or(1),
            init: self.init.unwrap_or(d.init),
            policies: self.policies.unwrap_or(50),
            policy_scale: self.policy_scale.unwrap_or(1.0),
            samples: self.samples.unwrap_or(100_000),
            tolerance: self.tolerance.unwrap_or(d.tolerance),
            grad_threshold: self.grad_threshold.unwrap_or(1e-4),
            max_inversions: self.max_inversions.unwrap_or(1),
            min_steps: self.min_steps.unwrap_or(d.min_steps),
        };
        r.validate()?;
        Ok(r)
    }
}

struct Defaults {
    instances: usize,
    tau_grid: Vec<f64>,
    steps: usize,
    kinds: Vec<LossKind>,
    pi0: SamplerSpec,
    schedule: StepSchedule,
    mode: ModeSpec,
    init: InitSpec,
    tolerance: f64,
    min_gap: Option<f64>,
    min_steps: usize,
}

impl Defaults {
    fn for_experiment(e: Experiment) -> Self {
        use LossKind::*;
        let mut d = Defaults {
            instances: 10,
            tau_grid: vec![1.0],
            steps: 5000,
            kinds: vec![Dpo],
            pi0: SamplerSpec::Uniform,
            schedule: StepSchedule::Constant { a: 0.5 },
            mode: ModeSpec::Exact,
            init: InitSpec::Zero,
            tolerance: 1e-8,
            min_gap: None,
            min_steps: 1,
        };
        match e {
            Experiment::Equivalence => {
                d.kinds = vec![ForwardBda, ReverseBda, Ra, Rda, Pra, RaP, PraP, KlRegularized];
                d.pi0 = SamplerSpec::Random { floor: 0.2 };
            }
            Experiment::Decomposition => {
                d.instances = 100;
                d.pi0 = SamplerSpec::Random { floor: 0.2 };
                d.tolerance = 1e-10;
            }
            Experiment::TauSweep => {
                d.instances = 1;
                d.tau_grid = vec![0.5, 1.0, 2.0, 4.0, 8.0];
                d.steps = TAU_SWEEP_STEPS;
                d.schedule = StepSchedule::Power { a: 0.1, b: 0.0, p: 0.6 };
                d.mode = ModeSpec::Stochastic;
                d.init = InitSpec::Reference;
                d.min_steps = 5000;
            }
            Experiment::Smoothness => {
                d.instances = 1;
                d.tau_grid = vec![0.5, 1.0, 2.0];
                d.kinds = vec![Dpo, ReverseBda, ForwardBda, Ra, Rda, Pra];
                d.tolerance = udrra_core::analysis::BOUND_SLACK;
            }
            Experiment::DataSelection => {
                d.steps = 5000;
                d.schedule = StepSchedule::Power { a: 0.1, b: 0.0, p: 0.6 };
                d.mode = ModeSpec::Stochastic;
                d.init = InitSpec::Reference;
                d.pi0 = SamplerSpec::Pi1 { epsilon0: 0.5, mu: vec![0.25, 0.5, 1.0, 2.0, 4.0] };
            }
            Experiment::TauToDelta => {
                d.tau_grid = (0..=8).map(|i| f64::from(1u32 << i)).collect();
                d.tolerance = 1e-6;
                d.min_gap = Some(0.1);
            }
            Experiment::OmegaZoo => {
                d.instances = 1;
                d.kinds = vec![];
                d.tolerance = 0.01;
            }
        }
        d
    }
}

/// Step budget of the τ sweep.
pub const TAU_SWEEP_STEPS: usize = 200_000;

impl Resolved {
    fn validate(&self) -> Result<()> {
        FiniteSpaces::new(self.spaces.prompts, self.spaces.responses).map_err(|e| config_err(e.to_string()))?;
        if !(self.tau > 0.0) || self.tau_grid.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(config_err("temperatures must be positive and finite"));
        }
        if self.tau_grid.is_empty() {
            return Err(config_err("tau_grid is empty"));
        }
        if self.steps == 0 || self.batch == 0 {
            return Err(config_err("steps and batch must be positive"));
        }
        self.schedule.validate().map_err(|e| config_err(e.to_string()))?;
        self.loss_kinds()?;
        self.omega_model()?;
        if let RewardSpec::Uniform { lo, hi, min_gap } = &self.reward {
            if !(lo < hi) {
                return Err(config_err(format!("reward range [{lo}, {hi}] is empty")));
            }
            if min_gap.is_some_and(|g| !(g >= 0.0) || g >= hi - lo) {
                return Err(config_err("reward min_gap must lie in [0, hi - lo)"));
            }
        }
        Ok(())
    }

    pub fn finite_spaces(&self) -> FiniteSpaces {
        FiniteSpaces::new(self.spaces.prompts, self.spaces.responses).expect("validated")
    }

    pub fn loss_kinds(&self) -> Result<Vec<LossKind>> {
        self.kinds
            .iter()
            .map(|k| k.parse::<LossKind>().map_err(|e| config_err(e.to_string())))
            .collect()
    }

    pub fn omega_model(&self) -> Result<OmegaModel<f64>> {
        let variant = parse_variant(&self.omega.variant, self.omega.kto_ref)?;
        OmegaModel::new(variant, self.omega.eta).map_err(|e| config_err(e.to_string()))
    }

    pub fn training_mode(&self, run: u64) -> TrainingMode {
        match self.mode {
            ModeSpec::Exact => TrainingMode::Exact,
            ModeSpec::Stochastic => TrainingMode::Stochastic {
                batch: self.batch,
                seed: self.seed.wrapping_add(run.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            },
        }
    }

    pub fn reward(&self, run: u64) -> Result<RewardTable<f64>> {
        let s = self.finite_spaces();
        match &self.reward {
            RewardSpec::Explicit { values } => {
                check_rows(values, s, "reward")?;
                RewardTable::from_rows(values.clone()).map_err(|e| config_err(e.to_string()))
            }
            RewardSpec::Uniform { lo, hi, min_gap } => {
                let mut rng = stream(self.seed, run, Purpose::Reward);
                let gap = min_gap.unwrap_or(0.0);
                for _ in 0..MAX_REDRAWS {
                    let r = random_reward(s, *lo, *hi, &mut rng).map_err(|e| config_err(e.to_string()))?;
                    if gap == 0.0 || (0..s.n_prompts).all(|x| top_gap(r.row(x)) >= gap) {
                        return Ok(r);
                    }
                }
                Err(config_err(format!("no reward table with top gap {gap} after {MAX_REDRAWS} draws")))
            }
        }
    }

    pub fn reference(&self, run: u64) -> Result<ConditionalDistribution<f64>> {
        self.distribution(&self.reference, run, Purpose::Reference, "reference")
    }

    /// Offline sampler for product-law runs. `pi1` starts from uniform.
    pub fn sampler(&self, run: u64) -> Result<ConditionalDistribution<f64>> {
        let spec = match &self.pi0 {
            SamplerSpec::Uniform | SamplerSpec::Pi1 { .. } => DistributionSpec::Uniform,
            SamplerSpec::Random { floor } => DistributionSpec::Random { floor: *floor },
            SamplerSpec::Explicit { values } => DistributionSpec::Explicit { values: values.clone() },
        };
        self.distribution(&spec, run, Purpose::Sampler, "pi0")
    }

    fn distribution(
        &self,
        spec: &DistributionSpec,
        run: u64,
        purpose: Purpose,
        what: &str,
    ) -> Result<ConditionalDistribution<f64>> {
        let s = self.finite_spaces();
        match spec {
            DistributionSpec::Uniform => Ok(ConditionalDistribution::uniform(s)),
            DistributionSpec::Random { floor } => {
                random_distribution(s, *floor, &mut stream(self.seed, run, purpose))
                    .map_err(|e| config_err(format!("{what}: {e}")))
            }
            DistributionSpec::Explicit { values } => {
                check_rows(values, s, what)?;
                ConditionalDistribution::from_rows(values.clone()).map_err(|e| config_err(format!("{what}: {e}")))
            }
        }
    }

    /// Uniform logits or `ln π_ref`, per `init`.
    pub fn initial_policy(&self, reference: &ConditionalDistribution<f64>) -> Result<SoftmaxPolicy<f64>> {
        match self.init {
            InitSpec::Zero => Ok(SoftmaxPolicy::zeros(self.finite_spaces())),
            InitSpec::Reference => {
                SoftmaxPolicy::from_distribution(reference).map_err(HarnessError::core("initial policy"))
            }
        }
    }

    /// The `i`-th random policy of run `run`.
    pub fn random_policy(&self, run: u64, i: u64) -> Result<SoftmaxPolicy<f64>> {
        let mut rng = stream(self.seed ^ i.wrapping_mul(0xD134_2543_DE82_EF95), run, Purpose::Policy);
        random_policy(self.finite_spaces(), self.policy_scale, &mut rng).map_err(HarnessError::core("random policy"))
    }
}

const MAX_REDRAWS: usize = 1000;

fn top_gap(row: &[f64]) -> f64 {
    let mut v = row.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v[0] - v[1]
}

fn check_rows(values: &[Vec<f64>], s: FiniteSpaces, what: &str) -> Result<()> {
    if values.len() != s.n_prompts || values.iter().any(|r| r.len() != s.n_responses) {
        return Err(config_err(format!(
            "{what} table must be {}x{}",
            s.n_prompts, s.n_responses
        )));
    }
    Ok(())
}

pub fn parse_variant(name: &str, kto_ref: Option<f64>) -> Result<OmegaVariant<f64>> {
    Ok(match name {
        "bt" => OmegaVariant::Bt,
        "ratio" => OmegaVariant::Ratio,
        "tanh" => OmegaVariant::Tanh,
        "sin" => OmegaVariant::Sin,
        "indicator" => OmegaVariant::Indicator,
        "hinge" => OmegaVariant::Hinge,
        "kto_ref" => OmegaVariant::KtoRef(kto_ref),
        "squared_sigmoid" => OmegaVariant::SquaredSigmoid,
        "exponential" => OmegaVariant::Exponential,
        other => return Err(config_err(format!("unknown omega variant '{other}'"))),
    })
}

/// Parses `--tau-grid a,b,c`.
pub fn parse_tau_grid(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| HarnessError::Usage(format!("bad temperature '{t}' in --tau-grid")))
        })
        .collect()
}

//! Named experiments.

use std::str::FromStr;
use std::time::Instant;

use udrra_core::optimize::{run_training_until, StepSchedule, StepRecord, Trajectory, TrainingMode};
use udrra_core::preference::OmegaModel;
use udrra_core::spaces::PairDistribution;
use udrra_core::{ConditionalDistribution, LossContext, LossKind, RewardTable, SoftmaxPolicy};

use crate::config::Resolved;
use crate::error::{HarnessError, Result};
use crate::report::{Outcome, RunSummary};

mod data_selection;
mod decomposition;
mod equivalence;
mod omega_zoo;
mod smoothness;
pub mod tau_sweep;
mod tau_to_delta;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Experiment {
    Equivalence,
    Decomposition,
    TauSweep,
    Smoothness,
    DataSelection,
    TauToDelta,
    OmegaZoo,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Equivalence,
        Experiment::Decomposition,
        Experiment::TauSweep,
        Experiment::Smoothness,
        Experiment::DataSelection,
        Experiment::TauToDelta,
        Experiment::OmegaZoo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Equivalence => "equivalence",
            Experiment::Decomposition => "decomposition",
            Experiment::TauSweep => "tau_sweep",
            Experiment::Smoothness => "smoothness",
            Experiment::DataSelection => "data_selection",
            Experiment::TauToDelta => "tau_to_delta",
            Experiment::OmegaZoo => "omega_zoo",
        }
    }

    /// Runs the experiment. The outcome is finished but not yet written.
    pub fn run(self, cfg: &Resolved) -> Result<Outcome> {
        let out = match self {
            Experiment::Equivalence => equivalence::run(cfg),
            Experiment::Decomposition => decomposition::run(cfg),
            Experiment::TauSweep => tau_sweep::run(cfg),
            Experiment::Smoothness => smoothness::run(cfg),
            Experiment::DataSelection => data_selection::run(cfg),
            Experiment::TauToDelta => tau_to_delta::run(cfg),
            Experiment::OmegaZoo => omega_zoo::run(cfg),
        }?;
        Ok(out.finish())
    }
}

impl FromStr for Experiment {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| {
            let names: Vec<_> = Experiment::ALL.iter().map(|e| e.name()).collect();
            HarnessError::Usage(format!("unknown experiment '{s}'; expected one of {}", names.join(", ")))
        })
    }
}

/// Tables drawn for one run index.
pub(crate) struct Instance {
    pub reward: RewardTable<f64>,
    pub reference: ConditionalDistribution<f64>,
    pub sampler: ConditionalDistribution<f64>,
    pub omega: OmegaModel<f64>,
}

impl Instance {
    pub fn draw(cfg: &Resolved, run: u64) -> Result<Self> {
        Ok(Instance {
            reward: cfg.reward(run)?,
            reference: cfg.reference(run)?,
            sampler: cfg.sampler(run)?,
            omega: cfg.omega_model()?,
        })
    }

    /// Context with the product sampler, or `pairs` when given.
    pub fn context(&self, tau: f64, pairs: Option<PairDistribution<f64>>) -> Result<LossContext<f64>> {
        let b = LossContext::builder(self.reward.clone(), tau)
            .map_err(HarnessError::core("loss context"))?
            .reference(self.reference.clone())
            .omega(self.omega);
        let b = match pairs {
            Some(law) => b.offline_pairs(law),
            None => b.offline_sampler(self.sampler.clone()),
        };
        b.build().map_err(HarnessError::core("loss context"))
    }
}

/// Everything needed to run one training job.
pub(crate) struct Job<'a> {
    pub run: String,
    pub instance: usize,
    pub kind: LossKind,
    pub ctx: LossContext<f64>,
    pub init: SoftmaxPolicy<f64>,
    pub schedule: StepSchedule,
    pub steps: usize,
    pub mode: TrainingMode,
    pub stop: Option<&'a (dyn Fn(&StepRecord) -> bool + Sync)>,
}

impl Job<'_> {
    pub fn train(&self, threshold: f64) -> Result<(RunSummary, Trajectory)> {
        let start = Instant::now();
        let (traj, _) = run_training_until(self.kind, &self.ctx, &self.init, self.schedule, self.steps, self.mode, |r| {
            self.stop.is_some_and(|f| f(r))
        })
        .map_err(HarnessError::core(format!("run {}", self.run)))?;
        let mut summary =
            RunSummary::from_trajectory(self.run.clone(), self.instance, self.ctx.tau(), &traj, threshold);
        summary.wall = start.elapsed();
        Ok((summary, traj))
    }
}

pub(crate) fn tau_label(tau: f64) -> String {
    format!("{tau}").replace('.', "p")
}

//! Every loss converges to its own target; DPO is stationary at the
//! posterior Boltzmann policy.

use rayon::prelude::*;
use udrra_core::losses::loss_gradient;
use udrra_core::{ConditionalDistribution, LossKind, SoftmaxPolicy};

use super::{Instance, Job};
use crate::config::{Resolved, SamplerSpec};
use crate::error::{HarnessError, Result};
use crate::report::{Check, Outcome};

/// Largest `‖∇L_DPO‖²` accepted at the stationary point.
pub const DPO_STATIONARY_TOL: f64 = 1e-14;

pub fn run(cfg: &Resolved) -> Result<Outcome> {
    let kinds = cfg.loss_kinds()?;
    let instances = (0..cfg.instances)
        .map(|i| Instance::draw(cfg, i as u64))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, LossKind)> = (0..cfg.instances)
        .flat_map(|i| kinds.iter().map(move |&k| (i, k)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(i, kind)| {
            let inst = &instances[i];
            let job = Job {
                run: format!("{}_{i}", kind.name()),
                instance: i,
                kind,
                ctx: inst.context(cfg.tau, None)?,
                init: cfg.initial_policy(&inst.reference)?,
                schedule: cfg.schedule,
                steps: cfg.steps,
                mode: cfg.training_mode(i as u64),
                stop: None,
            };
            job.train(cfg.grad_threshold)
        })
        .collect::<Vec<_>>();
    let mut out = Outcome::new(cfg.clone());
    for r in results {
        let (s, t) = r?;
        out.push_run(s, t);
    }
    for &kind in &kinds {
        let worst = out
            .report
            .runs
            .iter()
            .filter(|r| r.kind == kind.name())
            .map(|r| r.final_kl)
            .fold(0.0, nan_max);
        out.check(Check::at_most(format!("{}_final_kl", kind.name()), worst, cfg.tolerance));
    }

    // Each instance's own product sampler plus a uniform one.
    let uniform = Resolved { pi0: SamplerSpec::Uniform, ..cfg.clone() };
    let random_floor = match &cfg.pi0 {
        SamplerSpec::Random { floor } => *floor,
        _ => 0.2,
    };
    let random = Resolved { pi0: SamplerSpec::Random { floor: random_floor }, ..cfg.clone() };
    for (label, c) in [("uniform", &uniform), ("random", &random)] {
        let mut worst: f64 = 0.0;
        for i in 0..cfg.instances {
            let inst = Instance::draw(c, i as u64)?;
            worst = nan_max(worst, dpo_grad_at_posterior(&inst, cfg.tau)?);
        }
        out.check(Check::at_most(
            format!("dpo_stationary_{label}_pi0"),
            worst,
            DPO_STATIONARY_TOL,
        ));
    }
    Ok(out)
}

fn dpo_grad_at_posterior(inst: &Instance, tau: f64) -> Result<f64> {
    let ctx = inst.context(tau, None)?;
    let target: &ConditionalDistribution<f64> =
        ctx.target_for(LossKind::Dpo).map_err(HarnessError::core("dpo target"))?;
    let theta = SoftmaxPolicy::from_distribution(target).map_err(HarnessError::core("dpo target"))?;
    let g = loss_gradient(LossKind::Dpo, &ctx, &theta).map_err(HarnessError::core("dpo gradient"))?;
    Ok(g.norm_sq())
}

/// `max` that propagates NaN, so a broken run can never look converged.
pub(crate) fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

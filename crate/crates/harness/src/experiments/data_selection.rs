//! Data-selection bounds: uniform pairs against margin-weighted pairs.

use rayon::prelude::*;
use serde_json::json;
use udrra_core::optimize::{check_bound_along, measured_bound_inputs, ConvergenceBound};
use udrra_core::preference::{c0_constant, margin_distribution_pi1, margin_stats};
use udrra_core::LossKind;

use super::{Instance, Job};
use crate::config::{Resolved, SamplerSpec};
use crate::error::{HarnessError, Result};
use crate::report::{BoundSummary, Check, Outcome, RunSummary};

pub fn run(cfg: &Resolved) -> Result<Outcome> {
    let (epsilon0, mus) = match &cfg.pi0 {
        SamplerSpec::Pi1 { epsilon0, mu } => (*epsilon0, mu.clone()),
        _ => return Err(HarnessError::Config("data_selection needs pi0.kind = \"pi1\"".into())),
    };
    let c0 = c0_constant(epsilon0, cfg.tau).map_err(|e| HarnessError::Config(e.to_string()))?;
    let k = cfg.spaces.responses;

    // (instance, μ) with μ = None for the uniform baseline.
    let jobs: Vec<(usize, Option<f64>)> = (0..cfg.instances)
        .flat_map(|i| std::iter::once(None).chain(mus.iter().copied().map(Some)).map(move |m| (i, m)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(i, mu)| -> Result<Option<(RunSummary, _)>> {
            let inst = Instance::draw(cfg, i as u64)?;
            let base = inst.context(cfg.tau, None)?;
            let target = base.target_for(LossKind::Dpo).map_err(HarnessError::core("dpo target"))?;
            let stats = margin_stats(target, &inst.reference, &inst.omega, &inst.reward, epsilon0)
                .map_err(HarnessError::core("margin stats"))?;
            let ctx = match mu {
                None => base.clone(),
                Some(m) => match margin_distribution_pi1(&stats, m, k) {
                    Ok(law) => inst.context(cfg.tau, Some(law))?,
                    // μγ(x) ≥ 1 for some prompt: π₁ does not exist.
                    Err(udrra_core::Error::Domain(_)) => return Ok(None),
                    Err(e) => return Err(HarnessError::core("pi1")(e)),
                },
            };
            let run = match mu {
                None => format!("uniform_{i}"),
                Some(m) => format!("pi1_mu{}_{i}", super::tau_label(m)),
            };
            let job = Job {
                run,
                instance: i,
                kind: LossKind::Dpo,
                ctx,
                init: cfg.initial_policy(&inst.reference)?,
                schedule: cfg.schedule,
                steps: cfg.steps,
                mode: cfg.training_mode(i as u64),
                stop: None,
            };
            let (mut s, t) = job.train(cfg.grad_threshold)?;
            s.mu = mu;
            let mut inputs = measured_bound_inputs(&t, &job.ctx, cfg.schedule).map_err(HarnessError::core("bound inputs"))?;
            inputs.gamma = Some(stats.gamma);
            inputs.c0 = Some(c0);
            inputs.mu = mu;
            let (which, name) = match mu {
                None => (ConvergenceBound::Lemma7, "lemma7"),
                Some(_) => (ConvergenceBound::Theorem8, "theorem8"),
            };
            let chk = check_bound_along(&t, which, inputs).map_err(HarnessError::core(name))?;
            s.bounds.push(BoundSummary::new(name, &chk));
            Ok(Some((s, t)))
        })
        .collect::<Vec<_>>();

    let mut out = Outcome::new(cfg.clone());
    let mut skipped = Vec::new();
    for (r, &(i, mu)) in results.into_iter().zip(&jobs) {
        match r? {
            Some((s, t)) => out.push_run(s, t),
            None => skipped.push(json!({ "instance": i, "mu": mu })),
        }
    }
    for (label, mu) in std::iter::once(("uniform".to_string(), None))
        .chain(mus.iter().map(|&m| (format!("mu{}", super::tau_label(m)), Some(m))))
    {
        let runs: Vec<&RunSummary> = out.report.runs.iter().filter(|r| r.mu == mu).collect();
        let bound = if mu.is_none() { "lemma7" } else { "theorem8" };
        let violations: usize = runs.iter().flat_map(|r| &r.bounds).map(|b| b.violations).sum();
        let mean_min_grad = runs.iter().map(|r| r.min_grad_norm_sq).sum::<f64>() / runs.len().max(1) as f64;
        let c = Check::at_most(format!("{bound}_{label}"), violations as f64, 0.0)
            .with_note(format!("{} runs; mean final min grad-norm² {mean_min_grad:.3e}", runs.len()));
        // A μ with no admissible instance has nothing to assert.
        let detail = json!({
            "sampler": label,
            "mu": mu,
            "runs": runs.len(),
            "mean_min_grad_norm_sq": mean_min_grad,
            "steps_to_threshold": runs.iter().map(|r| r.steps_to_threshold).collect::<Vec<_>>(),
        });
        let c = if runs.is_empty() { c.unasserted().with_note("no instance with μγ < 1") } else { c };
        out.check(c);
        out.report.details.push(detail);
    }
    if !skipped.is_empty() {
        out.report.details.push(json!({ "skipped_mu_gamma_ge_1": skipped }));
    }
    Ok(out)
}

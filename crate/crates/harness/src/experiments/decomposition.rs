//! Posterior preference loss = DPO + distribution shift + label entropy.

use serde_json::json;
use udrra_core::losses::dpo_decomposition;
use udrra_core::SoftmaxPolicy;

use super::equivalence::nan_max;
use super::Instance;
use crate::config::Resolved;
use crate::error::{HarnessError, Result};
use crate::report::{Check, Outcome};

/// `|η₁|` accepted when the policy equals the sampler.
pub const ETA1_AT_SAMPLER_TOL: f64 = 1e-12;

pub fn run(cfg: &Resolved) -> Result<Outcome> {
    let mut out = Outcome::new(cfg.clone());
    let (mut worst_residual, mut worst_eta1) = (0.0, 0.0);
    for i in 0..cfg.instances {
        let inst = Instance::draw(cfg, i as u64)?;
        let ctx = inst.context(cfg.tau, None)?;
        let policy = cfg.random_policy(i as u64, 0)?;
        let d = dpo_decomposition(&ctx, &policy).map_err(HarnessError::core(format!("draw {i}")))?;
        let at_sampler = SoftmaxPolicy::from_distribution(&inst.sampler).map_err(HarnessError::core("sampler"))?;
        let d0 = dpo_decomposition(&ctx, &at_sampler).map_err(HarnessError::core(format!("draw {i}")))?;
        worst_residual = nan_max(worst_residual, d.residual.abs());
        worst_eta1 = nan_max(worst_eta1, d0.eta1.abs());
        out.report.details.push(json!({
            "draw": i,
            "l_prap": d.l_prap,
            "l_dpo": d.l_dpo,
            "eta1": d.eta1,
            "eta2": d.eta2,
            "residual": d.residual,
            "eta1_at_sampler": d0.eta1,
        }));
    }
    out.check(Check::at_most("max_abs_residual", worst_residual, cfg.tolerance));
    out.check(Check::at_most("max_abs_eta1_at_sampler", worst_eta1, ETA1_AT_SAMPLER_TOL));
    Ok(out)
}

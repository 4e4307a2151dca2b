//! Boltzmann targets approach the argmax policy as `τ` grows.

use serde_json::json;
use udrra_core::spaces::{target_policy, tv_distance, TargetKind};
use udrra_core::PromptDistribution;

use super::equivalence::nan_max;
use crate::config::Resolved;
use crate::error::{HarnessError, Result};
use crate::report::{Check, Outcome};

/// Temperature at which the distance to `π^δ` is bounded.
pub const PROBE_TAU: f64 = 200.0;

pub fn run(cfg: &Resolved) -> Result<Outcome> {
    let mut out = Outcome::new(cfg.clone());
    let d = PromptDistribution::uniform(cfg.spaces.prompts).map_err(HarnessError::core("prompt distribution"))?;
    let mut grid = cfg.tau_grid.clone();
    grid.sort_by(f64::total_cmp);
    let (mut non_decreasing, mut worst_probe) = (0usize, 0.0);
    for i in 0..cfg.instances {
        let reward = cfg.reward(i as u64)?;
        let delta = target_policy(&reward, 1.0, TargetKind::Delta).map_err(HarnessError::core(format!("instance {i}")))?;
        let tv = |tau: f64| -> Result<f64> {
            let p = target_policy(&reward, tau, TargetKind::Boltzmann).map_err(HarnessError::core("boltzmann"))?;
            tv_distance(&p, &delta, &d).map_err(HarnessError::core("tv"))
        };
        let curve = grid.iter().map(|&t| tv(t)).collect::<Result<Vec<_>>>()?;
        non_decreasing += curve.windows(2).filter(|w| !(w[1] < w[0])).count();
        let probe = tv(PROBE_TAU)?;
        worst_probe = nan_max(worst_probe, probe);
        out.report.details.push(json!({ "instance": i, "tau": grid, "tv": curve, "tv_at_probe": probe }));
    }
    out.check(
        Check::at_most("non_decreasing_steps", non_decreasing as f64, 0.0)
            .with_note("adjacent grid points where TV failed to drop strictly"),
    );
    out.check(Check::at_most(format!("tv_at_tau{PROBE_TAU}"), worst_probe, cfg.tolerance));
    Ok(out)
}

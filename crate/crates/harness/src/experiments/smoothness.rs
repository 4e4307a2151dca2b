//! Hessian spectral radius against the closed-form smoothness coefficients.

use rayon::prelude::*;
use serde_json::json;
use udrra_core::analysis::{check_smoothness, HessianOptions};
use udrra_core::LossKind;

use super::{tau_label, Instance};
use crate::config::Resolved;
use crate::error::{HarnessError, Result};
use crate::report::{Check, Outcome};

/// Kinds whose coefficient is asserted; the rest are reported only.
pub const ASSERTED: [LossKind; 2] = [LossKind::Dpo, LossKind::ReverseBda];

pub fn run(cfg: &Resolved) -> Result<Outcome> {
    let kinds = cfg.loss_kinds()?;
    let inst = Instance::draw(cfg, 0)?;
    let policies = (0..cfg.policies)
        .map(|i| cfg.random_policy(0, i as u64))
        .collect::<Result<Vec<_>>>()?;
    let opts = HessianOptions::default();
    let mut out = Outcome::new(cfg.clone());
    for &tau in &cfg.tau_grid {
        let ctx = inst.context(tau, None)?;
        for &kind in &kinds {
            let reports = policies
                .par_iter()
                .enumerate()
                .map(|(i, p)| {
                    check_smoothness(kind, &ctx, p, i as u64, &opts)
                        .map_err(HarnessError::core(format!("{} at tau {tau}, policy {i}", kind.name())))
                })
                .collect::<Result<Vec<_>>>()?;
            let rate = |f: fn(&udrra_core::analysis::HessianReport) -> Option<bool>| {
                let hits: Vec<bool> = reports.iter().filter_map(f).collect();
                (!hits.is_empty()).then(|| hits.iter().filter(|&&b| b).count() as f64 / hits.len() as f64)
            };
            let primary = rate(|r| r.satisfied);
            let alt = rate(|r| r.satisfied_alt);
            let worst = reports
                .iter()
                .filter_map(|r| r.bound.map(|b| r.spectral_radius - b))
                .fold(f64::NEG_INFINITY, f64::max);
            let name = format!("{}_tau{}", kind.name(), tau_label(tau));
            match primary {
                Some(rate) if ASSERTED.contains(&kind) => {
                    out.check(
                        Check::at_most(format!("{name}_worst_excess"), worst, cfg.tolerance)
                            .with_note(format!("max rho - bound over {} policies; satisfied rate {rate}", reports.len())),
                    );
                }
                Some(rate) => out.check(Check::info(format!("{name}_satisfied_rate"), rate, "reported only")),
                None => out.check(Check::info(format!("{name}_satisfied_rate"), f64::NAN, "no closed-form coefficient")),
            }
            if let Some(a) = alt {
                out.check(Check::info(format!("{name}_alt_satisfied_rate"), a, "second published coefficient"));
            }
            let max_rho = reports.iter().map(|r| r.spectral_radius).fold(0.0, f64::max);
            out.report.details.push(json!({
                "kind": kind.name(),
                "tau": tau,
                "policies": reports.len(),
                "max_spectral_radius": max_rho,
                "satisfied_rate": primary,
                "alt_satisfied_rate": alt,
            }));
            out.hessian.extend(reports);
        }
    }
    Ok(out)
}

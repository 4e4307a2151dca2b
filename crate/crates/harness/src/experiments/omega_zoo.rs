//! Round trips, complementarity and label frequencies for every `ω` row.

use serde_json::json;
use udrra_core::preference::{sample_preference_dataset, OmegaModel, OmegaVariant};
use udrra_core::spaces::PairDistribution;
use udrra_core::{PromptDistribution, RewardTable, Table};

use super::equivalence::nan_max;
use crate::config::Resolved;
use crate::error::{HarnessError, Result};
use crate::report::{Check, Outcome};

pub const ROUND_TRIP_TOL: f64 = 1e-10;
pub const COMPLEMENT_TOL: f64 = 1e-12;

const KTO_REF: f64 = 0.2;

fn all_variants() -> Vec<OmegaVariant<f64>> {
    use OmegaVariant::*;
    vec![Bt, Ratio, Tanh, Sin, Indicator, Hinge, KtoRef(Some(KTO_REF)), SquaredSigmoid, Exponential]
}

fn model(v: OmegaVariant<f64>, eta: f64) -> Result<OmegaModel<f64>> {
    OmegaModel::new(v, eta).map_err(|e| HarnessError::Config(e.to_string()))
}

pub fn run(cfg: &Resolved) -> Result<Outcome> {
    let mut out = Outcome::new(cfg.clone());
    let reward = cfg.reward(0)?;
    let eta = cfg.omega.eta;
    // Response pairs (y1, y2) of prompt 0, both orders.
    let k = cfg.spaces.responses;
    let row = reward.row(0).to_vec();
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|a| (0..k).map(move |b| (a, b))).filter(|(a, b)| a != b).collect();

    for v in all_variants() {
        let m = model(v, eta)?;
        let mut worst: Option<f64> = None;
        for &(a, b) in &pairs {
            let (ra, rb) = (row[a], row[b]);
            let err = match v {
                OmegaVariant::KtoRef(_) => {
                    let p1 = m.eval(ra, rb).map_err(HarnessError::core("kto"))?.p;
                    let p0 = m.eval(rb, ra).map_err(HarnessError::core("kto"))?.p;
                    m.inverse_kto(p1, p0).map(|d| (d - (ra - rb)).abs())
                }
                OmegaVariant::Exponential if ra > rb => continue,
                OmegaVariant::Sin if (ra - rb).abs() > std::f64::consts::FRAC_PI_2 => continue,
                _ => {
                    let p = m.eval(ra, rb).map_err(HarnessError::core("omega"))?.p;
                    m.inverse(p).map(|d| (d - (ra - rb)).abs())
                }
            };
            match err {
                Ok(e) => worst = Some(nan_max(worst.unwrap_or(0.0), e)),
                Err(udrra_core::Error::Unsupported(_)) => break,
                Err(e) => return Err(HarnessError::core(format!("{} inverse", m.name()))(e)),
            }
        }
        if v == OmegaVariant::Indicator {
            worst = None;
        }
        match worst {
            Some(w) => {
                out.check(Check::at_most(format!("round_trip_{}", m.name()), w, ROUND_TRIP_TOL));
            }
            None => out.check(Check::info(format!("round_trip_{}", m.name()), f64::NAN, "not invertible")),
        }
        if m.is_symmetric() {
            let mut worst: f64 = 0.0;
            for &(a, b) in &pairs {
                let s = m.eval(row[a], row[b]).map_err(HarnessError::core("omega"))?.p
                    + m.eval(row[b], row[a]).map_err(HarnessError::core("omega"))?.p;
                worst = nan_max(worst, (s - 1.0).abs());
            }
            out.check(Check::at_most(format!("complementarity_{}", m.name()), worst, COMPLEMENT_TOL));
        }
    }

    // Label frequency for each ordered pair of prompt 0, one variant at a time.
    let n = cfg.samples;
    let single = PromptDistribution::uniform(1).map_err(HarnessError::core("prompt distribution"))?;
    for (vi, v) in all_variants().into_iter().enumerate() {
        let m = model(v, eta)?;
        let mut worst: f64 = 0.0;
        let mut rows = Vec::new();
        for (pi, &(a, b)) in pairs.iter().enumerate().filter(|(i, _)| i % 5 == 0) {
            let r2 = RewardTable::from_rows(vec![vec![row[a], row[b]]]).map_err(HarnessError::core("reward"))?;
            let mut t = Table::<f64>::zeros(2, 2);
            t.set(0, 1, 1.0);
            let law = PairDistribution::joint(vec![t]).map_err(HarnessError::core("pair law"))?;
            let want = m.eval(row[a], row[b]).map_err(HarnessError::core("omega"))?.p;
            let seed = cfg.seed ^ ((vi as u64) << 32 | pi as u64);
            let data = sample_preference_dataset(&law, &single, &m, &r2, n, seed)
                .map_err(HarnessError::core(format!("{} sampling", m.name())))?;
            let freq = data.pairs.iter().filter(|p| p.winner == 0).count() as f64 / n as f64;
            worst = nan_max(worst, (freq - want).abs());
            rows.push(json!({ "y1": a, "y2": b, "p_star": want, "frequency": freq }));
        }
        out.check(Check::at_most(format!("frequency_{}", m.name()), worst, cfg.tolerance));
        out.report.details.push(json!({ "omega": m.name(), "eta": eta, "samples": n, "pairs": rows }));
    }
    Ok(out)
}

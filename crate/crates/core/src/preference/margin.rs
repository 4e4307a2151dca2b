//! Margin events used for data selection.

use super::omega::{OmegaModel, OmegaVariant};
use crate::error::{domain, Result};
use crate::scalar::{sigmoid, Real};
use crate::spaces::{ConditionalDistribution, PairDistribution, RewardTable};
use crate::table::Table;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarginConfig<S> {
    pub epsilon0: S,
    pub mu: S,
}

impl<S: Real> MarginConfig<S> {
    pub fn new(epsilon0: S, mu: S) -> Result<Self> {
        if !(epsilon0 > S::zero()) || !(mu > S::zero()) {
            return domain(format!("margin threshold {epsilon0} and weight {mu} must be positive"));
        }
        Ok(MarginConfig { epsilon0, mu })
    }
}

/// Fractions of ordered pairs that clear both margin thresholds.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginStats<S> {
    /// `γ(x)` per prompt.
    pub gamma_per_prompt: Vec<S>,
    /// `max_x γ(x)`.
    pub gamma: S,
    /// Membership in `Ω₁ ∩ Ω₂`, one `K×K` table per prompt.
    pub in_set: Vec<Table<bool>>,
}

/// Enumerates `Ω₁ ∩ Ω₂` for every prompt.
///
/// `Ω₁` holds pairs whose true log-odds `ln(p*(1)/p*(0))` reach `ε₀` in
/// magnitude, `Ω₂` those whose log-ratio `ln(π(y1)π_ref(y2) / (π(y2)π_ref(y1)))`
/// does.
pub fn margin_stats<S: Real>(
    pi: &ConditionalDistribution<S>,
    reference: &ConditionalDistribution<S>,
    omega: &OmegaModel<S>,
    reward: &RewardTable<S>,
    epsilon0: S,
) -> Result<MarginStats<S>> {
    if !(epsilon0 > S::zero()) {
        return domain(format!("margin threshold must be positive, got {epsilon0}"));
    }
    if omega.variant == OmegaVariant::Indicator {
        return domain("indicator omega has undefined log-odds");
    }
    pi.table().same_shape(reference.table())?;
    reward.table().same_shape(pi.table())?;
    reference.require_positive("reference policy")?;
    pi.require_positive("policy")?;
    let spaces = reward.spaces();
    let k = spaces.n_responses;
    let kk = S::lit((k * k) as f64);
    let mut gamma_per_prompt = Vec::with_capacity(spaces.n_prompts);
    let mut in_set = Vec::with_capacity(spaces.n_prompts);
    for x in 0..spaces.n_prompts {
        let row = reward.row(x);
        let mut mask = Table::filled(k, k, false);
        let mut count = 0usize;
        for y1 in 0..k {
            for y2 in 0..k {
                let p1 = omega.eval_in_row(row, y1, y2)?.p;
                let p0 = omega.eval_in_row(row, y2, y1)?.p;
                if !(p1 > S::zero() && p0 > S::zero()) {
                    return domain(format!(
                        "comparison probability vanishes at ({x}, {y1}, {y2}); log-odds undefined"
                    ));
                }
                let odds = (p1.ln() - p0.ln()).abs();
                let ratio = ((pi.prob(x, y1).ln() - reference.prob(x, y1).ln())
                    - (pi.prob(x, y2).ln() - reference.prob(x, y2).ln()))
                .abs();
                if odds >= epsilon0 && ratio >= epsilon0 {
                    mask.set(y1, y2, true);
                    count += 1;
                }
            }
        }
        gamma_per_prompt.push(S::lit(count as f64) / kk);
        in_set.push(mask);
    }
    let gamma = gamma_per_prompt.iter().copied().fold(S::zero(), S::max);
    Ok(MarginStats {
        gamma_per_prompt,
        gamma,
        in_set,
    })
}

/// The margin-weighted pair law `π₁`: mass `μ/K²` on `Ω₁ ∩ Ω₂` and the
/// remainder spread evenly elsewhere.
pub fn margin_distribution_pi1<S: Real>(
    stats: &MarginStats<S>,
    mu: S,
    k: usize,
) -> Result<PairDistribution<S>> {
    if !(mu > S::zero()) {
        return domain(format!("margin weight must be positive, got {mu}"));
    }
    let kk = S::lit((k * k) as f64);
    let mut tables = Vec::with_capacity(stats.in_set.len());
    for (x, (mask, &g)) in stats.in_set.iter().zip(&stats.gamma_per_prompt).enumerate() {
        if mask.rows() != k || mask.cols() != k {
            return domain(format!("margin mask {x} is not {k}x{k}"));
        }
        if mu * g >= S::one() || g >= S::one() {
            return domain(format!("μγ(x) = {} at prompt {x} must stay below 1", mu * g));
        }
        let inside = mu / kk;
        let outside = (S::one() - mu * g) / ((S::one() - g) * kk);
        tables.push(mask.map(|&m| if m { inside } else { outside }));
    }
    PairDistribution::joint(tables)
}

/// `σ(ε₀/τ)σ(−ε₀/τ) − 1`.
pub fn c0_constant<S: Real>(epsilon0: S, tau: S) -> Result<S> {
    if !(epsilon0 > S::zero()) || !(tau > S::zero()) {
        return domain("c0 needs positive epsilon0 and tau");
    }
    let z = epsilon0 / tau;
    Ok(sigmoid(z) * sigmoid(-z) - S::one())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaces::{target_policy, TargetKind};

    fn instance() -> (RewardTable<f64>, ConditionalDistribution<f64>) {
        let r = RewardTable::from_rows(vec![vec![0.1, 0.5, 0.9], vec![0.7, 0.2, 0.4]]).unwrap();
        let reference =
            ConditionalDistribution::from_rows(vec![vec![0.2, 0.5, 0.3], vec![0.4, 0.4, 0.2]]).unwrap();
        (r, reference)
    }

    #[test]
    fn tiny_threshold_at_posterior_target_counts_off_diagonal() {
        let (r, reference) = instance();
        let post = target_policy(&r, 1.0, TargetKind::Posterior(&reference)).unwrap();
        let s = margin_stats(&post, &reference, &OmegaModel::bt(), &r, 1e-9).unwrap();
        for &g in &s.gamma_per_prompt {
            assert!((g - 6.0 / 9.0).abs() < 1e-15);
        }
        assert!(!s.in_set[0].get(1, 1));
    }

    #[test]
    fn huge_threshold_or_reference_policy_gives_zero() {
        let (r, reference) = instance();
        let post = target_policy(&r, 1.0, TargetKind::Posterior(&reference)).unwrap();
        assert_eq!(margin_stats(&post, &reference, &OmegaModel::bt(), &r, 50.0).unwrap().gamma, 0.0);
        assert_eq!(margin_stats(&reference, &reference, &OmegaModel::bt(), &r, 1e-9).unwrap().gamma, 0.0);
    }

    #[test]
    fn indicator_is_rejected() {
        let (r, reference) = instance();
        let ind = OmegaModel::new(OmegaVariant::Indicator, 1.0).unwrap();
        assert!(margin_stats(&reference, &reference, &ind, &r, 0.1).is_err());
    }

    fn stats_with(gamma: f64, k: usize, in_count: usize) -> MarginStats<f64> {
        let mut mask = Table::filled(k, k, false);
        for i in 0..in_count {
            mask.as_mut_slice()[i] = true;
        }
        MarginStats {
            gamma_per_prompt: vec![gamma],
            gamma,
            in_set: vec![mask],
        }
    }

    #[test]
    fn pi1_examples() {
        let s = stats_with(0.25, 2, 1);
        let d = margin_distribution_pi1(&s, 0.5, 2).unwrap();
        assert!((d.weight(0, 0, 0) - 0.125).abs() < 1e-15);
        for (a, b) in [(0, 1), (1, 0), (1, 1)] {
            assert!((d.weight(0, a, b) - 0.875 / 3.0).abs() < 1e-15);
        }
        let uni = margin_distribution_pi1(&s, 1.0, 2).unwrap();
        assert!((uni.weight(0, 0, 0) - 0.25).abs() < 1e-15);
        assert!((uni.weight(0, 1, 1) - 0.25).abs() < 1e-15);
        let empty = stats_with(0.0, 3, 0);
        let d = margin_distribution_pi1(&empty, 3.0, 3).unwrap();
        assert!((d.weight(0, 2, 1) - 1.0 / 9.0).abs() < 1e-15);
        assert!(margin_distribution_pi1(&s, 4.0, 2).is_err());
    }

    #[test]
    fn c0_examples() {
        assert!((c0_constant(1e-12_f64, 1.0).unwrap() + 0.75).abs() < 1e-12);
        assert!((c0_constant(1e3_f64, 1.0).unwrap() + 1.0).abs() < 1e-12);
        let e = 1.0_f64;
        let expected = (1.0 / (1.0 + (-e).exp())) * (1.0 / (1.0 + e.exp())) - 1.0;
        assert!((c0_constant(2.0_f64, 2.0).unwrap() - expected).abs() < 1e-15);
        assert!((c0_constant(2.0_f64, 2.0).unwrap() + 0.8034).abs() < 1e-3);
    }
}

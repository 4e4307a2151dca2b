//! Random problem instances.

use rand::Rng;

use crate::error::{domain, Result};
use crate::policy::SoftmaxPolicy;
use crate::scalar::Real;
use crate::spaces::{ConditionalDistribution, FiniteSpaces, RewardTable};
use crate::table::Table;

/// Rewards drawn independently from `U[lo, hi]`.
pub fn random_reward<S: Real, R: Rng + ?Sized>(
    spaces: FiniteSpaces,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> Result<RewardTable<S>> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return domain(format!("reward range [{lo}, {hi}] is empty"));
    }
    let data = (0..spaces.params())
        .map(|_| S::lit(rng.random_range(lo..hi)))
        .collect();
    RewardTable::new(Table::new(spaces.n_prompts, spaces.n_responses, data)?)
}

/// A strictly positive distribution with unnormalized masses in `[floor, 1)`.
pub fn random_distribution<S: Real, R: Rng + ?Sized>(
    spaces: FiniteSpaces,
    floor: f64,
    rng: &mut R,
) -> Result<ConditionalDistribution<S>> {
    if !(floor > 0.0 && floor < 1.0) {
        return domain(format!("mass floor {floor} outside (0, 1)"));
    }
    let mut t = Table::<f64>::zeros(spaces.n_prompts, spaces.n_responses);
    for x in 0..spaces.n_prompts {
        let row = t.row_mut(x);
        for v in row.iter_mut() {
            *v = rng.random_range(floor..1.0);
        }
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    ConditionalDistribution::new(t.map(|&v| S::lit(v)))
}

/// Logits drawn from `U[-scale, scale]`.
pub fn random_policy<S: Real, R: Rng + ?Sized>(
    spaces: FiniteSpaces,
    scale: f64,
    rng: &mut R,
) -> Result<SoftmaxPolicy<S>> {
    if !(scale > 0.0) || !scale.is_finite() {
        return domain(format!("logit scale must be positive, got {scale}"));
    }
    let data = (0..spaces.params())
        .map(|_| S::lit(rng.random_range(-scale..scale)))
        .collect();
    SoftmaxPolicy::new(Table::new(spaces.n_prompts, spaces.n_responses, data)?)
}

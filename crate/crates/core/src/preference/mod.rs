//! Comparison probabilities, preference data and margin-based selection.

mod dataset;
mod margin;
mod omega;
mod reward_model;

pub use dataset::{
    sample_preference_dataset, sample_preference_dataset_with, PreferenceDataset, PreferencePair,
    PAIR_RETRY_CAP,
};
pub use margin::{c0_constant, margin_distribution_pi1, margin_stats, MarginConfig, MarginStats};
pub use omega::{omega_inverse, Comparison, OmegaModel, OmegaVariant};
pub use reward_model::fit_reward_model;

use crate::error::{domain, Error, Result};
use crate::policy::SoftmaxPolicy;
use crate::scalar::{xlogy, Real};
use crate::spaces::{ConditionalDistribution, RewardTable};

/// Which implicit reward feeds `ω` in [`model_comparison_prob`].
#[derive(Clone, Copy, Debug)]
pub enum ComparisonMode<'a, S> {
    /// `r_θ`.
    Plain,
    /// `r̄_θ` relative to a reference policy.
    Posterior(&'a ConditionalDistribution<S>),
}

/// `p*(1 | y1, y2, x) = ω(r(x,y1), r(x,y2))`.
pub fn true_comparison_prob<S: Real>(
    omega: &OmegaModel<S>,
    reward: &RewardTable<S>,
    x: usize,
    y1: usize,
    y2: usize,
) -> Result<Comparison<S>> {
    let s = reward.spaces();
    if x >= s.n_prompts || y1 >= s.n_responses || y2 >= s.n_responses {
        return Err(Error::Shape(format!("index ({x}, {y1}, {y2}) out of range")));
    }
    omega.eval_in_row(reward.row(x), y1, y2)
}

/// `ω` applied to the policy's implicit rewards.
///
/// `log_partition` is `ln Z(x)` in plain mode and `ln Z'(x)` in posterior
/// mode. It cancels for every difference-based `ω`; only `ratio` and an
/// unset-reference `kto_ref` depend on it.
#[allow(clippy::too_many_arguments)]
pub fn model_comparison_prob<S: Real>(
    omega: &OmegaModel<S>,
    policy: &SoftmaxPolicy<S>,
    tau: S,
    mode: ComparisonMode<'_, S>,
    log_partition: S,
    x: usize,
    y1: usize,
    y2: usize,
) -> Result<Comparison<S>> {
    if !(tau > S::zero()) {
        return domain(format!("temperature must be positive, got {tau}"));
    }
    let s = policy.spaces();
    if x >= s.n_prompts || y1 >= s.n_responses || y2 >= s.n_responses {
        return Err(Error::Shape(format!("index ({x}, {y1}, {y2}) out of range")));
    }
    let mut row = vec![S::zero(); s.n_responses];
    crate::scalar::log_softmax_into(policy.logits().row(x), &mut row);
    if let ComparisonMode::Posterior(reference) = mode {
        policy.logits().same_shape(reference.table())?;
        for (v, &p) in row.iter_mut().zip(reference.row(x)) {
            if p <= S::zero() {
                return domain(format!("reference policy has zero mass at prompt {x}"));
            }
            *v = *v - p.ln();
        }
    }
    for v in row.iter_mut() {
        *v = (log_partition + *v) / tau;
    }
    omega.eval_in_row(&row, y1, y2)
}

/// `M(p) = p ln p + (1 − p) ln(1 − p)`.
pub fn entropy_term_m<S: Real>(p: S) -> S {
    let q = S::one() - p;
    xlogy(p, p) + xlogy(q, q)
}

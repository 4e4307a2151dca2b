//! Tabular reward model fitted by pairwise logistic regression.

use super::dataset::PreferenceDataset;
use crate::error::{domain, Result};
use crate::scalar::{sigmoid, Real};
use crate::spaces::{FiniteSpaces, RewardTable};
use crate::table::Table;

/// Full-batch gradient descent on `mean(−ln σ(r_φ(x,y_w) − r_φ(x,y_l)))`
/// starting from `r_φ ≡ 0`.
pub fn fit_reward_model<S: Real>(
    dataset: &PreferenceDataset,
    spaces: FiniteSpaces,
    steps: usize,
    lr: S,
) -> Result<RewardTable<S>> {
    if dataset.is_empty() {
        return domain("cannot fit a reward model to an empty dataset");
    }
    if !(lr > S::zero()) {
        return domain(format!("learning rate must be positive, got {lr}"));
    }
    dataset.check_spaces(spaces)?;
    let n = S::lit(dataset.len() as f64);
    let mut r = Table::<S>::zeros(spaces.n_prompts, spaces.n_responses);
    let mut grad = Table::<S>::zeros(spaces.n_prompts, spaces.n_responses);
    for _ in 0..steps {
        grad.as_mut_slice().iter_mut().for_each(|g| *g = S::zero());
        for p in &dataset.pairs {
            let m = r.get(p.prompt, p.winner) - r.get(p.prompt, p.loser);
            let g = sigmoid(-m) / n;
            grad.set(p.prompt, p.winner, grad.get(p.prompt, p.winner) - g);
            grad.set(p.prompt, p.loser, grad.get(p.prompt, p.loser) + g);
        }
        r.add_scaled(&grad, -lr);
    }
    RewardTable::new(r)
}

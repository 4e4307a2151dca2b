//! Softmax-parameterized tabular policy and the quantities derived from it.

use crate::error::{domain, Error, Result};
use crate::scalar::{log_softmax_into, softmax_into, Real};
use crate::spaces::{ConditionalDistribution, FiniteSpaces, RewardTable};
use crate::table::Table;

/// Trainable logit table `θ(x, y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxPolicy<S> {
    logits: Table<S>,
}

/// `∂L/∂θ(x, y)`, shaped like the logits.
pub type GradientTable<S> = Table<S>;

/// Starting point for training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Initialization {
    /// All-zero logits, i.e. the uniform policy.
    #[default]
    Zero,
    /// `θ = ln π_ref`.
    Reference,
}

impl<S: Real> SoftmaxPolicy<S> {
    pub fn new(logits: Table<S>) -> Result<Self> {
        FiniteSpaces::new(logits.rows(), logits.cols())?;
        if !logits.all_finite() {
            return domain("logits must be finite");
        }
        Ok(SoftmaxPolicy { logits })
    }

    pub fn from_rows(rows: Vec<Vec<S>>) -> Result<Self> {
        SoftmaxPolicy::new(Table::from_rows(rows)?)
    }

    pub fn zeros(spaces: FiniteSpaces) -> Self {
        SoftmaxPolicy {
            logits: Table::zeros(spaces.n_prompts, spaces.n_responses),
        }
    }

    /// Logits `ln π`, so that the induced policy equals `pi`.
    pub fn from_distribution(pi: &ConditionalDistribution<S>) -> Result<Self> {
        pi.require_positive("initial distribution")?;
        SoftmaxPolicy::new(pi.table().map(|p| p.ln()))
    }

    pub fn initialize(
        init: Initialization,
        spaces: FiniteSpaces,
        reference: Option<&ConditionalDistribution<S>>,
    ) -> Result<Self> {
        match init {
            Initialization::Zero => Ok(SoftmaxPolicy::zeros(spaces)),
            Initialization::Reference => {
                let r = reference
                    .ok_or_else(|| Error::Config("reference initialization needs π_ref".into()))?;
                SoftmaxPolicy::from_distribution(r)
            }
        }
    }

    pub fn logits(&self) -> &Table<S> {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut Table<S> {
        &mut self.logits
    }

    pub fn spaces(&self) -> FiniteSpaces {
        FiniteSpaces {
            n_prompts: self.logits.rows(),
            n_responses: self.logits.cols(),
        }
    }

    /// `π_θ(·|x)` for every prompt.
    pub fn probs(&self) -> ConditionalDistribution<S> {
        let mut out = Table::zeros(self.logits.rows(), self.logits.cols());
        for x in 0..self.logits.rows() {
            softmax_into(self.logits.row(x), out.row_mut(x));
        }
        ConditionalDistribution::from_table_unchecked(out)
    }

    /// `ln π_θ(·|x)` for every prompt.
    pub fn log_probs(&self) -> Table<S> {
        let mut out = Table::zeros(self.logits.rows(), self.logits.cols());
        for x in 0..self.logits.rows() {
            log_softmax_into(self.logits.row(x), out.row_mut(x));
        }
        out
    }

    /// `θ ← θ − α g`.
    pub fn step(&mut self, grad: &GradientTable<S>, alpha: S) {
        self.logits.add_scaled(grad, -alpha);
    }
}

/// `π_θ`. Free-function form of [`SoftmaxPolicy::probs`].
pub fn policy_probs<S: Real>(policy: &SoftmaxPolicy<S>) -> ConditionalDistribution<S> {
    policy.probs()
}

fn check_tau<S: Real>(tau: S) -> Result<()> {
    if !(tau > S::zero()) || !tau.is_finite() {
        return domain(format!("temperature must be positive and finite, got {tau}"));
    }
    Ok(())
}

fn check_len(n: usize, got: usize, what: &str) -> Result<()> {
    if n != got {
        return Err(Error::Shape(format!("{what} has {got} entries for {n} prompts")));
    }
    Ok(())
}

/// `r_θ(x,y) = (ln Z(x) + ln π_θ(y|x)) / τ`. Takes `ln Z`.
pub fn implicit_reward<S: Real>(
    policy: &SoftmaxPolicy<S>,
    tau: S,
    log_z: &[S],
) -> Result<RewardTable<S>> {
    check_tau(tau)?;
    check_len(policy.spaces().n_prompts, log_z.len(), "partition vector")?;
    let mut out = policy.log_probs();
    for x in 0..out.rows() {
        for v in out.row_mut(x) {
            *v = (log_z[x] + *v) / tau;
        }
    }
    if !out.all_finite() {
        return Err(Error::Numeric("implicit reward is not finite".into()));
    }
    RewardTable::new(out)
}

/// `r̄_θ(x,y) = (ln Z'(x) + ln π_θ(y|x) − ln π_ref(y|x)) / τ`. Takes `ln Z'`.
pub fn posterior_implicit_reward<S: Real>(
    policy: &SoftmaxPolicy<S>,
    reference: &ConditionalDistribution<S>,
    tau: S,
    log_z_prime: &[S],
) -> Result<RewardTable<S>> {
    check_tau(tau)?;
    policy.logits().same_shape(reference.table())?;
    reference.require_positive("reference policy")?;
    check_len(policy.spaces().n_prompts, log_z_prime.len(), "partition vector")?;
    let mut out = policy.log_probs();
    for x in 0..out.rows() {
        for (v, &r) in out.row_mut(x).iter_mut().zip(reference.row(x)) {
            *v = (log_z_prime[x] + *v - r.ln()) / tau;
        }
    }
    if !out.all_finite() {
        return Err(Error::Numeric("posterior implicit reward is not finite".into()));
    }
    RewardTable::new(out)
}

/// `h̄_θ(x, y1, y2)` computed from precomputed log-probabilities.
#[inline]
pub(crate) fn margin_from_logs<S: Real>(
    log_pi: &[S],
    log_ref: &[S],
    tau: S,
    y1: usize,
    y2: usize,
) -> S {
    ((log_pi[y1] - log_ref[y1]) - (log_pi[y2] - log_ref[y2])) / tau
}

/// `(1/τ)[ln(π_θ(y1|x)/π_ref(y1|x)) − ln(π_θ(y2|x)/π_ref(y2|x))]`.
pub fn log_ratio_margin<S: Real>(
    policy: &SoftmaxPolicy<S>,
    reference: &ConditionalDistribution<S>,
    tau: S,
    x: usize,
    y1: usize,
    y2: usize,
) -> Result<S> {
    check_tau(tau)?;
    policy.logits().same_shape(reference.table())?;
    let spaces = policy.spaces();
    if x >= spaces.n_prompts || y1 >= spaces.n_responses || y2 >= spaces.n_responses {
        return Err(Error::Shape(format!("index ({x}, {y1}, {y2}) out of range")));
    }
    for y in [y1, y2] {
        if reference.prob(x, y) <= S::zero() {
            return domain(format!("reference policy has zero mass at ({x}, {y})"));
        }
    }
    if y1 == y2 {
        return Ok(S::zero());
    }
    let mut log_pi = vec![S::zero(); spaces.n_responses];
    log_softmax_into(policy.logits().row(x), &mut log_pi);
    let log_ref: Vec<S> = reference.row(x).iter().map(|p| p.ln()).collect();
    Ok(margin_from_logs(&log_pi, &log_ref, tau, y1, y2))
}

/// `∂π_θ(y|x)/∂θ(x,y') = π(y)(δ_{yy'} − π(y'))` as a `K×K` table.
pub fn softmax_jacobian<S: Real>(policy: &SoftmaxPolicy<S>, x: usize) -> Result<Table<S>> {
    let k = policy.spaces().n_responses;
    if x >= policy.spaces().n_prompts {
        return Err(Error::Shape(format!("prompt {x} out of range")));
    }
    let mut pi = vec![S::zero(); k];
    softmax_into(policy.logits().row(x), &mut pi);
    let mut out = Table::zeros(k, k);
    for y in 0..k {
        for yp in 0..k {
            let delta = if y == yp { S::one() } else { S::zero() };
            out.set(y, yp, pi[y] * (delta - pi[yp]));
        }
    }
    Ok(out)
}

/// Largest gap between any two logits in the table.
pub fn logit_diameter<S: Real>(policy: &SoftmaxPolicy<S>) -> S {
    let s = policy.logits().as_slice();
    let lo = s.iter().copied().fold(S::infinity(), S::min);
    let hi = s.iter().copied().fold(S::neg_infinity(), S::max);
    hi - lo
}

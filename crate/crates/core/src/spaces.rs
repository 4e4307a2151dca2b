//! Finite prompt/response spaces, reward tables and the target distributions
//! built from them.

use crate::error::{domain, Error, Result};
use crate::scalar::{log_sum_exp, xlogy, Real};
use crate::table::Table;

/// Sizes of the prompt set and the response set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FiniteSpaces {
    pub n_prompts: usize,
    pub n_responses: usize,
}

impl FiniteSpaces {
    pub fn new(n_prompts: usize, n_responses: usize) -> Result<Self> {
        if n_prompts == 0 {
            return domain("at least one prompt is required");
        }
        if n_responses < 2 {
            return domain("pairwise comparisons need at least two responses");
        }
        Ok(FiniteSpaces {
            n_prompts,
            n_responses,
        })
    }

    pub fn params(&self) -> usize {
        self.n_prompts * self.n_responses
    }
}

/// Ground-truth reward `r(x, y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardTable<S> {
    values: Table<S>,
}

impl<S: Real> RewardTable<S> {
    pub fn new(values: Table<S>) -> Result<Self> {
        FiniteSpaces::new(values.rows(), values.cols())?;
        if !values.all_finite() {
            return domain("reward entries must be finite");
        }
        Ok(RewardTable { values })
    }

    pub fn from_rows(rows: Vec<Vec<S>>) -> Result<Self> {
        RewardTable::new(Table::from_rows(rows)?)
    }

    pub fn spaces(&self) -> FiniteSpaces {
        FiniteSpaces {
            n_prompts: self.values.rows(),
            n_responses: self.values.cols(),
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> S {
        self.values.get(x, y)
    }

    #[inline]
    pub fn row(&self, x: usize) -> &[S] {
        self.values.row(x)
    }

    pub fn table(&self) -> &Table<S> {
        &self.values
    }
}

/// Distribution `d` over prompts.
#[derive(Clone, Debug, PartialEq)]
pub struct PromptDistribution<S> {
    weights: Vec<S>,
}

impl<S: Real> PromptDistribution<S> {
    pub fn new(weights: Vec<S>) -> Result<Self> {
        if weights.is_empty() {
            return domain("prompt distribution is empty");
        }
        let weights = normalized(&weights).map_err(|e| match e {
            Error::Domain(m) => Error::Domain(format!("prompt distribution: {m}")),
            other => other,
        })?;
        Ok(PromptDistribution { weights })
    }

    pub fn uniform(n_prompts: usize) -> Result<Self> {
        if n_prompts == 0 {
            return domain("at least one prompt is required");
        }
        let w = S::one() / S::lit(n_prompts as f64);
        Ok(PromptDistribution {
            weights: vec![w; n_prompts],
        })
    }

    #[inline]
    pub fn weight(&self, x: usize) -> S {
        self.weights[x]
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

fn normalized<S: Real>(v: &[S]) -> Result<Vec<S>> {
    if v.iter().any(|p| !p.is_finite() || *p < S::zero()) {
        return domain("probabilities must be finite and nonnegative");
    }
    let total: S = v.iter().copied().sum();
    if (total - S::one()).abs() > S::normalization_tolerance() {
        return domain(format!("probabilities sum to {total}, not 1"));
    }
    Ok(v.iter().map(|&p| p / total).collect())
}

/// A row-stochastic table `π(y|x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalDistribution<S> {
    rows: Table<S>,
}

impl<S: Real> ConditionalDistribution<S> {
    /// Validates and renormalizes every row. Rows off by more than the
    /// scalar's normalization tolerance are rejected.
    pub fn new(rows: Table<S>) -> Result<Self> {
        let mut rows = rows;
        for x in 0..rows.rows() {
            let fixed = normalized(rows.row(x))
                .map_err(|e| Error::Domain(format!("row {x}: {e}")))?;
            rows.row_mut(x).copy_from_slice(&fixed);
        }
        Ok(ConditionalDistribution { rows })
    }

    pub fn from_rows(rows: Vec<Vec<S>>) -> Result<Self> {
        ConditionalDistribution::new(Table::from_rows(rows)?)
    }

    pub fn uniform(spaces: FiniteSpaces) -> Self {
        let p = S::one() / S::lit(spaces.n_responses as f64);
        ConditionalDistribution {
            rows: Table::filled(spaces.n_prompts, spaces.n_responses, p),
        }
    }

    /// Builds a distribution from per-row log-probabilities, normalizing in
    /// log space.
    pub fn from_log_rows(log_rows: &Table<S>) -> Self {
        let mut rows = log_rows.clone();
        for x in 0..rows.rows() {
            let lse = log_sum_exp(log_rows.row(x));
            for p in rows.row_mut(x) {
                *p = (*p - lse).exp();
            }
        }
        ConditionalDistribution { rows }
    }

    pub(crate) fn from_table_unchecked(rows: Table<S>) -> Self {
        ConditionalDistribution { rows }
    }

    #[inline]
    pub fn prob(&self, x: usize, y: usize) -> S {
        self.rows.get(x, y)
    }

    #[inline]
    pub fn row(&self, x: usize) -> &[S] {
        self.rows.row(x)
    }

    pub fn table(&self) -> &Table<S> {
        &self.rows
    }

    pub fn spaces(&self) -> FiniteSpaces {
        FiniteSpaces {
            n_prompts: self.rows.rows(),
            n_responses: self.rows.cols(),
        }
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.rows.as_slice().iter().all(|&p| p > S::zero())
    }

    pub(crate) fn require_positive(&self, what: &str) -> Result<()> {
        for x in 0..self.rows.rows() {
            for (y, &p) in self.row(x).iter().enumerate() {
                if p <= S::zero() {
                    return domain(format!("{what} has zero mass at ({x}, {y})"));
                }
            }
        }
        Ok(())
    }
}

/// How two responses for one prompt are drawn.
#[derive(Clone, Debug, PartialEq)]
pub enum PairLaw<S> {
    /// `y1, y2` independent draws from the same conditional.
    Product(ConditionalDistribution<S>),
    /// An explicit joint `K×K` table per prompt, stored row-major.
    Joint(Vec<Table<S>>),
}

/// A pair sampling law with a prompt distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct PairDistribution<S> {
    pub law: PairLaw<S>,
}

impl<S: Real> PairDistribution<S> {
    pub fn product(pi: ConditionalDistribution<S>) -> Self {
        PairDistribution {
            law: PairLaw::Product(pi),
        }
    }

    pub fn joint(tables: Vec<Table<S>>) -> Result<Self> {
        for (x, t) in tables.iter().enumerate() {
            if t.rows() != t.cols() {
                return Err(Error::Shape(format!("pair table {x} is not square")));
            }
            normalized(t.as_slice()).map_err(|e| Error::Domain(format!("pair table {x}: {e}")))?;
        }
        Ok(PairDistribution {
            law: PairLaw::Joint(tables),
        })
    }

    /// Probability of drawing `(y1, y2)` for prompt `x`.
    #[inline]
    pub fn weight(&self, x: usize, y1: usize, y2: usize) -> S {
        match &self.law {
            PairLaw::Product(pi) => pi.prob(x, y1) * pi.prob(x, y2),
            PairLaw::Joint(t) => t[x].get(y1, y2),
        }
    }

    pub fn n_responses(&self) -> usize {
        match &self.law {
            PairLaw::Product(pi) => pi.spaces().n_responses,
            PairLaw::Joint(t) => t.first().map_or(0, Table::cols),
        }
    }

    pub fn n_prompts(&self) -> usize {
        match &self.law {
            PairLaw::Product(pi) => pi.spaces().n_prompts,
            PairLaw::Joint(t) => t.len(),
        }
    }
}

/// Which optimal policy to build from a reward table.
#[derive(Clone, Copy, Debug)]
pub enum TargetKind<'a, S> {
    /// `π^τ ∝ exp(τ r)`.
    Boltzmann,
    /// `π̄^τ ∝ π_ref exp(τ r)`.
    Posterior(&'a ConditionalDistribution<S>),
    /// One-hot at the reward argmax.
    Delta,
}

/// Per-prompt log partition functions.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition<S> {
    /// `ln Z(x)`.
    pub log_z: Vec<S>,
    /// `ln Z'(x)`, present when a reference policy was supplied.
    pub log_z_prime: Option<Vec<S>>,
}

impl<S: Real> Partition<S> {
    pub fn z(&self) -> Vec<S> {
        self.log_z.iter().map(|v| v.exp()).collect()
    }

    pub fn z_prime(&self) -> Option<Vec<S>> {
        self.log_z_prime
            .as_ref()
            .map(|v| v.iter().map(|l| l.exp()).collect())
    }
}

fn check_tau<S: Real>(tau: S) -> Result<()> {
    if !(tau > S::zero()) || !tau.is_finite() {
        return domain(format!("temperature must be positive and finite, got {tau}"));
    }
    Ok(())
}

fn check_ref_shape<S: Real>(reward: &RewardTable<S>, reference: &ConditionalDistribution<S>) -> Result<()> {
    reward.table().same_shape(reference.table())
}

/// Builds `π^τ`, `π̄^τ` or `π^δ`.
pub fn target_policy<S: Real>(
    reward: &RewardTable<S>,
    tau: S,
    kind: TargetKind<'_, S>,
) -> Result<ConditionalDistribution<S>> {
    match kind {
        TargetKind::Boltzmann => {
            check_tau(tau)?;
            let logits = reward.table().map(|&r| tau * r);
            Ok(ConditionalDistribution::from_log_rows(&logits))
        }
        TargetKind::Posterior(reference) => {
            check_tau(tau)?;
            check_ref_shape(reward, reference)?;
            reference.require_positive("reference policy")?;
            let mut logits = reward.table().map(|&r| tau * r);
            for (l, &p) in logits.as_mut_slice().iter_mut().zip(reference.table().as_slice()) {
                *l = *l + p.ln();
            }
            Ok(ConditionalDistribution::from_log_rows(&logits))
        }
        TargetKind::Delta => {
            let spaces = reward.spaces();
            let mut rows = Table::zeros(spaces.n_prompts, spaces.n_responses);
            for x in 0..spaces.n_prompts {
                let y = unique_argmax(reward.row(x)).ok_or(Error::Ambiguous { prompt: x })?;
                rows.set(x, y, S::one());
            }
            Ok(ConditionalDistribution { rows })
        }
    }
}

/// Index of the strict maximum, or `None` on a tie.
pub fn unique_argmax<S: Real>(row: &[S]) -> Option<usize> {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    let ties = row.iter().filter(|&&v| v == row[best]).count();
    (ties == 1).then_some(best)
}

/// Log partition functions `ln Z(x)` and, with a reference, `ln Z'(x)`.
pub fn partition_functions<S: Real>(
    reward: &RewardTable<S>,
    tau: S,
    reference: Option<&ConditionalDistribution<S>>,
) -> Result<Partition<S>> {
    check_tau(tau)?;
    let n = reward.spaces().n_prompts;
    let mut buf = vec![S::zero(); reward.spaces().n_responses];
    let mut log_z = Vec::with_capacity(n);
    for x in 0..n {
        for (b, &r) in buf.iter_mut().zip(reward.row(x)) {
            *b = tau * r;
        }
        log_z.push(log_sum_exp(&buf));
    }
    let log_z_prime = match reference {
        None => None,
        Some(reference) => {
            check_ref_shape(reward, reference)?;
            let mut out = Vec::with_capacity(n);
            for x in 0..n {
                for ((b, &r), &p) in buf.iter_mut().zip(reward.row(x)).zip(reference.row(x)) {
                    // zero reference mass contributes nothing: ln 0 = -inf
                    *b = tau * r + p.ln();
                }
                out.push(log_sum_exp(&buf));
            }
            Some(out)
        }
    };
    Ok(Partition { log_z, log_z_prime })
}

fn check_pair<S: Real>(
    p: &ConditionalDistribution<S>,
    q: &ConditionalDistribution<S>,
    d: &PromptDistribution<S>,
) -> Result<()> {
    p.table().same_shape(q.table())?;
    if d.len() != p.spaces().n_prompts {
        return Err(Error::Shape(format!(
            "prompt distribution has {} entries for {} prompts",
            d.len(),
            p.spaces().n_prompts
        )));
    }
    Ok(())
}

/// `Σ_x d(x) KL(p(·|x) ‖ q(·|x))`.
pub fn kl_divergence<S: Real>(
    p: &ConditionalDistribution<S>,
    q: &ConditionalDistribution<S>,
    d: &PromptDistribution<S>,
) -> Result<S> {
    check_pair(p, q, d)?;
    let mut total = S::zero();
    for x in 0..d.len() {
        let mut row = S::zero();
        for (y, (&a, &b)) in p.row(x).iter().zip(q.row(x)).enumerate() {
            if a > S::zero() && b <= S::zero() {
                return Err(Error::Support {
                    prompt: x,
                    response: y,
                });
            }
            row = row + xlogy(a, a) - xlogy(a, b);
        }
        total = total + d.weight(x) * row;
    }
    // rounding can leave a tiny negative value for p ≈ q
    Ok(total.max(S::zero()))
}

/// `Σ_x d(x) · ½ Σ_y |p − q|`.
pub fn tv_distance<S: Real>(
    p: &ConditionalDistribution<S>,
    q: &ConditionalDistribution<S>,
    d: &PromptDistribution<S>,
) -> Result<S> {
    check_pair(p, q, d)?;
    let mut total = S::zero();
    for x in 0..d.len() {
        let (mut up, mut down) = (S::zero(), S::zero());
        for (&a, &b) in p.row(x).iter().zip(q.row(x)) {
            if a > b {
                up = up + (a - b);
            } else {
                down = down + (b - a);
            }
        }
        // both one-sided sums equal the half-L1 distance; near a one-hot row
        // one of them is a difference of nearly equal numbers
        total = total + d.weight(x) * up.min(down);
    }
    Ok(total.min(S::one()))
}

use super::LossKind;
use crate::error::{domain, Error, Result};
use crate::preference::{OmegaModel, PreferenceDataset};
use crate::scalar::Real;
use crate::spaces::{
    partition_functions, target_policy, ConditionalDistribution, FiniteSpaces, PairDistribution,
    Partition, PromptDistribution, RewardTable, TargetKind,
};
use crate::table::Table;

/// How the preference losses differentiate through their pair weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PraGradient {
    /// Differentiate the `π_θ(y1)π_θ(y2)` weights as well.
    #[default]
    Full,
    /// Hold the pair weights fixed at the current policy.
    Frozen,
}

/// Source of the DPO expectation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DpoMode {
    /// Exact expectation under the offline pair law and `p*`.
    #[default]
    Exact,
    /// Empirical mean over a fixed preference dataset.
    Dataset,
}

/// Sampling law for the reverse-BDA stochastic gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ReverseSampling {
    /// `y ~ π^τ`.
    #[default]
    Direct,
    /// `y ~ π_θ` with importance weight `π^τ/π_θ`.
    Importance,
}

/// Everything a loss needs besides the policy, with derived quantities
/// precomputed once.
#[derive(Clone, Debug)]
pub struct LossContext<S> {
    reward: RewardTable<S>,
    tau: S,
    prompt_dist: PromptDistribution<S>,
    reference: Option<ConditionalDistribution<S>>,
    offline: Option<PairDistribution<S>>,
    omega: OmegaModel<S>,
    dataset: Option<PreferenceDataset>,
    pub pra_gradient: PraGradient,
    pub dpo_mode: DpoMode,
    pub reverse_sampling: ReverseSampling,

    partition: Partition<S>,
    boltzmann: ConditionalDistribution<S>,
    log_boltzmann: Table<S>,
    posterior: Option<ConditionalDistribution<S>>,
    log_posterior: Option<Table<S>>,
    log_reference: Option<Table<S>>,
    p_star: Option<Vec<Table<S>>>,
}

#[derive(Clone, Debug)]
pub struct LossContextBuilder<S> {
    reward: RewardTable<S>,
    tau: S,
    prompt_dist: Option<PromptDistribution<S>>,
    reference: Option<ConditionalDistribution<S>>,
    offline: Option<PairDistribution<S>>,
    omega: OmegaModel<S>,
    dataset: Option<PreferenceDataset>,
    pra_gradient: PraGradient,
    dpo_mode: DpoMode,
    reverse_sampling: ReverseSampling,
}

impl<S: Real> LossContextBuilder<S> {
    pub fn prompt_dist(mut self, d: PromptDistribution<S>) -> Self {
        self.prompt_dist = Some(d);
        self
    }

    pub fn reference(mut self, reference: ConditionalDistribution<S>) -> Self {
        self.reference = Some(reference);
        self
    }

    /// Offline sampler `π₀` with independent pair draws.
    pub fn offline_sampler(mut self, pi0: ConditionalDistribution<S>) -> Self {
        self.offline = Some(PairDistribution::product(pi0));
        self
    }

    /// Offline pair law given directly, e.g. a margin-weighted `π₁`.
    pub fn offline_pairs(mut self, law: PairDistribution<S>) -> Self {
        self.offline = Some(law);
        self
    }

    pub fn omega(mut self, omega: OmegaModel<S>) -> Self {
        self.omega = omega;
        self
    }

    pub fn dataset(mut self, dataset: PreferenceDataset) -> Self {
        self.dataset = Some(dataset);
        self
    }

    pub fn pra_gradient(mut self, mode: PraGradient) -> Self {
        self.pra_gradient = mode;
        self
    }

    pub fn dpo_mode(mut self, mode: DpoMode) -> Self {
        self.dpo_mode = mode;
        self
    }

    pub fn reverse_sampling(mut self, mode: ReverseSampling) -> Self {
        self.reverse_sampling = mode;
        self
    }

    pub fn build(self) -> Result<LossContext<S>> {
        let spaces = self.reward.spaces();
        let tau = self.tau;
        let prompt_dist = match self.prompt_dist {
            Some(d) => d,
            None => PromptDistribution::uniform(spaces.n_prompts)?,
        };
        if prompt_dist.len() != spaces.n_prompts {
            return Err(Error::Shape(format!(
                "prompt distribution has {} entries for {} prompts",
                prompt_dist.len(),
                spaces.n_prompts
            )));
        }
        if let Some(r) = &self.reference {
            self.reward.table().same_shape(r.table())?;
            r.require_positive("reference policy")?;
        }
        if let Some(o) = &self.offline {
            if o.n_prompts() != spaces.n_prompts || o.n_responses() != spaces.n_responses {
                return Err(Error::Shape("offline sampler does not match the reward table".into()));
            }
        }
        if let Some(ds) = &self.dataset {
            ds.check_spaces(spaces)?;
        }
        let partition = partition_functions(&self.reward, tau, self.reference.as_ref())?;
        let boltzmann = target_policy(&self.reward, tau, TargetKind::Boltzmann)?;
        let log_boltzmann = log_target(&self.reward, tau, &partition.log_z, None);
        let (posterior, log_posterior, log_reference) = match &self.reference {
            Some(r) => {
                let post = target_policy(&self.reward, tau, TargetKind::Posterior(r))?;
                let lz = partition.log_z_prime.as_ref().expect("reference supplied");
                (
                    Some(post),
                    Some(log_target(&self.reward, tau, lz, Some(r))),
                    Some(r.table().map(|p| p.ln())),
                )
            }
            None => (None, None, None),
        };
        let p_star = build_p_star(&self.omega, &self.reward).ok();
        Ok(LossContext {
            reward: self.reward,
            tau,
            prompt_dist,
            reference: self.reference,
            offline: self.offline,
            omega: self.omega,
            dataset: self.dataset,
            pra_gradient: self.pra_gradient,
            dpo_mode: self.dpo_mode,
            reverse_sampling: self.reverse_sampling,
            partition,
            boltzmann,
            log_boltzmann,
            posterior,
            log_posterior,
            log_reference,
            p_star,
        })
    }
}

/// `ln π^τ` or `ln π̄^τ` straight from rewards, without exponentiating.
fn log_target<S: Real>(
    reward: &RewardTable<S>,
    tau: S,
    log_z: &[S],
    reference: Option<&ConditionalDistribution<S>>,
) -> Table<S> {
    let mut t = reward.table().map(|&r| tau * r);
    for x in 0..t.rows() {
        for (y, v) in t.row_mut(x).iter_mut().enumerate() {
            let prior = reference.map_or(S::zero(), |r| r.prob(x, y).ln());
            *v = *v + prior - log_z[x];
        }
    }
    t
}

fn build_p_star<S: Real>(omega: &OmegaModel<S>, reward: &RewardTable<S>) -> Result<Vec<Table<S>>> {
    let s = reward.spaces();
    let k = s.n_responses;
    let mut out = Vec::with_capacity(s.n_prompts);
    for x in 0..s.n_prompts {
        let mut t = Table::zeros(k, k);
        for y1 in 0..k {
            for y2 in 0..k {
                t.set(y1, y2, omega.eval_in_row(reward.row(x), y1, y2)?.p);
            }
        }
        out.push(t);
    }
    Ok(out)
}

impl<S: Real> LossContext<S> {
    pub fn builder(reward: RewardTable<S>, tau: S) -> Result<LossContextBuilder<S>> {
        if !(tau > S::zero()) || !tau.is_finite() {
            return domain(format!("temperature must be positive and finite, got {tau}"));
        }
        Ok(LossContextBuilder {
            reward,
            tau,
            prompt_dist: None,
            reference: None,
            offline: None,
            omega: OmegaModel::bt(),
            dataset: None,
            pra_gradient: PraGradient::Full,
            dpo_mode: DpoMode::Exact,
            reverse_sampling: ReverseSampling::Direct,
        })
    }

    pub fn reward(&self) -> &RewardTable<S> {
        &self.reward
    }

    pub fn tau(&self) -> S {
        self.tau
    }

    pub fn spaces(&self) -> FiniteSpaces {
        self.reward.spaces()
    }

    pub fn prompt_dist(&self) -> &PromptDistribution<S> {
        &self.prompt_dist
    }

    pub fn reference(&self) -> Option<&ConditionalDistribution<S>> {
        self.reference.as_ref()
    }

    pub fn offline(&self) -> Option<&PairDistribution<S>> {
        self.offline.as_ref()
    }

    pub fn omega(&self) -> &OmegaModel<S> {
        &self.omega
    }

    pub fn dataset(&self) -> Option<&PreferenceDataset> {
        self.dataset.as_ref()
    }

    pub fn partition(&self) -> &Partition<S> {
        &self.partition
    }

    /// `π^τ`.
    pub fn boltzmann(&self) -> &ConditionalDistribution<S> {
        &self.boltzmann
    }

    /// `π̄^τ`, when a reference policy is present.
    pub fn posterior(&self) -> Option<&ConditionalDistribution<S>> {
        self.posterior.as_ref()
    }

    /// The distribution `kind` is minimized at.
    pub fn target_for(&self, kind: LossKind) -> Result<&ConditionalDistribution<S>> {
        if kind.is_posterior() {
            self.posterior
                .as_ref()
                .ok_or_else(|| Error::Config(format!("{kind} needs a reference policy")))
        } else {
            Ok(&self.boltzmann)
        }
    }

    pub(crate) fn log_boltzmann(&self) -> &Table<S> {
        &self.log_boltzmann
    }

    pub(crate) fn log_target_for(&self, kind: LossKind) -> Result<&Table<S>> {
        if kind.is_posterior() {
            self.log_posterior
                .as_ref()
                .ok_or_else(|| Error::Config(format!("{kind} needs a reference policy")))
        } else {
            Ok(&self.log_boltzmann)
        }
    }

    pub(crate) fn log_reference(&self, kind: LossKind) -> Result<&Table<S>> {
        self.log_reference
            .as_ref()
            .ok_or_else(|| Error::Config(format!("{kind} needs a reference policy")))
    }

    /// `p*(1 | y1, y2, x)` for all ordered pairs of prompt `x`.
    pub(crate) fn p_star(&self, kind: LossKind) -> Result<&[Table<S>]> {
        self.omega.require_complementary()?;
        self.p_star
            .as_deref()
            .ok_or_else(|| Error::Config(format!("{kind}: omega cannot be evaluated on this reward")))
    }

    pub(crate) fn offline_for(&self, kind: LossKind) -> Result<&PairDistribution<S>> {
        self.offline
            .as_ref()
            .ok_or_else(|| Error::Config(format!("{kind} needs an offline sampler")))
    }

    pub(crate) fn dataset_for(&self, kind: LossKind) -> Result<&PreferenceDataset> {
        match &self.dataset {
            Some(d) if !d.is_empty() => Ok(d),
            Some(_) => domain(format!("{kind}: preference dataset is empty")),
            None => Err(Error::Config(format!("{kind} in dataset mode needs a dataset"))),
        }
    }

    /// Checks that everything `kind` reads is present.
    pub fn validate_for(&self, kind: LossKind) -> Result<()> {
        if kind.is_posterior() {
            self.log_reference(kind)?;
        }
        if kind.uses_omega() {
            self.p_star(kind)?;
        }
        if kind == LossKind::Dpo {
            match self.dpo_mode {
                DpoMode::Exact => {
                    self.offline_for(kind)?;
                }
                DpoMode::Dataset => {
                    self.dataset_for(kind)?;
                }
            }
        }
        Ok(())
    }

    /// A copy with a different temperature and all caches rebuilt.
    pub fn with_tau(&self, tau: S) -> Result<Self> {
        let mut b = LossContext::builder(self.reward.clone(), tau)?
            .prompt_dist(self.prompt_dist.clone())
            .omega(self.omega)
            .pra_gradient(self.pra_gradient)
            .dpo_mode(self.dpo_mode)
            .reverse_sampling(self.reverse_sampling);
        if let Some(r) = &self.reference {
            b = b.reference(r.clone());
        }
        if let Some(o) = &self.offline {
            b = b.offline_pairs(o.clone());
        }
        if let Some(d) = &self.dataset {
            b = b.dataset(d.clone());
        }
        b.build()
    }
}

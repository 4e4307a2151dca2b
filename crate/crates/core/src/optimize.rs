//! Gradient-descent training loops and closed-form convergence bounds.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::losses::{evaluate_loss, loss_value_and_gradient, stochastic_gradient_with, LossContext, LossKind};
use crate::policy::SoftmaxPolicy;
use crate::rng::{stream, Purpose};
use crate::scalar::Real;
use crate::spaces::kl_divergence;

/// Step sizes `α_t`, `t = 1, 2, ...`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSchedule {
    Constant { a: f64 },
    /// `α_t = a / (b + t)^p`.
    Power { a: f64, b: f64, p: f64 },
}

impl StepSchedule {
    pub fn constant(a: f64) -> Result<Self> {
        let s = StepSchedule::Constant { a };
        s.validate()?;
        Ok(s)
    }

    pub fn power(a: f64, b: f64, p: f64) -> Result<Self> {
        let s = StepSchedule::Power { a, b, p };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StepSchedule::Constant { a } if a > 0.0 && a.is_finite() => Ok(()),
            StepSchedule::Constant { a } => domain(format!("step size must be positive, got {a}")),
            StepSchedule::Power { a, b, p } => {
                if !(a > 0.0 && a.is_finite()) {
                    return domain(format!("schedule scale must be positive, got {a}"));
                }
                if !(b > -1.0 && b.is_finite()) {
                    return domain(format!("schedule offset must exceed -1, got {b}"));
                }
                if !(p > 0.5 && p <= 1.0) {
                    return domain(format!("schedule exponent must lie in (0.5, 1], got {p}"));
                }
                Ok(())
            }
        }
    }

    pub fn alpha(&self, t: usize) -> f64 {
        match *self {
            StepSchedule::Constant { a } => a,
            StepSchedule::Power { a, b, p } => a / (b + t as f64).powf(p),
        }
    }

    /// `(Σ α_t, Σ α_t²)` over `t = 1..T−1`.
    pub fn sums(&self, horizon: usize) -> (f64, f64) {
        (1..horizon).fold((0.0, 0.0), |(s, q), t| {
            let a = self.alpha(t);
            (s + a, q + a * a)
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainingMode {
    /// Full analytic gradient.
    Exact,
    /// Minibatch estimator with its own seeded stream.
    Stochastic { batch: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    /// `‖∇L(θ_t)‖²` of the exact gradient.
    pub grad_norm_sq: f64,
    pub min_grad_norm_sq: f64,
    pub kl_to_target: f64,
    pub alpha: f64,
    /// `‖g_t‖²` of the gradient actually used for the update.
    #[serde(skip)]
    pub update_norm_sq: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub kind: LossKind,
    pub records: Vec<StepRecord>,
}

pub const TRAJECTORY_HEADER: &str = "step,loss,grad_norm_sq,min_grad_norm_sq,kl_to_target,alpha";

impl Trajectory {
    pub fn last(&self) -> Option<&StepRecord> {
        self.records.last()
    }

    /// Largest `‖g_t‖²` over the run.
    pub fn max_update_norm_sq(&self) -> f64 {
        self.records.iter().map(|r| r.update_norm_sq).fold(0.0, f64::max)
    }

    pub fn min_loss(&self) -> f64 {
        self.records.iter().map(|r| r.loss).fold(f64::INFINITY, f64::min)
    }

    /// First step with `grad_norm_sq ≤ threshold`.
    pub fn steps_to(&self, threshold: f64) -> Option<usize> {
        self.records.iter().find(|r| r.grad_norm_sq <= threshold).map(|r| r.step)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{TRAJECTORY_HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.step, r.loss, r.grad_norm_sq, r.min_grad_norm_sq, r.kl_to_target, r.alpha
            )?;
        }
        Ok(())
    }
}

/// Threshold factor of the divergence guard.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

/// Iterates `θ_{t+1} = θ_t − α_t g_t` and records `θ_1 ... θ_steps`.
pub fn run_training<S: Real>(
    kind: LossKind,
    ctx: &LossContext<S>,
    init: &SoftmaxPolicy<S>,
    schedule: StepSchedule,
    steps: usize,
    mode: TrainingMode,
) -> Result<Trajectory> {
    run_training_until(kind, ctx, init, schedule, steps, mode, |_| false).map(|(t, _)| t)
}

/// Like [`run_training`], stopping early once `stop` returns true for a
/// record. Also returns the final policy.
pub fn run_training_until<S: Real, F: FnMut(&StepRecord) -> bool>(
    kind: LossKind,
    ctx: &LossContext<S>,
    init: &SoftmaxPolicy<S>,
    schedule: StepSchedule,
    steps: usize,
    mode: TrainingMode,
    mut stop: F,
) -> Result<(Trajectory, SoftmaxPolicy<S>)> {
    if steps == 0 {
        return domain("training needs at least one step");
    }
    schedule.validate()?;
    ctx.validate_for(kind)?;
    let target = ctx.target_for(kind)?;
    let mut rng = match mode {
        TrainingMode::Stochastic { batch: 0, .. } => return domain("batch size must be at least 1"),
        TrainingMode::Stochastic { seed, .. } => Some(stream(seed, 0, Purpose::Sgd)),
        TrainingMode::Exact => None,
    };
    let mut theta = init.clone();
    let mut records = Vec::with_capacity(steps);
    let mut min_g = f64::INFINITY;
    let mut guard = None;
    for t in 1..=steps {
        let fail = |reason: String| Error::Training { step: t, reason };
        let (loss, grad) = loss_value_and_gradient(kind, ctx, &theta).map_err(|e| fail(e.to_string()))?;
        let loss = loss.as_f64();
        let g2 = grad.norm_sq().as_f64();
        if !loss.is_finite() || !g2.is_finite() {
            return Err(fail(format!("non-finite loss {loss} or gradient norm {g2}")));
        }
        let limit = *guard.get_or_insert(DIVERGENCE_FACTOR * loss.abs().max(1e-12));
        if loss > limit {
            return Err(fail(format!("loss {loss} exceeds the divergence limit {limit}")));
        }
        let kl = kl_divergence(&theta.probs(), target, ctx.prompt_dist())
            .map_err(|e| fail(e.to_string()))?
            .as_f64();
        min_g = min_g.min(g2);
        let alpha = schedule.alpha(t);
        let update = match (&mode, rng.as_mut()) {
            (TrainingMode::Stochastic { batch, .. }, Some(r)) => {
                stochastic_gradient_with(kind, ctx, &theta, *batch, r).map_err(|e| fail(e.to_string()))?
            }
            _ => grad,
        };
        let record = StepRecord {
            step: t,
            loss,
            grad_norm_sq: g2,
            min_grad_norm_sq: min_g,
            kl_to_target: kl,
            alpha,
            update_norm_sq: update.norm_sq().as_f64(),
        };
        records.push(record);
        if stop(&record) {
            break;
        }
        theta.step(&update, S::lit(alpha));
        if !theta.logits().all_finite() {
            return Err(fail("logits became non-finite".into()));
        }
    }
    Ok((Trajectory { kind, records }, theta))
}

/// Which closed-form bound on `min_t ‖∇L(θ_t)‖²` to evaluate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConvergenceBound {
    /// Generic SGD bound for an `L`-smooth objective.
    GenericSgd { l: f64 },
    Theorem6,
    /// Uniform offline sampler, factor `γc₀ + 1`.
    Lemma7,
    /// Margin-weighted sampler, factor `μγc₀ + 1`.
    Theorem8,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundInputs {
    /// `G²`, a bound on the squared norm of every update gradient.
    pub g_sq: f64,
    /// `L(θ₁) − L*`.
    pub loss_gap: f64,
    pub tau: f64,
    pub gamma: Option<f64>,
    pub mu: Option<f64>,
    pub c0: Option<f64>,
    pub schedule: StepSchedule,
    pub horizon: usize,
}

pub fn convergence_bound(which: ConvergenceBound, inputs: &BoundInputs) -> Result<f64> {
    check_inputs(inputs)?;
    let (sum, sum_sq) = inputs.schedule.sums(inputs.horizon);
    bound_from_sums(which, inputs, sum, sum_sq)
}

fn check_inputs(inputs: &BoundInputs) -> Result<()> {
    if inputs.horizon < 2 {
        return domain("bound horizon must be at least 2");
    }
    if !(inputs.g_sq >= 0.0) || !(inputs.tau > 0.0) {
        return domain("bound needs G² ≥ 0 and τ > 0");
    }
    inputs.schedule.validate()
}

fn bound_from_sums(which: ConvergenceBound, inputs: &BoundInputs, sum: f64, sum_sq: f64) -> Result<f64> {
    let need = |v: Option<f64>, name: &str| {
        v.ok_or_else(|| Error::Config(format!("{name} is required for this bound")))
    };
    let tau_sq = inputs.tau * inputs.tau;
    let dpo_first = 2.0 * inputs.g_sq * sum_sq / (tau_sq * sum);
    let gap = inputs.loss_gap / sum;
    match which {
        ConvergenceBound::GenericSgd { l } => {
            if !(l > 0.0) {
                return domain(format!("smoothness constant must be positive, got {l}"));
            }
            Ok((l * inputs.g_sq * sum_sq + 2.0 * inputs.loss_gap) / (2.0 * sum))
        }
        ConvergenceBound::Theorem6 => Ok(dpo_first + gap),
        ConvergenceBound::Lemma7 => {
            let f = need(inputs.gamma, "gamma")? * need(inputs.c0, "c0")? + 1.0;
            factor_ok(f)?;
            Ok(f * dpo_first + gap)
        }
        ConvergenceBound::Theorem8 => {
            let mu = need(inputs.mu, "mu")?;
            let f = mu * need(inputs.gamma, "gamma")? * need(inputs.c0, "c0")? + 1.0;
            factor_ok(f)?;
            Ok(f * dpo_first + gap)
        }
    }
}

fn factor_ok(f: f64) -> Result<()> {
    if f <= 0.0 {
        return Err(Error::Numeric(format!("bound factor {f} is not positive")));
    }
    Ok(())
}

/// Outcome of comparing a trajectory with a bound at every horizon.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub inputs: BoundInputs,
    /// Steps `T` where `min_{t≤T} ‖∇L‖² > bound(T)`.
    pub violations: Vec<usize>,
    /// Largest `min_grad_norm_sq / bound` seen.
    pub worst_ratio: f64,
    pub final_bound: f64,
}

impl BoundCheck {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Builds bound inputs from a finished run: `G²` is the largest update norm
/// and `L*` the smaller of the loss at the target and the best loss seen.
pub fn measured_bound_inputs<S: Real>(
    traj: &Trajectory,
    ctx: &LossContext<S>,
    schedule: StepSchedule,
) -> Result<BoundInputs> {
    let first = traj
        .records
        .first()
        .ok_or_else(|| Error::Config("empty trajectory".into()))?;
    let target = SoftmaxPolicy::from_distribution(ctx.target_for(traj.kind)?)?;
    let at_target = evaluate_loss(traj.kind, ctx, &target)?.as_f64();
    let l_star = at_target.min(traj.min_loss());
    Ok(BoundInputs {
        g_sq: traj.max_update_norm_sq(),
        loss_gap: first.loss - l_star,
        tau: ctx.tau().as_f64(),
        gamma: None,
        mu: None,
        c0: None,
        schedule,
        horizon: traj.records.len(),
    })
}

/// Checks `min_{t≤T} ‖∇L(θ_t)‖² ≤ bound(T)` for every `T ≥ 2`.
pub fn check_bound_along(traj: &Trajectory, which: ConvergenceBound, inputs: BoundInputs) -> Result<BoundCheck> {
    let mut violations = Vec::new();
    let mut worst: f64 = 0.0;
    let mut last = f64::NAN;
    // Running sums over t = 1..T−1.
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for r in traj.records.iter().skip(1) {
        let here = BoundInputs { horizon: r.step, ..inputs };
        check_inputs(&here)?;
        let a = inputs.schedule.alpha(r.step - 1);
        sum += a;
        sum_sq += a * a;
        let b = bound_from_sums(which, &here, sum, sum_sq)?;
        let ratio = r.min_grad_norm_sq / b;
        worst = worst.max(ratio);
        if r.min_grad_norm_sq > b {
            violations.push(r.step);
        }
        last = b;
    }
    Ok(BoundCheck {
        inputs,
        violations,
        worst_ratio: worst,
        final_bound: last,
    })
}

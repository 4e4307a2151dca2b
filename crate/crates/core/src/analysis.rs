//! Finite-difference oracles, Hessian spectral radii and smoothness bounds.

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::losses::{evaluate_loss, loss_gradient, LossContext, LossKind};
use crate::policy::{logit_diameter, GradientTable, SoftmaxPolicy};
use crate::preference::{model_comparison_prob, ComparisonMode};
use crate::scalar::Real;
use crate::table::Table;

/// Central difference of an arbitrary scalar function of the logits.
pub fn central_difference<S, F>(policy: &SoftmaxPolicy<S>, h: S, mut f: F) -> Result<GradientTable<S>>
where
    S: Real,
    F: FnMut(&SoftmaxPolicy<S>) -> Result<S>,
{
    if !(h > S::zero()) {
        return domain(format!("finite-difference step must be positive, got {h}"));
    }
    let (n, k) = policy.logits().shape();
    let mut out = Table::zeros(n, k);
    let mut probe = policy.clone();
    for i in 0..n * k {
        let base = policy.logits().as_slice()[i];
        probe.logits_mut().as_mut_slice()[i] = base + h;
        let up = f(&probe)?;
        probe.logits_mut().as_mut_slice()[i] = base - h;
        let down = f(&probe)?;
        probe.logits_mut().as_mut_slice()[i] = base;
        out.as_mut_slice()[i] = (up - down) / (h + h);
    }
    Ok(out)
}

/// `(L(θ + h e_i) − L(θ − h e_i)) / 2h` for every logit.
pub fn finite_difference_gradient<S: Real>(
    kind: LossKind,
    ctx: &LossContext<S>,
    policy: &SoftmaxPolicy<S>,
    h: S,
) -> Result<GradientTable<S>> {
    central_difference(policy, h, |p| evaluate_loss(kind, ctx, p))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HessianOptions {
    /// Step for differencing the analytic gradient.
    pub h: f64,
    /// Relative tolerance on successive power-iteration estimates.
    pub tol: f64,
    pub max_iter: usize,
    /// Largest parameter count accepted.
    pub cap: usize,
}

impl Default for HessianOptions {
    fn default() -> Self {
        HessianOptions {
            h: 1e-4,
            tol: 1e-8,
            max_iter: 200_000,
            cap: 400,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HessianEstimate<S> {
    pub spectral_radius: S,
    /// `max |H − Hᵀ|` before symmetrization.
    pub asymmetry: S,
    pub iterations: usize,
    /// The symmetrized Hessian.
    pub matrix: Table<S>,
}

/// Hessian of a function given its gradient, by central differences.
/// Returns the raw (unsymmetrized) matrix.
pub fn hessian_from_gradient<S, G>(
    policy: &SoftmaxPolicy<S>,
    h: S,
    cap: usize,
    mut grad: G,
) -> Result<Table<S>>
where
    S: Real,
    G: FnMut(&SoftmaxPolicy<S>) -> Result<GradientTable<S>>,
{
    let n = policy.logits().len();
    if n > cap {
        return Err(Error::Size { params: n, cap });
    }
    if !(h > S::zero()) {
        return domain(format!("finite-difference step must be positive, got {h}"));
    }
    let mut hess = Table::zeros(n, n);
    let mut probe = policy.clone();
    for i in 0..n {
        let base = policy.logits().as_slice()[i];
        probe.logits_mut().as_mut_slice()[i] = base + h;
        let up = grad(&probe)?;
        probe.logits_mut().as_mut_slice()[i] = base - h;
        let down = grad(&probe)?;
        probe.logits_mut().as_mut_slice()[i] = base;
        // column i holds ∂g/∂θ_i
        for j in 0..n {
            hess.set(j, i, (up.as_slice()[j] - down.as_slice()[j]) / (h + h));
        }
    }
    Ok(hess)
}

/// Largest `|λ|` of a symmetric matrix by power iteration on `‖Hv‖`.
pub fn power_iteration<S: Real>(m: &Table<S>, tol: f64, max_iter: usize) -> (S, usize) {
    let n = m.rows();
    if n == 0 {
        return (S::zero(), 0);
    }
    // deterministic start vector with a component off the all-ones direction
    let mut v: Vec<S> = (0..n)
        .map(|i| S::lit(((i as f64) * 1.618_033_988_75 + 0.5).sin() + 0.1 * i as f64 / n as f64))
        .collect();
    normalize(&mut v);
    let mut w = vec![S::zero(); n];
    let mut est = S::zero();
    for it in 1..=max_iter {
        for (r, o) in w.iter_mut().enumerate() {
            *o = m.row(r).iter().zip(&v).map(|(&a, &b)| a * b).sum();
        }
        let norm = w.iter().map(|&a| a * a).sum::<S>().sqrt();
        if norm == S::zero() {
            return (S::zero(), it);
        }
        for (a, &b) in v.iter_mut().zip(&w) {
            *a = b / norm;
        }
        let done = (norm - est).abs() <= S::lit(tol) * norm;
        est = norm;
        if done && it > 2 {
            return (est, it);
        }
    }
    (est, max_iter)
}

fn normalize<S: Real>(v: &mut [S]) {
    let n = v.iter().map(|&a| a * a).sum::<S>().sqrt();
    v.iter_mut().for_each(|a| *a = *a / n);
}

/// Symmetrizes a raw Hessian and estimates its spectral radius.
pub fn spectral_radius_of<S: Real>(raw: Table<S>, opts: &HessianOptions) -> HessianEstimate<S> {
    let n = raw.rows();
    let mut sym = raw.clone();
    let mut asymmetry = S::zero();
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (raw.get(i, j), raw.get(j, i));
            asymmetry = asymmetry.max((a - b).abs());
            sym.set(i, j, (a + b) * S::lit(0.5));
        }
    }
    let (spectral_radius, iterations) = power_iteration(&sym, opts.tol, opts.max_iter);
    HessianEstimate {
        spectral_radius,
        asymmetry,
        iterations,
        matrix: sym,
    }
}

pub fn hessian_estimate<S: Real>(
    kind: LossKind,
    ctx: &LossContext<S>,
    policy: &SoftmaxPolicy<S>,
    opts: &HessianOptions,
) -> Result<HessianEstimate<S>> {
    let raw = hessian_from_gradient(policy, S::lit(opts.h), opts.cap, |p| loss_gradient(kind, ctx, p))?;
    Ok(spectral_radius_of(raw, opts))
}

/// Largest absolute Hessian eigenvalue with default options.
pub fn hessian_spectral_radius<S: Real>(
    kind: LossKind,
    ctx: &LossContext<S>,
    policy: &SoftmaxPolicy<S>,
) -> Result<S> {
    hessian_estimate(kind, ctx, policy, &HessianOptions::default()).map(|e| e.spectral_radius)
}

/// Constants appearing in the smoothness coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SmoothnessInputs<S> {
    /// `max |ln π_θ − ln target|`.
    pub epsilon1: S,
    /// `max |Δr_θ − Δr|` over ordered pairs.
    pub epsilon2: S,
    /// `max |p* − p_θ|` over ordered pairs.
    pub epsilon3: S,
    /// Logit diameter.
    pub d: S,
    pub tau: S,
    pub k: usize,
}

/// Closed-form smoothness coefficient. Forward-BDA also carries its second
/// published coefficient in `alt`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SmoothnessBound<S> {
    pub value: S,
    pub alt: Option<S>,
}

/// The listed coefficient for `kind`, or `None` when none is listed
/// (`rda_p`, `kl_regularized`). `ra_p` and `pra_p` reuse their plain rows.
pub fn smoothness_bound<S: Real>(kind: LossKind, i: &SmoothnessInputs<S>) -> Option<SmoothnessBound<S>> {
    let c = S::lit;
    let tau = i.tau;
    let single = |value| Some(SmoothnessBound { value, alt: None });
    match kind {
        LossKind::ForwardBda => Some(SmoothnessBound {
            value: c(6.0) * i.epsilon1 + c(10.0),
            alt: Some(
                (c(4.0) + c(i.k as f64)) * i.epsilon1 + c(6.0) + c(2.0) * c(i.k as f64),
            ),
        }),
        LossKind::ReverseBda => single(c(2.0)),
        LossKind::Ra | LossKind::RaP => {
            let e = i.epsilon1;
            single(
                c(3.0) * e * e + c(18.0) * e / tau + c(8.0) / (tau * tau)
                    + (e * e + c(2.0) * e / tau).max(S::one() / tau),
            )
        }
        LossKind::Rda => {
            let e = i.epsilon2;
            single(c(20.0) * e * e + c(32.0) * e / tau + c(8.0) / (tau * tau))
        }
        LossKind::Pra | LossKind::PraP => single(
            c(20.0) * (S::one() + (i.d / tau).exp()).ln()
                + c(16.0) * i.epsilon3 / tau
                + c(4.0) / (tau * tau)
                + c(16.0) * c(2.0).ln(),
        ),
        LossKind::Dpo => single(c(4.0) / (tau * tau)),
        LossKind::RdaP | LossKind::KlRegularized => None,
    }
}

/// ε constants at `policy`, measured against the target of `kind`.
pub fn estimate_epsilons<S: Real>(
    kind: LossKind,
    policy: &SoftmaxPolicy<S>,
    ctx: &LossContext<S>,
) -> Result<SmoothnessInputs<S>> {
    let target = ctx.target_for(kind)?;
    let lp = policy.log_probs();
    let s = ctx.spaces();
    let k = s.n_responses;
    let tau = ctx.tau();
    let mut epsilon1 = S::zero();
    let mut epsilon2 = S::zero();
    let mut epsilon3 = S::zero();
    let mode = if kind.is_posterior() {
        ComparisonMode::Posterior(ctx.reference().expect("checked by target_for"))
    } else {
        ComparisonMode::Plain
    };
    let log_part = if kind.is_posterior() {
        ctx.partition().log_z_prime.clone().expect("checked by target_for")
    } else {
        ctx.partition().log_z.clone()
    };
    for x in 0..s.n_prompts {
        let g: Vec<S> = (0..k)
            .map(|y| lp.get(x, y) - target.prob(x, y).ln())
            .collect();
        for y in 0..k {
            epsilon1 = epsilon1.max(g[y].abs());
        }
        for y1 in 0..k {
            for y2 in 0..k {
                epsilon2 = epsilon2.max(((g[y1] - g[y2]) / tau).abs());
                let truth = ctx.omega().eval_in_row(ctx.reward().row(x), y1, y2);
                let model = model_comparison_prob(ctx.omega(), policy, tau, mode, log_part[x], x, y1, y2);
                if let (Ok(a), Ok(b)) = (truth, model) {
                    epsilon3 = epsilon3.max((a.p - b.p).abs());
                }
            }
        }
    }
    Ok(SmoothnessInputs {
        epsilon1,
        epsilon2,
        epsilon3,
        d: logit_diameter(policy),
        tau,
        k,
    })
}

/// One smoothness check, serialized as a JSON line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HessianReport {
    pub kind: String,
    pub tau: f64,
    pub spectral_radius: f64,
    pub bound: Option<f64>,
    pub bound_alt: Option<f64>,
    /// `None` when the kind has no listed coefficient.
    pub satisfied: Option<bool>,
    pub seed: u64,
    #[serde(skip)]
    pub inputs: SmoothnessInputs<f64>,
    #[serde(skip)]
    pub satisfied_alt: Option<bool>,
}

/// Slack allowed above a closed-form bound.
pub const BOUND_SLACK: f64 = 1e-3;

impl HessianReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Estimates the spectral radius at `policy` and compares it with the
/// closed-form coefficient at the measured ε's.
pub fn check_smoothness<S: Real>(
    kind: LossKind,
    ctx: &LossContext<S>,
    policy: &SoftmaxPolicy<S>,
    seed: u64,
    opts: &HessianOptions,
) -> Result<HessianReport> {
    let est = hessian_estimate(kind, ctx, policy, opts)?;
    let inputs = estimate_epsilons(kind, policy, ctx)?;
    let bound = smoothness_bound(kind, &inputs);
    let rho = est.spectral_radius.as_f64();
    let value = bound.map(|b| b.value.as_f64());
    let alt = bound.and_then(|b| b.alt).map(|a| a.as_f64());
    Ok(HessianReport {
        kind: kind.name().to_string(),
        tau: ctx.tau().as_f64(),
        spectral_radius: rho,
        bound: value,
        bound_alt: alt,
        satisfied: value.map(|b| rho <= b + BOUND_SLACK),
        seed,
        inputs: SmoothnessInputs {
            epsilon1: inputs.epsilon1.as_f64(),
            epsilon2: inputs.epsilon2.as_f64(),
            epsilon3: inputs.epsilon3.as_f64(),
            d: inputs.d.as_f64(),
            tau: inputs.tau.as_f64(),
            k: inputs.k,
        },
        satisfied_alt: alt.map(|b| rho <= b + BOUND_SLACK),
    })
}

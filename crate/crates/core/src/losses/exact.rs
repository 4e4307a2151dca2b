//! Exact loss values and analytic gradients by enumeration of the support.

use super::context::{DpoMode, LossContext, PraGradient};
use super::LossKind;
use crate::error::{Error, Result};
use crate::policy::{GradientTable, SoftmaxPolicy};
use crate::preference::entropy_term_m;
use crate::scalar::{log_sigmoid, sigmoid, Real};
use crate::table::Table;

/// Softmax probabilities and log-probabilities of one policy.
pub(crate) struct PolicyState<S> {
    pub pi: Table<S>,
    pub lp: Table<S>,
}

impl<S: Real> PolicyState<S> {
    pub fn new(policy: &SoftmaxPolicy<S>) -> Self {
        PolicyState {
            pi: policy.probs().table().clone(),
            lp: policy.log_probs(),
        }
    }
}

pub fn evaluate_loss<S: Real>(
    kind: LossKind,
    ctx: &LossContext<S>,
    policy: &SoftmaxPolicy<S>,
) -> Result<S> {
    compute(kind, ctx, policy, false).map(|(v, _)| v)
}

pub fn loss_gradient<S: Real>(
    kind: LossKind,
    ctx: &LossContext<S>,
    policy: &SoftmaxPolicy<S>,
) -> Result<GradientTable<S>> {
    compute(kind, ctx, policy, true).map(|(_, g)| g)
}

pub fn loss_value_and_gradient<S: Real>(
    kind: LossKind,
    ctx: &LossContext<S>,
    policy: &SoftmaxPolicy<S>,
) -> Result<(S, GradientTable<S>)> {
    compute(kind, ctx, policy, true)
}

fn compute<S: Real>(
    kind: LossKind,
    ctx: &LossContext<S>,
    policy: &SoftmaxPolicy<S>,
    want_grad: bool,
) -> Result<(S, GradientTable<S>)> {
    ctx.validate_for(kind)?;
    policy.logits().same_shape(ctx.reward().table())?;
    let st = PolicyState::new(policy);
    let spaces = ctx.spaces();
    let mut grad = Table::zeros(spaces.n_prompts, spaces.n_responses);
    if kind == LossKind::Dpo && ctx.dpo_mode == DpoMode::Dataset {
        let v = dpo_dataset(ctx, &st, want_grad.then_some(&mut grad))?;
        return finish(v, grad);
    }
    let mut total = S::zero();
    let mut row_grad = vec![S::zero(); spaces.n_responses];
    for x in 0..spaces.n_prompts {
        let w = ctx.prompt_dist().weight(x);
        if w == S::zero() {
            continue;
        }
        let g = want_grad.then_some(&mut row_grad[..]);
        let v = prompt_term(kind, ctx, &st, x, g)?;
        total = total + w * v;
        if want_grad {
            for (o, &r) in grad.row_mut(x).iter_mut().zip(&row_grad) {
                *o = w * r;
            }
        }
    }
    finish(total, grad)
}

fn finish<S: Real>(v: S, g: GradientTable<S>) -> Result<(S, GradientTable<S>)> {
    if !v.is_finite() {
        return Err(Error::Numeric(format!("loss evaluated to {v}")));
    }
    if !g.all_finite() {
        return Err(Error::Numeric("gradient has non-finite entries".into()));
    }
    Ok((v, g))
}

/// Per-response `g_y = (ln π_θ(y) − ln target(y)) / τ`, which equals
/// `r_θ − r` (plain) or `r̄_θ − r` (posterior).
pub(crate) fn reward_residual<S: Real>(
    kind: LossKind,
    ctx: &LossContext<S>,
    st: &PolicyState<S>,
    x: usize,
) -> Result<Vec<S>> {
    let lt = ctx.log_target_for(kind)?.row(x);
    let tau = ctx.tau();
    Ok(st.lp.row(x).iter().zip(lt).map(|(&a, &b)| (a - b) / tau).collect())
}

/// Per-response `u_y` with `Δ_θ(y1, y2) = u_{y1} − u_{y2}`: `ln π_θ/τ` for
/// plain kinds and `ln(π_θ/π_ref)/τ` for posterior ones.
pub(crate) fn margin_scores<S: Real>(
    kind: LossKind,
    ctx: &LossContext<S>,
    st: &PolicyState<S>,
    x: usize,
) -> Result<Vec<S>> {
    let tau = ctx.tau();
    let lp = st.lp.row(x);
    if kind.is_posterior() {
        let lr = ctx.log_reference(kind)?.row(x);
        Ok(lp.iter().zip(lr).map(|(&a, &b)| (a - b) / tau).collect())
    } else {
        Ok(lp.iter().map(|&a| a / tau).collect())
    }
}

/// `KL(p* ‖ q)` for one ordered pair with `q = φ(Δ)`.
#[inline]
pub(crate) fn pair_kl<S: Real>(ctx: &LossContext<S>, p: S, delta: S) -> S {
    let om = ctx.omega();
    entropy_term_m(p) - p * om.log_phi(delta) - (S::one() - p) * om.log_phi(-delta)
}

/// `∂ KL(p* ‖ φ(Δ)) / ∂Δ`.
#[inline]
pub(crate) fn pair_kl_slope<S: Real>(ctx: &LossContext<S>, p: S, delta: S) -> S {
    let om = ctx.omega();
    -p * om.dlog_phi(delta) + (S::one() - p) * om.dlog_phi(-delta)
}

/// `ζ = p ln σ(h) + (1 − p) ln σ(−h)`.
#[inline]
pub(crate) fn zeta<S: Real>(p: S, h: S) -> S {
    p * log_sigmoid(h) + (S::one() - p) * log_sigmoid(-h)
}

fn prompt_term<S: Real>(
    kind: LossKind,
    ctx: &LossContext<S>,
    st: &PolicyState<S>,
    x: usize,
    grad: Option<&mut [S]>,
) -> Result<S> {
    let pi = st.pi.row(x);
    let lp = st.lp.row(x);
    let k = pi.len();
    let tau = ctx.tau();
    let two = S::lit(2.0);
    match kind {
        LossKind::ForwardBda => {
            let lt = ctx.log_boltzmann().row(x);
            let f: Vec<S> = lp.iter().zip(lt).map(|(&a, &b)| a - b).collect();
            let mean: S = pi.iter().zip(&f).map(|(&p, &v)| p * v).sum();
            if let Some(g) = grad {
                for j in 0..k {
                    g[j] = pi[j] * (f[j] - mean);
                }
            }
            Ok(mean)
        }
        LossKind::ReverseBda => {
            let t = ctx.boltzmann().row(x);
            let lt = ctx.log_boltzmann().row(x);
            let v: S = (0..k).map(|y| t[y] * (lt[y] - lp[y])).sum();
            if let Some(g) = grad {
                for j in 0..k {
                    g[j] = pi[j] - t[j];
                }
            }
            Ok(v)
        }
        LossKind::Ra | LossKind::RaP => {
            let r = reward_residual(kind, ctx, st, x)?;
            let a: S = (0..k).map(|y| pi[y] * r[y] * r[y]).sum();
            let b: S = (0..k).map(|y| pi[y] * r[y]).sum();
            if let Some(g) = grad {
                for j in 0..k {
                    g[j] = pi[j] * (r[j] * r[j] - a) + two / tau * pi[j] * (r[j] - b);
                }
            }
            Ok(a)
        }
        LossKind::Rda | LossKind::RdaP => {
            let r = reward_residual(kind, ctx, st, x)?;
            let a: S = (0..k).map(|y| pi[y] * r[y] * r[y]).sum();
            let b: S = (0..k).map(|y| pi[y] * r[y]).sum();
            if let Some(g) = grad {
                for j in 0..k {
                    let da = pi[j] * (r[j] * r[j] - a) + two / tau * pi[j] * (r[j] - b);
                    let db = pi[j] * (r[j] - b);
                    g[j] = two * da - S::lit(4.0) * b * db;
                }
            }
            Ok((two * (a - b * b)).max(S::zero()))
        }
        LossKind::Pra | LossKind::PraP => {
            let ps = &ctx.p_star(kind)?[x];
            let u = margin_scores(kind, ctx, st, x)?;
            let mut kl = Table::zeros(k, k);
            let mut value = S::zero();
            for y1 in 0..k {
                for y2 in 0..k {
                    let v = pair_kl(ctx, ps.get(y1, y2), u[y1] - u[y2]);
                    kl.set(y1, y2, v);
                    value = value + pi[y1] * pi[y2] * v;
                }
            }
            if let Some(g) = grad {
                for j in 0..k {
                    let mut slope = S::zero();
                    for y in 0..k {
                        slope = slope + pi[y] * pair_kl_slope(ctx, ps.get(j, y), u[j] - u[y])
                            - pi[y] * pair_kl_slope(ctx, ps.get(y, j), u[y] - u[j]);
                    }
                    g[j] = pi[j] * slope / tau;
                    if ctx.pra_gradient == PraGradient::Full {
                        let around: S = (0..k).map(|y| pi[y] * (kl.get(j, y) + kl.get(y, j))).sum();
                        g[j] = g[j] + pi[j] * around - two * pi[j] * value;
                    }
                }
            }
            Ok(value.max(S::zero()))
        }
        LossKind::Dpo => {
            let law = ctx.offline_for(kind)?;
            let ps = &ctx.p_star(kind)?[x];
            let u = margin_scores(kind, ctx, st, x)?;
            let mut value = S::zero();
            let mut g = grad;
            if let Some(g) = g.as_deref_mut() {
                g.iter_mut().for_each(|v| *v = S::zero());
            }
            for y1 in 0..k {
                for y2 in 0..k {
                    let w = law.weight(x, y1, y2);
                    if w == S::zero() {
                        continue;
                    }
                    let h = u[y1] - u[y2];
                    let p = ps.get(y1, y2);
                    value = value - w * zeta(p, h);
                    if let Some(g) = g.as_deref_mut() {
                        let c = w * (sigmoid(h) - p) / tau;
                        g[y1] = g[y1] + c;
                        g[y2] = g[y2] - c;
                    }
                }
            }
            Ok(value)
        }
        LossKind::KlRegularized => {
            let lr = ctx.log_reference(kind)?.row(x);
            let r = ctx.reward().row(x);
            let v: Vec<S> = (0..k).map(|y| -r[y] + (lp[y] - lr[y]) / tau).collect();
            let mean: S = pi.iter().zip(&v).map(|(&p, &a)| p * a).sum();
            if let Some(g) = grad {
                for j in 0..k {
                    g[j] = pi[j] * (v[j] - mean);
                }
            }
            Ok(mean)
        }
    }
}

fn dpo_dataset<S: Real>(
    ctx: &LossContext<S>,
    st: &PolicyState<S>,
    grad: Option<&mut GradientTable<S>>,
) -> Result<S> {
    let data = ctx.dataset_for(LossKind::Dpo)?;
    let n = S::lit(data.len() as f64);
    let tau = ctx.tau();
    let lr = ctx.log_reference(LossKind::Dpo)?;
    let mut value = S::zero();
    let mut g = grad;
    for p in &data.pairs {
        let x = p.prompt;
        let h = ((st.lp.get(x, p.winner) - lr.get(x, p.winner))
            - (st.lp.get(x, p.loser) - lr.get(x, p.loser)))
            / tau;
        value = value - log_sigmoid(h) / n;
        if let Some(g) = g.as_deref_mut() {
            let c = sigmoid(-h) / (n * tau);
            g.set(x, p.winner, g.get(x, p.winner) - c);
            g.set(x, p.loser, g.get(x, p.loser) + c);
        }
    }
    Ok(value)
}

//! Split of the posterior preference loss into DPO, a distribution-shift
//! term and a label-entropy term.

use serde::Serialize;

use super::context::{DpoMode, LossContext};
use super::exact::{evaluate_loss, margin_scores, zeta, PolicyState};
use super::LossKind;
use crate::error::{domain, Result};
use crate::policy::SoftmaxPolicy;
use crate::preference::entropy_term_m;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Decomposition<S> {
    pub l_prap: S,
    pub l_dpo: S,
    pub eta1: S,
    pub eta2: S,
    /// `l_prap − (l_dpo + eta1 + eta2)`.
    pub residual: S,
}

/// Evaluates every term by exact summation. Requires a Bradley–Terry `ω`
/// with unit scale and an offline sampler.
pub fn dpo_decomposition<S: Real>(
    ctx: &LossContext<S>,
    policy: &SoftmaxPolicy<S>,
) -> Result<Decomposition<S>> {
    if !ctx.omega().is_bt_unit() {
        return domain(format!(
            "decomposition assumes the Bradley-Terry model with unit scale, got '{}'",
            ctx.omega().name()
        ));
    }
    let kind = LossKind::Dpo;
    let law = ctx.offline_for(kind)?;
    let ps = ctx.p_star(kind)?;
    let st = PolicyState::new(policy);
    let s = ctx.spaces();
    let k = s.n_responses;
    let (mut l_dpo, mut eta1, mut eta2) = (S::zero(), S::zero(), S::zero());
    for x in 0..s.n_prompts {
        let d = ctx.prompt_dist().weight(x);
        let u = margin_scores(kind, ctx, &st, x)?;
        let pi = st.pi.row(x);
        for y1 in 0..k {
            for y2 in 0..k {
                let p = ps[x].get(y1, y2);
                let z = zeta(p, u[y1] - u[y2]);
                let w0 = law.weight(x, y1, y2);
                let wt = pi[y1] * pi[y2];
                l_dpo = l_dpo - d * w0 * z;
                eta1 = eta1 + d * (w0 - wt) * z;
                eta2 = eta2 + d * wt * entropy_term_m(p);
            }
        }
    }
    let mut exact_ctx = ctx.clone();
    exact_ctx.dpo_mode = DpoMode::Exact;
    let l_prap = evaluate_loss(LossKind::PraP, &exact_ctx, policy)?;
    Ok(Decomposition {
        l_prap,
        l_dpo,
        eta1,
        eta2,
        residual: l_prap - (l_dpo + eta1 + eta2),
    })
}

//! Single-sample gradient estimators and their exact enumeration.

use rand::Rng;

use super::context::{DpoMode, LossContext, PraGradient, ReverseSampling};
use super::exact::{margin_scores, reward_residual, PolicyState};
use super::LossKind;
use crate::error::{domain, Error, Result};
use crate::policy::{GradientTable, SoftmaxPolicy};
use crate::preference::entropy_term_m;
use crate::rng::{sample_index, stream, Purpose};
use crate::scalar::{sigmoid, Real};
use crate::spaces::PairLaw;
use crate::table::Table;

/// One draw from a loss's defining law.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sample {
    Single { x: usize, y: usize },
    Pair { x: usize, y1: usize, y2: usize },
    Labeled { x: usize, winner: usize, loser: usize },
}

impl Sample {
    fn prompt(&self) -> usize {
        match *self {
            Sample::Single { x, .. } | Sample::Pair { x, .. } | Sample::Labeled { x, .. } => x,
        }
    }
}

fn dataset_mode<S: Real>(kind: LossKind, ctx: &LossContext<S>) -> bool {
    kind == LossKind::Dpo && ctx.dpo_mode == DpoMode::Dataset
}

/// Gradient contribution of a single sample.
pub fn sample_gradient<S: Real>(
    kind: LossKind,
    ctx: &LossContext<S>,
    policy: &SoftmaxPolicy<S>,
    sample: Sample,
) -> Result<GradientTable<S>> {
    ctx.validate_for(kind)?;
    let st = PolicyState::new(policy);
    let s = ctx.spaces();
    let mut out = Table::zeros(s.n_prompts, s.n_responses);
    add_sample_gradient(kind, ctx, &st, sample, S::one(), &mut out)?;
    Ok(out)
}

/// `out[x] += scale · ∇ℓ(sample)`.
fn add_sample_gradient<S: Real>(
    kind: LossKind,
    ctx: &LossContext<S>,
    st: &PolicyState<S>,
    sample: Sample,
    scale: S,
    out: &mut GradientTable<S>,
) -> Result<()> {
    let x = sample.prompt();
    let pi = st.pi.row(x);
    let tau = ctx.tau();
    let two = S::lit(2.0);
    let row = out.row_mut(x);
    // row += a·(e_y − π)
    let add_score = |row: &mut [S], y: usize, a: S| {
        for (j, o) in row.iter_mut().enumerate() {
            *o = *o - a * pi[j];
        }
        row[y] = row[y] + a;
    };
    match (kind, sample) {
        (LossKind::ForwardBda, Sample::Single { y, .. }) => {
            let f = st.lp.get(x, y) - ctx.log_boltzmann().get(x, y);
            add_score(row, y, scale * (f + S::one()));
        }
        (LossKind::ReverseBda, Sample::Single { y, .. }) => {
            let w = match ctx.reverse_sampling {
                ReverseSampling::Direct => S::one(),
                ReverseSampling::Importance => ctx.boltzmann().prob(x, y) / pi[y],
            };
            add_score(row, y, -scale * w);
        }
        (LossKind::Ra | LossKind::RaP, Sample::Single { y, .. }) => {
            let r = reward_residual(kind, ctx, st, x)?[y];
            add_score(row, y, scale * (r * r + two * r / tau));
        }
        (LossKind::Rda | LossKind::RdaP, Sample::Pair { y1, y2, .. }) => {
            let r = reward_residual(kind, ctx, st, x)?;
            let d = r[y1] - r[y2];
            add_score(row, y1, scale * d * d);
            add_score(row, y2, scale * d * d);
            let c = scale * two * d / tau;
            row[y1] = row[y1] + c;
            row[y2] = row[y2] - c;
        }
        (LossKind::Pra | LossKind::PraP, Sample::Labeled { winner, loser, .. }) => {
            let u = margin_scores(kind, ctx, st, x)?;
            let delta = u[winner] - u[loser];
            let om = ctx.omega();
            if ctx.pra_gradient == PraGradient::Full {
                let p = ctx.p_star(kind)?[x].get(winner, loser);
                let ell = -om.log_phi(delta) + entropy_term_m(p);
                add_score(row, winner, scale * ell);
                add_score(row, loser, scale * ell);
            }
            let c = scale * om.dlog_phi(delta) / tau;
            row[winner] = row[winner] - c;
            row[loser] = row[loser] + c;
        }
        (LossKind::Dpo, Sample::Labeled { winner, loser, .. }) => {
            let u = margin_scores(kind, ctx, st, x)?;
            let c = scale * sigmoid(u[loser] - u[winner]) / tau;
            row[winner] = row[winner] - c;
            row[loser] = row[loser] + c;
        }
        (LossKind::KlRegularized, Sample::Single { y, .. }) => {
            let v = -ctx.reward().get(x, y)
                + (st.lp.get(x, y) - ctx.log_reference(kind)?.get(x, y)) / tau;
            add_score(row, y, scale * (v + S::one() / tau));
        }
        (kind, sample) => {
            return domain(format!("{kind} does not take samples of the form {sample:?}"));
        }
    }
    Ok(())
}

/// Every sample of prompt `x` with its probability under the defining law.
fn support<S: Real>(
    kind: LossKind,
    ctx: &LossContext<S>,
    st: &PolicyState<S>,
    x: usize,
) -> Result<Vec<(S, Sample)>> {
    let pi = st.pi.row(x);
    let k = pi.len();
    let mut out = Vec::new();
    match kind {
        LossKind::ForwardBda | LossKind::Ra | LossKind::RaP | LossKind::KlRegularized => {
            for y in 0..k {
                out.push((pi[y], Sample::Single { x, y }));
            }
        }
        LossKind::ReverseBda => {
            let law = match ctx.reverse_sampling {
                ReverseSampling::Direct => ctx.boltzmann().row(x),
                ReverseSampling::Importance => pi,
            };
            for y in 0..k {
                out.push((law[y], Sample::Single { x, y }));
            }
        }
        LossKind::Rda | LossKind::RdaP => {
            for y1 in 0..k {
                for y2 in 0..k {
                    out.push((pi[y1] * pi[y2], Sample::Pair { x, y1, y2 }));
                }
            }
        }
        LossKind::Pra | LossKind::PraP | LossKind::Dpo => {
            let ps = &ctx.p_star(kind)?[x];
            for y1 in 0..k {
                for y2 in 0..k {
                    let w = if kind == LossKind::Dpo {
                        ctx.offline_for(kind)?.weight(x, y1, y2)
                    } else {
                        pi[y1] * pi[y2]
                    };
                    let p = ps.get(y1, y2);
                    out.push((w * p, Sample::Labeled { x, winner: y1, loser: y2 }));
                    out.push((w * (S::one() - p), Sample::Labeled { x, winner: y2, loser: y1 }));
                }
            }
        }
    }
    Ok(out)
}

/// Probability-weighted sum of sample gradients over the whole support.
/// Equals [`super::loss_gradient`] when the estimator is unbiased.
pub fn enumerated_gradient<S: Real>(
    kind: LossKind,
    ctx: &LossContext<S>,
    policy: &SoftmaxPolicy<S>,
) -> Result<GradientTable<S>> {
    ctx.validate_for(kind)?;
    let st = PolicyState::new(policy);
    let s = ctx.spaces();
    let mut out = Table::zeros(s.n_prompts, s.n_responses);
    if dataset_mode(kind, ctx) {
        let data = ctx.dataset_for(kind)?;
        let w = S::one() / S::lit(data.len() as f64);
        for p in &data.pairs {
            let sample = Sample::Labeled {
                x: p.prompt,
                winner: p.winner,
                loser: p.loser,
            };
            add_sample_gradient(kind, ctx, &st, sample, w, &mut out)?;
        }
        return Ok(out);
    }
    for x in 0..s.n_prompts {
        let dx = ctx.prompt_dist().weight(x);
        if dx == S::zero() {
            continue;
        }
        for (w, sample) in support(kind, ctx, &st, x)? {
            if w != S::zero() {
                add_sample_gradient(kind, ctx, &st, sample, dx * w, &mut out)?;
            }
        }
    }
    Ok(out)
}

fn draw<S: Real, R: Rng + ?Sized>(
    kind: LossKind,
    ctx: &LossContext<S>,
    st: &PolicyState<S>,
    rng: &mut R,
) -> Result<Sample> {
    if dataset_mode(kind, ctx) {
        let data = ctx.dataset_for(kind)?;
        let p = data.pairs[rng.random_range(0..data.len())];
        return Ok(Sample::Labeled {
            x: p.prompt,
            winner: p.winner,
            loser: p.loser,
        });
    }
    let x = sample_index(ctx.prompt_dist().weights(), rng);
    let pi = st.pi.row(x);
    let label = |rng: &mut R, y1: usize, y2: usize| -> Result<Sample> {
        let p = ctx.p_star(kind)?[x].get(y1, y2).as_f64();
        Ok(if rng.random::<f64>() < p {
            Sample::Labeled { x, winner: y1, loser: y2 }
        } else {
            Sample::Labeled { x, winner: y2, loser: y1 }
        })
    };
    match kind {
        LossKind::ForwardBda | LossKind::Ra | LossKind::RaP | LossKind::KlRegularized => {
            Ok(Sample::Single { x, y: sample_index(pi, rng) })
        }
        LossKind::ReverseBda => {
            let law = match ctx.reverse_sampling {
                ReverseSampling::Direct => ctx.boltzmann().row(x),
                ReverseSampling::Importance => pi,
            };
            Ok(Sample::Single { x, y: sample_index(law, rng) })
        }
        LossKind::Rda | LossKind::RdaP => Ok(Sample::Pair {
            x,
            y1: sample_index(pi, rng),
            y2: sample_index(pi, rng),
        }),
        LossKind::Pra | LossKind::PraP => {
            let (y1, y2) = (sample_index(pi, rng), sample_index(pi, rng));
            label(rng, y1, y2)
        }
        LossKind::Dpo => {
            let (y1, y2) = match &ctx.offline_for(kind)?.law {
                PairLaw::Product(p0) => (sample_index(p0.row(x), rng), sample_index(p0.row(x), rng)),
                PairLaw::Joint(t) => {
                    let idx = sample_index(t[x].as_slice(), rng);
                    (idx / t[x].cols(), idx % t[x].cols())
                }
            };
            label(rng, y1, y2)
        }
    }
}

/// Minibatch mean of single-sample gradients using a caller-owned generator.
pub fn stochastic_gradient_with<S: Real, R: Rng + ?Sized>(
    kind: LossKind,
    ctx: &LossContext<S>,
    policy: &SoftmaxPolicy<S>,
    batch_size: usize,
    rng: &mut R,
) -> Result<GradientTable<S>> {
    if batch_size == 0 {
        return domain("batch size must be at least 1");
    }
    ctx.validate_for(kind)?;
    let st = PolicyState::new(policy);
    let s = ctx.spaces();
    let mut out = Table::zeros(s.n_prompts, s.n_responses);
    let w = S::one() / S::lit(batch_size as f64);
    for _ in 0..batch_size {
        let sample = draw(kind, ctx, &st, rng)?;
        add_sample_gradient(kind, ctx, &st, sample, w, &mut out)?;
    }
    if !out.all_finite() {
        return Err(Error::Numeric("stochastic gradient has non-finite entries".into()));
    }
    Ok(out)
}

/// Minibatch gradient with a stream derived from `seed`.
pub fn stochastic_gradient<S: Real>(
    kind: LossKind,
    ctx: &LossContext<S>,
    policy: &SoftmaxPolicy<S>,
    batch_size: usize,
    seed: u64,
) -> Result<GradientTable<S>> {
    let mut rng = stream(seed, 0, Purpose::Sgd);
    stochastic_gradient_with(kind, ctx, policy, batch_size, &mut rng)
}

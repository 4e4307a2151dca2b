#![allow(dead_code)]

use udrra_core::instance::{random_distribution, random_policy, random_reward};
use udrra_core::preference::OmegaModel;
use udrra_core::rng::{stream, Purpose};
use udrra_core::{FiniteSpaces, LossContext, LossKind, SoftmaxPolicy};

pub struct Instance {
    pub ctx: LossContext<f64>,
    pub policy: SoftmaxPolicy<f64>,
}

pub fn spaces() -> FiniteSpaces {
    FiniteSpaces::new(3, 6).unwrap()
}

/// Random rewards in U[0,1], random reference and offline sampler, random policy.
pub fn instance(seed: u64, tau: f64) -> Instance {
    instance_with(seed, tau, OmegaModel::bt())
}

pub fn instance_with(seed: u64, tau: f64, omega: OmegaModel<f64>) -> Instance {
    let s = spaces();
    let reward = random_reward(s, 0.0, 1.0, &mut stream(seed, 0, Purpose::Reward)).unwrap();
    let reference = random_distribution(s, 0.2, &mut stream(seed, 0, Purpose::Reference)).unwrap();
    let pi0 = random_distribution(s, 0.2, &mut stream(seed, 0, Purpose::Sampler)).unwrap();
    let policy = random_policy(s, 1.0, &mut stream(seed, 0, Purpose::Policy)).unwrap();
    let ctx = LossContext::builder(reward, tau)
        .unwrap()
        .reference(reference)
        .offline_sampler(pi0)
        .omega(omega)
        .build()
        .unwrap();
    Instance { ctx, policy }
}

pub fn at_target(ctx: &LossContext<f64>, kind: LossKind) -> SoftmaxPolicy<f64> {
    SoftmaxPolicy::from_distribution(ctx.target_for(kind).unwrap()).unwrap()
}

pub fn l2(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn l2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#![allow(clippy::needless_range_loop)]

mod common;

use common::instance;
use proptest::prelude::*;
use udrra_core::instance::random_distribution;
use udrra_core::policy::{
    implicit_reward, log_ratio_margin, logit_diameter, posterior_implicit_reward, softmax_jacobian,
};
use udrra_core::rng::{stream, Purpose};
use udrra_core::spaces::{kl_divergence, partition_functions, target_policy, tv_distance, TargetKind};
use udrra_core::{
    ConditionalDistribution, Error, FiniteSpaces, PromptDistribution, RewardTable, SoftmaxPolicy,
};

fn one(v: Vec<f64>) -> RewardTable<f64> {
    RewardTable::from_rows(vec![v]).unwrap()
}

fn dist(rows: Vec<Vec<f64>>) -> ConditionalDistribution<f64> {
    ConditionalDistribution::from_rows(rows).unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn boltzmann_and_posterior_targets() {
    let t = target_policy(&one(vec![0.0; 3]), 1.0, TargetKind::Boltzmann).unwrap();
    assert!(close(t.row(0), &[1.0 / 3.0; 3], 1e-15));
    let t = target_policy(&one(vec![0.0, 2.0_f64.ln()]), 1.0, TargetKind::Boltzmann).unwrap();
    assert!(close(t.row(0), &[1.0 / 3.0, 2.0 / 3.0], 1e-15));
    let reference = dist(vec![vec![0.9, 0.1]]);
    for tau in [0.1, 1.0, 50.0] {
        let t = target_policy(&one(vec![0.0, 0.0]), tau, TargetKind::Posterior(&reference)).unwrap();
        assert!(close(t.row(0), &[0.9, 0.1], 1e-15));
    }
}

#[test]
fn large_temperature_approaches_the_argmax() {
    let r = one(vec![0.0, 1.0]);
    let d = PromptDistribution::uniform(1).unwrap();
    let b = target_policy(&r, 200.0, TargetKind::Boltzmann).unwrap();
    let delta = target_policy(&r, 200.0, TargetKind::Delta).unwrap();
    assert!(tv_distance(&b, &delta, &d).unwrap() <= 1e-6);
    let huge = target_policy(&one(vec![0.0, 1e6]), 1e6, TargetKind::Boltzmann).unwrap();
    assert!(huge.table().all_finite());
}

#[test]
fn target_errors() {
    assert!(matches!(
        target_policy(&one(vec![1.0, 1.0, 0.0]), 1.0, TargetKind::Delta),
        Err(Error::Ambiguous { prompt: 0 })
    ));
    for tau in [0.0, -1.0, f64::NAN] {
        assert!(matches!(target_policy(&one(vec![0.0, 1.0]), tau, TargetKind::Boltzmann), Err(Error::Domain(_))));
    }
}

#[test]
fn partition_examples() {
    let p = partition_functions(&one(vec![0.0; 3]), 1.0, None).unwrap();
    assert!((p.z()[0] - 3.0).abs() < 1e-14);
    let p = partition_functions(&one(vec![0.0, 2.0_f64.ln()]), 1.0, None).unwrap();
    assert!((p.z()[0] - 3.0).abs() < 1e-14);
    let reference = dist(vec![vec![0.5, 0.5]]);
    let p = partition_functions(&one(vec![0.0, 1.0]), 1.0, Some(&reference)).unwrap();
    assert!((p.z_prime().unwrap()[0] - (1.0 + 1.0_f64.exp()) / 2.0).abs() < 1e-14);
    let p = partition_functions(&one(vec![0.0, 800.0]), 2.0, None).unwrap();
    assert!(p.log_z[0].is_finite() && (p.log_z[0] - 1600.0).abs() < 1e-9);
}

#[test]
fn divergence_examples() {
    let d1 = PromptDistribution::uniform(1).unwrap();
    let p = dist(vec![vec![1.0, 0.0]]);
    let q = dist(vec![vec![0.5, 0.5]]);
    assert_eq!(kl_divergence(&q, &q, &d1).unwrap(), 0.0);
    assert!((kl_divergence(&p, &q, &d1).unwrap() - 2.0_f64.ln()).abs() < 1e-15);
    assert!(matches!(kl_divergence(&q, &p, &d1), Err(Error::Support { prompt: 0, response: 1 })));
    assert_eq!(tv_distance(&q, &q, &d1).unwrap(), 0.0);
    assert_eq!(tv_distance(&p, &dist(vec![vec![0.0, 1.0]]), &d1).unwrap(), 1.0);
}

#[test]
fn kl_matches_a_direct_double_loop() {
    let s = FiniteSpaces::new(4, 5).unwrap();
    for seed in 0..20 {
        let p = random_distribution::<f64, _>(s, 1e-3, &mut stream(seed, 0, Purpose::Misc)).unwrap();
        let q = random_distribution::<f64, _>(s, 0.1, &mut stream(seed, 1, Purpose::Misc)).unwrap();
        let d = PromptDistribution::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let mut oracle = 0.0;
        for x in 0..4 {
            for y in 0..5 {
                let (a, b) = (p.prob(x, y), q.prob(x, y));
                if a > 0.0 {
                    oracle += d.weight(x) * a * (a / b).ln();
                }
            }
        }
        assert!((kl_divergence(&p, &q, &d).unwrap() - oracle).abs() < 1e-12);
    }
}

#[test]
fn softmax_examples() {
    let p = SoftmaxPolicy::from_rows(vec![vec![0.0, 0.0], vec![0.0, 3.0_f64.ln()]]).unwrap().probs();
    assert!(close(p.row(0), &[0.5, 0.5], 1e-15));
    assert!(close(p.row(1), &[0.25, 0.75], 1e-15));
    let mut q = SoftmaxPolicy::from_rows(vec![vec![0.3, -2.0, 1.1]]).unwrap();
    let before = q.probs();
    q.logits_mut().as_mut_slice().iter_mut().for_each(|v| *v += 17.5);
    assert!(close(before.row(0), q.probs().row(0), 1e-12));
}

#[test]
fn implicit_reward_examples() {
    let inst = instance(3, 1.4);
    let ctx = &inst.ctx;
    let at = SoftmaxPolicy::from_distribution(ctx.boltzmann()).unwrap();
    let r = implicit_reward(&at, ctx.tau(), &ctx.partition().log_z).unwrap();
    assert!(close(r.table().as_slice(), ctx.reward().table().as_slice(), 1e-10));

    let uniform = SoftmaxPolicy::zeros(ctx.spaces());
    let log_k = vec![(ctx.spaces().n_responses as f64).ln(); ctx.spaces().n_prompts];
    let r = implicit_reward(&uniform, 3.0, &log_k).unwrap();
    assert!(r.table().as_slice().iter().all(|v| v.abs() < 1e-15));

    let log_z = &ctx.partition().log_z;
    let r = implicit_reward(&inst.policy, ctx.tau(), log_z).unwrap();
    let pi = inst.policy.probs();
    for x in 0..3 {
        for y in 0..6 {
            let back = (ctx.tau() * r.get(x, y)).exp() / log_z[x].exp();
            assert!((back - pi.prob(x, y)).abs() < 1e-12);
        }
    }
}

#[test]
fn posterior_implicit_reward_examples() {
    let inst = instance(4, 0.6);
    let ctx = &inst.ctx;
    let reference = ctx.reference().unwrap();
    let lzp = ctx.partition().log_z_prime.clone().unwrap();
    let at = SoftmaxPolicy::from_distribution(ctx.posterior().unwrap()).unwrap();
    let r = posterior_implicit_reward(&at, reference, ctx.tau(), &lzp).unwrap();
    assert!(close(r.table().as_slice(), ctx.reward().table().as_slice(), 1e-10));

    let arbitrary = vec![0.7, -1.2, 3.0];
    let on_ref = SoftmaxPolicy::from_distribution(reference).unwrap();
    let r = posterior_implicit_reward(&on_ref, reference, ctx.tau(), &arbitrary).unwrap();
    for x in 0..3 {
        for &v in r.row(x) {
            assert!((v - arbitrary[x] / ctx.tau()).abs() < 1e-12);
        }
    }

    let r = posterior_implicit_reward(&inst.policy, reference, ctx.tau(), &lzp).unwrap();
    for x in 0..3 {
        for y1 in 0..6 {
            for y2 in 0..6 {
                let h = log_ratio_margin(&inst.policy, reference, ctx.tau(), x, y1, y2).unwrap();
                assert!((r.get(x, y1) - r.get(x, y2) - h).abs() < 1e-12);
            }
        }
    }

    let zero_ref = dist(vec![vec![1.0, 0.0]]);
    let p = SoftmaxPolicy::from_rows(vec![vec![0.0, 0.0]]).unwrap();
    assert!(matches!(posterior_implicit_reward(&p, &zero_ref, 1.0, &[0.0]), Err(Error::Domain(_))));
}

#[test]
fn log_ratio_margin_examples() {
    let inst = instance(5, 1.0);
    let reference = inst.ctx.reference().unwrap();
    let on_ref = SoftmaxPolicy::from_distribution(reference).unwrap();
    assert!(log_ratio_margin(&on_ref, reference, 1.0, 1, 0, 4).unwrap().abs() < 1e-14);
    assert_eq!(log_ratio_margin(&inst.policy, reference, 1.0, 1, 3, 3).unwrap(), 0.0);
    let a = log_ratio_margin(&inst.policy, reference, 1.0, 2, 1, 5).unwrap();
    let b = log_ratio_margin(&inst.policy, reference, 1.0, 2, 5, 1).unwrap();
    assert!((a + b).abs() < 1e-14);
}

#[test]
fn jacobian_and_diameter_examples() {
    let j = softmax_jacobian(&SoftmaxPolicy::<f64>::zeros(FiniteSpaces::new(1, 2).unwrap()), 0).unwrap();
    assert!(close(j.as_slice(), &[0.25, -0.25, -0.25, 0.25], 1e-15));
    assert_eq!(logit_diameter(&SoftmaxPolicy::<f64>::zeros(FiniteSpaces::new(2, 3).unwrap())), 0.0);
    let mut p = SoftmaxPolicy::from_rows(vec![vec![-1.0, 0.5], vec![3.0, 0.0]]).unwrap();
    assert_eq!(logit_diameter(&p), 4.0);
    p.logits_mut().as_mut_slice().iter_mut().for_each(|v| *v += 2.5);
    assert_eq!(logit_diameter(&p), 4.0);
}

#[test]
fn malformed_inputs() {
    assert!(matches!(FiniteSpaces::new(0, 3), Err(Error::Domain(_) | Error::Shape(_))));
    assert!(FiniteSpaces::new(2, 1).is_err());
    assert!(RewardTable::from_rows(vec![vec![0.0, f64::INFINITY]]).is_err());
    assert!(RewardTable::from_rows(vec![vec![0.0, 1.0], vec![0.0]]).is_err());
    assert!(PromptDistribution::new(vec![0.5, 0.6]).is_err());
    assert!(PromptDistribution::new(vec![-0.5, 1.5]).is_err());
    assert!(ConditionalDistribution::from_rows(vec![vec![0.2, -0.1]]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn squared_tv_is_bounded_by_kl(seed in any::<u64>(), k in 2usize..8) {
        let s = FiniteSpaces::new(1, k).unwrap();
        let p = random_distribution::<f64, _>(s, 1e-3, &mut stream(seed, 0, Purpose::Misc)).unwrap();
        let q = random_distribution::<f64, _>(s, 0.01, &mut stream(seed, 1, Purpose::Misc)).unwrap();
        let d = PromptDistribution::uniform(1).unwrap();
        let tv = tv_distance(&p, &q, &d).unwrap();
        let kl = kl_divergence(&p, &q, &d).unwrap();
        prop_assert!(tv * tv <= kl + 1e-15);
    }

    #[test]
    fn stored_distributions_are_normalized(seed in any::<u64>(), k in 2usize..10, floor in 0.0f64..0.9) {
        let s = FiniteSpaces::new(3, k).unwrap();
        let p = random_distribution::<f64, _>(s, floor, &mut stream(seed, 0, Purpose::Misc)).unwrap();
        for x in 0..3 {
            prop_assert!((p.row(x).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn boltzmann_rows_are_finite_at_any_scale(r in proptest::collection::vec(-1e3f64..1e3, 2..8), tau in 1e-3f64..1e3) {
        let t = target_policy(&one(r), tau, TargetKind::Boltzmann).unwrap();
        prop_assert!(t.table().all_finite());
        prop_assert!((t.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

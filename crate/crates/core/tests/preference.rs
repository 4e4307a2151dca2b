#![allow(clippy::needless_range_loop)]

use proptest::prelude::*;
use udrra_core::instance::{random_distribution, random_reward};
use udrra_core::policy::log_ratio_margin;
use udrra_core::preference::{
    c0_constant, entropy_term_m, fit_reward_model, margin_distribution_pi1, margin_stats,
    model_comparison_prob, omega_inverse, sample_preference_dataset, true_comparison_prob,
    ComparisonMode, MarginStats, OmegaModel, OmegaVariant, PreferenceDataset, PreferencePair,
};
use udrra_core::rng::{stream, Purpose};
use udrra_core::scalar::sigmoid;
use udrra_core::spaces::{partition_functions, target_policy, PairDistribution, TargetKind};
use udrra_core::table::Table;
use udrra_core::{ConditionalDistribution, Error, FiniteSpaces, PromptDistribution, RewardTable, SoftmaxPolicy};

fn om(v: OmegaVariant<f64>) -> OmegaModel<f64> {
    OmegaModel::new(v, 1.0).unwrap()
}

fn one(v: Vec<f64>) -> RewardTable<f64> {
    RewardTable::from_rows(vec![v]).unwrap()
}

#[test]
fn true_comparison_examples() {
    let bt = OmegaModel::bt();
    assert_eq!(true_comparison_prob(&bt, &one(vec![0.4, 0.4]), 0, 0, 1).unwrap().p, 0.5);
    let p = true_comparison_prob(&bt, &one(vec![3.0_f64.ln(), 0.0]), 0, 0, 1).unwrap().p;
    assert!((p - 0.75).abs() < 1e-15);
    let ind = om(OmegaVariant::Indicator);
    assert_eq!(true_comparison_prob(&ind, &one(vec![0.2, 0.1]), 0, 0, 1).unwrap().p, 1.0);
    assert!(matches!(
        true_comparison_prob(&om(OmegaVariant::Ratio), &one(vec![0.0, 1.0]), 0, 0, 1),
        Err(Error::Domain(_))
    ));
    let hinge = true_comparison_prob(&om(OmegaVariant::Hinge), &one(vec![0.0, 2.0]), 0, 0, 1).unwrap();
    assert!(hinge.clamped && hinge.p == 1.0);
    let exp = true_comparison_prob(&om(OmegaVariant::Exponential), &one(vec![1.0, 0.0]), 0, 0, 1).unwrap();
    assert!(exp.clamped && exp.p == 1.0);
}

#[test]
fn model_comparison_examples() {
    let s = FiniteSpaces::new(2, 4).unwrap();
    let reward = random_reward::<f64, _>(s, 0.0, 1.0, &mut stream(1, 0, Purpose::Reward)).unwrap();
    let reference = random_distribution::<f64, _>(s, 0.2, &mut stream(1, 0, Purpose::Reference)).unwrap();
    let bt = OmegaModel::bt();
    let tau = 1.3;
    let on_ref = SoftmaxPolicy::from_distribution(&reference).unwrap();
    let p = model_comparison_prob(&bt, &on_ref, tau, ComparisonMode::Posterior(&reference), 0.4, 1, 0, 3).unwrap();
    assert!((p.p - 0.5).abs() < 1e-15);

    let post = target_policy(&reward, tau, TargetKind::Posterior(&reference)).unwrap();
    let at = SoftmaxPolicy::from_distribution(&post).unwrap();
    let lzp = partition_functions(&reward, tau, Some(&reference)).unwrap().log_z_prime.unwrap();
    for x in 0..2 {
        for y1 in 0..4 {
            for y2 in 0..4 {
                let m = model_comparison_prob(&bt, &at, tau, ComparisonMode::Posterior(&reference), lzp[x], x, y1, y2)
                    .unwrap()
                    .p;
                let t = true_comparison_prob(&bt, &reward, x, y1, y2).unwrap().p;
                assert!((m - t).abs() < 1e-10);
                let h = log_ratio_margin(&at, &reference, tau, x, y1, y2).unwrap();
                assert!((m - sigmoid(h)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn inverse_examples() {
    let bt = OmegaModel::bt();
    assert_eq!(omega_inverse(&bt, 0.5).unwrap(), 0.0);
    assert!((omega_inverse(&bt, 0.75).unwrap() - 3.0_f64.ln()).abs() < 1e-15);
    let sin = om(OmegaVariant::Sin);
    assert!((omega_inverse(&sin, 0.5 + 0.5 * 0.3_f64.sin()).unwrap() - 0.3).abs() < 1e-10);
    assert_eq!(omega_inverse(&om(OmegaVariant::Indicator), 0.9).unwrap(), 1.0);
    for v in [OmegaVariant::Ratio, OmegaVariant::Hinge] {
        assert!(matches!(omega_inverse(&om(v), 0.6), Err(Error::Unsupported(_))));
    }
}

#[test]
fn invertible_rows_round_trip() {
    let deltas: [f64; 6] = [-1.2, -0.4, 0.0, 0.3, 0.9, 1.4];
    for v in [OmegaVariant::Bt, OmegaVariant::Tanh, OmegaVariant::Sin, OmegaVariant::SquaredSigmoid] {
        for eta in [0.5, 1.0, 2.0] {
            let m = OmegaModel::<f64>::new(v, eta).unwrap();
            for &d in &deltas {
                let p = m.eval(d, 0.0).unwrap().p;
                assert!((m.inverse(p).unwrap() - d).abs() <= 1e-10, "{v:?} eta {eta} delta {d}");
            }
        }
    }
    let m = om(OmegaVariant::Exponential);
    for d in [-3.0, -0.5, 0.0] {
        assert!((m.inverse(m.eval(d, 0.0).unwrap().p).unwrap() - d).abs() <= 1e-10);
    }
    let kto = om(OmegaVariant::KtoRef(Some(0.2)));
    for &(a, b) in &[(0.9, 0.1), (-0.3, 0.5), (0.2, 0.2)] {
        let p1 = kto.eval(a, b).unwrap().p;
        let p0 = kto.eval(b, a).unwrap().p;
        assert!((kto.inverse_kto(p1, p0).unwrap() - (a - b)).abs() <= 1e-10);
    }
}

#[test]
fn symmetric_rows_are_complementary() {
    for v in [OmegaVariant::Bt, OmegaVariant::Tanh, OmegaVariant::Sin, OmegaVariant::Indicator] {
        let m = om(v);
        assert!(m.is_symmetric());
        for &(a, b) in &[(0.1, 0.7), (2.0, -1.0), (0.5, 0.5)] {
            let s = m.eval(a, b).unwrap().p + m.eval(b, a).unwrap().p;
            assert!((s - 1.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn kto_without_reference_uses_the_row() {
    let m = om(OmegaVariant::KtoRef(None));
    assert!(matches!(m.eval(0.1, 0.2), Err(Error::Config(_))));
    let p = m.eval_in_row(&[0.0, 1.0, 2.0], 2, 0).unwrap().p;
    assert!((p - sigmoid(1.0)).abs() < 1e-15);
}

#[test]
fn entropy_term_examples() {
    assert!((entropy_term_m(0.5_f64) + 2.0_f64.ln()).abs() < 1e-15);
    assert_eq!(entropy_term_m(1.0_f64), 0.0);
    assert_eq!(entropy_term_m(0.0_f64), 0.0);
    let want = 0.9 * 0.9_f64.ln() + 0.1 * 0.1_f64.ln();
    assert!((entropy_term_m(0.9_f64) - want).abs() < 1e-15);
    assert!((want + 0.3251).abs() < 1e-4);
}

fn two_response_setup(gap: f64) -> (RewardTable<f64>, PromptDistribution<f64>, PairDistribution<f64>) {
    let r = one(vec![0.0, gap]);
    let u = ConditionalDistribution::uniform(r.spaces());
    (r, PromptDistribution::uniform(1).unwrap(), PairDistribution::product(u))
}

#[test]
fn dataset_sampling_examples() {
    let (r, d, law) = two_response_setup(50.0);
    let data = sample_preference_dataset(&law, &d, &OmegaModel::bt(), &r, 1000, 3).unwrap();
    assert_eq!(data.len(), 1000);
    assert!(data.pairs.iter().all(|p| p.winner == 1 && p.loser == 0));

    let (r, d, law) = two_response_setup(0.0);
    let data = sample_preference_dataset(&law, &d, &OmegaModel::bt(), &r, 10_000, 4).unwrap();
    let rate = data.win_rate(0, 0, 1).unwrap();
    assert!((rate - 0.5).abs() <= 0.02, "{rate}");

    let again = sample_preference_dataset(&law, &d, &OmegaModel::bt(), &r, 10_000, 4).unwrap();
    assert_eq!(data, again);
}

#[test]
fn degenerate_sampler_is_rejected() {
    let r = one(vec![0.0, 1.0, 2.0]);
    let point = ConditionalDistribution::from_rows(vec![vec![0.0, 1.0, 0.0]]).unwrap();
    let d = PromptDistribution::uniform(1).unwrap();
    let out = sample_preference_dataset(&PairDistribution::product(point), &d, &OmegaModel::bt(), &r, 5, 1);
    assert!(out.is_err());
}

#[test]
fn dataset_round_trips_through_text() {
    let (r, d, law) = two_response_setup(0.7);
    let data = sample_preference_dataset(&law, &d, &OmegaModel::bt(), &r, 50, 8).unwrap();
    let mut buf = Vec::new();
    data.write_to(&mut buf).unwrap();
    let back = PreferenceDataset::read_from(&buf[..]).unwrap();
    assert_eq!(data, back);
    assert!(PreferenceDataset::read_from(&b"# sampling_law=x seed=1\n0,1\n"[..]).is_err());
    assert!(PreferenceDataset::new(vec![PreferencePair { prompt: 0, winner: 1, loser: 1 }], "m", 0).is_err());
}

#[test]
fn margin_set_examples() {
    let s = FiniteSpaces::new(2, 4).unwrap();
    let reward = RewardTable::from_rows(vec![vec![0.0, 0.3, 0.7, 1.2], vec![1.0, 0.1, 0.5, 0.8]]).unwrap();
    let reference = random_distribution::<f64, _>(s, 0.2, &mut stream(2, 0, Purpose::Reference)).unwrap();
    let bt = OmegaModel::bt();
    let post = target_policy(&reward, 1.0, TargetKind::Posterior(&reference)).unwrap();
    let stats = margin_stats(&post, &reference, &bt, &reward, 1e-9).unwrap();
    for g in &stats.gamma_per_prompt {
        assert!((g - 12.0 / 16.0).abs() < 1e-15);
    }
    let none = margin_stats(&post, &reference, &bt, &reward, 100.0).unwrap();
    assert_eq!(none.gamma, 0.0);
    let flat = margin_stats(&reference, &reference, &bt, &reward, 1e-9).unwrap();
    assert_eq!(flat.gamma, 0.0);
    assert!(matches!(
        margin_stats(&post, &reference, &om(OmegaVariant::Indicator), &reward, 0.1),
        Err(Error::Domain(_))
    ));
}

fn masses(law: &PairDistribution<f64>, k: usize) -> Vec<f64> {
    (0..k * k).map(|i| law.weight(0, i / k, i % k)).collect()
}

#[test]
fn selection_law_examples() {
    let k = 3;
    let empty = MarginStats {
        gamma_per_prompt: vec![0.0],
        gamma: 0.0,
        in_set: vec![Table::filled(k, k, false)],
    };
    for mu in [0.5, 1.0, 3.0] {
        assert!(masses(&margin_distribution_pi1(&empty, mu, k).unwrap(), k).iter().all(|m| (m - 1.0 / 9.0).abs() < 1e-15));
    }
    let mut mask = Table::filled(k, k, false);
    mask.set(0, 1, true);
    mask.set(1, 0, true);
    let stats = MarginStats { gamma_per_prompt: vec![2.0 / 9.0], gamma: 2.0 / 9.0, in_set: vec![mask] };
    assert!(masses(&margin_distribution_pi1(&stats, 1.0, k).unwrap(), k).iter().all(|m| (m - 1.0 / 9.0).abs() < 1e-15));

    let mut mask = Table::filled(2, 2, false);
    mask.set(0, 1, true);
    let stats = MarginStats { gamma_per_prompt: vec![0.25], gamma: 0.25, in_set: vec![mask] };
    let m = masses(&margin_distribution_pi1(&stats, 0.5, 2).unwrap(), 2);
    assert!((m[1] - 0.125).abs() < 1e-15);
    for i in [0, 2, 3] {
        assert!((m[i] - 0.875 / 3.0).abs() < 1e-15);
    }
    assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    assert!(matches!(margin_distribution_pi1(&stats, 4.0, 2), Err(Error::Domain(_))));
}

#[test]
fn c0_examples() {
    assert!((c0_constant(1e-12_f64, 1.0).unwrap() + 0.75).abs() < 1e-12);
    assert!((c0_constant(1e3_f64, 1e-3).unwrap() + 1.0).abs() < 1e-12);
    let want = sigmoid(1.0_f64) * sigmoid(-1.0) - 1.0;
    assert!((c0_constant(0.7_f64, 0.7).unwrap() - want).abs() < 1e-15);
    assert!((want + 0.8034).abs() < 1e-4);
}

#[test]
fn reward_model_examples() {
    let s = FiniteSpaces::new(1, 2).unwrap();
    let win = vec![PreferencePair { prompt: 0, winner: 0, loser: 1 }; 100];
    let r: RewardTable<f64> = fit_reward_model(&PreferenceDataset::new(win, "m", 0).unwrap(), s, 2000, 0.1).unwrap();
    assert!(r.get(0, 0) - r.get(0, 1) > 2.0);

    let mut half = vec![PreferencePair { prompt: 0, winner: 0, loser: 1 }; 50];
    half.extend(vec![PreferencePair { prompt: 0, winner: 1, loser: 0 }; 50]);
    let r: RewardTable<f64> = fit_reward_model(&PreferenceDataset::new(half, "m", 0).unwrap(), s, 2000, 0.1).unwrap();
    assert!((r.get(0, 0) - r.get(0, 1)).abs() < 0.1);
}

#[test]
fn reward_model_agrees_with_inverted_win_rates() {
    let reward = one(vec![0.0, 0.5, 1.1]);
    let u = ConditionalDistribution::uniform(reward.spaces());
    let d = PromptDistribution::uniform(1).unwrap();
    let bt = OmegaModel::bt();
    let data = sample_preference_dataset(&PairDistribution::product(u), &d, &bt, &reward, 50_000, 11).unwrap();
    let fit: RewardTable<f64> = fit_reward_model(&data, reward.spaces(), 5000, 1.0).unwrap();
    for (a, b) in [(1, 0), (2, 0), (2, 1)] {
        let want = omega_inverse(&bt, data.win_rate(0, a, b).unwrap()).unwrap();
        let got = fit.get(0, a) - fit.get(0, b);
        assert!((got - want).abs() <= 0.1, "({a},{b}): {got} vs {want}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn entropy_term_is_bounded(p in 0.0f64..=1.0) {
        let m = entropy_term_m(p);
        prop_assert!(m <= 0.0 && m >= -(2.0_f64.ln()) - 1e-15);
    }

    #[test]
    fn comparison_probabilities_lie_in_the_unit_interval(a in -5.0f64..5.0, b in -5.0f64..5.0, eta in 0.1f64..5.0) {
        for v in [
            OmegaVariant::Bt, OmegaVariant::Tanh, OmegaVariant::Sin, OmegaVariant::Indicator,
            OmegaVariant::Hinge, OmegaVariant::KtoRef(Some(0.0)), OmegaVariant::SquaredSigmoid,
            OmegaVariant::Exponential,
        ] {
            let p = OmegaModel::new(v, eta).unwrap().eval(a, b).unwrap().p;
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }
}

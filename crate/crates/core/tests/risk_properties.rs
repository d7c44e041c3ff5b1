mod common;

use common::{argmin_set, Separable};
use nes_core::noise::{build_circular, build_symmetric, TransitionMatrix};
use nes_core::risk::{
    find_order_violation, g_vector_from_predictions, simultaneous_minima_window, worst_case_gap,
    CovarianceStats, FiniteDistribution,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng as _;

/// Random class-preserving symmetric matrix for `c` classes.
fn preserving_symmetric(r: &mut nes_core::rng::Rng, c: usize) -> TransitionMatrix {
    let eta = r.random_range(0.0..(c as f64 - 1.0) / c as f64 - 1e-3);
    build_symmetric(c, eta).unwrap()
}

/// Random column-permutation matrix with a constant diagonal `1 - eta` above every other entry.
fn random_permutation_matrix(r: &mut nes_core::rng::Rng, c: usize) -> TransitionMatrix {
    loop {
        let mut v = common::random_simplex(r, c);
        v.sort_by(|a, b| b.total_cmp(a));
        if v[0] > v[1] + 1e-3 {
            return common::cyclic_matrix(&v);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn noisy_and_clean_argmins_agree_under_symmetric_noise(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let c = r.random_range(2..=4);
        let points = r.random_range(1..=6);
        let dist = Separable::random(&mut r, points, c);
        let t = preserving_symmetric(&mut r, c);
        let models: Vec<Vec<usize>> = (0..r.random_range(1..=8)).map(|_| dist.random_predictions(&mut r)).collect();
        let clean: Vec<f64> = models.iter().map(|m| dist.clean_risk(m)).collect();
        let noisy: Vec<f64> = models.iter().map(|m| dist.noisy_risk(m, &t)).collect();
        prop_assert_eq!(argmin_set(&clean, 1e-12), argmin_set(&noisy, 1e-12));
        let lib = FiniteDistribution::new(dist.weights.clone(), dist.posteriors()).unwrap();
        for (m, &n) in models.iter().zip(&noisy) {
            prop_assert!((lib.noisy_risk(m, &t).unwrap() - n).abs() < 1e-12);
        }
    }

    #[test]
    fn bayes_classifier_minimises_noisy_risk(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let c = r.random_range(2..=4);
        let points = r.random_range(1..=6);
        let dist = Separable::random(&mut r, points, c);
        let t = common::random_dominant(&mut r, c, 1e-6);
        let bayes = dist.labels.clone();
        let best = dist.noisy_risk(&bayes, &t);
        for _ in 0..8 {
            let m = dist.random_predictions(&mut r);
            prop_assert!(best <= dist.noisy_risk(&m, &t) + 1e-12);
        }
    }

    #[test]
    fn bound_holds_on_enumerated_instances(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let c = r.random_range(2..=4);
        let points = r.random_range(1..=6);
        let dist = Separable::random(&mut r, points, c);
        let t = random_permutation_matrix(&mut r, c);
        let (eta, lo, hi) = nes_core::risk::bound_parameters(&t).unwrap();
        prop_assume!(1.0 - eta - hi > 1e-6);
        let models: Vec<Vec<usize>> = (0..r.random_range(1..=8)).map(|_| dist.random_predictions(&mut r)).collect();
        let clean: Vec<f64> = models.iter().map(|m| dist.clean_risk(m)).collect();
        let noisy: Vec<f64> = models.iter().map(|m| dist.noisy_risk(m, &t)).collect();
        let k = argmin_set(&noisy, 0.0)[0];
        let star = argmin_set(&clean, 0.0)[0];
        let gap = (clean[k] - clean[star]).abs();
        let general = worst_case_gap(noisy[k], Some(noisy[star]), eta, lo, hi).unwrap().bound;
        let optimal = worst_case_gap(noisy[k], None, eta, lo, hi).unwrap().bound;
        prop_assert!(gap <= general + 1e-12, "gap {gap} general {general}");
        prop_assert!(general <= optimal + 1e-12);
    }

    #[test]
    fn covariance_respects_cauchy_schwarz(seed in any::<u64>(), n in 1usize..40) {
        let mut r = common::rng(seed);
        let w = common::random_simplex(&mut r, n);
        let eta: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        let g: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        let s = CovarianceStats::from_samples(&w, &eta, &g).unwrap();
        prop_assert!(s.cov.abs() <= s.sd_eta * s.sd_g + 1e-12);
    }

    #[test]
    fn simultaneous_minima_give_agreeing_epochs(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let c = r.random_range(3..=4);
        let n = 12;
        let epochs = 6;
        let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
        let weights = vec![1.0 / n as f64; n];
        let mut values = common::random_simplex(&mut r, c);
        values.sort_by(|a, b| b.total_cmp(a));
        prop_assume!(values.windows(2).all(|w| w[0] > w[1] + 1e-6));
        let t = common::cyclic_matrix(&values);
        let planted = r.random_range(0..epochs);
        let preds: Vec<Vec<usize>> = (0..epochs)
            .map(|e| {
                labels
                    .iter()
                    .map(|&y| if e == planted || r.random::<f64>() < 0.3 { y } else { r.random_range(0..c) })
                    .collect()
            })
            .collect();
        let columns: Vec<Vec<f64>> = labels.iter().map(|&y| t.column(y).to_vec()).collect();
        let g: Vec<Vec<f64>> = preds.iter().map(|p| g_vector_from_predictions(p, &columns).unwrap().g.into_inner()).collect();
        let traj: Vec<Vec<f64>> = (1..c).map(|k| g.iter().map(|v| v[k]).collect()).collect();
        let w = simultaneous_minima_window(&traj).unwrap();
        let dist = FiniteDistribution::new(weights, Separable { weights: vec![], labels: labels.clone(), classes: c }.posteriors()).unwrap();
        let clean: Vec<f64> = preds.iter().map(|p| dist.clean_risk(p).unwrap()).collect();
        let noisy: Vec<f64> = preds.iter().map(|p| dist.noisy_risk(p, &t).unwrap()).collect();
        if w.width() == 0 && !w.degenerate {
            let e = w.t1 - 1;
            prop_assert!(argmin_set(&clean, 1e-12).contains(&e));
            prop_assert!(argmin_set(&noisy, 1e-12).contains(&e));
        }
    }
}

#[test]
fn order_search_matches_the_symmetric_converse() {
    let mut r = common::rng(7);
    for _ in 0..50 {
        let c = r.random_range(2..=4usize);
        let t = preserving_symmetric(&mut r, c);
        assert!(find_order_violation(&t, 0.05).unwrap().is_none());
    }
    let w = find_order_violation(&build_circular(3, 0.2).unwrap(), 0.02).unwrap();
    assert!(w.is_some());
}

#[test]
fn shuffled_support_keeps_risks() {
    let mut r = common::rng(11);
    let mut dist = Separable::random(&mut r, 5, 3);
    let preds = dist.random_predictions(&mut r);
    let t = build_symmetric(3, 0.4).unwrap();
    let before = (dist.clean_risk(&preds), dist.noisy_risk(&preds, &t));
    let mut order: Vec<usize> = (0..5).collect();
    order.shuffle(&mut r);
    dist.weights = order.iter().map(|&i| dist.weights[i]).collect();
    dist.labels = order.iter().map(|&i| dist.labels[i]).collect();
    let preds: Vec<usize> = order.iter().map(|&i| preds[i]).collect();
    let after = (dist.clean_risk(&preds), dist.noisy_risk(&preds, &t));
    assert!((before.0 - after.0).abs() < 1e-12 && (before.1 - after.1).abs() < 1e-12);
}

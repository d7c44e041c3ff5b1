#![allow(clippy::needless_range_loop)]

mod common;

use ndarray::Array2;
use nes_core::noise::{
    apply_noise, build_circular, build_pairwise, build_subset_symmetric, build_superclass_circular,
    build_symmetric, build_symmetric_injection, build_ternary_gvector, consecutive_groups,
    is_class_preserving_at, ClassPreservation, NoiseKind, TransitionMatrix, UniformNoise,
};
use proptest::prelude::*;

fn assert_column_stochastic(t: &TransitionMatrix) {
    let c = t.classes();
    for j in 0..c {
        let col = t.column(j);
        assert!(col.iter().all(|&v| v >= 0.0));
        assert!(
            (col.sum() - 1.0).abs() <= 1e-9,
            "column {j} sums to {}",
            col.sum()
        );
    }
}

proptest! {
    #[test]
    fn builders_are_column_stochastic(c in 2usize..12, eta in 0.0f64..=1.0, include in any::<bool>()) {
        assert_column_stochastic(&build_symmetric(c, eta).unwrap());
        assert_column_stochastic(&build_symmetric_injection(c, eta, include).unwrap());
        assert_column_stochastic(&build_circular(c, eta).unwrap());
        let pairs: Vec<(usize, usize)> = (0..c / 2).map(|k| (2 * k, 2 * k + 1)).collect();
        assert_column_stochastic(&build_pairwise(c, &pairs, eta).unwrap());
        if c % 2 == 0 {
            let groups = consecutive_groups(c, 2).unwrap();
            assert_column_stochastic(&build_superclass_circular(&groups, eta).unwrap());
            assert_column_stochastic(&build_subset_symmetric(&groups, eta).unwrap());
        }
        if eta <= 2.0 / 3.0 {
            assert_column_stochastic(&build_ternary_gvector(eta).unwrap());
        }
    }

    #[test]
    fn symmetric_matches_entrywise_oracle(c in 2usize..10, eta in 0.0f64..=1.0) {
        let t = build_symmetric(c, eta).unwrap();
        let oracle = common::symmetric_oracle(c, eta);
        for i in 0..c {
            for j in 0..c {
                prop_assert!((t.get(i, j) - oracle[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn text_round_trip(c in 2usize..8, eta in 0.0f64..=1.0) {
        let t = build_circular(c, eta).unwrap().compose(&build_symmetric(c, eta / 2.0).unwrap()).unwrap();
        let back = TransitionMatrix::from_text(&t.to_text()).unwrap();
        prop_assert_eq!(back.entries(), t.entries());
    }

    #[test]
    fn injection_is_deterministic(seed in any::<u64>(), eta in 0.0f64..1.0) {
        let field = UniformNoise::new(build_symmetric(5, eta).unwrap(), NoiseKind::Symmetric, eta);
        let labels: Vec<usize> = (0..200).map(|i| i % 5).collect();
        let x = Array2::<f64>::zeros((0, 0));
        let a = apply_noise(&labels, &field, x.view(), seed).unwrap();
        let b = apply_noise(&labels, &field, x.view(), seed).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn one_hot_preservation_threshold() {
    for c in 2..=20usize {
        let threshold = (c as f64 - 1.0) / c as f64;
        for k in 0..=100u32 {
            let eta = f64::from(k) / 100.0;
            let t = build_symmetric(c, eta).unwrap();
            let expected = eta < threshold - 1e-12;
            for y in [0, c - 1] {
                let mut p = vec![0.0; c];
                p[y] = 1.0;
                let got = is_class_preserving_at(&t, &p).unwrap();
                assert_eq!(
                    got == ClassPreservation::Preserved,
                    expected,
                    "c={c} eta={eta} got {got:?}"
                );
            }
        }
    }
}

/// Upper `1 - alpha` quantile of a chi-square law (Wilson-Hilferty), `z` the normal quantile.
fn chi_square_quantile(df: f64, z: f64) -> f64 {
    let a = 2.0 / (9.0 * df);
    df * (1.0 - a + z * a.sqrt()).powi(3)
}

#[test]
fn injected_frequencies_pass_chi_square() {
    const Z_999: f64 = 3.090232306167813;
    let c = 10;
    let n = 100_000;
    let t = build_symmetric(c, 0.5).unwrap();
    let field = UniformNoise::new(t.clone(), NoiseKind::Symmetric, 0.5);
    let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    let x = Array2::<f64>::zeros((0, 0));
    let noisy = apply_noise(&labels, &field, x.view(), 2024).unwrap();
    for j in 0..c {
        let mut counts = vec![0.0; c];
        let mut total = 0.0;
        for (&y, &z) in labels.iter().zip(&noisy) {
            if y == j {
                counts[z] += 1.0;
                total += 1.0;
            }
        }
        let stat: f64 = (0..c)
            .map(|i| {
                let e = total * t.get(i, j);
                (counts[i] - e).powi(2) / e
            })
            .sum();
        let crit = chi_square_quantile((c - 1) as f64, Z_999);
        assert!(stat < crit, "class {j}: chi-square {stat} above {crit}");
    }
}

#[test]
fn circular_twice_is_the_product() {
    for c in 2..=5usize {
        for (e1, e2) in [(0.1, 0.3), (0.45, 0.2), (0.7, 0.9)] {
            let t1 = build_circular(c, e1).unwrap();
            let t2 = build_circular(c, e2).unwrap();
            let product = t2.compose(&t1).unwrap();
            for y in 0..c {
                let mut two_step = vec![0.0; c];
                for mid in 0..c {
                    for out in 0..c {
                        two_step[out] += t1.get(mid, y) * t2.get(out, mid);
                    }
                }
                for out in 0..c {
                    assert!((two_step[out] - product.get(out, y)).abs() < 1e-12);
                }
            }
        }
    }
}

//! Symmetry and calibration of the hypothesis tests.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use decaymap_core::stats::{
    fisher_exact, geometric_mean, ln_gamma, mann_whitney_u, median, normal_sf, student_t_two_sided,
    welch_t_test, wilcoxon_signed_rank,
};

const ALPHAS: [f64; 6] = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5];

fn ints(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0..8i32).prop_map(f64::from), 1..max_len)
}

proptest! {
    #[test]
    fn fisher_ignores_row_and_column_labels(a in 0..30u64, b in 0..30u64, c in 0..30u64, d in 0..30u64) {
        prop_assume!(a + b + c + d > 0);
        let p = |a, b, c, d| fisher_exact::<f64>(a, b, c, d).unwrap().p_value;
        let base = p(a, b, c, d);
        prop_assert!(base > 0.0 && base <= 1.0);
        for other in [p(c, d, a, b), p(b, a, d, c), p(a, c, b, d), p(d, c, b, a)] {
            prop_assert!((base - other).abs() < 1e-12);
        }
    }

    #[test]
    fn mann_whitney_ignores_group_labels(x in ints(12), y in ints(12)) {
        let xy = mann_whitney_u(&x, &y).unwrap();
        let yx = mann_whitney_u(&y, &x).unwrap();
        prop_assert!((xy.p_value - yx.p_value).abs() < 1e-12);
        prop_assert!(xy.p_value > 0.0 && xy.p_value <= 1.0);
    }

    #[test]
    fn wilcoxon_ignores_pair_order(pairs in prop::collection::vec((0..6i32, 0..6i32), 1..25)) {
        let fwd: Vec<(f64, f64)> = pairs.iter().map(|(a, b)| (f64::from(*a), f64::from(*b))).collect();
        let rev: Vec<(f64, f64)> = fwd.iter().map(|(a, b)| (*b, *a)).collect();
        let f = wilcoxon_signed_rank(&fwd).unwrap();
        let r = wilcoxon_signed_rank(&rev).unwrap();
        prop_assert!((f.p_value - r.p_value).abs() < 1e-12);
        prop_assert_eq!(f.statistic, r.statistic);
        prop_assert!(f.p_value > 0.0 && f.p_value <= 1.0);
    }

    #[test]
    fn f32_fisher_tracks_f64(a in 0..20u64, b in 0..20u64, c in 0..20u64, d in 0..20u64) {
        prop_assume!(a + b + c + d > 0);
        let p64 = fisher_exact::<f64>(a, b, c, d).unwrap().p_value;
        let p32 = fisher_exact::<f32>(a, b, c, d).unwrap().p_value;
        prop_assert!((p64 - f64::from(p32)).abs() < 1e-4);
    }
}

/// Exact size: under the permutation null every group assignment of the
/// ranks 1..=n is equally likely, so the share with `p <= alpha` is at most alpha.
#[test]
fn mann_whitney_exact_is_super_uniform() {
    for (k, n) in [(5usize, 10usize), (3, 11), (7, 14)] {
        let ranks: Vec<f64> = (1..=n).map(|r| r as f64).collect();
        let mut ps = Vec::new();
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != k {
                continue;
            }
            let (x, y): (Vec<f64>, Vec<f64>) = {
                let (mut x, mut y) = (vec![], vec![]);
                for (i, r) in ranks.iter().enumerate() {
                    if mask >> i & 1 == 1 {
                        x.push(*r)
                    } else {
                        y.push(*r)
                    }
                }
                (x, y)
            };
            ps.push(mann_whitney_u(&x, &y).unwrap().p_value);
        }
        for a in ALPHAS {
            let share = ps.iter().filter(|p| **p <= a).count() as f64 / ps.len() as f64;
            assert!(share <= a + 1e-12, "k={k} n={n} alpha={a} share={share}");
        }
    }
}

#[test]
fn wilcoxon_exact_is_super_uniform() {
    for n in [6usize, 9, 12] {
        let mut ps = Vec::new();
        for signs in 0u32..(1 << n) {
            let pairs: Vec<(f64, f64)> = (0..n)
                .map(|i| {
                    let d = (i + 1) as f64;
                    if signs >> i & 1 == 1 {
                        (0.0, d)
                    } else {
                        (d, 0.0)
                    }
                })
                .collect();
            ps.push(wilcoxon_signed_rank(&pairs).unwrap().p_value);
        }
        for a in ALPHAS {
            let share = ps.iter().filter(|p| **p <= a).count() as f64 / ps.len() as f64;
            assert!(share <= a + 1e-12, "n={n} alpha={a} share={share}");
        }
    }
}

#[test]
fn fisher_is_super_uniform_given_margins() {
    for (r1, r2, c1) in [(10u64, 12u64, 9u64), (20, 5, 8), (15, 15, 15)] {
        let n = r1 + r2;
        let lo = c1.saturating_sub(r2);
        let hi = r1.min(c1);
        let ln_choose = |n: u64, k: u64| {
            ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
        };
        let weight = |x: u64| (ln_choose(r1, x) + ln_choose(r2, c1 - x) - ln_choose(n, c1)).exp();
        for a in ALPHAS {
            let size: f64 = (lo..=hi)
                .filter(|&x| {
                    fisher_exact::<f64>(x, r1 - x, c1 - x, r2 - (c1 - x))
                        .unwrap()
                        .p_value
                        <= a
                })
                .map(weight)
                .sum();
            assert!(size <= a + 1e-12, "margins {r1},{r2},{c1} alpha={a} size={size}");
        }
    }
}

/// The normal approximation used for larger samples stays close to nominal size.
#[test]
fn mann_whitney_normal_approximation_holds_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let trials = 4000;
    let mut rejections = 0;
    for _ in 0..trials {
        let x: Vec<f64> = (0..15).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = (0..15).map(|_| rng.random::<f64>()).collect();
        let r = mann_whitney_u(&x, &y).unwrap();
        assert!(!r.exact);
        if r.p_value < 0.05 {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / trials as f64;
    let se = (0.05f64 * 0.95 / trials as f64).sqrt();
    assert!(rate <= 0.05 + 3.0 * se, "rate {rate}");
}

#[test]
fn distribution_functions_match_tables() {
    assert!((normal_sf(1.959_963_985f64) - 0.025).abs() < 1e-9);
    assert!((ln_gamma(5.0f64) - 24f64.ln()).abs() < 1e-12);
    assert!((ln_gamma(0.5f64) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    // Two-sided 5% critical values of Student's t.
    for (t, df) in [(12.706f64, 1.0), (2.228, 10.0), (2.042, 30.0)] {
        assert!((student_t_two_sided(t, df) - 0.05).abs() < 2e-4, "df {df}");
    }
}

#[test]
fn welch_detects_a_shift_and_not_an_identity() {
    let x: Vec<f64> = (0..30).map(|i| i as f64).collect();
    let y: Vec<f64> = x.iter().map(|v| v + 20.0).collect();
    assert!(welch_t_test(&x, &y).unwrap().p_value < 1e-6);
    assert!((welch_t_test(&x, &x).unwrap().p_value - 1.0).abs() < 1e-12);
}

#[test]
fn summaries() {
    assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
    assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    assert_eq!(median::<f64>(&[]), None);
    let e = std::f64::consts::E;
    assert!((geometric_mean(&[e, e.powi(3)]).unwrap() - e * e).abs() < 1e-12);
    assert!(geometric_mean(&[1.0, 0.0]).is_err());
}

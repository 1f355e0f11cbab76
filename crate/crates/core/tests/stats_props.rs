use proptest::prelude::*;
use segfuse::stats::{t_cdf, welch_groups, welch_test, Sided, Spread};

/// Reference (mean, ±) pairs, n = 4 runs each.
const BASELINE: (f64, f64) = (0.3781, 0.0046);
const CONCAT: (f64, f64) = (0.3868, 0.0016);
const ADDITION_ONE: (f64, f64) = (0.3828, 0.0020);
const TWO_STAGE: (f64, f64) = (0.3872, 0.0037);
const FEATURES_SEGMAPS: (f64, f64) = (0.4149, 0.0034);
const SC_ONLY: (f64, f64) = (0.4148, 0.0015);

fn p(a: (f64, f64), b: (f64, f64), sided: Sided) -> f64 {
    welch_test(a.0, a.1, 4, b.0, b.1, 4, sided).unwrap().p
}

#[test]
fn reference_comparisons_match_oracle_values() {
    // frozen from a scipy.stats.ttest_ind_from_stats oracle
    let cases = [
        (FEATURES_SEGMAPS, TWO_STAGE, Sided::Greater, 1.737e-5, 1e-7),
        (CONCAT, BASELINE, Sided::Greater, 0.01319, 1e-5),
        (ADDITION_ONE, BASELINE, Sided::Greater, 0.0663, 1e-4),
        (SC_ONLY, FEATURES_SEGMAPS, Sided::Two, 0.9596, 1e-4),
    ];
    for (a, b, sided, want, tol) in cases {
        let got = p(a, b, sided);
        assert!((got - want).abs() < tol, "{a:?} vs {b:?}: {got}");
    }
}

#[test]
fn standard_error_reading_tightens_the_test() {
    let sd = p(CONCAT, BASELINE, Sided::Greater);
    let s1 = Spread::StandardError.to_std(CONCAT.1, 4);
    let s2 = Spread::StandardError.to_std(BASELINE.1, 4);
    let se = welch_test(CONCAT.0, s1, 4, BASELINE.0, s2, 4, Sided::Greater).unwrap().p;
    assert!(se > sd);
}

#[test]
fn raw_scores_match_summary_form() {
    let a = [0.41, 0.42, 0.415, 0.405];
    let b = [0.38, 0.39, 0.385, 0.392];
    let raw = welch_groups(&a, &b, Sided::Greater).unwrap();
    assert!(raw.p < 0.001 && raw.t > 0.0);
}

proptest! {
    #[test]
    fn one_sided_tails_sum_to_one(
        m1 in -1.0f64..1.0, m2 in -1.0f64..1.0,
        s1 in 0.01f64..1.0, s2 in 0.01f64..1.0,
        n1 in 2usize..30, n2 in 2usize..30,
    ) {
        let ab = welch_test(m1, s1, n1, m2, s2, n2, Sided::Greater).unwrap();
        let ba = welch_test(m2, s2, n2, m1, s1, n1, Sided::Greater).unwrap();
        prop_assert!((ab.p + ba.p - 1.0).abs() < 1e-12);
        let lo = (n1.min(n2) - 1) as f64;
        let hi = (n1 + n2 - 2) as f64;
        prop_assert!(ab.df >= lo - 1e-9 && ab.df <= hi + 1e-9, "df {}", ab.df);
        let two = welch_test(m1, s1, n1, m2, s2, n2, Sided::Two).unwrap();
        prop_assert!((two.p - 2.0 * ab.p.min(ba.p)).abs() < 1e-12);
    }

    #[test]
    fn t_cdf_is_monotone_and_symmetric(t in -50.0f64..50.0, dt in 0.0f64..5.0, df in 0.5f64..200.0) {
        let a = t_cdf(t, df);
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(t_cdf(t + dt, df) >= a);
        prop_assert!((t_cdf(-t, df) - (1.0 - a)).abs() < 1e-12);
    }
}

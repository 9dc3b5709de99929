mod common;

use kmon_core::retro::{contrast_sequence, retro_statistic_with};
use kmon_core::*;
use proptest::prelude::*;

fn shifted(m: usize, at: usize, shift: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut x = common::gaussian(m, 5, seed);
    for row in &mut x[at..] {
        for v in row.iter_mut() {
            *v += shift;
        }
    }
    x
}

#[test]
fn contrast_matches_two_sample_oracle() {
    let x = common::gaussian(12, 2, 1);
    let h = KernelSpec::euclidean().resolve(None).unwrap();
    let r = contrast_sequence(&h, &x).unwrap();
    let refs: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
    for k in 2..=10 {
        let want = common::contrast(&h, &refs[..k], &refs[k..]);
        assert!(common::rel_close(r[k - 2], want, 1e-12));
    }
}

#[test]
fn constant_sample_gives_zero() {
    let x = vec![vec![1.5, -2.0, 0.25]; 30];
    for spec in [KernelSpec::sqrt_l1(), KernelSpec::euclidean(), KernelSpec::Grothendieck] {
        assert_eq!(retro_statistic(&spec, &x, 0.0).unwrap().statistic, 0.0);
    }
}

#[test]
fn strong_shift_is_rejected_and_located() {
    let x = shifted(200, 100, 1.0, 3);
    let cal = Calibration { reps: 500, grid_n: Some(1024), ..Default::default() };
    let r = retro_test(&KernelSpec::euclidean(), &x, 0.0, 0.05, &cal).unwrap();
    assert!(r.reject, "{r:?}");
    assert!(r.argmax_k.abs_diff(100) <= 10);
}

#[test]
fn edge_weight_favours_early_changes() {
    // a change close to the start is located better with a heavier edge weight
    let x = shifted(200, 12, 2.0, 4);
    let h = KernelSpec::euclidean().resolve(None).unwrap();
    let flat = retro_statistic_with(&h, &x, 0.0).unwrap();
    let edge = retro_statistic_with(&h, &x, 0.75).unwrap();
    assert!(edge.argmax_k.abs_diff(12) <= flat.argmax_k.abs_diff(12));
    assert!(edge.statistic > flat.statistic);
}

#[test]
fn statistic_grows_with_shift_size() {
    let h = KernelSpec::euclidean().resolve(None).unwrap();
    let mut prev = 0.0;
    for shift in [0.5, 1.0, 2.0, 4.0] {
        let s = retro_statistic_with(&h, &shifted(100, 50, shift, 5), 0.0).unwrap().statistic;
        assert!(s > prev);
        prev = s;
    }
}

#[test]
fn input_errors() {
    let h = KernelSpec::euclidean().resolve(None).unwrap();
    assert!(retro_statistic_with(&h, &common::gaussian(4, 2, 1), 0.0).is_err());
    assert!(retro_statistic_with(&h, &common::gaussian(10, 2, 1), 1.0).is_err());
    let mut ragged = common::gaussian(10, 2, 1);
    ragged[3].push(0.0);
    assert!(retro_statistic_with(&h, &ragged, 0.0).is_err());
}

#[test]
fn result_json_keys() {
    let h = KernelSpec::euclidean().resolve(None).unwrap();
    let r = retro_statistic_with(&h, &common::gaussian(10, 2, 1), 0.0).unwrap();
    let v = serde_json::to_value(&r).unwrap();
    for key in ["stat", "k_hat", "cv", "reject", "zeta"] {
        assert!(v.get(key).is_some(), "{key}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn reversal_symmetry(seed in 0u64..10_000, m in 5usize..40, zeta in 0.0f64..0.9, k in 0usize..5) {
        let x = common::gaussian(m, 2, seed);
        let mut rev = x.clone();
        rev.reverse();
        let h = common::all_kernels()[k].resolve(Some(&x)).unwrap();
        let a = retro_statistic_with(&h, &x, zeta).unwrap();
        let b = retro_statistic_with(&h, &rev, zeta).unwrap();
        prop_assert!(common::rel_close(a.statistic, b.statistic, 1e-9));
    }

    #[test]
    fn additive_kernel_annihilates(seed in 0u64..10_000, m in 5usize..60, zeta in 0.0f64..0.9) {
        let x = common::gaussian(m, 3, seed);
        let r = retro_statistic_with(&common::Additive, &x, zeta).unwrap();
        prop_assert!(r.statistic.abs() < 1e-12, "{}", r.statistic);
    }
}

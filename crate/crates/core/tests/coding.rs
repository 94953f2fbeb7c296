//! Sparse coding against the exhaustive active-set oracle.

mod common;

use common::{coding_instance as instance, dictionary, oracle_gap, oracle_lambda};
use ndarray::{array, Array2};
use ocpdl_core::*;
use proptest::prelude::*;

/// Settings for the oracle comparison. Plain projected gradient with step
/// `1/(2 tr G)` crawls on instances with a near-degenerate atom, so the
/// default 200 iterations are not enough to reach a 1e-6 objective gap.
fn tight(lambda: f64) -> CodingSettings {
    CodingSettings { lambda, tol: 1e-14, max_iters: 100_000, ..CodingSettings::default() }
}

#[test]
fn matches_active_set_oracle() {
    let bad: Vec<(u64, f64)> = (0..200)
        .map(|seed| (seed, oracle_gap(seed, &tight(oracle_lambda(seed)))))
        .filter(|(_, gap)| gap.abs() > 1e-6)
        .collect();
    assert!(bad.is_empty(), "instances off the oracle: {bad:?}");
}

#[test]
fn never_beats_the_oracle_at_default_settings() {
    for seed in 0..200 {
        let gap = oracle_gap(seed, &CodingSettings::with_lambda(oracle_lambda(seed)));
        assert!(gap >= -1e-9, "seed {seed}: gap {gap}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn objective_forms_agree(seed in any::<u64>(), lambda in 0.0f64..2.0) {
        let (x, l) = instance(seed);
        let s = CodingSettings::with_lambda(lambda);
        let p = CodingProblem::new(&x, &l, &s).unwrap();
        let (c, _) = p.solve(None).unwrap();
        let direct = coding_objective(&x, &l, &c, lambda).unwrap();
        prop_assert!((p.objective(&c) - direct).abs() <= 1e-10 * (1.0 + direct));
    }

    #[test]
    fn warm_start_is_never_worse_than_its_start(seed in any::<u64>(), lambda in 0.0f64..2.0) {
        let (x, l) = instance(seed);
        let s = CodingSettings::with_lambda(lambda);
        let p = CodingProblem::new(&x, &l, &s).unwrap();
        let start = Array2::from_elem((l.rank(), 1), 0.7);
        let (c, _) = p.solve(Some(&start)).unwrap();
        prop_assert!(p.objective(&c) <= p.objective(&start) + 1e-12);
    }

    #[test]
    fn with_gram_matches_new(seed in any::<u64>()) {
        let (x, l) = instance(seed);
        let s = CodingSettings::with_lambda(0.3);
        let a = CodingProblem::new(&x, &l, &s).unwrap().solve(None).unwrap().0;
        let b = CodingProblem::with_gram(&x, &l, &code_gram(&l), &s).unwrap().solve(None).unwrap().0;
        prop_assert_eq!(a, b);
    }
}

#[test]
fn single_atom_closed_form() {
    // x = 3·1 on a 2×2 all-ones atom: c = (⟨a, x⟩ − λ/2)/‖a‖² = (12 − 0.5)/4
    let l = LoadingSet::new(vec![array![[1.0], [1.0]], array![[1.0], [1.0]]]).unwrap();
    let x = DenseTensor::filled(vec![2, 2, 1], 3.0);
    let c = sparse_code(&x, &l, &CodingSettings::with_lambda(1.0)).unwrap();
    assert!((c[[0, 0]] - 2.875).abs() < 1e-6);
    let zero = sparse_code(&DenseTensor::zeros(vec![2, 2, 1]), &l, &CodingSettings::with_lambda(1.0)).unwrap();
    assert_eq!(zero[[0, 0]], 0.0);
}

#[test]
fn large_lambda_gives_zero_code() {
    let (x, l) = instance(5);
    let w = dictionary(&l);
    let max_corr = (0..l.rank())
        .map(|r| 2.0 * w.column(r).iter().zip(x.data()).map(|(a, b)| a * b).sum::<f64>())
        .fold(0.0, f64::max);
    let c = sparse_code(&x, &l, &CodingSettings::with_lambda(max_corr * 1.01)).unwrap();
    assert!(c.iter().all(|&v| v == 0.0));
}

#[test]
fn zero_dictionary_is_degenerate() {
    let l = LoadingSet::new(vec![Array2::zeros((2, 2)), Array2::zeros((3, 2))]).unwrap();
    let x = DenseTensor::filled(vec![2, 3, 1], 1.0);
    assert!(matches!(sparse_code(&x, &l, &CodingSettings::default()), Err(Error::DegenerateDictionary)));
}

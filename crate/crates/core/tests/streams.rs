//! Markov machinery, file formats and stream plumbing.

mod common;

use common::rng;
use ndarray::{array, Array2};
use ocpdl_core::streams::{
    empirical_occupancy, ppm_read_from, ppm_write_to, read_markov_spec, stationary_dist, stream_id, total_variation,
    InitialState, MarkovChainSpec,
};
use ocpdl_core::*;
use proptest::prelude::*;
use rand::Rng;

fn chain(p: Array2<f64>) -> MarkovChainSpec {
    let k = p.nrows();
    let obs = (0..k).map(|i| DenseTensor::filled(vec![1], i as f64)).collect();
    MarkovChainSpec::new(p, obs, InitialState::State(0)).unwrap()
}

fn random_stochastic(g: &mut impl Rng, k: usize) -> Array2<f64> {
    let mut p = Array2::from_shape_fn((k, k), |_| 0.05 + g.random::<f64>());
    for mut row in p.rows_mut() {
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    p
}

#[test]
fn two_state_stationary_law() {
    let pi = stationary_dist(&chain(array![[0.9, 0.1], [0.2, 0.8]])).unwrap();
    assert!((pi[0] - 2.0 / 3.0).abs() <= 1e-10 && (pi[1] - 1.0 / 3.0).abs() <= 1e-10);
}

#[test]
fn occupancy_approaches_stationary_law() {
    for seed in 0..3 {
        let mut g = rng(seed);
        let k = g.random_range(2..=5);
        let spec = chain(random_stochastic(&mut g, k));
        let pi = stationary_dist(&spec).unwrap();
        let occ = empirical_occupancy(&spec, 100_000, &mut stream_rng(seed, stream_id::MARKOV)).unwrap();
        let tv = total_variation(&pi, &occ);
        assert!(tv < 0.01, "seed {seed}: TV {tv}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stationary_law_is_invariant(seed in any::<u64>(), k in 1usize..6) {
        let p = random_stochastic(&mut rng(seed), k);
        let pi = stationary_dist(&chain(p.clone())).unwrap();
        let moved = ndarray::Array1::from(pi.clone()).dot(&p);
        let l1: f64 = moved.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        prop_assert!(l1 <= 1e-10);
        prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn dtf_round_trip_is_bit_exact(seed in any::<u64>(), n in 1usize..5) {
        let mut g = rng(seed);
        let shape = common::random_dims(&mut g, n, 4);
        let len = shape.iter().product();
        let data: Vec<f64> = (0..len).map(|_| (g.random::<f64>() - 0.5) * 10f64.powi(g.random_range(-300..300))).collect();
        let t = DenseTensor::new(shape, data).unwrap();
        let mut buf = Vec::new();
        write_dtf_to(&mut buf, &t).unwrap();
        let back = read_dtf_from(buf.as_slice()).unwrap();
        prop_assert_eq!(back.shape(), t.shape());
        prop_assert!(back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn ppm_round_trip_is_bit_exact(seed in any::<u64>(), h in 1usize..9, w in 1usize..9) {
        let mut g = rng(seed);
        let img = DenseTensor::from_fn(vec![h, w, 3], |_| g.random_range(0..=255u8) as f64 / 255.0);
        let mut buf = Vec::new();
        ppm_write_to(&mut buf, &img).unwrap();
        let back = ppm_read_from(buf.as_slice()).unwrap();
        prop_assert_eq!(&back, &img);
        let mut again = Vec::new();
        ppm_write_to(&mut again, &back).unwrap();
        prop_assert_eq!(again, buf);
    }
}

#[test]
fn markov_spec_file_resolves_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    let sub = dir.path().join("obs");
    std::fs::create_dir(&sub).unwrap();
    for i in 0..2 {
        write_dtf(sub.join(format!("{i}.dtf1")), &DenseTensor::filled(vec![2, 2], i as f64 + 1.0)).unwrap();
    }
    let path = dir.path().join("chain.txt");
    std::fs::write(&path, "# two states\n2\n0.5 0.5\n0.25 0.75\nobs/0.dtf1\nobs/1.dtf1\n").unwrap();
    let spec = read_markov_spec(&path).unwrap();
    assert_eq!(spec.states(), 2);
    assert_eq!(spec.observation_shape(), &[2, 2]);
    assert_eq!(spec.observations()[1].data(), &[2.0; 4]);

    std::fs::write(&path, "2\n0.5 0.6\n0.25 0.75\nobs/0.dtf1\nobs/1.dtf1\n").unwrap();
    assert!(read_markov_spec(&path).is_err());
}

/// Three rank-one 6×6 observations visited by a mixing chain. The recorded
/// recursive surrogate must fall by at least half between the first and
/// the last ten of 300 steps.
#[test]
fn markov_stream_drives_the_surrogate_down() {
    let mut g = stream_rng(3, 10);
    let obs: Vec<DenseTensor> = (0..3)
        .map(|_| cp_out(&LoadingSet::random(&[6, 6], 1, &mut g)).reshape(vec![6, 6]).unwrap())
        .collect();
    let p = array![[0.8, 0.1, 0.1], [0.2, 0.6, 0.2], [0.3, 0.3, 0.4]];
    let spec = MarkovChainSpec::new(p, obs, InitialState::State(0)).unwrap();
    let cfg = RunConfig {
        lambda: 0.01,
        iterations: 300,
        seed: 3,
        ..RunConfig::new(3, 1)
    };
    let stream = markov_tensor_stream(&spec, 300, 1, stream_rng(3, stream_id::MARKOV)).unwrap();
    let out = fit(stream, &cfg, Init::Random).unwrap();
    assert_eq!(out.trace.len(), 300);
    let mean = |rs: &[TraceRecord]| rs.iter().map(|r| r.surrogate_before).sum::<f64>() / rs.len() as f64;
    let (first, last) = (mean(&out.trace[..10]), mean(&out.trace[290..]));
    assert!(last <= 0.5 * first, "first {first}, last {last}");
}

//! Brute-force oracles shared by the integration tests. Everything here
//! materializes the dictionary, so it is only meant for small instances.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use ocpdl_core::{khatri_rao_chain, sparse_code, stream_rng, CodingSettings, DenseTensor, LoadingSet};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    stream_rng(seed, 99)
}

pub fn random_dims(rng: &mut impl Rng, n: usize, max: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(1..=max)).collect()
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random::<f64>())
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn matrix_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `W = U_n ⊗kr … ⊗kr U_1`, whose column `r` is the vectorized atom `r`.
pub fn dictionary(l: &LoadingSet) -> Array2<f64> {
    khatri_rao_chain(l.factors()).unwrap()
}

/// Column `s` is the vectorized last-mode slice `s` of `x`.
pub fn slices_as_columns(x: &DenseTensor) -> Array2<f64> {
    let b = x.last_dim();
    let d = x.len() / b;
    Array2::from_shape_fn((d, b), |(i, s)| x.last_slice(s)[i])
}

fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// `‖x − Wc‖² + λ Σc`.
pub fn lasso_objective(w: &Array2<f64>, x: &[f64], c: &[f64], lambda: f64) -> f64 {
    let fit: f64 = (0..w.nrows())
        .map(|i| {
            let pred: f64 = (0..w.ncols()).map(|r| w[[i, r]] * c[r]).sum();
            (x[i] - pred).powi(2)
        })
        .sum();
    fit + lambda * c.iter().sum::<f64>()
}

/// Exact minimizer of `‖x − Wc‖² + λ Σc` over `c ≥ 0` by enumerating every
/// support: on the optimal support the gradient vanishes, so the optimum is
/// the best nonnegative solution of one of the `2^R` restricted normal
/// equations `W_SᵀW_S c_S = W_Sᵀx − λ/2`.
pub fn nonneg_lasso_oracle(w: &Array2<f64>, x: &[f64], lambda: f64) -> (Vec<f64>, f64) {
    let r = w.ncols();
    let wm = to_dmatrix(w);
    let xv = DVector::from_column_slice(x);
    let mut best = (vec![0.0; r], lasso_objective(w, x, &vec![0.0; r], lambda));
    for mask in 1u32..(1 << r) {
        let support: Vec<usize> = (0..r).filter(|&k| mask & (1 << k) != 0).collect();
        let ws = wm.select_columns(&support);
        let g = ws.transpose() * &ws;
        let rhs = ws.transpose() * &xv - DVector::from_element(support.len(), lambda / 2.0);
        let Some(cs) = g.lu().solve(&rhs) else { continue };
        if cs.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            continue;
        }
        let mut c = vec![0.0; r];
        for (k, &idx) in support.iter().enumerate() {
            c[idx] = cs[k];
        }
        let obj = lasso_objective(w, x, &c, lambda);
        if obj < best.1 {
            best = (c, obj);
        }
    }
    best
}

/// Random `b = 1` coding instance: `R ≤ 3` atoms of shape at most 3×3,
/// uniform `[0, 1)` factors and data.
pub fn coding_instance(seed: u64) -> (DenseTensor, LoadingSet) {
    let mut g = rng(seed);
    let dims: Vec<usize> = (0..2).map(|_| g.random_range(1..=3)).collect();
    let r = g.random_range(1..=3);
    let l = LoadingSet::random(&dims, r, &mut g);
    let mut shape = dims;
    shape.push(1);
    let x = DenseTensor::random_uniform(shape, &mut g);
    (x, l)
}

/// The λ used for oracle instance `seed`.
pub fn oracle_lambda(seed: u64) -> f64 {
    [0.0, 0.1, 1.0][(seed % 3) as usize]
}

/// Objective of `sparse_code` minus the oracle optimum on instance `seed`.
pub fn oracle_gap(seed: u64, settings: &CodingSettings) -> f64 {
    let (x, l) = coding_instance(seed);
    let w = dictionary(&l);
    let (_, best) = nonneg_lasso_oracle(&w, x.data(), settings.lambda);
    let c = sparse_code(&x, &l, settings).unwrap();
    lasso_objective(&w, x.data(), c.column(0).as_slice().unwrap(), settings.lambda) - best
}

/// Aggregates built from explicit minibatches and codes:
/// `A = Σ w_s C_sC_sᵀ`, `B = Σ w_s X_s ×_{n+1} C_s`, and `Σ w_s ‖X_s‖²`.
pub struct ExplicitHistory {
    pub batches: Vec<DenseTensor>,
    pub codes: Vec<Array2<f64>>,
    pub weights: Vec<f64>,
}

impl ExplicitHistory {
    pub fn random(rng: &mut impl Rng, dims: &[usize], rank: usize, steps: usize) -> Self {
        let mut batches = Vec::new();
        let mut codes = Vec::new();
        let mut weights = Vec::new();
        for _ in 0..steps {
            let b = rng.random_range(1..=3);
            let mut shape = dims.to_vec();
            shape.push(b);
            batches.push(DenseTensor::random_uniform(shape, rng));
            codes.push(random_matrix(rng, rank, b));
            weights.push(rng.random_range(0.05..1.0));
        }
        Self { batches, codes, weights }
    }

    pub fn aggregates(&self, dims: &[usize], rank: usize) -> (Array2<f64>, DenseTensor, f64) {
        let n = dims.len();
        let mut a = Array2::zeros((rank, rank));
        let mut shape = dims.to_vec();
        shape.push(rank);
        let mut b = DenseTensor::zeros(shape);
        let mut constant = 0.0;
        for ((x, c), &w) in self.batches.iter().zip(&self.codes).zip(&self.weights) {
            a.scaled_add(w, &c.dot(&c.t()));
            b.axpy(w, &ocpdl_core::mode_product(x, c, n).unwrap()).unwrap();
            constant += w * x.norm_sq();
        }
        (a, b, constant)
    }

    /// `Σ w_s ‖X̄_s − W C_s‖_F²` with the dictionary materialized.
    pub fn weighted_residual(&self, l: &LoadingSet) -> f64 {
        let w = dictionary(l);
        self.batches
            .iter()
            .zip(&self.codes)
            .zip(&self.weights)
            .map(|((x, c), &wt)| {
                let resid = slices_as_columns(x) - w.dot(c);
                wt * resid.iter().map(|v| v * v).sum::<f64>()
            })
            .sum()
    }
}

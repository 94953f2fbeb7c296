//! Offline nonnegative CP baselines on a fully observed tensor, and the
//! last-mode refit used to score subsampled online runs.
//!
//! Both sweeps work on the per-mode normal equations of
//! `‖X − Out(L)‖_F²`: with `Ā_j = ⊙_{k≠j} U_kᵀU_k` and `B̄_j = X_(j)·KR_j`
//! (the MTTKRP), ALS minimizes the block quadratic with
//! [`update_factor`] and MU applies `U_j ← U_j ⊙ B̄_j ⊘ (U_j Ā_j + ε)`.

use std::time::Instant;

use ndarray::Array2;

use crate::coding::{frob, sparse_code, CodingSettings};
use crate::dict::{update_factor, FactorSettings, IntermediateAggregates};
use crate::error::{shape_err, Error, Result};
use crate::online::TraceRecord;
use crate::tensor::{contract, cp_reconstruct, DenseTensor, LoadingSet};

const MU_EPS: f64 = 1e-12;

fn check(x: &DenseTensor, l: &LoadingSet) -> Result<()> {
    if x.shape() != l.dims().as_slice() {
        return Err(shape_err(format!("tensor {:?} vs loadings {:?}", x.shape(), l.dims())));
    }
    Ok(())
}

/// `‖X − Out(L)‖_F²` for a loading set covering every mode of `X`.
pub fn full_objective(x: &DenseTensor, l: &LoadingSet) -> Result<f64> {
    check(x, l)?;
    Ok(x.sub(&cp_reconstruct(l))?.norm_sq())
}

/// `X_(j) (U_n ⊗kr … ⊗kr U_{j+1} ⊗kr U_{j−1} ⊗kr … ⊗kr U_1)` without the
/// Khatri-Rao product.
pub fn mttkrp(x: &DenseTensor, l: &LoadingSet, j: usize) -> Result<Array2<f64>> {
    check(x, l)?;
    if j >= l.ndim() {
        return Err(Error::ModeOutOfRange { mode: j, ndim: l.ndim() });
    }
    let mut out = Array2::zeros((x.shape()[j], l.rank()));
    for r in 0..l.rank() {
        let cols = l.atom_columns(r);
        let vecs: Vec<Option<&[f64]>> = cols
            .iter()
            .enumerate()
            .map(|(k, c)| (k != j).then_some(c.as_slice()))
            .collect();
        for (i, v) in contract(x.data(), x.shape(), &vecs).into_iter().enumerate() {
            out[[i, r]] = v;
        }
    }
    Ok(out)
}

/// `(Ā_j, B̄_j)` of the full-tensor objective.
pub fn normal_equations(x: &DenseTensor, l: &LoadingSet, j: usize) -> Result<IntermediateAggregates> {
    let b_bar = mttkrp(x, l, j)?;
    let r = l.rank();
    let mut a_bar = Array2::ones((r, r));
    for (k, u) in l.factors().iter().enumerate() {
        if k != j {
            a_bar *= &u.t().dot(u);
        }
    }
    Ok(IntermediateAggregates { a_bar, b_bar, mode: j })
}

/// One ALS pass: every `U_j` in turn minimizes the block quadratic over the
/// box, against the already-updated other factors.
pub fn als_sweep(x: &DenseTensor, l: &LoadingSet, settings: &FactorSettings) -> Result<LoadingSet> {
    settings.validate()?;
    let mut l = l.clone();
    for j in 0..l.ndim() {
        let agg = normal_equations(x, &l, j)?;
        let u = update_factor(l.factor(j), &agg, settings)?;
        l.set_factor(j, u)?;
    }
    Ok(l)
}

/// One multiplicative-update pass over all modes.
pub fn mu_sweep(x: &DenseTensor, l: &LoadingSet) -> Result<LoadingSet> {
    let mut l = l.clone();
    for j in 0..l.ndim() {
        let agg = normal_equations(x, &l, j)?;
        let denom = l.factor(j).dot(&agg.a_bar);
        let mut u = l.factor(j).clone();
        ndarray::Zip::from(&mut u)
            .and(&agg.b_bar)
            .and(&denom)
            .for_each(|u, &num, &den| *u *= num.max(0.0) / (den + MU_EPS));
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("multiplicative update"));
        }
        l.set_factor(j, u)?;
    }
    Ok(l)
}

/// Recomputes the last loading matrix from the full tensor: row `k` of `U_n`
/// is the code of last-mode slice `k` against `partial`.
pub fn refit_last_mode(x_full: &DenseTensor, partial: &LoadingSet, coding: &CodingSettings) -> Result<LoadingSet> {
    let n = partial.ndim();
    if x_full.ndim() != n + 1 || x_full.shape()[..n] != partial.dims()[..] {
        return Err(shape_err(format!(
            "tensor {:?} does not extend loadings {:?} by one mode",
            x_full.shape(),
            partial.dims()
        )));
    }
    let code = sparse_code(x_full, partial, coding)?;
    partial.with_last(code.t().to_owned())
}

/// Which offline method to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    Als,
    Mu,
}

/// Runs `sweeps` passes of `method` from `init`. Trace rows reuse
/// [`TraceRecord`]: `surrogate` holds the objective after the sweep,
/// `surrogate_before` the objective before it.
pub fn run_baseline(
    method: Baseline,
    x: &DenseTensor,
    init: &LoadingSet,
    sweeps: usize,
    settings: &FactorSettings,
) -> Result<(LoadingSet, Vec<TraceRecord>)> {
    check(x, init)?;
    let x_norm = x.norm();
    let mut l = init.clone();
    let mut before = full_objective(x, &l)?;
    let mut trace = Vec::with_capacity(sweeps);
    let mut elapsed = 0.0;
    for t in 1..=sweeps {
        let start = Instant::now();
        let next = match method {
            Baseline::Als => als_sweep(x, &l, settings)?,
            Baseline::Mu => mu_sweep(x, &l)?,
        };
        elapsed += start.elapsed().as_secs_f64();
        let objective = full_objective(x, &next)?;
        let displacement = next
            .factors()
            .iter()
            .zip(l.factors())
            .map(|(a, b)| frob(&(a - b)).powi(2))
            .sum::<f64>()
            .sqrt();
        let abs = objective.max(0.0).sqrt();
        trace.push(TraceRecord {
            t,
            weight: 1.0,
            surrogate: objective,
            surrogate_before: before,
            batch_loss: before,
            displacement,
            batch_norm: x_norm,
            max_batch_norm: x_norm,
            wall_seconds: elapsed,
            abs_error: Some(abs),
            rel_error: Some(if x_norm > 0.0 { abs / x_norm } else { abs }),
            ..TraceRecord::default()
        });
        before = objective;
        l = next;
    }
    Ok((l, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streams::stream_rng;
    use crate::tensor::{khatri_rao_chain, unfold};
    use approx::assert_abs_diff_eq;

    #[test]
    fn mttkrp_matches_unfolding_times_khatri_rao() {
        let mut rng = stream_rng(3, 0);
        let x = DenseTensor::random_uniform(vec![3, 4, 2], &mut rng);
        let l = LoadingSet::random(&[3, 4, 2], 2, &mut rng);
        for j in 0..3 {
            let others: Vec<_> = (0..3).filter(|&k| k != j).map(|k| l.factor(k).clone()).collect();
            let want = unfold(&x, j).unwrap().dot(&khatri_rao_chain(&others).unwrap());
            let got = mttkrp(&x, &l, j).unwrap();
            for (a, b) in got.iter().zip(want.iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn exact_model_is_stationary() {
        let l = LoadingSet::random(&[3, 3, 3], 2, &mut stream_rng(8, 0));
        let x = cp_reconstruct(&l);
        let after = als_sweep(&x, &l, &FactorSettings::default()).unwrap();
        assert!(full_objective(&x, &after).unwrap() < 1e-20);
        let mu = mu_sweep(&x, &l).unwrap();
        assert!(mu.distance(&l) < 1e-10);
    }

    #[test]
    fn mu_keeps_zeros() {
        let mut rng = stream_rng(2, 0);
        let x = DenseTensor::random_uniform(vec![3, 3], &mut rng);
        let mut u = LoadingSet::random(&[3, 3], 2, &mut rng).into_factors();
        u[0][[1, 0]] = 0.0;
        let l = mu_sweep(&x, &LoadingSet::new(u).unwrap()).unwrap();
        assert_eq!(l.factor(0)[[1, 0]], 0.0);
    }

    #[test]
    fn refit_recovers_last_factor() {
        let truth = LoadingSet::random(&[4, 5, 6], 2, &mut stream_rng(4, 0));
        let x = cp_reconstruct(&truth);
        let coding = CodingSettings {
            tol: 1e-14,
            max_iters: 20_000,
            ..CodingSettings::default()
        };
        let refit = refit_last_mode(&x, &truth.without_last().unwrap(), &coding).unwrap();
        for (a, b) in refit.factor(2).iter().zip(truth.factor(2).iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
        let zero = refit_last_mode(&DenseTensor::zeros(vec![4, 5, 6]), &truth.without_last().unwrap(), &coding).unwrap();
        assert!(zero.factor(2).iter().all(|&v| v == 0.0));
    }
}

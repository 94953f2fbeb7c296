//! Dense n-mode tensors and the multilinear kernels used by every solver.
//!
//! Storage order is first-index-fastest: entry `(i_1, …, i_n)` lives at
//! offset `i_1 + I_1·(i_2 + I_2·(i_3 + …))`. Matricizations and Khatri-Rao
//! products are laid out so that
//!
//! ```text
//! unfold(cp_out(L), n)ᵀ = U_n ⊗kr … ⊗kr U_1
//! ```
//!
//! holds exactly, where `khatri_rao(A, B)` puts the row index of `B` fastest.
//! Modes are 0-based throughout the API.

use ndarray::Array2;
use rand::Rng;

use crate::error::{shape_err, Error, Result};

/// An n-mode array of `f64` with an explicit shape.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    /// Wraps `data` with the given shape. Every dimension must be positive,
    /// the length must match and all entries must be finite.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        check_shape(&shape)?;
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(shape_err(format!(
                "shape {shape:?} needs {len} entries, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor data"));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![value; len],
        }
    }

    /// Builds a tensor by evaluating `f` at every multi-index, in storage order.
    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..len {
            data.push(f(&idx));
            for (k, i) in idx.iter_mut().enumerate() {
                *i += 1;
                if *i < shape[k] {
                    break;
                }
                *i = 0;
            }
        }
        Self { shape, data }
    }

    /// Entries drawn independently from uniform[0, 1).
    pub fn random_uniform<R: Rng + ?Sized>(shape: Vec<usize>, rng: &mut R) -> Self {
        let len: usize = shape.iter().product();
        let data = (0..len).map(|_| rng.random::<f64>()).collect();
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0;
        let mut stride = 1;
        for (i, d) in idx.iter().zip(&self.shape) {
            debug_assert!(i < d);
            off += i * stride;
            stride *= d;
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn inner(&self, other: &DenseTensor) -> Result<f64> {
        self.expect_same_shape(other)?;
        Ok(dot(&self.data, &other.data))
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &DenseTensor) -> Result<()> {
        self.expect_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.expect_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|v| *v >= 0.0)
    }

    /// Length of the last mode (the sample / minibatch mode in most uses).
    pub fn last_dim(&self) -> usize {
        *self.shape.last().expect("tensor has at least one mode")
    }

    /// Contiguous slice `k` along the last mode.
    pub fn last_slice(&self, k: usize) -> &[f64] {
        let size = self.data.len() / self.last_dim();
        &self.data[k * size..(k + 1) * size]
    }

    /// Subtensor made of the given last-mode coordinates, in the given order.
    pub fn select_last(&self, indices: &[usize]) -> Result<DenseTensor> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("empty last-mode selection".into()));
        }
        let n = self.last_dim();
        if let Some(&bad) = indices.iter().find(|&&k| k >= n) {
            return Err(shape_err(format!("last-mode index {bad} out of range {n}")));
        }
        let mut data = Vec::with_capacity(indices.len() * self.data.len() / n);
        for &k in indices {
            data.extend_from_slice(self.last_slice(k));
        }
        let mut shape = self.shape.clone();
        *shape.last_mut().unwrap() = indices.len();
        Ok(Self { shape, data })
    }

    /// Stacks equally shaped tensors along a new trailing mode.
    pub fn stack(slices: &[DenseTensor]) -> Result<DenseTensor> {
        let first = slices
            .first()
            .ok_or_else(|| Error::InvalidArgument("nothing to stack".into()))?;
        let mut data = Vec::with_capacity(first.len() * slices.len());
        for s in slices {
            first.expect_same_shape(s)?;
            data.extend_from_slice(&s.data);
        }
        let mut shape = first.shape.clone();
        shape.push(slices.len());
        Ok(Self { shape, data })
    }

    /// Same data viewed with a different shape of equal size.
    pub fn reshape(self, shape: Vec<usize>) -> Result<DenseTensor> {
        check_shape(&shape)?;
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(shape_err(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(Self {
            shape,
            data: self.data,
        })
    }

    fn expect_same_shape(&self, other: &DenseTensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(shape_err(format!(
                "{:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() {
        return Err(shape_err("a tensor needs at least one mode"));
    }
    if shape.contains(&0) {
        return Err(shape_err(format!("non-positive dimension in {shape:?}")));
    }
    Ok(())
}

/// The loading matrices `U_1, …, U_n` of a CP-dictionary; factor `j` is
/// `I_j × R`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingSet {
    factors: Vec<Array2<f64>>,
}

impl LoadingSet {
    pub fn new(factors: Vec<Array2<f64>>) -> Result<Self> {
        let first = factors
            .first()
            .ok_or_else(|| Error::InvalidArgument("a loading set needs at least one factor".into()))?;
        let rank = first.ncols();
        if rank == 0 {
            return Err(Error::InvalidArgument("rank must be positive".into()));
        }
        for (j, u) in factors.iter().enumerate() {
            if u.ncols() != rank {
                return Err(shape_err(format!(
                    "factor {j} has {} columns, expected {rank}",
                    u.ncols()
                )));
            }
            if u.nrows() == 0 {
                return Err(shape_err(format!("factor {j} has no rows")));
            }
            if u.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("loading matrix"));
            }
        }
        Ok(Self { factors })
    }

    /// Entrywise uniform[0, 1) factors of the given row counts.
    pub fn random<R: Rng + ?Sized>(dims: &[usize], rank: usize, rng: &mut R) -> Self {
        let factors = dims
            .iter()
            .map(|&d| Array2::from_shape_simple_fn((d, rank), || rng.random::<f64>()))
            .collect();
        Self { factors }
    }

    pub fn rank(&self) -> usize {
        self.factors[0].ncols()
    }

    pub fn ndim(&self) -> usize {
        self.factors.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|u| u.nrows()).collect()
    }

    pub fn factor(&self, j: usize) -> &Array2<f64> {
        &self.factors[j]
    }

    pub fn factors(&self) -> &[Array2<f64>] {
        &self.factors
    }

    pub fn into_factors(self) -> Vec<Array2<f64>> {
        self.factors
    }

    /// Replaces factor `j`; the new factor must keep its shape.
    pub fn set_factor(&mut self, j: usize, u: Array2<f64>) -> Result<()> {
        if u.dim() != self.factors[j].dim() {
            return Err(shape_err(format!(
                "factor {j}: expected {:?}, got {:?}",
                self.factors[j].dim(),
                u.dim()
            )));
        }
        self.factors[j] = u;
        Ok(())
    }

    /// Column `r` of factor `j` as an owned vector.
    pub fn column(&self, j: usize, r: usize) -> Vec<f64> {
        self.factors[j].column(r).to_vec()
    }

    /// Columns `r` of every factor.
    pub fn atom_columns(&self, r: usize) -> Vec<Vec<f64>> {
        (0..self.ndim()).map(|j| self.column(j, r)).collect()
    }

    /// Frobenius distance between two loading sets of equal shape, summed
    /// over factors.
    pub fn distance(&self, other: &LoadingSet) -> f64 {
        self.factors
            .iter()
            .zip(&other.factors)
            .map(|(a, b)| (a - b).iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.factors
            .iter()
            .map(|u| u.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn within_box(&self, upper: f64) -> bool {
        self.factors
            .iter()
            .all(|u| u.iter().all(|&v| (0.0..=upper).contains(&v)))
    }

    /// Appends a trailing factor (e.g. a refitted last loading matrix).
    pub fn with_last(&self, last: Array2<f64>) -> Result<LoadingSet> {
        let mut factors = self.factors.clone();
        factors.push(last);
        LoadingSet::new(factors)
    }

    /// All factors except the last one.
    pub fn without_last(&self) -> Result<LoadingSet> {
        if self.ndim() < 2 {
            return Err(Error::InvalidArgument(
                "cannot drop the only factor of a loading set".into(),
            ));
        }
        LoadingSet::new(self.factors[..self.ndim() - 1].to_vec())
    }
}

/// A matrix as a 2-mode tensor (column-major in storage order).
pub fn matrix_to_tensor(m: &Array2<f64>) -> DenseTensor {
    DenseTensor::from_fn(vec![m.nrows(), m.ncols()], |i| m[[i[0], i[1]]])
}

/// Inverse of [`matrix_to_tensor`].
pub fn tensor_to_matrix(t: &DenseTensor) -> Result<Array2<f64>> {
    if t.ndim() != 2 {
        return Err(shape_err(format!("expected a 2-mode tensor, got {:?}", t.shape())));
    }
    Ok(Array2::from_shape_fn((t.shape()[0], t.shape()[1]), |(i, j)| t.get(&[i, j])))
}

/// Concatenates tensors that agree on every mode but the last along the
/// last mode.
pub fn concat_last(parts: &[&DenseTensor]) -> Result<DenseTensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?;
    let lead = &first.shape()[..first.ndim() - 1];
    let mut data = Vec::new();
    let mut total = 0;
    for p in parts {
        if p.ndim() != first.ndim() || &p.shape()[..p.ndim() - 1] != lead {
            return Err(shape_err(format!("{:?} vs {:?}", first.shape(), p.shape())));
        }
        data.extend_from_slice(p.data());
        total += p.last_dim();
    }
    let mut shape = lead.to_vec();
    shape.push(total);
    Ok(DenseTensor { shape, data })
}

/// Entries in storage order.
pub fn vectorize(t: &DenseTensor) -> Vec<f64> {
    t.data.clone()
}

/// Inverse of [`vectorize`].
pub fn devectorize(v: &[f64], shape: &[usize]) -> Result<DenseTensor> {
    DenseTensor::new(shape.to_vec(), v.to_vec())
}

fn check_mode(mode: usize, ndim: usize) -> Result<()> {
    if mode >= ndim {
        return Err(Error::ModeOutOfRange { mode, ndim });
    }
    Ok(())
}

/// `(left, dim, right)` block sizes around `mode`.
fn split_at_mode(shape: &[usize], mode: usize) -> (usize, usize, usize) {
    let left = shape[..mode].iter().product();
    let right = shape[mode + 1..].iter().product();
    (left, shape[mode], right)
}

/// Mode-`mode` matricization: `I_mode × ∏_{j≠mode} I_j`, remaining indices
/// ordered first-index-fastest.
pub fn unfold(t: &DenseTensor, mode: usize) -> Result<Array2<f64>> {
    check_mode(mode, t.ndim())?;
    let (left, dim, right) = split_at_mode(&t.shape, mode);
    let mut out = Array2::zeros((dim, left * right));
    for rr in 0..right {
        for i in 0..dim {
            let base = left * (i + dim * rr);
            for l in 0..left {
                out[[i, l + left * rr]] = t.data[base + l];
            }
        }
    }
    Ok(out)
}

/// Inverse of [`unfold`].
pub fn refold(m: &Array2<f64>, mode: usize, shape: &[usize]) -> Result<DenseTensor> {
    check_shape(shape)?;
    check_mode(mode, shape.len())?;
    let (left, dim, right) = split_at_mode(shape, mode);
    if m.dim() != (dim, left * right) {
        return Err(shape_err(format!(
            "cannot refold {:?} into {shape:?} along mode {mode}",
            m.dim()
        )));
    }
    let mut data = vec![0.0; left * dim * right];
    for rr in 0..right {
        for i in 0..dim {
            let base = left * (i + dim * rr);
            for l in 0..left {
                data[base + l] = m[[i, l + left * rr]];
            }
        }
    }
    DenseTensor::new(shape.to_vec(), data)
}

/// `refold(M · unfold(T, mode), mode)` without forming the unfolding.
pub fn mode_product(t: &DenseTensor, m: &Array2<f64>, mode: usize) -> Result<DenseTensor> {
    check_mode(mode, t.ndim())?;
    let (left, dim, right) = split_at_mode(&t.shape, mode);
    if m.ncols() != dim {
        return Err(shape_err(format!(
            "mode-{mode} product: matrix has {} columns, tensor mode has {dim}",
            m.ncols()
        )));
    }
    let rows = m.nrows();
    let mut data = vec![0.0; left * rows * right];
    for rr in 0..right {
        for i in 0..dim {
            let src = &t.data[left * (i + dim * rr)..left * (i + dim * rr) + left];
            for p in 0..rows {
                let coef = m[[p, i]];
                if coef == 0.0 {
                    continue;
                }
                let dst = &mut data[left * (p + rows * rr)..left * (p + rows * rr) + left];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += coef * s;
                }
            }
        }
    }
    let mut shape = t.shape.clone();
    shape[mode] = rows;
    Ok(DenseTensor { shape, data })
}

/// Column-wise Kronecker product; row `i·q + k` of the result is
/// `A[i, ·] ⊙ B[k, ·]`.
pub fn khatri_rao(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    if a.ncols() != b.ncols() {
        return Err(shape_err(format!(
            "khatri-rao: {} vs {} columns",
            a.ncols(),
            b.ncols()
        )));
    }
    let (p, q, r) = (a.nrows(), b.nrows(), a.ncols());
    let mut out = Array2::zeros((p * q, r));
    for i in 0..p {
        for k in 0..q {
            for c in 0..r {
                out[[i * q + k, c]] = a[[i, c]] * b[[k, c]];
            }
        }
    }
    Ok(out)
}

/// `U_n ⊗kr … ⊗kr U_1` for `factors = [U_1, …, U_n]`. Materializes the full
/// `∏I_j × R` matrix, so it is meant for small problems and test oracles.
pub fn khatri_rao_chain(factors: &[Array2<f64>]) -> Result<Array2<f64>> {
    let (first, rest) = factors
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("empty factor list".into()))?;
    let mut acc = first.clone();
    for u in rest {
        acc = khatri_rao(u, &acc)?;
    }
    Ok(acc)
}

/// Elementwise product.
pub fn hadamard(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    if a.dim() != b.dim() {
        return Err(shape_err(format!("hadamard: {:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(a * b)
}

/// Outer product of the given vectors in storage order.
pub(crate) fn outer(vectors: &[&[f64]]) -> Vec<f64> {
    let mut acc = vec![1.0];
    for v in vectors {
        let mut next = Vec::with_capacity(acc.len() * v.len());
        for &x in v.iter() {
            next.extend(acc.iter().map(|a| a * x));
        }
        acc = next;
    }
    acc
}

/// Contracts every mode `k` with `Some(v)` in `vecs` against `v`; the modes
/// marked `None` survive in their original order.
pub(crate) fn contract(data: &[f64], shape: &[usize], vecs: &[Option<&[f64]>]) -> Vec<f64> {
    debug_assert_eq!(shape.len(), vecs.len());
    let mut cur_shape = shape.to_vec();
    let mut owned: Option<Vec<f64>> = None;
    for k in (0..shape.len()).rev() {
        let Some(v) = vecs[k] else { continue };
        let src: &[f64] = owned.as_deref().unwrap_or(data);
        let (left, dim, right) = split_at_mode(&cur_shape, k);
        debug_assert_eq!(v.len(), dim);
        let mut out = vec![0.0; left * right];
        for rr in 0..right {
            let dst = &mut out[left * rr..left * rr + left];
            for (i, &vi) in v.iter().enumerate() {
                if vi == 0.0 {
                    continue;
                }
                let base = left * (i + dim * rr);
                for (d, s) in dst.iter_mut().zip(&src[base..base + left]) {
                    *d += vi * s;
                }
            }
        }
        cur_shape.remove(k);
        owned = Some(out);
    }
    owned.unwrap_or_else(|| data.to_vec())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The CP-dictionary `Out(U_1, …, U_n)`: an `I_1 × … × I_n × R` tensor whose
/// `r`-th last-mode slice is the rank-one atom `⊗_k U_k(:, r)`.
pub fn cp_out(l: &LoadingSet) -> DenseTensor {
    let mut shape = l.dims();
    shape.push(l.rank());
    let mut data = Vec::with_capacity(shape.iter().product());
    for r in 0..l.rank() {
        let cols = l.atom_columns(r);
        let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
        data.extend(outer(&refs));
    }
    DenseTensor { shape, data }
}

/// `Out(L) ×_{n+1} C`: an `I_1 × … × I_n × b` tensor whose slice `s` is
/// `Σ_r C[r, s] · atom_r`.
pub fn cp_eval(l: &LoadingSet, c: &Array2<f64>) -> Result<DenseTensor> {
    if c.nrows() != l.rank() {
        return Err(shape_err(format!(
            "code has {} rows, dictionary rank is {}",
            c.nrows(),
            l.rank()
        )));
    }
    let atoms = cp_out(l);
    mode_product(&atoms, &c.t().to_owned(), l.ndim())
}

/// Full CP reconstruction `Σ_r ⊗_k U_k(:, r)` of shape `I_1 × … × I_n`.
pub fn cp_reconstruct(l: &LoadingSet) -> DenseTensor {
    let shape = l.dims();
    let mut data = vec![0.0; shape.iter().product()];
    for r in 0..l.rank() {
        let cols = l.atom_columns(r);
        let refs: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
        for (d, a) in data.iter_mut().zip(outer(&refs)) {
            *d += a;
        }
    }
    DenseTensor { shape, data }
}

/// `‖X − X̂‖_F`.
pub fn abs_error(x: &DenseTensor, xhat: &DenseTensor) -> Result<f64> {
    Ok(x.sub(xhat)?.norm())
}

/// `‖X − X̂‖_F / max(‖X‖_F, 1e-12)`.
pub fn rel_error(x: &DenseTensor, xhat: &DenseTensor) -> Result<f64> {
    Ok(abs_error(x, xhat)? / x.norm().max(1e-12))
}

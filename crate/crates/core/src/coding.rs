//! Nonnegative sparse coding against a CP-dictionary.
//!
//! Solves
//!
//! ```text
//! min_{C ≥ 0}  ‖X − Out(L) ×_{n+1} C‖_F² + λ‖C‖₁
//! ```
//!
//! by projected gradient descent with step `1 / (2·tr(G))`, where
//! `G = WᵀW` is the atom Gram matrix and `W` the (never materialized)
//! dictionary matrix `U_n ⊗kr … ⊗kr U_1`. Only `G` (R×R) and `P = WᵀX̄`
//! (R×b) are formed, so every iteration costs `O(R²b)`.

use std::ops::Deref;

use ndarray::Array2;

use crate::error::{shape_err, Error, Result};
use crate::tensor::{contract, cp_eval, DenseTensor, LoadingSet};

#[derive(Debug, Clone, PartialEq)]
pub struct CodingSettings {
    /// ℓ1 weight λ ≥ 0.
    pub lambda: f64,
    /// Stop once `‖C_k+1 − C_k‖_F ≤ tol·(1 + ‖C_k+1‖_F)`.
    pub tol: f64,
    pub max_iters: usize,
    /// Optional upper bound on every code entry.
    pub c_max: Option<f64>,
    /// Ridge term ε added to the Gram diagonal.
    pub ridge: f64,
    /// Start from the previous code instead of zero, where the caller has one.
    pub warm_start: bool,
}

impl Default for CodingSettings {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            tol: 1e-8,
            max_iters: 200,
            c_max: None,
            ridge: 0.0,
            warm_start: false,
        }
    }
}

impl CodingSettings {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be ≥ 0, got {}", self.lambda)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be ≥ 1".into()));
        }
        if let Some(c) = self.c_max {
            if !(c > 0.0) {
                return Err(Error::InvalidArgument(format!("c_max must be > 0, got {c}")));
            }
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::InvalidArgument(format!("ridge must be ≥ 0, got {}", self.ridge)));
        }
        Ok(())
    }
}

/// Nonnegative `R × b` coefficient matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeMatrix(Array2<f64>);

impl CodeMatrix {
    pub fn zeros(rank: usize, batch: usize) -> Self {
        Self(Array2::zeros((rank, batch)))
    }

    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument(
                "code entries must be finite and nonnegative".into(),
            ));
        }
        Ok(Self(values))
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn l1(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn norm(&self) -> f64 {
        frob(&self.0)
    }
}

impl Deref for CodeMatrix {
    type Target = Array2<f64>;

    fn deref(&self) -> &Array2<f64> {
        &self.0
    }
}

pub(crate) fn frob(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `WᵀW = U_nᵀU_n ⊙ … ⊙ U_1ᵀU_1`, computed factor by factor.
pub fn code_gram(l: &LoadingSet) -> Array2<f64> {
    let r = l.rank();
    let mut g = Array2::ones((r, r));
    for u in l.factors() {
        g *= &u.t().dot(u);
    }
    g
}

/// `P = WᵀX̄` where column `s` of `X̄` is the vectorized slice `s` of `x`:
/// `P[r, s]` is the inner product of slice `s` with atom `r`.
pub fn code_rhs(x: &DenseTensor, l: &LoadingSet) -> Result<Array2<f64>> {
    let dims = l.dims();
    let n = dims.len();
    if x.ndim() != n + 1 || x.shape()[..n] != dims[..] {
        return Err(shape_err(format!(
            "data {:?} does not match dictionary modes {dims:?} plus a sample mode",
            x.shape()
        )));
    }
    let b = x.last_dim();
    let mut p = Array2::zeros((l.rank(), b));
    for r in 0..l.rank() {
        let cols = l.atom_columns(r);
        let mut vecs: Vec<Option<&[f64]>> = cols.iter().map(|c| Some(c.as_slice())).collect();
        vecs.push(None);
        let row = contract(x.data(), x.shape(), &vecs);
        for (s, v) in row.into_iter().enumerate() {
            p[[r, s]] = v;
        }
    }
    Ok(p)
}

/// The quadratic coding problem for one minibatch, reduced to `(G, P, ‖X‖²)`.
#[derive(Debug, Clone)]
pub struct CodingProblem {
    gram: Array2<f64>,
    rhs: Array2<f64>,
    data_norm_sq: f64,
    settings: CodingSettings,
    step: f64,
}

impl CodingProblem {
    pub fn new(x: &DenseTensor, l: &LoadingSet, settings: &CodingSettings) -> Result<Self> {
        settings.validate()?;
        let mut gram = code_gram(l);
        let rhs = code_rhs(x, l)?;
        Self::from_parts(&mut gram, rhs, x.norm_sq(), settings)
    }

    /// Like [`new`](Self::new) with a precomputed `code_gram(l)`, for coding
    /// many batches against one dictionary.
    pub fn with_gram(
        x: &DenseTensor,
        l: &LoadingSet,
        gram: &Array2<f64>,
        settings: &CodingSettings,
    ) -> Result<Self> {
        settings.validate()?;
        if gram.dim() != (l.rank(), l.rank()) {
            return Err(shape_err(format!("Gram is {:?}, rank is {}", gram.dim(), l.rank())));
        }
        let rhs = code_rhs(x, l)?;
        Self::from_parts(&mut gram.clone(), rhs, x.norm_sq(), settings)
    }

    fn from_parts(
        gram: &mut Array2<f64>,
        rhs: Array2<f64>,
        data_norm_sq: f64,
        settings: &CodingSettings,
    ) -> Result<Self> {
        for i in 0..gram.nrows() {
            gram[[i, i]] += settings.ridge;
        }
        if gram.iter().chain(rhs.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("coding Gram/right-hand side"));
        }
        let trace = gram.diag().sum();
        if trace <= 0.0 {
            return Err(Error::DegenerateDictionary);
        }
        Ok(Self {
            gram: gram.clone(),
            rhs,
            data_norm_sq,
            settings: settings.clone(),
            step: 1.0 / (2.0 * trace),
        })
    }

    pub fn gram(&self) -> &Array2<f64> {
        &self.gram
    }

    pub fn rhs(&self) -> &Array2<f64> {
        &self.rhs
    }

    pub fn step_size(&self) -> f64 {
        self.step
    }

    /// `‖X‖² − 2⟨P, C⟩ + ⟨C, GC⟩ + λ‖C‖₁` (plus the ridge term when set).
    pub fn objective(&self, c: &Array2<f64>) -> f64 {
        let gc = self.gram.dot(c);
        let quad: f64 = gc.iter().zip(c.iter()).map(|(a, b)| a * b).sum();
        let lin: f64 = self.rhs.iter().zip(c.iter()).map(|(a, b)| a * b).sum();
        self.data_norm_sq - 2.0 * lin + quad + self.settings.lambda * c.iter().sum::<f64>()
    }

    /// One projected gradient step in place; returns `‖ΔC‖_F`.
    pub fn step(&self, c: &mut Array2<f64>) -> f64 {
        let gc = self.gram.dot(c);
        let lambda = self.settings.lambda;
        let upper = self.settings.c_max.unwrap_or(f64::INFINITY);
        let mut change = 0.0;
        for ((ci, g), p) in c.iter_mut().zip(gc.iter()).zip(self.rhs.iter()) {
            let grad = 2.0 * (g - p) + lambda;
            let next = (*ci - self.step * grad).clamp(0.0, upper);
            change += (next - *ci) * (next - *ci);
            *ci = next;
        }
        change.sqrt()
    }

    /// Iterates [`step`](Self::step) from `init` (or zero) until the
    /// relative change drops below `tol` or `max_iters` is reached.
    pub fn solve(&self, init: Option<&Array2<f64>>) -> Result<(CodeMatrix, usize)> {
        let mut c = match init {
            Some(c0) if c0.dim() == self.rhs.dim() => {
                let upper = self.settings.c_max.unwrap_or(f64::INFINITY);
                c0.mapv(|v| v.clamp(0.0, upper))
            }
            Some(c0) => {
                return Err(shape_err(format!(
                    "warm start {:?} does not match code shape {:?}",
                    c0.dim(),
                    self.rhs.dim()
                )))
            }
            None => Array2::zeros(self.rhs.dim()),
        };
        let mut iters = 0;
        while iters < self.settings.max_iters {
            let change = self.step(&mut c);
            iters += 1;
            if !change.is_finite() {
                return Err(Error::NonFinite("sparse coding iterate"));
            }
            if change <= self.settings.tol * (1.0 + frob(&c)) {
                break;
            }
        }
        Ok((CodeMatrix(c), iters))
    }
}

/// Approximate minimizer of the coding objective, started from zero.
pub fn sparse_code(x: &DenseTensor, l: &LoadingSet, s: &CodingSettings) -> Result<CodeMatrix> {
    Ok(CodingProblem::new(x, l, s)?.solve(None)?.0)
}

/// Like [`sparse_code`] but started from `init`.
pub fn sparse_code_from(
    x: &DenseTensor,
    l: &LoadingSet,
    s: &CodingSettings,
    init: &CodeMatrix,
) -> Result<CodeMatrix> {
    Ok(CodingProblem::new(x, l, s)?.solve(Some(init))?.0)
}

/// `‖X − Out(L) ×_{n+1} C‖_F² + λ‖C‖₁`, evaluated from the reconstruction.
pub fn coding_objective(x: &DenseTensor, l: &LoadingSet, c: &Array2<f64>, lambda: f64) -> Result<f64> {
    let fit = x.sub(&cp_eval(l, c)?)?.norm_sq();
    Ok(fit + lambda * c.iter().sum::<f64>())
}

/// The per-sample loss `ℓ(X, L)` together with the code attaining it.
pub fn loss(x: &DenseTensor, l: &LoadingSet, s: &CodingSettings) -> Result<(f64, CodeMatrix)> {
    let c = sparse_code(x, l, s)?;
    let value = coding_objective(x, l, &c, s.lambda)?;
    Ok((value, c))
}

//! Symmetric tensors stored by exponent, with the rank-one lift, the
//! coefficient map from polynomials, and order-2 slices.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::polynomial::{Exponent, Polynomial};

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch: ({0}, {1}) vs ({2}, {3})")]
    Shape(usize, usize, usize, usize),
    #[error("slices need order >= 2, got {0}")]
    OrderTooLow(u32),
    #[error("slice index has degree {got}, expected {expected}")]
    SliceDegree { expected: u32, got: u32 },
    #[error("target order {order} below polynomial degree {degree}")]
    OrderBelowDegree { order: u32, degree: u32 },
    #[error("exponent has length {got}, tensor dimension is {expected}")]
    Dimension { expected: usize, got: usize },
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r as usize
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// Number of index tuples with the variable counts in `alpha`: d!/(a_1!...a_n!).
pub fn multiplicity(alpha: &Exponent) -> f64 {
    let mut r: u128 = 1;
    let mut seen = 0u32;
    for &a in &alpha.0 {
        for j in 1..=a {
            seen += 1;
            r = r * seen as u128 / j as u128;
        }
    }
    r as f64
}

/// All exponents of length `dim` and total degree `d`, in descending lexicographic order,
/// so `(d, 0, ..., 0)` comes first.
pub fn exponents(dim: usize, d: u32) -> Vec<Exponent> {
    fn rec(dim: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Exponent>) {
        if cur.len() + 1 == dim {
            cur.push(left);
            out.push(Exponent(cur.clone()));
            cur.pop();
            return;
        }
        for a in (0..=left).rev() {
            cur.push(a);
            rec(dim, left - a, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::with_capacity(binomial(dim + d as usize - 1, d as usize));
    if dim == 0 {
        if d == 0 {
            out.push(Exponent(vec![]));
        }
        return out;
    }
    rec(dim, d, &mut Vec::with_capacity(dim), &mut out);
    out
}

/// `(1, x)`, the point whose lift carries the homogenizing coordinate at index 0.
pub fn homogenize(x: &[f64]) -> Vec<f64> {
    std::iter::once(1.0).chain(x.iter().copied()).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricTensor {
    dim: usize,
    order: u32,
    entries: BTreeMap<Exponent, f64>,
}

impl SymmetricTensor {
    pub fn zeros(dim: usize, order: u32) -> Self {
        SymmetricTensor { dim, order, entries: BTreeMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn get(&self, alpha: &Exponent) -> f64 {
        self.entries.get(alpha).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, alpha: Exponent, value: f64) -> Result<(), TensorError> {
        if alpha.len() != self.dim {
            return Err(TensorError::Dimension { expected: self.dim, got: alpha.len() });
        }
        if alpha.degree() != self.order {
            return Err(TensorError::SliceDegree { expected: self.order, got: alpha.degree() });
        }
        if value == 0.0 {
            self.entries.remove(&alpha);
        } else {
            self.entries.insert(alpha, value);
        }
        Ok(())
    }

    /// Stored (nonzero) entries.
    pub fn entries(&self) -> impl Iterator<Item = (&Exponent, f64)> {
        self.entries.iter().map(|(e, &v)| (e, v))
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// `(exponent, multiplicity, value)` for every stored entry.
    pub fn dump(&self) -> Vec<(Exponent, f64, f64)> {
        self.entries.iter().map(|(e, &v)| (e.clone(), multiplicity(e), v)).collect()
    }

    /// Value at a full index tuple `(i_1, ..., i_d)`.
    pub fn at(&self, idx: &[usize]) -> f64 {
        self.get(&Exponent::from_indices(self.dim, idx))
    }
}

/// The rank-one tensor x ⊗ ... ⊗ x.
pub fn m_d(x: &[f64], d: u32) -> SymmetricTensor {
    let mut t = SymmetricTensor::zeros(x.len(), d);
    for alpha in exponents(x.len(), d) {
        let v = alpha.eval(x);
        if v != 0.0 {
            t.entries.insert(alpha, v);
        }
    }
    t
}

/// The all-ones tensor.
pub fn e_tensor(n: usize, d: u32) -> SymmetricTensor {
    let mut t = SymmetricTensor::zeros(n, d);
    for alpha in exponents(n, d) {
        t.entries.insert(alpha, 1.0);
    }
    t
}

pub fn inner_product(a: &SymmetricTensor, b: &SymmetricTensor) -> Result<f64, TensorError> {
    if a.dim != b.dim || a.order != b.order {
        return Err(TensorError::Shape(a.dim, a.order as usize, b.dim, b.order as usize));
    }
    let (small, large) = if a.nnz() <= b.nnz() { (a, b) } else { (b, a) };
    Ok(small
        .entries
        .iter()
        .map(|(e, v)| multiplicity(e) * v * large.get(e))
        .sum())
}

/// Coefficient tensor of `p` at order `d`, with index 0 the homogenizing coordinate,
/// so that `<t_d(p), m_d((1, x))> = p(x)`.
pub fn t_d(p: &Polynomial, d: u32) -> Result<SymmetricTensor, TensorError> {
    if p.degree() > d {
        return Err(TensorError::OrderBelowDegree { order: d, degree: p.degree() });
    }
    let mut t = SymmetricTensor::zeros(p.n() + 1, d);
    for (beta, c) in p.terms() {
        let k = beta.degree();
        let mut alpha = Vec::with_capacity(p.n() + 1);
        alpha.push(d - k);
        alpha.extend_from_slice(&beta.0);
        let weight = factorial(d - k) * beta.0.iter().map(|&b| factorial(b)).product::<f64>()
            / factorial(d);
        t.entries.insert(Exponent(alpha), weight * c);
    }
    Ok(t)
}

/// Counts of the `d - 2` fixed indices of an order-2 slice.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SliceIndex {
    pub gamma: Exponent,
}

impl SliceIndex {
    pub fn new(gamma: Exponent) -> Self {
        SliceIndex { gamma }
    }

    pub fn is_principal(&self) -> bool {
        is_principal(self)
    }

    /// Exponent of slice position (j, k).
    pub fn entry(&self, j: usize, k: usize) -> Exponent {
        let mut e = self.gamma.clone();
        e.0[j] += 1;
        e.0[k] += 1;
        e
    }
}

pub fn is_principal(g: &SliceIndex) -> bool {
    g.gamma.0.iter().all(|a| a % 2 == 0)
}

pub fn enumerate_slices(n: usize, d: u32, principal_only: bool) -> Vec<SliceIndex> {
    if d < 2 {
        return Vec::new();
    }
    exponents(n, d - 2)
        .into_iter()
        .map(SliceIndex::new)
        .filter(|g| !principal_only || g.is_principal())
        .collect()
}

pub fn slice(t: &SymmetricTensor, g: &SliceIndex) -> Result<DMatrix<f64>, TensorError> {
    if t.order < 2 {
        return Err(TensorError::OrderTooLow(t.order));
    }
    if g.gamma.len() != t.dim {
        return Err(TensorError::Dimension { expected: t.dim, got: g.gamma.len() });
    }
    if g.gamma.degree() != t.order - 2 {
        return Err(TensorError::SliceDegree { expected: t.order - 2, got: g.gamma.degree() });
    }
    let n = t.dim;
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in j..n {
            let v = t.get(&g.entry(j, k));
            m[(j, k)] = v;
            m[(k, j)] = v;
        }
    }
    Ok(m)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone().symmetric_eigenvalues().min()
}

/// PSD up to `1e-8 * (1 + ||M||_inf)`.
pub fn is_psd(m: &DMatrix<f64>) -> bool {
    let scale = m.abs().row_sum().max();
    min_eigenvalue(m) >= -1e-8 * (1.0 + scale)
}

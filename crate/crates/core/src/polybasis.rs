//! Multi-indices, graded-lexicographic monomial bases, sparse polynomials and
//! the regression basis matrix mapping monomials to regressors.
//!
//! Monomials of equal total degree are ordered lexicographically with `x_1`
//! taking precedence, so for `n = 2, d = 2` the basis reads
//! `1, x1, x2, x1^2, x1 x2, x2^2`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent tuple `alpha` of a monomial `x^alpha`.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        assert!(!exponents.is_empty(), "multi-index needs n >= 1");
        MultiIndex(exponents)
    }

    pub fn zero(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    /// `e_i`, the exponent of the coordinate monomial `x_i`.
    pub fn unit(n: usize, i: usize) -> Self {
        let mut e = vec![0; n];
        e[i] = 1;
        MultiIndex(e)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> usize {
        self.0.iter().map(|&e| e as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        debug_assert_eq!(self.n(), other.n());
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).map(|(&e, &xi)| xi.powi(e as i32)).product()
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            // inside a degree block a larger power of x_1 comes first
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "1");
        }
        let mut first = true;
        for (i, &e) in self.0.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !first {
                write!(f, "*")?;
            }
            first = false;
            if e == 1 {
                write!(f, "x{}", i + 1)?;
            } else {
                write!(f, "x{}^{}", i + 1, e)?;
            }
        }
        Ok(())
    }
}

/// `C(n + d, n)`, the number of monomials of degree at most `d` in `n` variables.
pub fn basis_size(n: usize, d: usize) -> Result<usize> {
    let overflow = || Error::BinomialOverflow { n, d };
    let k = n.min(d);
    let top = n.checked_add(d).ok_or_else(overflow)?;
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((top - i) as u128).ok_or_else(overflow)? / (i as u128 + 1);
    }
    usize::try_from(acc).map_err(|_| overflow())
}

/// Graded-lexicographic list of all monomials of degree `<= d` in `n` variables.
#[derive(Clone, Debug)]
pub struct MonomialBasis {
    n: usize,
    d: usize,
    order: Vec<MultiIndex>,
    position: HashMap<MultiIndex, usize>,
}

impl MonomialBasis {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn get(&self, k: usize) -> &MultiIndex {
        &self.order[k]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, MultiIndex> {
        self.order.iter()
    }

    pub fn as_slice(&self) -> &[MultiIndex] {
        &self.order
    }

    pub fn index_of(&self, alpha: &MultiIndex) -> Option<usize> {
        self.position.get(alpha).copied()
    }

    /// Number of basis elements of degree `<= k` (a prefix of the list).
    pub fn prefix_len(&self, k: usize) -> usize {
        self.order.partition_point(|a| a.degree() <= k)
    }
}

pub fn enumerate_monomials(n: usize, d: usize) -> Result<MonomialBasis> {
    if n == 0 {
        return Err(Error::InvalidInput("dimension n must be >= 1".into()));
    }
    let size = basis_size(n, d)?;
    let mut order = Vec::with_capacity(size);
    let mut scratch = vec![0u32; n];
    for k in 0..=d {
        push_compositions(&mut scratch, 0, k as u32, &mut order);
    }
    debug_assert_eq!(order.len(), size);
    let position = order.iter().enumerate().map(|(i, a)| (a.clone(), i)).collect();
    Ok(MonomialBasis { n, d, order, position })
}

fn push_compositions(buf: &mut [u32], pos: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
    if pos + 1 == buf.len() {
        buf[pos] = remaining;
        out.push(MultiIndex(buf.to_vec()));
        return;
    }
    for e in (0..=remaining).rev() {
        buf[pos] = e;
        push_compositions(buf, pos + 1, remaining - e, out);
    }
    buf[pos] = 0;
}

/// `v_d(x)`: all monomials of degree `<= d` evaluated at `x`.
pub fn eval_monomial_vector(x: &[f64], d: usize) -> Result<DVector<f64>> {
    let basis = enumerate_monomials(x.len(), d)?;
    Ok(eval_on_basis(&basis, x))
}

pub fn eval_on_basis(basis: &MonomialBasis, x: &[f64]) -> DVector<f64> {
    DVector::from_iterator(basis.len(), basis.iter().map(|a| a.eval(x)))
}

/// Sparse real polynomial in `n` variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    n: usize,
    terms: BTreeMap<MultiIndex, f64>,
}

impl Polynomial {
    pub fn zero(n: usize) -> Self {
        Polynomial {
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        let mut p = Polynomial::zero(n);
        p.add_term(MultiIndex::zero(n), c);
        p
    }

    pub fn monomial(alpha: MultiIndex, c: f64) -> Self {
        let mut p = Polynomial::zero(alpha.n());
        p.add_term(alpha, c);
        p
    }

    pub fn from_terms<I>(n: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u32>, f64)>,
    {
        let mut p = Polynomial::zero(n);
        for (e, c) in terms {
            if e.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: e.len(),
                });
            }
            if !c.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite coefficient {c}")));
            }
            p.add_term(MultiIndex(e), c);
        }
        Ok(p)
    }

    /// `R^2 - sum x_i^2`.
    pub fn ball(n: usize, radius: f64) -> Self {
        let mut p = Polynomial::constant(n, radius * radius);
        for i in 0..n {
            let mut e = vec![0; n];
            e[i] = 2;
            p.add_term(MultiIndex(e), -1.0);
        }
        p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn add_term(&mut self, alpha: MultiIndex, c: f64) {
        debug_assert_eq!(alpha.n(), self.n);
        let sum = self.terms.get(&alpha).copied().unwrap_or(0.0) + c;
        if sum == 0.0 {
            self.terms.remove(&alpha);
        } else {
            self.terms.insert(alpha, sum);
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.terms.iter().map(|(a, &c)| (a, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, alpha: &MultiIndex) -> f64 {
        self.terms.get(alpha).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(MultiIndex::degree).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(a, c)| c * a.eval(x)).sum()
    }

    /// Gradient at `x` (used by local refinement of certificates).
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n];
        for (a, c) in &self.terms {
            for (i, gi) in g.iter_mut().enumerate() {
                let e = a.0[i];
                if e == 0 {
                    continue;
                }
                let mut v = c * e as f64;
                for (j, &xj) in x.iter().enumerate() {
                    let p = if j == i { e - 1 } else { a.0[j] };
                    v *= xj.powi(p as i32);
                }
                *gi += v;
            }
        }
        g
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let mut out = Polynomial::zero(self.n);
        for (a, c) in &self.terms {
            out.add_term(a.clone(), c * s);
        }
        out
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for (a, c) in &other.terms {
            out.add_term(a.clone(), *c);
        }
        out
    }

    /// Term-by-term product.
    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut out = Polynomial::zero(self.n);
        for (a, ca) in &self.terms {
            for (b, cb) in &other.terms {
                out.add_term(a.add(b), ca * cb);
            }
        }
        out
    }

    /// True when `self + other` vanishes up to `tol` in every coefficient.
    pub fn is_negation_of(&self, other: &Polynomial, tol: f64) -> bool {
        if self.is_zero() {
            return false;
        }
        let sum = self.add(other);
        sum.terms.values().all(|c| c.abs() <= tol)
    }

    /// Dense coefficient vector over `basis`; errors if a term does not fit.
    pub fn coefficients_in(&self, basis: &MonomialBasis) -> Result<DVector<f64>> {
        let mut v = DVector::zeros(basis.len());
        for (a, c) in &self.terms {
            let k = basis.index_of(a).ok_or(Error::DegreeOverflow {
                needed: a.degree(),
                available: basis.degree(),
            })?;
            v[k] = *c;
        }
        Ok(v)
    }

    pub fn from_coefficients(basis: &MonomialBasis, coeffs: &[f64]) -> Polynomial {
        let mut p = Polynomial::zero(basis.n());
        for (a, &c) in basis.iter().zip(coeffs) {
            if c != 0.0 {
                p.add_term(a.clone(), c);
            }
        }
        p
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (a, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}*{a}")?;
        }
        Ok(())
    }
}

/// File form of one polynomial term.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TermRecord {
    pub exponents: Vec<u32>,
    pub coeff: f64,
}

impl Polynomial {
    pub fn to_records(&self) -> Vec<TermRecord> {
        self.terms
            .iter()
            .map(|(a, &c)| TermRecord {
                exponents: a.0.clone(),
                coeff: c,
            })
            .collect()
    }

    pub fn from_records(n: usize, records: &[TermRecord]) -> Result<Polynomial> {
        Polynomial::from_terms(n, records.iter().map(|t| (t.exponents.clone(), t.coeff)))
    }
}

/// Regressors `F(x) = A v_d(x)` given by a `p x s(d)` coefficient matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionBasis {
    matrix: DMatrix<f64>,
}

impl RegressionBasis {
    /// The monomial basis itself (`A = I`).
    pub fn identity(n: usize, d: usize) -> Result<Self> {
        let s = basis_size(n, d)?;
        Ok(RegressionBasis {
            matrix: DMatrix::identity(s, s),
        })
    }

    /// Rejects matrices without full row rank.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(Error::InvalidInput("empty regression basis matrix".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite regression basis entry".into()));
        }
        let rows = matrix.nrows();
        let rank = if rows > matrix.ncols() {
            matrix.ncols()
        } else {
            let sv = matrix.singular_values();
            let smax = sv.max();
            sv.iter().filter(|&&s| s > 1e-10 * smax.max(1e-300)).count()
        };
        if rank < rows {
            return Err(Error::RankDeficientBasis { rank, rows });
        }
        Ok(RegressionBasis { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Number of regressors `p`.
    pub fn p(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn is_identity(&self) -> bool {
        self.matrix.is_square() && self.matrix == DMatrix::identity(self.p(), self.p())
    }

    pub fn check_degree(&self, n: usize, d: usize) -> Result<()> {
        let s = basis_size(n, d)?;
        if self.ncols() != s {
            return Err(Error::DimensionMismatch {
                expected: s,
                found: self.ncols(),
            });
        }
        Ok(())
    }
}

/// `F(x) = A v_d(x)`.
pub fn regression_vector(basis: &RegressionBasis, x: &[f64], d: usize) -> Result<DVector<f64>> {
    basis.check_degree(x.len(), d)?;
    let v = eval_monomial_vector(x, d)?;
    Ok(basis.matrix() * v)
}

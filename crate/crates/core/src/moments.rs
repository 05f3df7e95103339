//! Truncated moment sequences, the Riesz functional, moment and localizing
//! matrices.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::polybasis::{enumerate_monomials, MonomialBasis, MultiIndex, Polynomial};

/// `y = (y_alpha)` for `|alpha| <= order`, stored densely in graded order.
#[derive(Clone, Debug)]
pub struct MomentSequence {
    basis: MonomialBasis,
    values: DVector<f64>,
}

impl PartialEq for MomentSequence {
    fn eq(&self, other: &Self) -> bool {
        self.n() == other.n() && self.order() == other.order() && self.values == other.values
    }
}

impl MomentSequence {
    pub fn new(n: usize, order: usize, values: DVector<f64>) -> Result<Self> {
        if !order.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!("moment order must be even, got {order}")));
        }
        let basis = enumerate_monomials(n, order)?;
        if values.len() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                found: values.len(),
            });
        }
        Ok(MomentSequence { basis, values })
    }

    pub fn zeros(n: usize, order: usize) -> Result<Self> {
        let len = crate::polybasis::basis_size(n, order)?;
        MomentSequence::new(n, order, DVector::zeros(len))
    }

    /// Moments of the atomic measure `sum_i w_i delta_{x_i}`.
    pub fn from_atoms(points: &[Vec<f64>], weights: &[f64], order: usize) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                found: weights.len(),
            });
        }
        let n = points
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidInput("no atoms".into()))?;
        let mut y = MomentSequence::zeros(n, order)?;
        for (x, &w) in points.iter().zip(weights) {
            if x.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: x.len(),
                });
            }
            for (k, alpha) in y.basis.iter().enumerate() {
                y.values[k] += w * alpha.eval(x);
            }
        }
        Ok(y)
    }

    pub fn n(&self) -> usize {
        self.basis.n()
    }

    pub fn order(&self) -> usize {
        self.basis.degree()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn get(&self, alpha: &MultiIndex) -> Option<f64> {
        self.basis.index_of(alpha).map(|k| self.values[k])
    }

    pub fn set(&mut self, alpha: &MultiIndex, v: f64) -> Result<()> {
        let k = self.basis.index_of(alpha).ok_or(Error::DegreeOverflow {
            needed: alpha.degree(),
            available: self.order(),
        })?;
        self.values[k] = v;
        Ok(())
    }

    /// The prefix of moments with `|alpha| <= order`.
    pub fn truncate(&self, order: usize) -> Result<MomentSequence> {
        if order > self.order() {
            return Err(Error::DegreeOverflow {
                needed: order,
                available: self.order(),
            });
        }
        let len = self.basis.prefix_len(order);
        MomentSequence::new(self.n(), order, self.values.rows(0, len).into_owned())
    }

    pub fn max_abs_diff(&self, other: &MomentSequence) -> Result<f64> {
        let order = self.order().min(other.order());
        let a = self.truncate(order)?;
        let b = other.truncate(order)?;
        Ok((a.values - b.values).amax())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MomentEntry {
    exponents: Vec<u32>,
    value: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MomentRecord {
    n: usize,
    order: usize,
    entries: Vec<MomentEntry>,
}

impl Serialize for MomentSequence {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MomentRecord {
            n: self.n(),
            order: self.order(),
            entries: self
                .basis
                .iter()
                .zip(self.values.iter())
                .map(|(a, &v)| MomentEntry {
                    exponents: a.exponents().to_vec(),
                    value: v,
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MomentSequence {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let rec = MomentRecord::deserialize(d)?;
        let mut y = MomentSequence::zeros(rec.n, rec.order).map_err(D::Error::custom)?;
        if rec.entries.len() != y.len() {
            return Err(D::Error::custom(format!(
                "expected {} moment entries, found {}",
                y.len(),
                rec.entries.len()
            )));
        }
        for e in rec.entries {
            if e.exponents.len() != rec.n {
                return Err(D::Error::custom("moment exponent arity differs from n"));
            }
            y.set(&MultiIndex::new(e.exponents), e.value)
                .map_err(D::Error::custom)?;
        }
        Ok(y)
    }
}

/// `L_y(f) = sum_alpha f_alpha y_alpha`.
pub fn riesz(y: &MomentSequence, f: &Polynomial) -> Result<f64> {
    if f.n() != y.n() {
        return Err(Error::DimensionMismatch {
            expected: y.n(),
            found: f.n(),
        });
    }
    let mut acc = 0.0;
    for (alpha, c) in f.terms() {
        let v = y.get(alpha).ok_or(Error::DegreeOverflow {
            needed: alpha.degree(),
            available: y.order(),
        })?;
        acc += c * v;
    }
    Ok(acc)
}

/// Symmetric matrix indexed by a monomial basis of degree `k`.
#[derive(Clone, Debug)]
pub struct MomentMatrix {
    basis: MonomialBasis,
    entries: DMatrix<f64>,
}

impl MomentMatrix {
    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }
}

/// `M_k(y)(alpha, beta) = y_{alpha + beta}`.
pub fn moment_matrix(y: &MomentSequence, k: usize) -> Result<MomentMatrix> {
    localizing_matrix(y, &Polynomial::constant(y.n(), 1.0), k)
}

/// `M_k(g y)(alpha, beta) = L_y(g x^alpha x^beta)`.
pub fn localizing_matrix(y: &MomentSequence, g: &Polynomial, k: usize) -> Result<MomentMatrix> {
    if g.n() != y.n() {
        return Err(Error::DimensionMismatch {
            expected: y.n(),
            found: g.n(),
        });
    }
    let needed = 2 * k + g.degree();
    if needed > y.order() {
        return Err(Error::DegreeOverflow {
            needed,
            available: y.order(),
        });
    }
    let basis = enumerate_monomials(y.n(), k)?;
    let s = basis.len();
    let mut m = DMatrix::zeros(s, s);
    for a in 0..s {
        for b in a..s {
            let ab = basis.get(a).add(basis.get(b));
            let mut v = 0.0;
            for (gamma, c) in g.terms() {
                v += c * y.get(&gamma.add(&ab)).expect("degree checked above");
            }
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    Ok(MomentMatrix { basis, entries: m })
}

/// Sparse `B_alpha` with `sum_alpha B_alpha x^alpha = v_d(x) v_d(x)'`:
/// `entries[k]` lists the `(row, col)` pairs (both orders) where
/// `alpha_row + alpha_col` is the `k`-th monomial of degree `<= 2d`.
#[derive(Debug)]
pub struct BasisMatrices {
    pub row_basis: MonomialBasis,
    pub moment_basis: MonomialBasis,
    pub entries: Vec<Vec<(usize, usize)>>,
}

impl BasisMatrices {
    pub fn dense(&self, k: usize) -> DMatrix<f64> {
        let s = self.row_basis.len();
        let mut m = DMatrix::zeros(s, s);
        for &(r, c) in &self.entries[k] {
            m[(r, c)] = 1.0;
        }
        m
    }

    /// `sum_alpha B_alpha y_alpha`.
    pub fn combine(&self, coeffs: &DVector<f64>) -> DMatrix<f64> {
        let s = self.row_basis.len();
        let mut m = DMatrix::zeros(s, s);
        for (k, list) in self.entries.iter().enumerate() {
            for &(r, c) in list {
                m[(r, c)] += coeffs[k];
            }
        }
        m
    }
}

type BasisCache = Mutex<HashMap<(usize, usize), Arc<BasisMatrices>>>;

pub fn basis_matrices(n: usize, d: usize) -> Result<Arc<BasisMatrices>> {
    static CACHE: OnceLock<BasisCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().expect("basis cache poisoned").get(&(n, d)) {
        return Ok(Arc::clone(hit));
    }
    let row_basis = enumerate_monomials(n, d)?;
    let moment_basis = enumerate_monomials(n, 2 * d)?;
    let mut entries = vec![Vec::new(); moment_basis.len()];
    for (r, a) in row_basis.iter().enumerate() {
        for (c, b) in row_basis.iter().enumerate() {
            let k = moment_basis.index_of(&a.add(b)).expect("sum within degree 2d");
            entries[k].push((r, c));
        }
    }
    let built = Arc::new(BasisMatrices {
        row_basis,
        moment_basis,
        entries,
    });
    cache
        .lock()
        .expect("basis cache poisoned")
        .insert((n, d), Arc::clone(&built));
    Ok(built)
}

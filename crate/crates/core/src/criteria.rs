//! Kiefer criteria (D, A, E), their gradients, information matrices and the
//! Christoffel / dual polynomials used by the equivalence theorem.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg;
use crate::moments::{moment_matrix, MomentSequence};
use crate::polybasis::{enumerate_monomials, eval_on_basis, MonomialBasis, Polynomial, RegressionBasis};

/// `D` (q = 0), `A` (q = -1) or `E` (q = -inf).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Criterion {
    D,
    A,
    E,
}

impl Criterion {
    /// The exponent `q`; `-inf` for E.
    pub fn q(self) -> f64 {
        match self {
            Criterion::D => 0.0,
            Criterion::A => -1.0,
            Criterion::E => f64::NEG_INFINITY,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Criterion::D => "D",
            Criterion::A => "A",
            Criterion::E => "E",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "D" => Ok(Criterion::D),
            "A" => Ok(Criterion::A),
            "E" => Ok(Criterion::E),
            other => Err(Error::UnsupportedCriterion(other.to_string())),
        }
    }
}

impl Serialize for Criterion {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Criterion {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    let asym = linalg::asymmetry(m);
    if asym > 1e-10 * (1.0 + m.amax()) {
        return Err(Error::NonSymmetricInput(asym));
    }
    Ok(())
}

/// `A M_d(y) A'`.
pub fn information_matrix(y: &MomentSequence, basis: &RegressionBasis, d: usize) -> Result<DMatrix<f64>> {
    basis.check_degree(y.n(), d)?;
    let md = moment_matrix(y, d)?;
    let a = basis.matrix();
    Ok(linalg::symmetrize(&(a * md.entries() * a.transpose())))
}

/// Criterion value: `det^{1/p}`, `p / tr(M^{-1})` or `lambda_min`, with
/// singular (to `1e-12` relative) matrices mapped to 0.
pub fn phi(m: &DMatrix<f64>, c: Criterion) -> Result<f64> {
    check_symmetric(m)?;
    let p = m.nrows() as f64;
    let (vals, _) = linalg::sym_eigen(m);
    let top = vals.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let singular = top == 0.0 || vals[0] <= 1e-12 * top;
    Ok(match c {
        Criterion::D => {
            if singular {
                0.0
            } else {
                (vals.iter().map(|v| v.ln()).sum::<f64>() / p).exp()
            }
        }
        Criterion::A => {
            if singular {
                0.0
            } else {
                p / vals.iter().map(|v| 1.0 / v).sum::<f64>()
            }
        }
        Criterion::E => vals[0].max(0.0),
    })
}

/// Least eigenpair of `M` with the deterministic eigenvector choice used
/// throughout: inside the (numerical) eigenspace, the unit vector with the
/// largest first coordinate (falling back to later coordinates).
#[derive(Clone, Debug, PartialEq)]
pub struct EOptCertificate {
    pub eigenvalue: f64,
    pub eigenvector: DVector<f64>,
    pub multiplicity: usize,
    /// `lambda_2 - lambda_1` (infinite for 1x1).
    pub gap: f64,
}

/// Eigenvalues within this distance of `lambda_min` count as tied.
pub const EIG_TIE_TOL: f64 = 1e-8;

pub fn eopt_certificate(m: &DMatrix<f64>) -> Result<EOptCertificate> {
    check_symmetric(m)?;
    let (vals, vecs) = linalg::sym_eigen(m);
    let n = vals.len();
    let lam = vals[0];
    let multiplicity = (0..n).filter(|&k| vals[k] - lam < EIG_TIE_TOL).count();
    let gap = if n > 1 { vals[1] - lam } else { f64::INFINITY };
    let space = vecs.columns(0, multiplicity).into_owned();
    let mut u = space.column(0).into_owned();
    for coord in 0..n {
        let proj = space.row(coord).transpose();
        if proj.norm() > 1e-8 {
            u = &space * proj;
            u /= u.norm();
            break;
        }
    }
    Ok(EOptCertificate {
        eigenvalue: lam,
        eigenvector: u,
        multiplicity,
        gap,
    })
}

/// Gradient of the criterion; `ambiguous` is set for E with a repeated least
/// eigenvalue (the matrix is then one element of the subdifferential).
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub matrix: DMatrix<f64>,
    pub ambiguous: bool,
    pub gap: f64,
}

impl Gradient {
    pub fn require_unique(self) -> Result<DMatrix<f64>> {
        if self.ambiguous {
            Err(Error::EigMultiplicityAmbiguous { gap: self.gap })
        } else {
            Ok(self.matrix)
        }
    }
}

/// D: `(1/p) det(M)^{1/p} M^{-1}`; A: `p tr(M^{-1})^{-2} M^{-2}`; E: `u u'`.
pub fn grad_phi(m: &DMatrix<f64>, c: Criterion) -> Result<Gradient> {
    check_symmetric(m)?;
    let p = m.nrows() as f64;
    match c {
        Criterion::D => {
            let inv = linalg::sym_pow(m, -1.0)?;
            let val = phi(m, Criterion::D)?;
            Ok(Gradient {
                matrix: inv * (val / p),
                ambiguous: false,
                gap: f64::INFINITY,
            })
        }
        Criterion::A => {
            let inv = linalg::sym_pow(m, -1.0)?;
            let tr = inv.trace();
            Ok(Gradient {
                matrix: &inv * &inv * (p / (tr * tr)),
                ambiguous: false,
                gap: f64::INFINITY,
            })
        }
        Criterion::E => {
            let cert = eopt_certificate(m)?;
            let u = &cert.eigenvector;
            Ok(Gradient {
                matrix: u * u.transpose(),
                ambiguous: cert.multiplicity > 1,
                gap: cert.gap,
            })
        }
    }
}

/// `F(x)' K F(x)` with `F = A v_d`.
#[derive(Clone, Debug)]
pub struct ChristoffelPolynomial {
    pub kernel: DMatrix<f64>,
    pub degree: usize,
}

/// Kernel `M^{q-1}` (`M^{-1}` for D, `M^{-2}` for A, `u u'` for E).
pub fn christoffel_polynomial(m: &DMatrix<f64>, c: Criterion, d: usize) -> Result<ChristoffelPolynomial> {
    let kernel = match c {
        Criterion::D => linalg::sym_pow(m, -1.0)?,
        Criterion::A => linalg::sym_pow(m, -2.0)?,
        Criterion::E => {
            let cert = eopt_certificate(m)?;
            &cert.eigenvector * cert.eigenvector.transpose()
        }
    };
    Ok(ChristoffelPolynomial { kernel, degree: 2 * d })
}

pub fn christoffel_value(k: &ChristoffelPolynomial, basis: &RegressionBasis, x: &[f64]) -> Result<f64> {
    let d = k.degree / 2;
    let f = crate::polybasis::regression_vector(basis, x, d)?;
    if f.len() != k.kernel.nrows() {
        return Err(Error::DimensionMismatch {
            expected: k.kernel.nrows(),
            found: f.len(),
        });
    }
    Ok(f.dot(&(&k.kernel * &f)))
}

/// `p*(x) = trace(M^q) - F(x)' K F(x)` for a fixed information matrix.
#[derive(Clone, Debug)]
pub struct DualPolynomial {
    pub criterion: Criterion,
    /// `trace(M^q)`: `p` for D, `tr M^{-1}` for A, `lambda_min` for E.
    pub constant: f64,
    pub christoffel: ChristoffelPolynomial,
    basis: RegressionBasis,
    monomials: MonomialBasis,
    /// Set for E when the least eigenvalue is repeated.
    pub ambiguous: bool,
}

impl DualPolynomial {
    pub fn new(m: &DMatrix<f64>, basis: &RegressionBasis, c: Criterion, n: usize, d: usize) -> Result<Self> {
        basis.check_degree(n, d)?;
        check_symmetric(m)?;
        let (constant, ambiguous) = match c {
            Criterion::D => {
                linalg::sym_pow(m, -1.0)?;
                (m.nrows() as f64, false)
            }
            Criterion::A => (linalg::sym_pow(m, -1.0)?.trace(), false),
            Criterion::E => {
                let cert = eopt_certificate(m)?;
                (cert.eigenvalue, cert.multiplicity > 1)
            }
        };
        Ok(DualPolynomial {
            criterion: c,
            constant,
            christoffel: christoffel_polynomial(m, c, d)?,
            basis: basis.clone(),
            monomials: enumerate_monomials(n, d)?,
            ambiguous,
        })
    }

    pub fn from_moments(y: &MomentSequence, basis: &RegressionBasis, c: Criterion, d: usize) -> Result<Self> {
        let m = information_matrix(y, basis, d)?;
        DualPolynomial::new(&m, basis, c, y.n(), d)
    }

    pub fn n(&self) -> usize {
        self.monomials.n()
    }

    pub fn christoffel_at(&self, x: &[f64]) -> f64 {
        let f = self.basis.matrix() * eval_on_basis(&self.monomials, x);
        f.dot(&(&self.christoffel.kernel * &f))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant - self.christoffel_at(x)
    }

    /// Gradient of `p*` at `x` via the chain rule on `v_d`.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let a = self.basis.matrix();
        let v = eval_on_basis(&self.monomials, x);
        let kf = &self.christoffel.kernel * (a * &v);
        let w = a.transpose() * kf;
        let mut g = vec![0.0; x.len()];
        for (k, alpha) in self.monomials.iter().enumerate() {
            if w[k] == 0.0 {
                continue;
            }
            for (i, gi) in g.iter_mut().enumerate() {
                let e = alpha.exponents()[i];
                if e == 0 {
                    continue;
                }
                let mut dv = e as f64;
                for (j, &xj) in x.iter().enumerate() {
                    let pw = if j == i { e - 1 } else { alpha.exponents()[j] };
                    dv *= xj.powi(pw as i32);
                }
                *gi -= 2.0 * w[k] * dv;
            }
        }
        g
    }

    /// Expanded coefficients of `p*` in the monomial basis of degree `2d`.
    pub fn to_polynomial(&self) -> Polynomial {
        let a = self.basis.matrix();
        let q = a.transpose() * &self.christoffel.kernel * a;
        let n = self.n();
        let mut p = Polynomial::constant(n, self.constant);
        for (r, ar) in self.monomials.iter().enumerate() {
            for (c, ac) in self.monomials.iter().enumerate() {
                if q[(r, c)] != 0.0 {
                    p.add_term(ar.add(ac), -q[(r, c)]);
                }
            }
        }
        p
    }
}

/// `trace(M^q) - p_d*(x)` built from the moments `y`.
pub fn dual_polynomial_value(
    y: &MomentSequence,
    basis: &RegressionBasis,
    c: Criterion,
    d: usize,
    x: &[f64],
) -> Result<f64> {
    if x.len() != y.n() {
        return Err(Error::DimensionMismatch {
            expected: y.n(),
            found: x.len(),
        });
    }
    Ok(DualPolynomial::from_moments(y, basis, c, d)?.eval(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(v.to_vec()))
    }

    #[test]
    fn phi_examples() {
        assert!((phi(&diag(&[1.0, 4.0]), Criterion::D).unwrap() - 2.0).abs() < 1e-14);
        assert!((phi(&DMatrix::identity(3, 3), Criterion::A).unwrap() - 1.0).abs() < 1e-14);
        assert!((phi(&diag(&[3.0, 5.0]), Criterion::E).unwrap() - 3.0).abs() < 1e-14);
        assert_eq!(phi(&diag(&[0.0, 1.0]), Criterion::D).unwrap(), 0.0);
        assert_eq!(phi(&diag(&[0.0, 1.0]), Criterion::A).unwrap(), 0.0);
    }

    #[test]
    fn phi_rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(phi(&m, Criterion::D), Err(Error::NonSymmetricInput(_))));
    }

    #[test]
    fn gradient_examples() {
        let g = grad_phi(&diag(&[1.0, 2.0]), Criterion::E).unwrap();
        assert!(!g.ambiguous);
        assert!((g.matrix - diag(&[1.0, 0.0])).amax() < 1e-14);
        let g = grad_phi(&DMatrix::identity(4, 4), Criterion::A).unwrap();
        assert!((g.matrix - DMatrix::identity(4, 4) / 4.0).amax() < 1e-14);
        let g = grad_phi(&DMatrix::identity(2, 2), Criterion::E).unwrap();
        assert!(g.ambiguous);
        assert!((g.matrix[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(g.require_unique().is_err());
    }

    #[test]
    fn singular_gradient_is_an_error() {
        assert!(matches!(
            grad_phi(&diag(&[0.0, 1.0]), Criterion::D),
            Err(Error::SingularMatrix)
        ));
    }

    #[test]
    fn criterion_names_parse_case_insensitively() {
        assert_eq!("d".parse::<Criterion>().unwrap(), Criterion::D);
        assert_eq!(" A ".parse::<Criterion>().unwrap(), Criterion::A);
        assert!(matches!("G".parse::<Criterion>(), Err(Error::UnsupportedCriterion(_))));
        let c: Criterion = serde_json::from_str("\"e\"").unwrap();
        assert_eq!(c, Criterion::E);
    }

    #[test]
    fn identity_kernel_christoffel() {
        let basis = RegressionBasis::identity(2, 1).unwrap();
        let dp = DualPolynomial::new(&DMatrix::identity(3, 3), &basis, Criterion::D, 2, 1).unwrap();
        let x = [0.3, -0.4];
        assert!((dp.christoffel_at(&x) - (1.0 + 0.09 + 0.16)).abs() < 1e-14);
        assert!((dp.eval(&[0.0, 0.0]) - 2.0).abs() < 1e-14);
        let poly = dp.to_polynomial();
        assert!((poly.eval(&x) - dp.eval(&x)).abs() < 1e-14);
    }

    #[test]
    fn dual_gradient_matches_differences() {
        let basis = RegressionBasis::identity(2, 2).unwrap();
        let m = DMatrix::from_fn(6, 6, |i, j| if i == j { 2.0 } else { 0.1 / (1.0 + (i + j) as f64) });
        let dp = DualPolynomial::new(&m, &basis, Criterion::A, 2, 2).unwrap();
        let x = [0.2, -0.7];
        let g = dp.gradient(&x);
        for i in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += 1e-6;
            xm[i] -= 1e-6;
            let fd = (dp.eval(&xp) - dp.eval(&xm)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-6);
        }
    }
}

//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest absolute difference between `m` and its transpose.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigen-decomposition with eigenvalues sorted ascending.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    sym_eigen(m).0[0]
}

/// `M^q` for symmetric positive definite `M` and real `q`.
///
/// Eigenvalues below `1e-12 * lambda_max` are treated as singular.
pub fn sym_pow(m: &DMatrix<f64>, q: f64) -> Result<DMatrix<f64>> {
    let (vals, vecs) = sym_eigen(m);
    let top = vals.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if vals.is_empty() || top == 0.0 || vals[0] <= 1e-12 * top {
        return Err(Error::SingularMatrix);
    }
    let scaled = DVector::from_iterator(vals.len(), vals.iter().map(|v| v.powf(q)));
    Ok(&vecs * DMatrix::from_diagonal(&scaled) * vecs.transpose())
}

/// Number of singular values at least `rel_tol * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let top = sv.max();
    if top <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s >= rel_tol * top).count()
}

/// Orthonormal basis of the null space of `a` and a least-squares particular
/// solution of `a x = b`.
pub struct AffineSolution {
    pub particular: DVector<f64>,
    pub null_basis: DMatrix<f64>,
    pub rank: usize,
    pub residual: f64,
}

pub fn solve_affine(a: &DMatrix<f64>, b: &DVector<f64>, rel_tol: f64) -> AffineSolution {
    let ncols = a.ncols();
    if a.nrows() == 0 {
        return AffineSolution {
            particular: DVector::zeros(ncols),
            null_basis: DMatrix::identity(ncols, ncols),
            rank: 0,
            residual: 0.0,
        };
    }
    // work with the transpose when wide so that V is complete
    let svd = a.transpose().svd(true, true);
    let u = svd.u.as_ref().expect("svd u");
    let v = svd.v_t.as_ref().expect("svd v_t").transpose();
    // a^T = U S V^T  =>  a = V S U^T; row space of a is span(U[:, k])
    let sv = &svd.singular_values;
    let top = sv.max();
    let rank = if top <= 0.0 {
        0
    } else {
        sv.iter().filter(|&&s| s > rel_tol * top).count()
    };
    let mut particular = DVector::zeros(ncols);
    for k in 0..rank {
        let coef = v.column(k).dot(b) / sv[k];
        particular += u.column(k) * coef;
    }
    let residual = (a * &particular - b).amax();
    let null_basis = complement_basis(&u.columns(0, rank).into_owned(), ncols);
    AffineSolution {
        particular,
        null_basis,
        rank,
        residual,
    }
}

/// Orthonormal basis of the orthogonal complement of the span of the
/// (orthonormal) columns of `q` inside `R^dim`.
pub fn complement_basis(q: &DMatrix<f64>, dim: usize) -> DMatrix<f64> {
    if q.ncols() == 0 {
        return DMatrix::identity(dim, dim);
    }
    let proj = DMatrix::identity(dim, dim) - q * q.transpose();
    let (vals, vecs) = sym_eigen(&proj);
    let keep: Vec<usize> = (0..dim).filter(|&k| vals[k] > 0.5).collect();
    let mut out = DMatrix::zeros(dim, keep.len());
    for (dst, &src) in keep.iter().enumerate() {
        out.set_column(dst, &vecs.column(src));
    }
    out
}

/// Orthonormal basis for the column span of `m`, dropping directions with
/// singular value below `rel_tol * sigma_max`.
pub fn range_basis(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    if m.ncols() == 0 || m.nrows() == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("svd u");
    let sv = svd.singular_values;
    let top = sv.max();
    let keep: Vec<usize> = (0..sv.len()).filter(|&k| top > 0.0 && sv[k] > rel_tol * top).collect();
    let mut out = DMatrix::zeros(m.nrows(), keep.len());
    for (dst, &src) in keep.iter().enumerate() {
        out.set_column(dst, &u.column(src));
    }
    out
}

/// Frobenius inner product.
pub fn frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}

/// 2-norm condition estimate from singular values.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let top = sv.max();
    let low = sv.min();
    if low <= 0.0 {
        f64::INFINITY
    } else {
        top / low
    }
}

//! Small dense complex matrix helpers.
//!
//! Everything here operates on the K×K blocks of the Dyson equation, where K is
//! at most a few dozen, so plain `nalgebra` dynamic matrices are used throughout.
//! Dense factorizations of materialized operators (up to a few thousand rows) go
//! through `faer`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(k: usize) -> CMat {
    CMat::identity(k, k)
}

pub fn zeros(k: usize) -> CMat {
    CMat::zeros(k, k)
}

/// `(m + m*) / 2`
pub fn re_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// `(m - m*) / 2i`
pub fn im_part(m: &CMat) -> CMat {
    (m - m.adjoint()) * c(0.0, -0.5)
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest deviation from Hermiticity, `max |m_ij - conj(m_ji)|`.
pub fn hermiticity_defect(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted ascending.
///
/// Only the lower triangle is trusted; callers symmetrize when needed.
pub fn hermitian_eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let k = m.nrows();
    if k == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(re_part(m));
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(k, k, |r, col| eig.eigenvectors[(r, order[col])]);
    (values, vectors)
}

pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut v: Vec<f64> = SymmetricEigen::new(re_part(m)).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn min_eigenvalue(m: &CMat) -> f64 {
    hermitian_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

/// Applies `f` to the spectrum of a Hermitian matrix.
pub fn hermitian_function(m: &CMat, f: impl Fn(f64) -> f64) -> CMat {
    let (vals, vecs) = hermitian_eigh(m);
    let k = vals.len();
    let mut scaled = vecs.clone();
    for (col, &v) in vals.iter().enumerate() {
        let fv = f(v);
        for r in 0..k {
            scaled[(r, col)] *= fv;
        }
    }
    scaled * vecs.adjoint()
}

/// Square root of a positive semidefinite matrix; eigenvalues below `floor` are clamped.
pub fn psd_sqrt(m: &CMat, floor: f64) -> CMat {
    hermitian_function(m, |v| v.max(floor).sqrt())
}

/// Inverse square root of a positive definite matrix; eigenvalues below `floor` are clamped.
pub fn psd_inv_sqrt(m: &CMat, floor: f64) -> CMat {
    hermitian_function(m, |v| 1.0 / v.max(floor).sqrt())
}

/// Spectral (operator 2-) norm.
pub fn spectral_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let gram = m.adjoint() * m;
    hermitian_eigenvalues(&gram)
        .last()
        .copied()
        .unwrap_or(0.0)
        .max(0.0)
        .sqrt()
}

fn to_faer(m: &CMat) -> faer::Mat<C64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: &faer::Mat<C64>) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Dense product through faer's blocked kernels.
pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    from_faer(&(to_faer(a) * to_faer(b)))
}

/// Solves `a x = rhs` by partially pivoted LU; `None` if the solution is not finite.
pub fn lu_solve(a: &CMat, rhs: &DVector<C64>) -> Option<DVector<C64>> {
    use faer::linalg::solvers::Solve;
    let r = faer::Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
    let x = to_faer(a).partial_piv_lu().solve(&r);
    let out = DVector::from_fn(rhs.len(), |i, _| x[(i, 0)]);
    out.iter().all(|v| v.re.is_finite() && v.im.is_finite()).then_some(out)
}

/// Singular values in no particular order; empty if the factorization fails.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    to_faer(m).singular_values().unwrap_or_default()
}

/// Thin SVD `m = U diag(s) V*`, returned as `(U, s, V)`.
pub fn svd(m: &CMat) -> Option<(CMat, Vec<f64>, CMat)> {
    let f = to_faer(m).thin_svd().ok()?;
    let (u, v, s) = (f.U(), f.V(), f.S().column_vector());
    let r = s.nrows();
    Some((
        CMat::from_fn(u.nrows(), r, |i, j| u[(i, j)]),
        (0..r).map(|i| s[i].re).collect(),
        CMat::from_fn(v.nrows(), r, |i, j| v[(i, j)]),
    ))
}

/// Inverse via LU, rejecting non-finite results.
pub fn inverse(m: &CMat) -> Option<CMat> {
    let inv = m.clone().try_inverse()?;
    inv.iter().all(|z| z.re.is_finite() && z.im.is_finite()).then_some(inv)
}

/// Row-major flattening of a square matrix.
pub fn vec_row_major(m: &CMat) -> impl Iterator<Item = C64> + '_ {
    let k = m.ncols();
    (0..m.nrows() * k).map(move |p| m[(p / k, p % k)])
}

pub fn from_row_major(k: usize, data: &[C64]) -> CMat {
    CMat::from_fn(k, k, |r, col| data[r * k + col])
}

/// Serializes a complex number as `[re, im]`.
pub fn serialize_c64<S: serde::Serializer>(z: &C64, s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeTuple;
    let mut t = s.serialize_tuple(2)?;
    t.serialize_element(&z.re)?;
    t.serialize_element(&z.im)?;
    t.end()
}

/// Nested `[re, im]` rows of a matrix.
pub fn matrix_repr(m: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|col| [m[(r, col)].re, m[(r, col)].im]).collect())
        .collect()
}

pub fn dvec_norm(v: &DVector<C64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Kronecker product `a ⊗ b` with the convention that `a` indexes the outer blocks.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    CMat::from_fn(ar * br, ac * bc, |r, col| {
        a[(r / br, col / bc)] * b[(r % br, col % bc)]
    })
}

/// Block 2×2 matrix `[[p, q], [r, s]]` from four equally sized square blocks.
pub fn block2(p: &CMat, q: &CMat, r: &CMat, s: &CMat) -> CMat {
    let l = p.nrows();
    let mut out = CMat::zeros(2 * l, 2 * l);
    out.view_mut((0, 0), (l, l)).copy_from(p);
    out.view_mut((0, l), (l, l)).copy_from(q);
    out.view_mut((l, 0), (l, l)).copy_from(r);
    out.view_mut((l, l), (l, l)).copy_from(s);
    out
}

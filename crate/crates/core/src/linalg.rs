//! Dense complex matrix helpers: singular-value extremes, block Kronecker
//! products and 2x2 utilities.
//!
//! Everything in the pipeline reduces to complex matrices of size 2(n+1)
//! or smaller, so plain dense routines are used throughout.

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CMat2 = Matrix2<Complex64>;

/// 2x2 identity.
pub fn ident2() -> CMat2 {
    CMat2::identity()
}

pub fn is_finite_mat(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn is_finite_mat2(m: &CMat2) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Largest and smallest singular value of a dense complex matrix.
///
/// Both are square roots of the extreme eigenvalues of `M^H M`; the SVD
/// route used here is checked against an independent Hermitian-eigenvalue
/// oracle in the test suite.
pub fn svd_extremes(m: &CMat) -> Result<(f64, f64)> {
    if !is_finite_mat(m) {
        return Err(Error::numerical("svd_extremes: non-finite input matrix"));
    }
    if m.nrows() == 2 && m.ncols() == 2 {
        let m2 = CMat2::from_fn(|i, j| m[(i, j)]);
        return Ok(sv2_extremes(&m2));
    }
    let svd = m.clone().svd(false, false);
    let mut smax = 0.0f64;
    let mut smin = f64::INFINITY;
    for v in svd.singular_values.iter() {
        smax = smax.max(*v);
        smin = smin.min(*v);
    }
    if !smax.is_finite() || !smin.is_finite() {
        return Err(Error::numerical("svd_extremes: SVD produced non-finite values"));
    }
    Ok((smax, smin))
}

/// Closed-form singular-value extremes of a 2x2 complex matrix via the
/// eigenvalues of `M^H M`.
pub fn sv2_extremes(m: &CMat2) -> (f64, f64) {
    // Hermitian 2x2: [[h11, h12], [conj(h12), h22]]
    let h11 = m[(0, 0)].norm_sqr() + m[(1, 0)].norm_sqr();
    let h22 = m[(0, 1)].norm_sqr() + m[(1, 1)].norm_sqr();
    let h12 = m[(0, 0)].conj() * m[(0, 1)] + m[(1, 0)].conj() * m[(1, 1)];
    let tr = h11 + h22;
    let disc = ((h11 - h22).powi(2) + 4.0 * h12.norm_sqr()).sqrt();
    let lmax = 0.5 * (tr + disc);
    let lmin = 0.5 * (tr - disc);
    (lmax.max(0.0).sqrt(), lmin.max(0.0).sqrt())
}

/// Exact 2x2 inverse via the adjugate.
///
/// Fails when the elimination is singular or close to it (condition
/// number above 1e12).
pub fn invert2(m: &CMat2, context: &str, s: Complex64) -> Result<CMat2> {
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let (smax, smin) = sv2_extremes(m);
    if det.norm() == 0.0 || smin == 0.0 || smax / smin > 1e12 {
        return Err(Error::numerical_at(
            format!("{context}: singular or ill-conditioned 2x2 elimination"),
            s,
        ));
    }
    Ok(CMat2::new(
        m[(1, 1)] / det,
        -m[(0, 1)] / det,
        -m[(1, 0)] / det,
        m[(0, 0)] / det,
    ))
}

/// Block Kronecker product `B (x) M` of a real matrix with a complex 2x2
/// block: entry (i,k) of `B` becomes the block `B[i,k] * M`.
pub fn kron_block(b: &DMatrix<f64>, m: &CMat2) -> CMat {
    let (n, mm) = (b.nrows(), b.ncols());
    let mut out = CMat::zeros(2 * n, 2 * mm);
    for i in 0..n {
        for k in 0..mm {
            let w = b[(i, k)];
            if w == 0.0 {
                continue;
            }
            for r in 0..2 {
                for c in 0..2 {
                    out[(2 * i + r, 2 * k + c)] = Complex64::new(w, 0.0) * m[(r, c)];
                }
            }
        }
    }
    out
}

/// General dense solve `A x = b` by LU with partial pivoting.
pub fn solve(a: &CMat, b: &CMat, context: &str, s: Complex64) -> Result<CMat> {
    let lu = a.clone().lu();
    lu.solve(b)
        .ok_or_else(|| Error::numerical_at(format!("{context}: singular linear system"), s))
}

/// Dense inverse; used where a full inverse is genuinely required
/// (worst-case gain checks).
pub fn invert(a: &CMat, context: &str, s: Complex64) -> Result<CMat> {
    let n = a.nrows();
    solve(a, &CMat::identity(n, n), context, s)
}

/// Frobenius norm.
pub fn fro_norm(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

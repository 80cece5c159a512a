//! Dense least-squares kernels.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenvalue ratio below which the Gram fast path hands over to the SVD.
/// Keeps the normal-equation solve within ~1e-8 relative accuracy.
const GRAM_RCOND: f64 = 1e-8;

/// Rows `rows` of `x` as a dense matrix.
pub fn select_rows(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

/// Minimum-Euclidean-norm minimizer of `Σ_{i ∈ rows} (y_i − ⟨x_i, β⟩)²`.
///
/// Well-conditioned problems are solved through the Gram eigendecomposition;
/// anything rank deficient or close to it goes through the SVD pseudo-inverse
/// with singular-value cutoff `σ_max · max(m, p) · ε`.
pub fn min_norm_lstsq(x: &DMatrix<f64>, rows: &[usize], y: &[f64]) -> Result<DVector<f64>> {
    let p = x.ncols();
    if rows.is_empty() {
        return Err(Error::EmptySubset);
    }
    let ys = DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i]));
    if ys.iter().all(|&v| v == 0.0) {
        return Ok(DVector::zeros(p));
    }
    let xs = select_rows(x, rows);
    min_norm_dense(&xs, &ys)
}

/// [`min_norm_lstsq`] on an already materialized design.
pub fn min_norm_dense(xs: &DMatrix<f64>, ys: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, p) = xs.shape();
    if m >= p {
        let gram = xs.tr_mul(xs);
        let eig = gram.symmetric_eigen();
        let lmax = eig.eigenvalues.max();
        let lmin = eig.eigenvalues.min();
        if lmax > 0.0 && lmin > lmax * GRAM_RCOND {
            let rhs = xs.tr_mul(ys);
            let mut proj = eig.eigenvectors.tr_mul(&rhs);
            for (v, l) in proj.iter_mut().zip(eig.eigenvalues.iter()) {
                *v /= l;
            }
            return Ok(&eig.eigenvectors * proj);
        }
    }
    svd_min_norm(xs, ys)
}

fn svd_min_norm(xs: &DMatrix<f64>, ys: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, p) = xs.shape();
    let svd = xs.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if !smax.is_finite() {
        return Err(Error::Singular("non-finite singular values".into()));
    }
    let cutoff = smax * m.max(p) as f64 * f64::EPSILON;
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let mut coord = u.tr_mul(ys);
    for (c, s) in coord.iter_mut().zip(svd.singular_values.iter()) {
        *c = if *s > cutoff { *c / s } else { 0.0 };
    }
    Ok(vt.tr_mul(&coord))
}

/// Cholesky solve of `A z = b` for symmetric positive definite `A`.
pub fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Singular(format!("{what} is not positive definite")))?;
    Ok(chol.solve(b))
}

/// Normalized norm `sqrt(n⁻¹ Σ v_i²)`.
pub fn norm_n(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

/// Normalized inner product `n⁻¹ Σ a_i b_i`.
pub fn inner_n(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
}

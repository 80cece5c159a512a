//! Synthetic finite populations for the two simulation families.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::normal::normal_quantile;
use crate::population::FinitePopulation;
use crate::rng::{purpose, SeedKey};

/// Regeneration attempts for a linear instance whose Gram matrices are singular.
pub const MAX_INSTANCE_ATTEMPTS: u64 = 10;

/// Closed-form quantile of Student's t with two degrees of freedom.
pub fn t2_quantile(p: f64) -> f64 {
    (2.0 * p - 1.0) / (2.0 * p * (1.0 - p)).sqrt()
}

/// `diag(A (AᵀA)⁻¹ Aᵀ)` through a Cholesky factor of the Gram matrix.
fn leverages(a: &DMatrix<f64>, what: &str) -> Result<(DVector<f64>, nalgebra::Cholesky<f64, nalgebra::Dyn>)> {
    let chol = a
        .tr_mul(a)
        .cholesky()
        .ok_or_else(|| Error::Singular(format!("{what} Gram matrix is not positive definite")))?;
    // Columns of L⁻¹Aᵀ have squared norms equal to the leverages.
    let z = chol.l().solve_lower_triangular(&a.transpose()).expect("Cholesky factor has a nonzero diagonal");
    let h = DVector::from_iterator(a.nrows(), z.column_iter().map(|c| c.norm_squared()));
    Ok((h, chol))
}

/// Noise vector that maximizes the leading bias of classical adjustment:
/// `ε̃ = (I − H⁺) h` with `h = diag(H)`, rescaled to `‖ε‖₂ = sqrt(n)`.
///
/// `x` excludes the intercept and `x_plus` includes it.
pub fn bias_maximizing_epsilon(x: &DMatrix<f64>, x_plus: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = x.nrows();
    if x_plus.nrows() != n {
        return Err(Error::LengthMismatch { what: "x_plus rows", expected: n, got: x_plus.nrows() });
    }
    let (h, _) = leverages(x, "covariate")?;
    let chol = x_plus
        .tr_mul(x_plus)
        .cholesky()
        .ok_or_else(|| Error::Singular("intercept-augmented Gram matrix is not positive definite".into()))?;
    let coef = chol.solve(&x_plus.tr_mul(&h));
    let eps = &h - x_plus * coef;
    let norm = eps.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::Singular("leverage vector lies in the intercept-augmented column span".into()));
    }
    Ok(eps.iter().map(|v| v * (n as f64).sqrt() / norm).collect())
}

/// Linear-family population: t(2) covariates, recentered, with an intercept
/// prepended; `y(1) = 4⟨β*, x⟩ + ε`, `y(0) = 0`, `β* = (0, 1, ..., 1)/sqrt(d)`.
///
/// A draw with singular Gram matrices is replaced by the next sub-seed, at
/// most [`MAX_INSTANCE_ATTEMPTS`] times.
pub fn gen_linear_instance(n: usize, d: usize, instance_seed: u64) -> Result<FinitePopulation> {
    if d == 0 || d >= n {
        return Err(Error::InvalidInput(format!("linear instance needs 1 <= d < n, got d = {d}, n = {n}")));
    }
    let key = SeedKey::from_u64(instance_seed);
    let mut last = None;
    for attempt in 0..MAX_INSTANCE_ATTEMPTS {
        let u = key.derive("linear-instance", &[attempt]).stream(purpose::COVARIATES).uniforms(n * d);
        let mut x = DMatrix::from_fn(n, d, |i, j| t2_quantile(u[i * d + j]));
        for mut col in x.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        let x_plus = x.clone().insert_column(0, 1.0);
        match bias_maximizing_epsilon(&x, &x_plus) {
            Ok(eps) => {
                let scale = 4.0 / (d as f64).sqrt();
                let y1: Vec<f64> = (0..n).map(|i| scale * x.row(i).sum() + eps[i]).collect();
                return FinitePopulation::new(x_plus, y1, vec![0.0; n], true);
            }
            Err(e @ Error::Singular(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt ran"))
}

/// Hölder-family population on the grid `x_i = (i − 1)/n`:
/// `y(1) = |2x − 1| + ε/3` with standard normal `ε`, `y(0) = 0`.
pub fn gen_holder_instance(n: usize, noise_seed: u64) -> Result<FinitePopulation> {
    let u = SeedKey::from_u64(noise_seed).derive("holder-noise", &[]).stream(purpose::NOISE).uniforms(n);
    let mut y1 = Vec::with_capacity(n);
    for (i, &ui) in u.iter().enumerate() {
        let x = i as f64 / n as f64;
        y1.push((2.0 * x - 1.0).abs() + normal_quantile(ui)? / 3.0);
    }
    holder_population(n, y1)
}

pub(crate) fn holder_population(n: usize, y1: Vec<f64>) -> Result<FinitePopulation> {
    let x = DMatrix::from_fn(n, 1, |i, _| i as f64 / n as f64);
    FinitePopulation::new(x, y1, vec![0.0; n], false)
}

//! ℓ¹-penalized least squares with a sup-norm side constraint on the fitted
//! values at every unit.
//!
//! Solver: cyclic coordinate descent on the plain Lasso objective. If the
//! result violates `max_i |⟨x_i, β⟩| ≤ y_∞`, β is scaled back onto the
//! feasible set and descent resumes with each coordinate step clipped to
//! the interval that keeps all `n` constraints satisfied. The clipped step is
//! the exact minimizer of the objective along that coordinate within the
//! feasible set, so every iterate stays feasible and the objective never
//! increases.

use nalgebra::{DMatrix, DVector};

use super::{Backend, FittedFunction, TrainingSubset};
use crate::error::{check_len, Error, Result};
use crate::linalg::{select_rows, solve_spd};

/// Sweep cap for each descent phase.
pub const MAX_SWEEPS: usize = 100_000;
const KKT_TOL: f64 = 1e-7;
/// Stop the constrained phase once no coordinate moves the fit by more than
/// this amount (in normalized prediction units).
const STEP_TOL: f64 = 1e-11;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LassoSpec {
    pub lambda: f64,
    pub y_inf: f64,
    pub x_inf: f64,
}

impl LassoSpec {
    pub fn new(lambda: f64, y_inf: f64, x_inf: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda = {lambda} must be finite and nonnegative")));
        }
        if !(y_inf > 0.0 && y_inf.is_finite()) {
            return Err(Error::InvalidInput(format!("y_inf = {y_inf} must be positive")));
        }
        if !(x_inf >= 0.0 && x_inf.is_finite()) {
            return Err(Error::InvalidInput(format!("x_inf = {x_inf} must be finite and nonnegative")));
        }
        Ok(Self { lambda, y_inf, x_inf })
    }

    fn check_against(&self, x: &DMatrix<f64>) -> Result<()> {
        let xmax = x.amax();
        if xmax > self.x_inf * (1.0 + 1e-12) {
            return Err(Error::InvalidInput(format!("x_inf = {} is below max |x_ij| = {xmax}", self.x_inf)));
        }
        Ok(())
    }
}

/// Constrained Lasso output with solver diagnostics.
#[derive(Clone, Debug)]
pub struct LassoFit {
    pub fitted: FittedFunction,
    pub coefficients: Vec<f64>,
    /// Objective after every sweep, both phases concatenated.
    pub objective_trace: Vec<f64>,
    /// KKT residual of the unconstrained problem at the returned iterate.
    pub kkt_residual: f64,
    /// Whether the side constraint had to be enforced.
    pub constraint_active: bool,
    /// Position in `objective_trace` of the rescaled iterate that starts the
    /// constrained phase. The trace is non-increasing before and from it.
    pub rescaled_at: Option<usize>,
    pub sweeps: usize,
}

impl LassoFit {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("at least one sweep")
    }
}

fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

struct Problem {
    xs: DMatrix<f64>,
    ys: Vec<f64>,
    /// `n_R⁻¹ Σ_S x_ij²`.
    col_sq: Vec<f64>,
    scale: f64,
    lambda: f64,
}

impl Problem {
    fn objective(&self, resid: &[f64], beta: &[f64]) -> f64 {
        let ss: f64 = resid.iter().map(|r| r * r).sum();
        0.5 * self.scale * ss + self.lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// `n_R⁻¹ Σ_S x_ij r_i`.
    fn corr(&self, j: usize, resid: &[f64]) -> f64 {
        self.xs.column(j).iter().zip(resid).map(|(a, r)| a * r).sum::<f64>() * self.scale
    }

    fn kkt(&self, resid: &[f64], beta: &[f64]) -> f64 {
        (0..beta.len())
            .map(|j| {
                let g = -self.corr(j, resid);
                if beta[j] != 0.0 {
                    (g + self.lambda * beta[j].signum()).abs()
                } else {
                    (g.abs() - self.lambda).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }

    fn residuals(&self, beta: &[f64]) -> Vec<f64> {
        let b = DVector::from_column_slice(beta);
        let fit = &self.xs * b;
        self.ys.iter().zip(fit.iter()).map(|(y, f)| y - f).collect()
    }
}

/// Fits `argmin (2n_R)⁻¹ Σ_S (⟨x_i,β⟩ − y_i)² + λ‖β‖₁` subject to
/// `max_i |⟨x_i, β⟩| ≤ y_∞` over all rows of `x`, with `n_R = π_R·n`.
pub fn fit_lasso_constrained(
    x: &DMatrix<f64>,
    y: &[f64],
    subset: &TrainingSubset,
    spec: &LassoSpec,
) -> Result<LassoFit> {
    check_len("y", x.nrows(), y.len())?;
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    spec.check_against(x)?;
    let (n, p) = x.shape();
    let n_r = subset.inclusion_prob() * n as f64;
    let xs = select_rows(x, subset.indices());
    let scale = 1.0 / n_r;
    let col_sq = (0..p).map(|j| xs.column(j).norm_squared() * scale).collect();
    let prob = Problem { ys: subset.indices().iter().map(|&i| y[i]).collect(), xs, col_sq, scale, lambda: spec.lambda };

    let mut beta = vec![0.0; p];
    let mut resid = prob.ys.clone();
    let mut trace = Vec::new();
    let mut sweeps = 0;

    // Phase 1: plain coordinate descent.
    loop {
        for j in 0..p {
            let a = prob.col_sq[j];
            if a == 0.0 {
                continue;
            }
            let rho = prob.corr(j, &resid) + a * beta[j];
            let new = soft(rho, prob.lambda) / a;
            let step = new - beta[j];
            if step != 0.0 {
                for (r, xv) in resid.iter_mut().zip(prob.xs.column(j).iter()) {
                    *r -= step * xv;
                }
                beta[j] = new;
            }
        }
        sweeps += 1;
        trace.push(prob.objective(&resid, &beta));
        if sweeps % 10 == 0 || sweeps == 1 {
            // Refresh residuals periodically against drift.
            resid = prob.residuals(&beta);
        }
        if prob.kkt(&resid, &beta) <= KKT_TOL {
            break;
        }
        if sweeps >= MAX_SWEEPS {
            return Err(Error::NonConvergence { iterations: sweeps, objective: *trace.last().unwrap() });
        }
    }

    // Fitted values at every unit, for the side constraint.
    let mut fit_all: Vec<f64> = (x * DVector::from_column_slice(&beta)).as_slice().to_vec();
    let sup = fit_all.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let constraint_active = sup > spec.y_inf;
    let mut rescaled_at = None;

    if constraint_active {
        let t = spec.y_inf / sup * (1.0 - 4.0 * f64::EPSILON);
        for b in beta.iter_mut() {
            *b *= t;
        }
        for f in fit_all.iter_mut() {
            *f *= t;
        }
        resid = prob.residuals(&beta);
        rescaled_at = Some(trace.len());
        trace.push(prob.objective(&resid, &beta));

        let phase2_start = sweeps;
        loop {
            let mut max_move = 0.0f64;
            for j in 0..p {
                let a = prob.col_sq[j];
                if a == 0.0 {
                    continue;
                }
                let rho = prob.corr(j, &resid) + a * beta[j];
                let target = soft(rho, prob.lambda) / a;
                let (lo, hi) = feasible_step_range(x, j, &fit_all, spec.y_inf);
                let step = (target - beta[j]).clamp(lo, hi);
                if step != 0.0 {
                    for (r, xv) in resid.iter_mut().zip(prob.xs.column(j).iter()) {
                        *r -= step * xv;
                    }
                    for (f, xv) in fit_all.iter_mut().zip(x.column(j).iter()) {
                        *f += step * xv;
                    }
                    beta[j] += step;
                    max_move = max_move.max(step.abs() * a.sqrt());
                }
            }
            sweeps += 1;
            trace.push(prob.objective(&resid, &beta));
            if max_move <= STEP_TOL {
                break;
            }
            if sweeps - phase2_start >= MAX_SWEEPS {
                return Err(Error::NonConvergence { iterations: sweeps, objective: *trace.last().unwrap() });
            }
        }
        // Rounding in the running fit can leave a violation of a few ulps.
        let exact: Vec<f64> = (x * DVector::from_column_slice(&beta)).as_slice().to_vec();
        let sup = exact.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if sup > spec.y_inf {
            let t = spec.y_inf / sup * (1.0 - 4.0 * f64::EPSILON);
            for b in beta.iter_mut() {
                *b *= t;
            }
            resid = prob.residuals(&beta);
            trace.push(prob.objective(&resid, &beta));
        }
    }

    let kkt_residual = prob.kkt(&resid, &beta);
    let pred = (x * DVector::from_column_slice(&beta)).as_slice().to_vec();
    let fitted = FittedFunction::trained(pred, y, subset, Backend::Lasso, Some(beta.clone()))?;
    Ok(LassoFit { fitted, coefficients: beta, objective_trace: trace, kkt_residual, constraint_active, rescaled_at, sweeps })
}

/// Range of steps `s` for coordinate `j` keeping `|fit_i + s·x_ij| ≤ y_inf`
/// for every unit. Contains 0 whenever the current fit is feasible.
fn feasible_step_range(x: &DMatrix<f64>, j: usize, fit: &[f64], y_inf: f64) -> (f64, f64) {
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (&f, &a) in fit.iter().zip(x.column(j).iter()) {
        if a == 0.0 {
            continue;
        }
        let (l, h) = if a > 0.0 {
            ((-y_inf - f) / a, (y_inf - f) / a)
        } else {
            ((y_inf - f) / a, (-y_inf - f) / a)
        };
        lo = lo.max(l);
        hi = hi.min(h);
    }
    (lo.min(0.0), hi.max(0.0))
}

/// Data-driven regularization level.
///
/// The noise term `2 n_S⁻¹ ‖X_Sᵀ(y_S − X_S β̃)‖_∞` uses a pilot ridge fit β̃
/// on the training subset (ridge weight `n_S · 1e-3`) as a stand-in for the
/// unobservable population residual; the second term is
/// `16 x_∞ y_∞ sqrt(log(d/δ) / (π_R n))`.
pub fn default_lambda(
    x: &DMatrix<f64>,
    y: &[f64],
    subset: &TrainingSubset,
    x_inf: f64,
    y_inf: f64,
    delta: f64,
) -> Result<f64> {
    check_len("y", x.nrows(), y.len())?;
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    let (n, d) = x.shape();
    let m = subset.len() as f64;
    let xs = select_rows(x, subset.indices());
    let ys = DVector::from_iterator(subset.len(), subset.indices().iter().map(|&i| y[i]));
    let mut gram = xs.tr_mul(&xs);
    for k in 0..d {
        gram[(k, k)] += m * 1e-3;
    }
    let beta = solve_spd(gram, &xs.tr_mul(&ys), "ridge Gram matrix")?;
    let r = &ys - &xs * beta;
    let noise = 2.0 / m * xs.tr_mul(&r).amax();
    let tail = 16.0 * x_inf * y_inf * ((d as f64 / delta).ln().max(0.0) / (subset.inclusion_prob() * n as f64)).sqrt();
    Ok(noise + tail)
}

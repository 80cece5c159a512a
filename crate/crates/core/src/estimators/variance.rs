//! Exact variance formulas (diagnostic, need both potentials or residuals)
//! and plug-in variance estimators built from observed data.

use crate::decorrelation::{DecorrelationProbs, QuadrupleDraw};
use crate::error::{check_len, check_open_unit, Error, Result};
use crate::linalg::{inner_n, norm_n};
use crate::normal::two_sided_z;
use crate::population::{FinitePopulation, ResidualSet};
use crate::regressors::FittedFunction;

use super::negate;

/// `n⁻¹ Σ {(1−π)/π a² + π/(1−π) b² + 2ab}` for `π = pi`.
fn neyman_form(a: &[f64], b: &[f64], pi: f64) -> f64 {
    let na = norm_n(a).powi(2);
    let nb = norm_n(b).powi(2);
    (1.0 - pi) / pi * na + pi / (1.0 - pi) * nb + 2.0 * inner_n(a, b)
}

/// `n · Var(τ̂_DIM)` under Bernoulli(π_T) assignment.
pub fn dim_variance_true(pop: &FinitePopulation, pi_t: f64) -> Result<f64> {
    check_open_unit("pi_T", pi_t)?;
    Ok(neyman_form(pop.y1(), pop.y0(), pi_t))
}

/// `n · Var(τ̂_adj.oracle)`, the same form applied to the residuals.
pub fn adj_oracle_variance(resid: &ResidualSet, pi_t: f64) -> Result<f64> {
    check_open_unit("pi_T", pi_t)?;
    Ok(neyman_form(&resid.delta1, &resid.delta0, pi_t))
}

/// `n · Var(τ̂_dc.oracle)`:
/// `(1−π_M)/π_M ‖Δ(1)‖ₙ² + (1−π_M̄)/π_M̄ ‖Δ(0)‖ₙ² + 2⟨Δ(1), Δ(0)⟩ₙ`.
pub fn dc_oracle_variance(resid: &ResidualSet, probs: &DecorrelationProbs) -> f64 {
    dc_form(&resid.delta1, &resid.delta0, probs.pi_m(), probs.pi_mbar())
}

fn dc_form(d1: &[f64], d0: &[f64], pm: f64, pmb: f64) -> f64 {
    (1.0 - pm) / pm * norm_n(d1).powi(2) + (1.0 - pmb) / pmb * norm_n(d0).powi(2) + 2.0 * inner_n(d1, d0)
}

/// Asymptotic variance σ²ₙ of the decorrelated estimator; coincides with
/// [`dc_oracle_variance`].
pub fn sigma2_n(resid: &ResidualSet, probs: &DecorrelationProbs) -> f64 {
    dc_oracle_variance(resid, probs)
}

/// Rescaled MSE gap between the decorrelated and classical oracles:
/// `π_R(1−π_M)/(π_M π_T) ‖Δ(1)‖ₙ² + π_R̄(1−π_M̄)/(π_M̄ (1−π_T)) ‖Δ(0)‖ₙ²`.
pub fn delta_mse(resid: &ResidualSet, probs: &DecorrelationProbs) -> f64 {
    let (pt, pr, pm, prb, pmb) = (probs.pi_t(), probs.pi_r(), probs.pi_m(), probs.pi_rbar(), probs.pi_mbar());
    pr * (1.0 - pm) / (pm * pt) * norm_n(&resid.delta1).powi(2)
        + prb * (1.0 - pmb) / (pmb * (1.0 - pt)) * norm_n(&resid.delta0).powi(2)
}

/// Identifiable upper bound `n⁻¹ Σ {Δ_i(1)²/π_M + Δ_i(0)²/π_M̄}` on σ²ₙ.
pub fn v_upper(resid: &ResidualSet, probs: &DecorrelationProbs) -> f64 {
    norm_n(&resid.delta1).powi(2) / probs.pi_m() + norm_n(&resid.delta0).powi(2) / probs.pi_mbar()
}

/// `(n p₁²)⁻¹ Σ (y − f₁)² w₁ + (n p₀²)⁻¹ Σ (y − f₀)² w₀`.
fn plugin(y: &[f64], w1: &[bool], p1: f64, f1: &[f64], w0: &[bool], p0: f64, f0: &[f64]) -> f64 {
    let (mut a, mut b) = (0.0, 0.0);
    for i in 0..y.len() {
        if w1[i] {
            a += (y[i] - f1[i]).powi(2);
        }
        if w0[i] {
            b += (y[i] - f0[i]).powi(2);
        }
    }
    let n = y.len() as f64;
    a / (n * p1 * p1) + b / (n * p0 * p0)
}

/// Variance estimate for the decorrelated estimator, computed on the
/// averaging subsets `M`, `M̄`.
pub fn v_hat(
    y: &[f64],
    quad: &QuadrupleDraw,
    f_r: &FittedFunction,
    f_rbar: &FittedFunction,
    probs: &DecorrelationProbs,
) -> Result<f64> {
    let n = y.len();
    check_len("quadruples", n, quad.len())?;
    check_len("f_R", n, f_r.len())?;
    check_len("f_Rbar", n, f_rbar.len())?;
    Ok(plugin(y, &quad.m, probs.pi_m(), f_r.predictions(), &quad.mbar, probs.pi_mbar(), f_rbar.predictions()))
}

/// Plug-in variance for the difference in means.
pub fn dim_variance_plugin(y: &[f64], t: &[bool], pi_t: f64) -> Result<f64> {
    check_open_unit("pi_T", pi_t)?;
    check_len("t", y.len(), t.len())?;
    let zero = vec![0.0; y.len()];
    Ok(plugin(y, t, pi_t, &zero, &negate(t), 1.0 - pi_t, &zero))
}

/// Plug-in variance for classical regression adjustment.
pub fn adj_variance_plugin(
    y: &[f64],
    t: &[bool],
    f1: &FittedFunction,
    f0: &FittedFunction,
    pi_t: f64,
) -> Result<f64> {
    check_open_unit("pi_T", pi_t)?;
    let n = y.len();
    check_len("t", n, t.len())?;
    check_len("f1", n, f1.len())?;
    check_len("f0", n, f0.len())?;
    Ok(plugin(y, t, pi_t, f1.predictions(), &negate(t), 1.0 - pi_t, f0.predictions()))
}

/// Two-sided interval `point ∓ z_α sqrt(v_hat / n)`.
pub fn confidence_interval(point: f64, v_hat: f64, n: usize, alpha: f64) -> Result<(f64, f64)> {
    if !(v_hat >= 0.0) || !v_hat.is_finite() {
        return Err(Error::InvalidInput(format!("variance estimate {v_hat} must be finite and nonnegative")));
    }
    if n == 0 {
        return Err(Error::InvalidInput("interval needs n >= 1".into()));
    }
    let half = two_sided_z(alpha)? * v_hat.sqrt() / (n as f64).sqrt();
    Ok((point - half, point + half))
}

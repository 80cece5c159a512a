//! Theory-side quantities: leverage and residual statistics, evaluable forms
//! of the error bounds (all with universal constants set to one, so only
//! their scaling is meaningful), the localized-entropy fixed point and a
//! restricted-eigenvalue probe.

mod critical_radius;
mod re_probe;

pub use critical_radius::{critical_radius, CriticalRadius, EntropySpec, R_MAX, R_MIN};
pub use re_probe::{re_constant_probe, ReProbe, MAX_PROBE_DIM};

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::decorrelation::{default_fit_prob, DecorrelationProbs};
use crate::error::{check_open_unit, Error, Result};
use crate::linalg::{min_norm_lstsq, norm_n};
use crate::population::{FinitePopulation, FunctionClassSpec, ObservedData, ResidualSet};

/// `κ²ₙ = max_i ‖x_i‖₂² / n`.
pub fn max_leverage(x: &DMatrix<f64>) -> Result<f64> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::InvalidInput("leverage of an empty matrix".into()));
    }
    let best = x.row_iter().map(|r| r.norm_squared()).fold(0.0, f64::max);
    Ok(best / x.nrows() as f64)
}

/// `μₙ = Δ_∞² / (n Δ̄₂²)`, in `[1/n, 1]`.
pub fn residual_uniformity(resid: &ResidualSet) -> Result<f64> {
    let n = resid.n();
    let sup = resid.delta1.iter().chain(&resid.delta0).fold(0.0f64, |m, v| m.max(v.abs()));
    let l2 = norm_n(&resid.delta1).max(norm_n(&resid.delta0));
    if n == 0 || l2 == 0.0 {
        return Err(Error::InvalidInput("residual uniformity is undefined for all-zero residuals".into()));
    }
    let mu = sup * sup / (n as f64 * l2 * l2);
    // Guard the documented range against last-bit rounding.
    Ok(mu.clamp(1.0 / n as f64, 1.0))
}

/// Function-estimation error `(π, δ) ↦ ε(π, δ)`.
#[derive(Clone)]
pub enum ErrorFunction {
    Callable(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
    /// Values at increasing fitting probabilities, linearly interpolated in
    /// `π` and held constant outside the table. `δ` is ignored.
    Tabulated { pi: Vec<f64>, value: Vec<f64> },
}

impl std::fmt::Debug for ErrorFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Callable(_) => write!(f, "Callable(..)"),
            Self::Tabulated { pi, value } => f.debug_struct("Tabulated").field("pi", pi).field("value", value).finish(),
        }
    }
}

impl ErrorFunction {
    pub fn constant(c: f64) -> Self {
        Self::Callable(Arc::new(move |_, _| c))
    }

    pub fn tabulated(pi: Vec<f64>, value: Vec<f64>) -> Result<Self> {
        if pi.is_empty() || pi.len() != value.len() {
            return Err(Error::InvalidInput("tabulated error curve needs matching, nonempty columns".into()));
        }
        if pi.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("tabulated error curve needs strictly increasing π".into()));
        }
        if value.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput("tabulated error values must be finite and nonnegative".into()));
        }
        Ok(Self::Tabulated { pi, value })
    }

    pub fn eval(&self, pi: f64, delta: f64) -> Result<f64> {
        let v = match self {
            Self::Callable(f) => f(pi, delta),
            Self::Tabulated { pi: xs, value } => {
                if pi <= xs[0] {
                    value[0]
                } else if pi >= xs[xs.len() - 1] {
                    value[value.len() - 1]
                } else {
                    let k = xs.partition_point(|&x| x <= pi) - 1;
                    let w = (pi - xs[k]) / (xs[k + 1] - xs[k]);
                    value[k] * (1.0 - w) + value[k + 1] * w
                }
            }
        };
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::InvalidInput(format!("error function returned {v} at π = {pi}")));
        }
        Ok(v)
    }
}

/// Inputs of the main non-asymptotic bound.
#[derive(Clone, Debug)]
pub struct BoundInputs {
    pub eps1: ErrorFunction,
    pub eps0: ErrorFunction,
    pub delta: f64,
    pub probs: DecorrelationProbs,
}

/// `{e₁/π_M + e₀/π_M̄}·sqrt(log(4/δ))`; the formula is meaningful for any
/// `δ ∈ (0, 4)`.
pub fn deviation_bound_formula(e1: f64, e0: f64, pi_m: f64, pi_mbar: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 4.0) {
        return Err(Error::InvalidInput(format!("δ = {delta} must lie in (0, 4)")));
    }
    check_open_unit("pi_M", pi_m)?;
    check_open_unit("pi_Mbar", pi_mbar)?;
    Ok((e1 / pi_m + e0 / pi_mbar) * (4.0 / delta).ln().sqrt())
}

/// High-probability bound on `sqrt(n)|τ̂_dc − τ̂_dc.oracle|`, evaluating the
/// error functions at `(π_R, δ/4)` and `(π_R̄, δ/4)`.
pub fn deviation_bound(inputs: &BoundInputs) -> Result<f64> {
    check_open_unit("delta", inputs.delta)?;
    let p = &inputs.probs;
    let e1 = inputs.eps1.eval(p.pi_r(), inputs.delta / 4.0)?;
    let e0 = inputs.eps0.eval(p.pi_rbar(), inputs.delta / 4.0)?;
    deviation_bound_formula(e1, e0, p.pi_m(), p.pi_mbar(), inputs.delta)
}

/// Least-squares bound `sqrt(κ² Δ̄₂² log d / π_R)·log(1/δ)`.
pub fn ols_bound(kappa2: f64, delta2bar: f64, d: usize, pi_r: f64, delta: f64) -> Result<f64> {
    if d < 2 {
        return Err(Error::InvalidInput(format!("least-squares bound needs d >= 2, got {d}")));
    }
    check_open_unit("pi_R", pi_r)?;
    check_open_unit("delta", delta)?;
    if !(kappa2 >= 0.0 && delta2bar >= 0.0) {
        return Err(Error::InvalidInput("κ² and Δ̄₂ must be nonnegative".into()));
    }
    Ok((kappa2 * delta2bar * delta2bar * (d as f64).ln() / pi_r).sqrt() * (1.0 / delta).ln())
}

/// Parameters of the sparse-regression bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LassoBoundInputs {
    pub x_inf: f64,
    pub y_inf: f64,
    pub k: usize,
    pub d: usize,
    pub gamma: f64,
    pub n: usize,
    pub pi_r: f64,
    pub lambda: f64,
    pub delta: f64,
}

/// `{x_∞y_∞/π_R · sqrt(k log(d/δ)/(γ n)) + λ sqrt(k/γ)}·sqrt(log(1/δ))`.
pub fn lasso_bound(p: &LassoBoundInputs) -> Result<f64> {
    if !(p.gamma > 0.0) {
        return Err(Error::InvalidInput(format!("RE constant γ = {} must be positive", p.gamma)));
    }
    check_open_unit("pi_R", p.pi_r)?;
    check_open_unit("delta", p.delta)?;
    if p.n == 0 || p.d == 0 {
        return Err(Error::InvalidInput("lasso bound needs n, d >= 1".into()));
    }
    let k = p.k as f64;
    let first = p.x_inf * p.y_inf / p.pi_r * (k * (p.d as f64 / p.delta).ln() / (p.gamma * p.n as f64)).sqrt();
    let second = p.lambda * (k / p.gamma).sqrt();
    Ok((first + second) * (1.0 / p.delta).ln().sqrt())
}

/// `‖Δ(1)‖ₙ sqrt(π_R) + ε₁(π_R, δ) + ‖Δ(0)‖ₙ sqrt(π_R̄) + ε₀(π_R̄, δ)`.
pub fn final_gap_bound(
    resid: &ResidualSet,
    probs: &DecorrelationProbs,
    eps1: &ErrorFunction,
    eps0: &ErrorFunction,
    delta: f64,
) -> Result<f64> {
    check_open_unit("delta", delta)?;
    Ok(norm_n(&resid.delta1) * probs.pi_r().sqrt()
        + eps1.eval(probs.pi_r(), delta)?
        + norm_n(&resid.delta0) * probs.pi_rbar().sqrt()
        + eps0.eval(probs.pi_rbar(), delta)?)
}

/// Minimizer of [`final_gap_bound`] over a common fitting probability
/// `π_R = π_R̄`, scanning `grid` log-spaced points in `(0, min(π_T, 1 − π_T))`
/// and refining around the best one by golden section.
pub fn minimize_final_gap(
    resid: &ResidualSet,
    pi_t: f64,
    eps1: &ErrorFunction,
    eps0: &ErrorFunction,
    delta: f64,
    grid: usize,
) -> Result<(f64, f64)> {
    check_open_unit("pi_T", pi_t)?;
    if grid < 3 {
        return Err(Error::InvalidInput("scan needs at least 3 grid points".into()));
    }
    let hi = pi_t.min(1.0 - pi_t) * (1.0 - 1e-9);
    let lo = hi * 1e-6;
    let eval = |p: f64| -> Result<f64> {
        let probs = DecorrelationProbs::from_fit_probs(pi_t, p, p)?;
        final_gap_bound(resid, &probs, eps1, eps0, delta)
    };
    let pts: Vec<f64> = (0..grid).map(|k| lo * (hi / lo).powf(k as f64 / (grid - 1) as f64)).collect();
    let mut best = (0usize, f64::INFINITY);
    for (k, &p) in pts.iter().enumerate() {
        let v = eval(p)?;
        if v < best.1 {
            best = (k, v);
        }
    }
    let (mut a, mut b) = (pts[best.0.saturating_sub(1)].ln(), pts[(best.0 + 1).min(grid - 1)].ln());
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if eval(c.exp())? <= eval(d.exp())? {
            b = d;
        } else {
            a = c;
        }
    }
    let p = ((a + b) / 2.0).exp();
    let v = eval(p)?;
    Ok(if v <= best.1 { (p, v) } else { (pts[best.0], best.1) })
}

/// Diagnostics document printed by the command-line front end.
#[derive(Clone, Debug, Serialize)]
pub struct DiagnoseReport {
    pub n: usize,
    pub d: usize,
    pub kappa2: f64,
    pub mu_n: Option<f64>,
    /// Whether residuals came from true potentials or from arm-wise fits.
    pub residual_source: &'static str,
    pub bounds: BoundSummary,
    pub critical_radius: Option<CriticalRadius>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundSummary {
    pub pi_t: f64,
    pub pi_r: f64,
    pub delta: f64,
    pub delta2bar: f64,
    pub ols: Option<f64>,
    pub deviation_bound_with_ols: Option<f64>,
    pub final_gap_with_ols: Option<f64>,
    pub best_pi_r_for_ols: Option<f64>,
}

/// Settings for [`diagnose`].
#[derive(Clone, Debug)]
pub struct DiagnoseOptions {
    pub pi_t: f64,
    /// Fitting probability; [`default_fit_prob`] when absent.
    pub pi_r: Option<f64>,
    pub delta: f64,
    /// Entropy model for the critical radius, skipped when absent.
    pub entropy: Option<EntropySpec>,
}

impl Default for DiagnoseOptions {
    fn default() -> Self {
        Self { pi_t: 0.5, pi_r: None, delta: 0.05, entropy: None }
    }
}

/// Residuals of the population linear projection (needs both potentials).
pub fn population_residuals(pop: &FinitePopulation) -> Result<ResidualSet> {
    let (f1, f0) = pop.oracle_projection(&FunctionClassSpec::Linear)?;
    pop.residuals(&f1, &f0)
}

/// Residual proxies from observed data: arm-wise least-squares residuals on
/// each unit's own arm, divided by the square root of the arm probability,
/// and zero elsewhere. Their squared normalized norms are unbiased for the
/// squared norms of residuals from fixed functions.
pub fn observed_residuals(obs: &ObservedData, pi_t: f64) -> Result<ResidualSet> {
    check_open_unit("pi_T", pi_t)?;
    let n = obs.n();
    let mut out = [vec![0.0; n], vec![0.0; n]];
    for (arm, (slot, p)) in out.iter_mut().zip([pi_t, 1.0 - pi_t]).enumerate() {
        let rows: Vec<usize> = (0..n).filter(|&i| obs.t[i] == (arm == 0)).collect();
        let beta = min_norm_lstsq(&obs.x, &rows, &obs.y)?;
        let scale = 1.0 / p.sqrt();
        for &i in &rows {
            slot[i] = (obs.y[i] - obs.x.row(i).dot(&beta.transpose())) * scale;
        }
    }
    let [d1, d0] = out;
    ResidualSet::new(d1, d0)
}

/// Leverage, residual uniformity, the least-squares error bound plugged into
/// the main bound and the final-gap decomposition, and optionally the
/// critical radius of an entropy model.
pub fn diagnose(
    x: &DMatrix<f64>,
    resid: &ResidualSet,
    residual_source: &'static str,
    opts: &DiagnoseOptions,
) -> Result<DiagnoseReport> {
    let (n, d) = x.shape();
    if resid.n() != n {
        return Err(Error::LengthMismatch { what: "residuals", expected: n, got: resid.n() });
    }
    check_open_unit("pi_T", opts.pi_t)?;
    check_open_unit("delta", opts.delta)?;
    let kappa2 = max_leverage(x)?;
    let mu_n = residual_uniformity(resid).ok();
    let delta2bar = norm_n(&resid.delta1).max(norm_n(&resid.delta0));
    let pi_r = opts.pi_r.unwrap_or_else(|| default_fit_prob(n, d, opts.pi_t));
    let probs = DecorrelationProbs::from_fit_probs(opts.pi_t, pi_r, pi_r)?;

    let (mut ols, mut deviation_bound_with_ols, mut final_gap_with_ols, mut best_pi_r_for_ols) = (None, None, None, None);
    if d >= 2 {
        let eps = ErrorFunction::Callable(Arc::new(move |p, dl| {
            ols_bound(kappa2, delta2bar, d, p, dl).unwrap_or(f64::INFINITY)
        }));
        ols = Some(ols_bound(kappa2, delta2bar, d, pi_r, opts.delta)?);
        let inputs = BoundInputs { eps1: eps.clone(), eps0: eps.clone(), delta: opts.delta, probs };
        deviation_bound_with_ols = Some(deviation_bound(&inputs)?);
        final_gap_with_ols = Some(final_gap_bound(resid, &probs, &eps, &eps, opts.delta)?);
        best_pi_r_for_ols = Some(minimize_final_gap(resid, opts.pi_t, &eps, &eps, opts.delta, 200)?.0);
    }
    let critical_radius = match &opts.entropy {
        Some(e) => Some(critical_radius(e, n, pi_r, opts.delta)?),
        None => None,
    };
    Ok(DiagnoseReport {
        n,
        d,
        kappa2,
        mu_n,
        residual_source,
        bounds: BoundSummary {
            pi_t: opts.pi_t,
            pi_r,
            delta: opts.delta,
            delta2bar,
            ols,
            deviation_bound_with_ols,
            final_gap_with_ols,
            best_pi_r_for_ols,
        },
        critical_radius,
    })
}

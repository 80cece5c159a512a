//! Ratio (Hájek) versions: every deterministic group size is replaced by the
//! realized count.

use serde::{Deserialize, Serialize};

use super::{adjusted_difference, check_trained_within, negate, plain_difference};
use crate::decorrelation::{DecorrelationProbs, QuadrupleDraw};
use crate::error::{check_len, check_open_unit, Error, Result};
use crate::linalg::{inner_n, norm_n};
use crate::population::{FinitePopulation, ResidualSet};
use crate::regressors::FittedFunction;

/// Realized group sizes `ñ₁ = Σ T_i`, `ñ₀ = n − ñ₁`, `ñ_M = Σ M_i`, `ñ_M̄ = Σ M̄_i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HajekCounts {
    pub n1: usize,
    pub n0: usize,
    pub n_m: usize,
    pub n_mbar: usize,
}

impl HajekCounts {
    pub fn from_quadruples(quad: &QuadrupleDraw) -> Self {
        let (n1, n0, n_m, n_mbar) = quad.counts();
        Self { n1, n0, n_m, n_mbar }
    }

    /// Counts for an assignment without a quadruple; the averaging counts
    /// are left at zero.
    pub fn from_assignment(t: &[bool]) -> Self {
        let n1 = t.iter().filter(|&&v| v).count();
        Self { n1, n0: t.len() - n1, n_m: 0, n_mbar: 0 }
    }

    fn arms(&self) -> Result<(f64, f64)> {
        if self.n1 == 0 {
            return Err(Error::DegenerateAssignment("n1"));
        }
        if self.n0 == 0 {
            return Err(Error::DegenerateAssignment("n0"));
        }
        Ok((self.n1 as f64, self.n0 as f64))
    }

    fn averaging(&self) -> Result<(f64, f64)> {
        if self.n_m == 0 {
            return Err(Error::DegenerateAssignment("nM"));
        }
        if self.n_mbar == 0 {
            return Err(Error::DegenerateAssignment("nMbar"));
        }
        Ok((self.n_m as f64, self.n_mbar as f64))
    }
}

pub fn dim_hajek(y: &[f64], t: &[bool]) -> Result<f64> {
    check_len("t", y.len(), t.len())?;
    let (n1, n0) = HajekCounts::from_assignment(t).arms()?;
    Ok(plain_difference(y, t, n1, &negate(t), n0))
}

pub fn adj_hajek(y: &[f64], t: &[bool], f1: &FittedFunction, f0: &FittedFunction) -> Result<f64> {
    let n = y.len();
    check_len("t", n, t.len())?;
    check_len("f1", n, f1.len())?;
    check_len("f0", n, f0.len())?;
    let c = negate(t);
    check_trained_within(f1, t, "treated-arm fit")?;
    check_trained_within(f0, &c, "control-arm fit")?;
    let (n1, n0) = HajekCounts::from_assignment(t).arms()?;
    Ok(adjusted_difference(y, t, n1, f1.predictions(), &c, n0, f0.predictions()))
}

pub fn adj_oracle_hajek(pop: &FinitePopulation, t: &[bool], f1star: &[f64], f0star: &[f64]) -> Result<f64> {
    check_len("f1star", pop.n(), f1star.len())?;
    check_len("f0star", pop.n(), f0star.len())?;
    let y = pop.observe(t)?;
    let (n1, n0) = HajekCounts::from_assignment(t).arms()?;
    Ok(adjusted_difference(&y, t, n1, f1star, &negate(t), n0, f0star))
}

pub fn dc_hajek(y: &[f64], quad: &QuadrupleDraw, f_r: &FittedFunction, f_rbar: &FittedFunction) -> Result<f64> {
    let n = y.len();
    check_len("quadruples", n, quad.len())?;
    check_len("f_R", n, f_r.len())?;
    check_len("f_Rbar", n, f_rbar.len())?;
    check_trained_within(f_r, &quad.r, "R-subset fit")?;
    check_trained_within(f_rbar, &quad.rbar, "Rbar-subset fit")?;
    let (nm, nmb) = HajekCounts::from_quadruples(quad).averaging()?;
    Ok(adjusted_difference(y, &quad.m, nm, f_r.predictions(), &quad.mbar, nmb, f_rbar.predictions()))
}

pub fn dc_oracle_hajek(pop: &FinitePopulation, quad: &QuadrupleDraw, f1star: &[f64], f0star: &[f64]) -> Result<f64> {
    check_len("quadruples", pop.n(), quad.len())?;
    check_len("f1star", pop.n(), f1star.len())?;
    check_len("f0star", pop.n(), f0star.len())?;
    let y = pop.observe(&quad.t)?;
    let (nm, nmb) = HajekCounts::from_quadruples(quad).averaging()?;
    Ok(adjusted_difference(&y, &quad.m, nm, f1star, &quad.mbar, nmb, f0star))
}

/// Feasible ratio-estimator variance: within-group recentered squared
/// residuals over `ñ_⋆²/n`, for the groups `w1` and `w0`.
pub fn hajek_variance_plugin(y: &[f64], w1: &[bool], f1: &[f64], w0: &[bool], f0: &[f64]) -> Result<f64> {
    let n = y.len();
    for (what, len) in [("w1", w1.len()), ("f1", f1.len()), ("w0", w0.len()), ("f0", f0.len())] {
        check_len(what, n, len)?;
    }
    let group = |w: &[bool], f: &[f64], tag: &'static str| -> Result<f64> {
        let r: Vec<f64> = (0..n).filter(|&i| w[i]).map(|i| y[i] - f[i]).collect();
        if r.is_empty() {
            return Err(Error::DegenerateAssignment(tag));
        }
        let m = r.len() as f64;
        let mean = r.iter().sum::<f64>() / m;
        let ss: f64 = r.iter().map(|v| (v - mean).powi(2)).sum();
        Ok(ss * n as f64 / (m * m))
    };
    Ok(group(w1, f1, "n1")? + group(w0, f0, "n0")?)
}

fn centered(v: &[f64]) -> Vec<f64> {
    let m = v.iter().sum::<f64>() / v.len().max(1) as f64;
    v.iter().map(|x| x - m).collect()
}

fn form(a: &[f64], b: &[f64], wa: f64, wb: f64) -> f64 {
    let (a, b) = (centered(a), centered(b));
    wa * norm_n(&a).powi(2) + wb * norm_n(&b).powi(2) + 2.0 * inner_n(&a, &b)
}

/// Asymptotic variance of the Hájek difference in means (recentered outcomes).
pub fn v_h_dim(pop: &FinitePopulation, pi_t: f64) -> Result<f64> {
    check_open_unit("pi_T", pi_t)?;
    Ok(form(pop.y1(), pop.y0(), (1.0 - pi_t) / pi_t, pi_t / (1.0 - pi_t)))
}

/// Asymptotic variance of the Hájek classical oracle (recentered residuals).
pub fn v_h_adj(resid: &ResidualSet, pi_t: f64) -> Result<f64> {
    check_open_unit("pi_T", pi_t)?;
    Ok(form(&resid.delta1, &resid.delta0, (1.0 - pi_t) / pi_t, pi_t / (1.0 - pi_t)))
}

/// Asymptotic variance of the Hájek decorrelated oracle (recentered residuals).
pub fn v_h_dc(resid: &ResidualSet, probs: &DecorrelationProbs) -> f64 {
    let (pm, pmb) = (probs.pi_m(), probs.pi_mbar());
    form(&resid.delta1, &resid.delta0, (1.0 - pm) / pm, (1.0 - pmb) / pmb)
}

//! Point estimators of the average treatment effect.
//!
//! All non-Hájek estimators divide by the deterministic expected group sizes
//! (`n·π_T`, `n·π_M`, ...). Feasible estimators take the observed outcome
//! vector and the assignment, never a [`FinitePopulation`]; oracle
//! estimators read the population directly and exist for diagnostics.

mod hajek;
mod report;
mod variance;

pub use hajek::{
    adj_hajek, adj_oracle_hajek, dc_hajek, dc_oracle_hajek, dim_hajek, hajek_variance_plugin, v_h_adj, v_h_dc, v_h_dim, HajekCounts,
};
pub use report::{EstimateReport, ExternalBaseline, Method};
pub use variance::{
    adj_oracle_variance, adj_variance_plugin, confidence_interval, delta_mse, dim_variance_plugin, dim_variance_true,
    sigma2_n, v_hat, v_upper, dc_oracle_variance,
};

use crate::decorrelation::{DecorrelationProbs, QuadrupleDraw};
use crate::error::{check_len, check_open_unit, Error, Result};
use crate::population::FinitePopulation;
use crate::regressors::FittedFunction;

/// `Σ (y − f₁) w₁ / n₁ − Σ (y − f₀) w₀ / n₀ + n⁻¹ Σ (f₁ − f₀)`.
pub(crate) fn adjusted_difference(
    y: &[f64],
    w1: &[bool],
    n1: f64,
    f1: &[f64],
    w0: &[bool],
    n0: f64,
    f0: &[f64],
) -> f64 {
    let n = y.len() as f64;
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for i in 0..y.len() {
        if w1[i] {
            a += y[i] - f1[i];
        }
        if w0[i] {
            b += y[i] - f0[i];
        }
        c += f1[i] - f0[i];
    }
    a / n1 - b / n0 + c / n
}

/// `Σ y w₁ / n₁ − Σ y w₀ / n₀`.
pub(crate) fn plain_difference(y: &[f64], w1: &[bool], n1: f64, w0: &[bool], n0: f64) -> f64 {
    let (mut a, mut b) = (0.0, 0.0);
    for i in 0..y.len() {
        if w1[i] {
            a += y[i];
        }
        if w0[i] {
            b += y[i];
        }
    }
    a / n1 - b / n0
}

pub(crate) fn negate(t: &[bool]) -> Vec<bool> {
    t.iter().map(|&v| !v).collect()
}

fn check_fit(what: &'static str, f: &FittedFunction, n: usize) -> Result<()> {
    check_len(what, n, f.len())
}

/// Fails unless every training unit of `f` has `allowed[i]`.
fn check_trained_within(f: &FittedFunction, allowed: &[bool], what: &str) -> Result<()> {
    if let Some(idx) = f.training() {
        if let Some(&bad) = idx.iter().find(|&&i| i >= allowed.len() || !allowed[i]) {
            return Err(Error::InformationBarrier(format!(
                "{what} was trained on unit {bad}, which is outside its permitted subset"
            )));
        }
    }
    Ok(())
}

/// Difference in means with denominators `n·π_T` and `n·(1 − π_T)`.
pub fn dim(y: &[f64], t: &[bool], pi_t: f64) -> Result<f64> {
    check_open_unit("pi_T", pi_t)?;
    check_len("t", y.len(), t.len())?;
    let n = y.len() as f64;
    Ok(plain_difference(y, t, n * pi_t, &negate(t), n * (1.0 - pi_t)))
}

/// Classical regression adjustment. `f1` may only have been trained on
/// treated units and `f0` on controls.
pub fn adj(y: &[f64], t: &[bool], f1: &FittedFunction, f0: &FittedFunction, pi_t: f64) -> Result<f64> {
    check_open_unit("pi_T", pi_t)?;
    let n = y.len();
    check_len("t", n, t.len())?;
    check_fit("f1", f1, n)?;
    check_fit("f0", f0, n)?;
    let c = negate(t);
    check_trained_within(f1, t, "treated-arm fit")?;
    check_trained_within(f0, &c, "control-arm fit")?;
    let nf = n as f64;
    Ok(adjusted_difference(y, t, nf * pi_t, f1.predictions(), &c, nf * (1.0 - pi_t), f0.predictions()))
}

/// Regression adjustment with the population projections `f*`.
pub fn adj_oracle(pop: &FinitePopulation, t: &[bool], f1star: &[f64], f0star: &[f64], pi_t: f64) -> Result<f64> {
    check_open_unit("pi_T", pi_t)?;
    let n = pop.n();
    check_len("f1star", n, f1star.len())?;
    check_len("f0star", n, f0star.len())?;
    let y = pop.observe(t)?;
    let nf = n as f64;
    Ok(adjusted_difference(&y, t, nf * pi_t, f1star, &negate(t), nf * (1.0 - pi_t), f0star))
}

/// Decorrelated estimator. `f_r` may only have been trained on `{R = 1}`
/// and `f_rbar` on `{R̄ = 1}`; fits without a training record are taken as
/// fixed functions.
pub fn dc(
    y: &[f64],
    quad: &QuadrupleDraw,
    f_r: &FittedFunction,
    f_rbar: &FittedFunction,
    probs: &DecorrelationProbs,
) -> Result<f64> {
    let n = y.len();
    check_len("quadruples", n, quad.len())?;
    check_fit("f_R", f_r, n)?;
    check_fit("f_Rbar", f_rbar, n)?;
    check_trained_within(f_r, &quad.r, "R-subset fit")?;
    check_trained_within(f_rbar, &quad.rbar, "Rbar-subset fit")?;
    let nf = n as f64;
    Ok(adjusted_difference(
        y,
        &quad.m,
        nf * probs.pi_m(),
        f_r.predictions(),
        &quad.mbar,
        nf * probs.pi_mbar(),
        f_rbar.predictions(),
    ))
}

/// Decorrelated estimator with the population projections `f*`.
pub fn dc_oracle(
    pop: &FinitePopulation,
    quad: &QuadrupleDraw,
    f1star: &[f64],
    f0star: &[f64],
    probs: &DecorrelationProbs,
) -> Result<f64> {
    let n = pop.n();
    check_len("quadruples", n, quad.len())?;
    check_len("f1star", n, f1star.len())?;
    check_len("f0star", n, f0star.len())?;
    let y = pop.observe(&quad.t)?;
    let nf = n as f64;
    Ok(adjusted_difference(&y, &quad.m, nf * probs.pi_m(), f1star, &quad.mbar, nf * probs.pi_mbar(), f0star))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regressors::{fit_zero, interpolate_wrap, TrainingSubset};
    use nalgebra::DMatrix;

    #[test]
    fn dim_hand_example() {
        let y = [3.0, 1.0, 2.0, 0.0];
        let t = [true, true, false, false];
        assert_eq!(dim(&y, &t, 0.5).unwrap(), 1.0);
        assert_eq!(dim(&[5.0; 4], &t, 0.5).unwrap(), 0.0);
        assert!(dim(&y, &t, 1.0).is_err());
    }

    #[test]
    fn adj_with_zero_fit_is_dim() {
        let y = [3.0, 1.0, 2.0, 0.0, 7.5];
        let t = [true, false, true, false, true];
        let z = fit_zero(5);
        assert_eq!(adj(&y, &t, &z, &z, 0.6).unwrap(), dim(&y, &t, 0.6).unwrap());
    }

    #[test]
    fn adj_with_exact_potentials_is_ate() {
        let pop = FinitePopulation::new(
            DMatrix::zeros(4, 1),
            vec![1.0, 4.0, -2.0, 0.5],
            vec![0.0, 1.0, 1.0, 3.0],
            false,
        )
        .unwrap();
        let t = [true, false, false, true];
        let y = pop.observe(&t).unwrap();
        let f1 = FittedFunction::external(pop.y1().to_vec()).unwrap();
        let f0 = FittedFunction::external(pop.y0().to_vec()).unwrap();
        assert!((adj(&y, &t, &f1, &f0, 0.5).unwrap() - pop.ate()).abs() < 1e-15);
    }

    #[test]
    fn adj_with_interpolation_is_outcome_regression() {
        let y = [3.0, 1.0, 2.0, 0.0, 7.5, -1.0];
        let t = [true, false, true, false, true, false];
        let base1 = FittedFunction::external(vec![0.5; 6]).unwrap();
        let base0 = FittedFunction::external(vec![-0.25; 6]).unwrap();
        let s1 = TrainingSubset::from_mask(&t, 0.5).unwrap();
        let s0 = TrainingSubset::from_mask(&negate(&t), 0.5).unwrap();
        let f1 = interpolate_wrap(&base1, &y, &s1).unwrap();
        let f0 = interpolate_wrap(&base0, &y, &s0).unwrap();
        let want: f64 = (0..6).map(|i| f1.predictions()[i] - f0.predictions()[i]).sum::<f64>() / 6.0;
        assert!((adj(&y, &t, &f1, &f0, 0.5).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn adj_refuses_cross_arm_training() {
        let y = [1.0, 2.0, 3.0];
        let t = [true, false, true];
        let base = FittedFunction::external(vec![0.0; 3]).unwrap();
        let leaky = interpolate_wrap(&base, &y, &TrainingSubset::new(vec![1], 0.5, 3).unwrap()).unwrap();
        assert!(matches!(adj(&y, &t, &leaky, &fit_zero(3), 0.5), Err(Error::InformationBarrier(_))));
    }
}

//! Regression backends.
//!
//! Every backend fits on a [`TrainingSubset`] of the observed data and
//! predicts at all `n` units. The returned [`FittedFunction`] remembers which
//! units it was trained on; the decorrelated estimator uses that record to
//! refuse fits that peeked at the averaging subset.

mod lasso;
mod ols;
mod regressogram;

pub use lasso::{default_lambda, fit_lasso_constrained, LassoFit, LassoSpec, MAX_SWEEPS};
pub use ols::fit_ols_minnorm;
pub use regressogram::{bin_count, fit_regressogram, shrink_factor};
pub(crate) use regressogram::bin_of;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, check_open_unit, Error, Result};

/// Backend selector, as spelled in configuration files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Ols,
    Lasso,
    Regressogram,
    RegressogramInterp,
    Zero,
    /// Predictions handed in from outside (oracle targets, user fits).
    External,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::Ols => "ols",
            Backend::Lasso => "lasso",
            Backend::Regressogram => "regressogram",
            Backend::RegressogramInterp => "regressogram_interp",
            Backend::Zero => "zero",
            Backend::External => "external",
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ols" => Backend::Ols,
            "lasso" => Backend::Lasso,
            "regressogram" => Backend::Regressogram,
            "regressogram_interp" => Backend::RegressogramInterp,
            "zero" => Backend::Zero,
            other => return Err(Error::Config(format!("unknown backend `{other}`"))),
        })
    }
}

/// Indices of the units a backend may learn from, plus the probability with
/// which each unit lands in the subset.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSubset {
    indices: Vec<usize>,
    inclusion_prob: f64,
}

impl TrainingSubset {
    /// `indices` are sorted and deduplicated; each must be below `n`.
    pub fn new(mut indices: Vec<usize>, inclusion_prob: f64, n: usize) -> Result<Self> {
        check_open_unit("inclusion_prob", inclusion_prob)?;
        indices.sort_unstable();
        indices.dedup();
        if let Some(&last) = indices.last() {
            if last >= n {
                return Err(Error::InvalidInput(format!("training index {last} out of range for n = {n}")));
            }
        }
        Ok(Self { indices, inclusion_prob })
    }

    pub fn from_mask(mask: &[bool], inclusion_prob: f64) -> Result<Self> {
        let idx = mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect();
        Self::new(idx, inclusion_prob, mask.len())
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn inclusion_prob(&self) -> f64 {
        self.inclusion_prob
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Predictions of a fitted regression at every unit.
#[derive(Clone, Debug, PartialEq)]
pub struct FittedFunction {
    predictions: Vec<f64>,
    train_error: f64,
    backend: Backend,
    training: Option<Vec<usize>>,
    coefficients: Option<Vec<f64>>,
}

impl FittedFunction {
    pub(crate) fn trained(
        predictions: Vec<f64>,
        y: &[f64],
        subset: &TrainingSubset,
        backend: Backend,
        coefficients: Option<Vec<f64>>,
    ) -> Result<Self> {
        if predictions.iter().any(|p| !p.is_finite()) {
            return Err(Error::Singular(format!("{} fit produced non-finite predictions", backend.as_str())));
        }
        let train_error = subset_rms(&predictions, y, subset.indices());
        Ok(Self {
            predictions,
            train_error,
            backend,
            training: Some(subset.indices().to_vec()),
            coefficients,
        })
    }

    /// Wraps predictions that were not produced from observed data in this
    /// crate (oracle projections, fits computed elsewhere). They carry no
    /// training record, so the decorrelated estimator accepts them as frozen.
    pub fn external(predictions: Vec<f64>) -> Result<Self> {
        if predictions.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("external predictions must be finite".into()));
        }
        Ok(Self { predictions, train_error: 0.0, backend: Backend::External, training: None, coefficients: None })
    }

    pub fn predictions(&self) -> &[f64] {
        &self.predictions
    }

    /// Root mean squared residual over the training units.
    pub fn train_error(&self) -> f64 {
        self.train_error
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    /// Units the fit read outcomes from; `None` for external or zero fits.
    pub fn training(&self) -> Option<&[usize]> {
        self.training.as_deref()
    }

    pub fn coefficients(&self) -> Option<&[f64]> {
        self.coefficients.as_deref()
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }
}

fn subset_rms(pred: &[f64], y: &[f64], idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    let ss: f64 = idx.iter().map(|&i| (y[i] - pred[i]).powi(2)).sum();
    (ss / idx.len() as f64).sqrt()
}

/// The identically-zero regression.
pub fn fit_zero(n: usize) -> FittedFunction {
    FittedFunction {
        predictions: vec![0.0; n],
        train_error: 0.0,
        backend: Backend::Zero,
        training: None,
        coefficients: None,
    }
}

/// Replaces `base` predictions by the observed outcome on every subset unit.
pub fn interpolate_wrap(base: &FittedFunction, y: &[f64], subset: &TrainingSubset) -> Result<FittedFunction> {
    check_len("y", base.len(), y.len())?;
    let mut pred = base.predictions.clone();
    for &i in subset.indices() {
        pred[i] = y[i];
    }
    let backend = match base.backend {
        Backend::Regressogram => Backend::RegressogramInterp,
        other => other,
    };
    let training = match &base.training {
        Some(t) => {
            let mut all: Vec<usize> = t.iter().chain(subset.indices()).copied().collect();
            all.sort_unstable();
            all.dedup();
            Some(all)
        }
        None => Some(subset.indices().to_vec()),
    };
    Ok(FittedFunction {
        predictions: pred,
        train_error: 0.0,
        backend,
        training,
        coefficients: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_fit() {
        let f = fit_zero(5);
        assert_eq!(f.predictions(), &[0.0; 5]);
        assert_eq!(f.backend(), Backend::Zero);
        assert!(f.training().is_none());
    }

    #[test]
    fn interpolation_cases() {
        let base = FittedFunction::external(vec![9.0; 4]).unwrap();
        let y = [1.0, 2.0, 3.0, 4.0];
        let all = TrainingSubset::new(vec![0, 1, 2, 3], 0.5, 4).unwrap();
        assert_eq!(interpolate_wrap(&base, &y, &all).unwrap().predictions(), &y);
        let none = TrainingSubset::new(vec![], 0.5, 4).unwrap();
        assert_eq!(interpolate_wrap(&base, &y, &none).unwrap().predictions(), base.predictions());
        let mixed = TrainingSubset::new(vec![3, 1], 0.5, 4).unwrap();
        let f = interpolate_wrap(&base, &y, &mixed).unwrap();
        for i in 0..4 {
            let want = if i == 1 || i == 3 { y[i] } else { 9.0 };
            assert_eq!(f.predictions()[i], want);
        }
        assert_eq!(f.train_error(), 0.0);
        assert_eq!(f.training(), Some(&[1usize, 3][..]));
    }

    #[test]
    fn subset_validation() {
        assert!(TrainingSubset::new(vec![5], 0.5, 5).is_err());
        assert!(TrainingSubset::new(vec![0], 1.0, 5).is_err());
        let s = TrainingSubset::from_mask(&[false, true, true], 0.3).unwrap();
        assert_eq!(s.indices(), &[1, 2]);
    }

    #[test]
    fn backend_tags_round_trip() {
        for b in [Backend::Ols, Backend::Lasso, Backend::Regressogram, Backend::RegressogramInterp, Backend::Zero] {
            assert_eq!(b.as_str().parse::<Backend>().unwrap(), b);
        }
        assert!("forest".parse::<Backend>().is_err());
    }
}

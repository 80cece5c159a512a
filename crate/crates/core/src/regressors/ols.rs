use nalgebra::DMatrix;

use super::{Backend, FittedFunction, TrainingSubset};
use crate::error::{check_len, Result};
use crate::linalg::min_norm_lstsq;

/// Minimum-norm least squares on the subset rows, evaluated at every unit.
pub fn fit_ols_minnorm(x: &DMatrix<f64>, y: &[f64], subset: &TrainingSubset) -> Result<FittedFunction> {
    check_len("y", x.nrows(), y.len())?;
    let beta = min_norm_lstsq(x, subset.indices(), y)?;
    let pred = (x * &beta).as_slice().to_vec();
    FittedFunction::trained(pred, y, subset, Backend::Ols, Some(beta.as_slice().to_vec()))
}

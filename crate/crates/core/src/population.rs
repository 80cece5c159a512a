//! Finite-population ground truth and the oracle projections built from it.
//!
//! A [`FinitePopulation`] carries both potential outcomes, so everything here
//! that touches `y(1 − T)` is diagnostic-only. Estimators see an
//! [`ObservedData`] instead.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};
use crate::linalg::{min_norm_lstsq, norm_n};
use crate::regressors::bin_of;

#[derive(Clone, Debug, PartialEq)]
pub struct FinitePopulation {
    x: DMatrix<f64>,
    y1: Vec<f64>,
    y0: Vec<f64>,
    has_intercept: bool,
}

/// What an experimenter sees after assignment: covariates, `y_i = y_i(T_i)`
/// and `T`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedData {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub t: Vec<bool>,
}

impl ObservedData {
    pub fn new(x: DMatrix<f64>, y: Vec<f64>, t: Vec<bool>) -> Result<Self> {
        check_len("y", x.nrows(), y.len())?;
        check_len("t", x.nrows(), t.len())?;
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data("observed data contains non-finite entries".into()));
        }
        Ok(Self { x, y, t })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }
}

impl FinitePopulation {
    pub fn new(x: DMatrix<f64>, y1: Vec<f64>, y0: Vec<f64>, has_intercept: bool) -> Result<Self> {
        check_len("y1", x.nrows(), y1.len())?;
        check_len("y0", x.nrows(), y0.len())?;
        if x.nrows() == 0 {
            return Err(Error::Data("population has no units".into()));
        }
        if x.iter().chain(y1.iter()).chain(y0.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data("population contains non-finite entries".into()));
        }
        Ok(Self { x, y1, y0, has_intercept })
    }

    pub fn n(&self) -> usize {
        self.y1.len()
    }

    /// Number of covariate columns, intercept included when present.
    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y1(&self) -> &[f64] {
        &self.y1
    }

    pub fn y0(&self) -> &[f64] {
        &self.y0
    }

    pub fn has_intercept(&self) -> bool {
        self.has_intercept
    }

    /// Average treatment effect `n⁻¹ Σ y_i(1) − n⁻¹ Σ y_i(0)`.
    pub fn ate(&self) -> f64 {
        let n = self.n() as f64;
        self.y1.iter().sum::<f64>() / n - self.y0.iter().sum::<f64>() / n
    }

    /// Observed outcomes `y_i = T_i y_i(1) + (1 − T_i) y_i(0)`.
    pub fn observe(&self, t: &[bool]) -> Result<Vec<f64>> {
        check_len("t", self.n(), t.len())?;
        Ok(t.iter()
            .zip(self.y1.iter().zip(&self.y0))
            .map(|(&ti, (&a, &b))| if ti { a } else { b })
            .collect())
    }

    pub fn observed(&self, t: &[bool]) -> Result<ObservedData> {
        let y = self.observe(t)?;
        Ok(ObservedData { x: self.x.clone(), y, t: t.to_vec() })
    }

    /// `Δ(t) = y(t) − f_t`.
    pub fn residuals(&self, f1: &[f64], f0: &[f64]) -> Result<ResidualSet> {
        check_len("f1", self.n(), f1.len())?;
        check_len("f0", self.n(), f0.len())?;
        let delta1 = self.y1.iter().zip(f1).map(|(y, f)| y - f).collect();
        let delta0 = self.y0.iter().zip(f0).map(|(y, f)| y - f).collect();
        Ok(ResidualSet { delta1, delta0 })
    }

    /// Euclidean projections `(f*_1, f*_0)` of both potential-outcome vectors
    /// onto `class`.
    pub fn oracle_projection(&self, class: &FunctionClassSpec) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((project(&self.x, &self.y1, class)?, project(&self.x, &self.y0, class)?))
    }

    /// Population least-squares coefficients (minimum norm) for `y(1)` and `y(0)`.
    pub fn population_coefficients(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let all: Vec<usize> = (0..self.n()).collect();
        let b1 = min_norm_lstsq(&self.x, &all, &self.y1)?;
        let b0 = min_norm_lstsq(&self.x, &all, &self.y0)?;
        Ok((b1.as_slice().to_vec(), b0.as_slice().to_vec()))
    }
}

/// Target class for oracle projections.
#[derive(Clone)]
pub enum FunctionClassSpec {
    /// Column span of the covariate matrix, minimum-norm coefficients.
    Linear,
    /// Piecewise constants on `bins` equal segments of `[0, 1]`, read from
    /// covariate `column`.
    Regressogram { column: usize, bins: usize },
    /// Caller-provided projection onto a convex set of prediction vectors.
    Supplied(Projector),
}

/// Projection callback: maps a target vector to its projection.
pub type Projector = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

impl fmt::Debug for FunctionClassSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linear => write!(f, "Linear"),
            Self::Regressogram { column, bins } => write!(f, "Regressogram {{ column: {column}, bins: {bins} }}"),
            Self::Supplied(_) => write!(f, "Supplied(..)"),
        }
    }
}

fn project(x: &DMatrix<f64>, y: &[f64], class: &FunctionClassSpec) -> Result<Vec<f64>> {
    let n = x.nrows();
    match class {
        FunctionClassSpec::Linear => {
            let all: Vec<usize> = (0..n).collect();
            let beta = min_norm_lstsq(x, &all, y)?;
            Ok((x * beta).as_slice().to_vec())
        }
        FunctionClassSpec::Regressogram { column, bins } => {
            if *column >= x.ncols() || *bins == 0 {
                return Err(Error::InvalidInput(format!(
                    "regressogram class needs a valid column and at least one bin (column {column}, bins {bins})"
                )));
            }
            let idx: Vec<usize> = (0..n).map(|i| bin_of(x[(i, *column)], *bins)).collect();
            let mut sum = vec![0.0; *bins];
            let mut cnt = vec![0usize; *bins];
            for (i, &b) in idx.iter().enumerate() {
                sum[b] += y[i];
                cnt[b] += 1;
            }
            Ok(idx.iter().map(|&b| sum[b] / cnt[b] as f64).collect())
        }
        FunctionClassSpec::Supplied(proj) => {
            let out = proj(y);
            check_len("supplied projection", n, out.len())?;
            Ok(out)
        }
    }
}

/// Residual vectors `Δ(1)`, `Δ(0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualSet {
    pub delta1: Vec<f64>,
    pub delta0: Vec<f64>,
}

impl ResidualSet {
    pub fn new(delta1: Vec<f64>, delta0: Vec<f64>) -> Result<Self> {
        check_len("delta0", delta1.len(), delta0.len())?;
        if delta1.iter().chain(&delta0).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("residuals must be finite".into()));
        }
        Ok(Self { delta1, delta0 })
    }

    pub fn n(&self) -> usize {
        self.delta1.len()
    }
}

/// A vector with its normalized ℓ² norm cached.
#[derive(Clone, Debug, PartialEq)]
pub struct NormedVector {
    values: Vec<f64>,
    norm_n: f64,
}

impl NormedVector {
    pub fn new(values: Vec<f64>) -> Self {
        let norm_n = norm_n(&values);
        Self { values, norm_n }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm_n(&self) -> f64 {
        self.norm_n
    }
}

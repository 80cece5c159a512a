//! Experiment configuration, read from a flat TOML file.
//!
//! ```toml
//! family = "linear_scaling"      # or "holder"
//! n_grid = [400, 800, 1600]
//! gamma_exponent = 0.6           # linear family: d = ceil(n^gamma)
//! alpha = 0.8                    # holder family: smoothness in (0, 1]
//! reps = 100
//! pi_t = 0.5
//! pi_rule = "default"            # or "fixed", together with pi_r = 0.2
//! estimator_set = ["dim", "adj", "dc"]
//! master_seed = 20240101
//! alpha_level = 0.05
//! backend = "ols"                # defaults: ols (linear), regressogram_interp (holder)
//! redraw_instance_per_rep = false
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::Method;
use crate::regressors::Backend;
use super::FitSettings;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    LinearScaling,
    Holder,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::LinearScaling => "linear_scaling",
            Family::Holder => "holder",
        }
    }

    pub(crate) fn id(self) -> u64 {
        match self {
            Family::LinearScaling => 1,
            Family::Holder => 2,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear_scaling" => Ok(Family::LinearScaling),
            "holder" => Ok(Family::Holder),
            other => Err(Error::Config(format!("unknown family `{other}` (expected linear_scaling or holder)"))),
        }
    }
}

/// How the fitting probability `π_R = π_R̄` is chosen for each cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum PiRule {
    /// `min(sqrt(d/n), 1/4)` for the linear family; for the Hölder family,
    /// the rate balancing the constrained-least-squares error against the
    /// oracle gap, with entropy exponent `1/α`, capped at 1/4.
    RateDefault,
    Fixed(f64),
}

impl PiRule {
    pub fn fit_prob(self, family: Family, n: usize, d: usize, alpha: f64) -> f64 {
        match self {
            PiRule::Fixed(p) => p,
            PiRule::RateDefault => {
                let nf = n as f64;
                let p = match family {
                    Family::LinearScaling => (d as f64 / nf).sqrt(),
                    Family::Holder => {
                        let a = 1.0 / alpha;
                        if a < 2.0 {
                            nf.powf(-2.0 / (a + 6.0))
                        } else if a == 2.0 {
                            nf.powf(-0.25) * nf.ln().sqrt()
                        } else {
                            nf.powf(-1.0 / (a + 2.0))
                        }
                    }
                };
                p.min(0.25)
            }
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    family: String,
    n_grid: Vec<usize>,
    gamma_exponent: Option<f64>,
    alpha: Option<f64>,
    reps: usize,
    pi_t: Option<f64>,
    pi_rule: Option<String>,
    pi_r: Option<f64>,
    estimator_set: Option<Vec<String>>,
    master_seed: u64,
    alpha_level: Option<f64>,
    backend: Option<String>,
    lambda: Option<f64>,
    y_inf: Option<f64>,
    redraw_instance_per_rep: Option<bool>,
}

/// A validated Monte Carlo sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub family: Family,
    pub n_grid: Vec<usize>,
    /// Dimension exponent for the linear family.
    pub gamma_exponent: Option<f64>,
    /// Hölder smoothness for the Hölder family.
    pub alpha: Option<f64>,
    pub reps: usize,
    pub pi_t: f64,
    pub pi_rule: PiRule,
    pub estimator_set: Vec<Method>,
    pub master_seed: u64,
    pub alpha_level: f64,
    pub backend: Backend,
    /// Lasso penalty; the data-driven default is used when absent.
    pub lambda: Option<f64>,
    /// Lasso sup-norm bound; the largest absolute training outcome when absent.
    pub y_inf: Option<f64>,
    pub redraw_instance_per_rep: bool,
}

impl ExperimentConfig {
    /// Defaults for a family: π_T = 1/2, default π rule, {dim, adj, dc},
    /// 95% intervals and the family's usual backend.
    pub fn new(family: Family, n_grid: Vec<usize>, exponent: f64, reps: usize, master_seed: u64) -> Result<Self> {
        let (gamma_exponent, alpha, backend) = match family {
            Family::LinearScaling => (Some(exponent), None, Backend::Ols),
            Family::Holder => (None, Some(exponent), Backend::RegressogramInterp),
        };
        let cfg = Self {
            family,
            n_grid,
            gamma_exponent,
            alpha,
            reps,
            pi_t: 0.5,
            pi_rule: PiRule::RateDefault,
            estimator_set: vec![Method::Dim, Method::Adj, Method::Dc],
            master_seed,
            alpha_level: 0.05,
            backend,
            lambda: None,
            y_inf: None,
            redraw_instance_per_rep: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let family: Family = raw.family.parse()?;
        let pi_rule = match raw.pi_rule.as_deref().unwrap_or("default") {
            "default" => {
                if raw.pi_r.is_some() {
                    return Err(Error::Config("`pi_r` is only used with pi_rule = \"fixed\"".into()));
                }
                PiRule::RateDefault
            }
            "fixed" => PiRule::Fixed(
                raw.pi_r.ok_or_else(|| Error::Config("pi_rule = \"fixed\" requires `pi_r`".into()))?,
            ),
            other => return Err(Error::Config(format!("unknown pi_rule `{other}` (expected default or fixed)"))),
        };
        let estimator_set = match raw.estimator_set {
            Some(v) => v.iter().map(|s| s.parse()).collect::<Result<Vec<Method>>>()?,
            None => vec![Method::Dim, Method::Adj, Method::Dc],
        };
        let backend = match raw.backend {
            Some(b) => b.parse()?,
            None => match family {
                Family::LinearScaling => Backend::Ols,
                Family::Holder => Backend::RegressogramInterp,
            },
        };
        let cfg = Self {
            family,
            n_grid: raw.n_grid,
            gamma_exponent: raw.gamma_exponent,
            alpha: raw.alpha,
            reps: raw.reps,
            pi_t: raw.pi_t.unwrap_or(0.5),
            pi_rule,
            estimator_set,
            master_seed: raw.master_seed,
            alpha_level: raw.alpha_level.unwrap_or(0.05),
            backend,
            lambda: raw.lambda,
            y_inf: raw.y_inf,
            redraw_instance_per_rep: raw.redraw_instance_per_rep.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[0] >= w[1]) || self.n_grid[0] < 2 {
            return bad("n_grid must be nonempty, strictly ascending and start at 2 or more".into());
        }
        if !(self.pi_t > 0.0 && self.pi_t < 1.0) {
            return bad(format!("pi_t = {} must lie in (0, 1)", self.pi_t));
        }
        if !(self.alpha_level > 0.0 && self.alpha_level < 1.0) {
            return bad(format!("alpha_level = {} must lie in (0, 1)", self.alpha_level));
        }
        if let PiRule::Fixed(p) = self.pi_rule {
            if !(p > 0.0 && p < 1.0) {
                return bad(format!("pi_r = {p} must lie in (0, 1)"));
            }
        }
        if self.estimator_set.is_empty() {
            return bad("estimator_set must name at least one method".into());
        }
        match self.family {
            Family::LinearScaling => {
                match self.gamma_exponent {
                    Some(g) if g > 0.0 && g < 1.0 => {}
                    Some(g) => return bad(format!("gamma_exponent = {g} must lie in (0, 1)")),
                    None => return bad("linear_scaling family requires `gamma_exponent`".into()),
                }
                if self.alpha.is_some() {
                    return bad("`alpha` applies to the holder family only".into());
                }
                if matches!(self.backend, Backend::Regressogram | Backend::RegressogramInterp) {
                    return bad("regressogram backends need the one-dimensional holder family".into());
                }
            }
            Family::Holder => {
                match self.alpha {
                    Some(a) if a > 0.0 && a <= 1.0 => {}
                    Some(a) => return bad(format!("alpha = {a} must lie in (0, 1]")),
                    None => return bad("holder family requires `alpha`".into()),
                }
                if self.gamma_exponent.is_some() {
                    return bad("`gamma_exponent` applies to the linear_scaling family only".into());
                }
            }
        }
        if self.backend != Backend::Lasso && (self.lambda.is_some() || self.y_inf.is_some()) {
            return bad("`lambda` and `y_inf` apply to the lasso backend only".into());
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return bad(format!("lambda = {l} must be positive"));
            }
        }
        if let Some(y) = self.y_inf {
            if !(y > 0.0 && y.is_finite()) {
                return bad(format!("y_inf = {y} must be positive"));
            }
        }
        Ok(())
    }

    /// Covariate count (excluding the intercept) at sample size `n`.
    pub fn dimension(&self, n: usize) -> usize {
        match self.family {
            Family::LinearScaling => {
                let g = self.gamma_exponent.expect("validated");
                robust_ceil((n as f64).powf(g))
            }
            Family::Holder => 1,
        }
    }

    /// Smoothness parameter handed to the regressogram (1 for the linear family).
    pub fn smoothness(&self) -> f64 {
        self.alpha.unwrap_or(1.0)
    }

    pub fn fit_settings(&self) -> FitSettings {
        FitSettings { backend: self.backend, smoothness: self.smoothness(), lambda: self.lambda, y_inf: self.y_inf }
    }

    pub fn fit_prob(&self, n: usize) -> f64 {
        self.pi_rule.fit_prob(self.family, n, self.dimension(n), self.smoothness())
    }
}

/// `⌈v⌉`, treating values within a few ulps of an integer as that integer.
fn robust_ceil(v: f64) -> usize {
    let r = v.round();
    if (v - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        v.ceil() as usize
    }
}

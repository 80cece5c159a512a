//! Monte Carlo sweeps over synthetic finite populations.
//!
//! A sweep visits each sample size of the grid. Per cell, the population
//! (covariates, potential outcomes, oracle projections) is drawn once from a
//! seed derived from `(master_seed, family, n, d)`; replications then redraw
//! only the assignment, the quadruple and the fits, from a stream keyed by
//! `(master_seed, family, n, rep)`. Replications are independent of one
//! another, so they may run on any number of threads, and tallies are
//! accumulated in replication order so the output does not depend on the
//! schedule.

mod config;
mod instances;

use std::io::Write;

use serde::Serialize;

pub use config::{ExperimentConfig, Family, PiRule};
pub use instances::{
    bias_maximizing_epsilon, gen_holder_instance, gen_linear_instance, t2_quantile, MAX_INSTANCE_ATTEMPTS,
};

use crate::decorrelation::{draw_assignment, draw_quadruples, DecorrelationProbs, QuadrupleDraw};
use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};
use crate::estimators::{
    adj, adj_hajek, adj_oracle, adj_oracle_hajek, adj_variance_plugin, dc, dc_hajek, dc_oracle, dc_oracle_hajek,
    dim, dim_hajek, dim_variance_plugin, hajek_variance_plugin, v_hat, EstimateReport, Method,
};
use crate::io::fmt17;
use crate::population::{FinitePopulation, FunctionClassSpec};
use crate::regressors::{
    bin_count, default_lambda, fit_lasso_constrained, fit_ols_minnorm, fit_regressogram, fit_zero, interpolate_wrap,
    Backend, FittedFunction, LassoSpec, TrainingSubset,
};
use crate::rng::{purpose, SeedKey};

/// Confidence parameter used for the data-driven Lasso penalty.
const LASSO_DELTA: f64 = 0.05;

/// Header of the metrics table.
pub const METRICS_HEADER: &str = "family,n,d,method,mse,coverage,mean_ci_length,reps_used,reps_failed";

/// Everything held fixed across the replications of one `(family, n)` cell.
#[derive(Clone, Debug)]
pub struct Cell {
    pub family: Family,
    pub n: usize,
    pub d: usize,
    pub pop: FinitePopulation,
    pub probs: DecorrelationProbs,
    pub f1star: FittedFunction,
    pub f0star: FittedFunction,
    pub tau: f64,
}

fn instance_seed(config: &ExperimentConfig, n: usize, d: usize, rep: Option<usize>) -> u64 {
    let rep_part = rep.map_or(u64::MAX, |r| r as u64);
    SeedKey::from_u64(config.master_seed)
        .derive("instance", &[config.family.id(), n as u64, d as u64, rep_part])
        .to_u64()
}

/// Draws the population of a cell and its oracle projections. `rep` is
/// `None` for the frozen instance and `Some(r)` when instances are redrawn
/// per replication.
pub fn build_cell(config: &ExperimentConfig, n: usize, rep: Option<usize>) -> Result<Cell> {
    let d = config.dimension(n);
    let seed = instance_seed(config, n, d, rep);
    let (pop, class) = match config.family {
        Family::LinearScaling => (gen_linear_instance(n, d, seed)?, FunctionClassSpec::Linear),
        Family::Holder => (
            gen_holder_instance(n, seed)?,
            FunctionClassSpec::Regressogram { column: 0, bins: bin_count(n, config.smoothness()) },
        ),
    };
    let pi_r = config.fit_prob(n);
    let probs = DecorrelationProbs::from_fit_probs(config.pi_t, pi_r, pi_r)?;
    let (f1, f0) = pop.oracle_projection(&class)?;
    let tau = pop.ate();
    Ok(Cell {
        family: config.family,
        n,
        d,
        probs,
        f1star: FittedFunction::external(f1)?,
        f0star: FittedFunction::external(f0)?,
        tau,
        pop,
    })
}

/// Regression backend and its tuning, shared by every fit of a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitSettings {
    pub backend: Backend,
    /// Hölder exponent for the regressogram backends.
    pub smoothness: f64,
    /// Lasso penalty; data-driven when absent.
    pub lambda: Option<f64>,
    /// Lasso side-constraint level; the largest training `|y|` when absent.
    pub y_inf: Option<f64>,
}

impl FitSettings {
    pub fn new(backend: Backend) -> Self {
        Self { backend, smoothness: 1.0, lambda: None, y_inf: None }
    }

    /// Fits the backend on `subset`. The regressogram backends read the
    /// first covariate column.
    pub fn fit(&self, x: &DMatrix<f64>, y: &[f64], subset: &TrainingSubset) -> Result<FittedFunction> {
        match self.backend {
            Backend::Ols => fit_ols_minnorm(x, y, subset),
            Backend::Lasso => {
                if subset.is_empty() {
                    return Err(Error::EmptySubset);
                }
                let y_inf = match self.y_inf {
                    Some(v) => v,
                    None => subset.indices().iter().map(|&i| y[i].abs()).fold(0.0, f64::max),
                };
                if y_inf == 0.0 {
                    return Ok(fit_zero(y.len()));
                }
                let x_inf = x.amax();
                let lambda = match self.lambda {
                    Some(l) => l,
                    None => default_lambda(x, y, subset, x_inf, y_inf, LASSO_DELTA)?,
                };
                Ok(fit_lasso_constrained(x, y, subset, &LassoSpec::new(lambda, y_inf, x_inf)?)?.fitted)
            }
            Backend::Regressogram | Backend::RegressogramInterp => {
                let x1: Vec<f64> = x.column(0).iter().copied().collect();
                let base = fit_regressogram(&x1, y, subset, self.smoothness)?;
                if self.backend == Backend::RegressogramInterp {
                    interpolate_wrap(&base, y, subset)
                } else {
                    Ok(base)
                }
            }
            Backend::Zero => Ok(fit_zero(y.len())),
            Backend::External => Err(Error::Config("the external backend cannot be fitted here".into())),
        }
    }
}

/// Outcome of one estimator in one replication.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodOutcome {
    pub method: Method,
    pub result: Result<EstimateReport>,
}

type FitPair = Result<(FittedFunction, FittedFunction)>;

/// Population projections for the oracle estimators.
#[derive(Clone, Copy, Debug)]
pub struct Oracle<'a> {
    pub pop: &'a FinitePopulation,
    pub f1star: &'a FittedFunction,
    pub f0star: &'a FittedFunction,
}

/// One realized design: observed outcomes, assignment and (for the
/// decorrelated methods) the quadruple. Fits are computed on first use and
/// shared between the methods that need them.
pub struct Realization<'a> {
    x: &'a DMatrix<f64>,
    y: Vec<f64>,
    t: Vec<bool>,
    c: Vec<bool>,
    quad: Option<QuadrupleDraw>,
    probs: DecorrelationProbs,
    alpha_level: f64,
    fit: FitSettings,
    oracle: Option<Oracle<'a>>,
    arm_fits: Option<FitPair>,
    split_fits: Option<FitPair>,
}

impl<'a> Realization<'a> {
    pub fn new(
        x: &'a DMatrix<f64>,
        y: Vec<f64>,
        t: Vec<bool>,
        quad: Option<QuadrupleDraw>,
        probs: DecorrelationProbs,
        alpha_level: f64,
        fit: FitSettings,
    ) -> Result<Self> {
        let n = x.nrows();
        check_len("y", n, y.len())?;
        check_len("t", n, t.len())?;
        if let Some(q) = &quad {
            check_len("quadruples", n, q.len())?;
            if q.t != t {
                return Err(Error::InvalidInput("quadruple treatment indicators differ from the assignment".into()));
            }
        }
        let c = t.iter().map(|&v| !v).collect();
        Ok(Self { x, y, t, c, quad, probs, alpha_level, fit, oracle: None, arm_fits: None, split_fits: None })
    }

    pub fn with_oracle(mut self, oracle: Oracle<'a>) -> Self {
        self.oracle = Some(oracle);
        self
    }

    fn quad(&self) -> Result<&QuadrupleDraw> {
        self.quad.as_ref().ok_or_else(|| Error::InvalidInput("decorrelated methods need a quadruple draw".into()))
    }

    fn oracle(&self) -> Result<Oracle<'a>> {
        self.oracle.ok_or_else(|| Error::InvalidInput("oracle methods need both potential outcomes".into()))
    }

    fn arm_fits(&mut self) -> Result<(FittedFunction, FittedFunction)> {
        if self.arm_fits.is_none() {
            let pi_t = self.probs.pi_t();
            let fit = || -> FitPair {
                let s1 = TrainingSubset::from_mask(&self.t, pi_t)?;
                let s0 = TrainingSubset::from_mask(&self.c, 1.0 - pi_t)?;
                Ok((self.fit.fit(self.x, &self.y, &s1)?, self.fit.fit(self.x, &self.y, &s0)?))
            };
            self.arm_fits = Some(fit());
        }
        self.arm_fits.clone().expect("just filled")
    }

    fn split_fits(&mut self) -> Result<(FittedFunction, FittedFunction)> {
        if self.split_fits.is_none() {
            let n = self.x.nrows();
            let probs = &self.probs;
            let quad = self.quad()?;
            let fit = || -> FitPair {
                let sr = TrainingSubset::new(quad.fit_indices(), probs.pi_r(), n)?;
                let srb = TrainingSubset::new(quad.fit_indices_bar(), probs.pi_rbar(), n)?;
                Ok((self.fit.fit(self.x, &self.y, &sr)?, self.fit.fit(self.x, &self.y, &srb)?))
            };
            let res = fit();
            self.split_fits = Some(res);
        }
        self.split_fits.clone().expect("just filled")
    }

    /// Point estimate, plug-in variance and interval of method `m`.
    pub fn evaluate(&mut self, m: Method) -> Result<EstimateReport> {
        let n = self.x.nrows();
        let probs = self.probs;
        let pi_t = probs.pi_t();
        let zero = vec![0.0; n];
        let (point, var) = match m {
            Method::Dim => (dim(&self.y, &self.t, pi_t)?, dim_variance_plugin(&self.y, &self.t, pi_t)?),
            Method::Adj => {
                let (f1, f0) = self.arm_fits()?;
                (adj(&self.y, &self.t, &f1, &f0, pi_t)?, adj_variance_plugin(&self.y, &self.t, &f1, &f0, pi_t)?)
            }
            Method::Dc => {
                let (fr, frb) = self.split_fits()?;
                let q = self.quad()?;
                (dc(&self.y, q, &fr, &frb, &probs)?, v_hat(&self.y, q, &fr, &frb, &probs)?)
            }
            Method::AdjOracle => {
                let o = self.oracle()?;
                (
                    adj_oracle(o.pop, &self.t, o.f1star.predictions(), o.f0star.predictions(), pi_t)?,
                    adj_variance_plugin(&self.y, &self.t, o.f1star, o.f0star, pi_t)?,
                )
            }
            Method::DcOracle => {
                let o = self.oracle()?;
                let q = self.quad()?;
                (
                    dc_oracle(o.pop, q, o.f1star.predictions(), o.f0star.predictions(), &probs)?,
                    v_hat(&self.y, q, o.f1star, o.f0star, &probs)?,
                )
            }
            Method::DimHajek => {
                (dim_hajek(&self.y, &self.t)?, hajek_variance_plugin(&self.y, &self.t, &zero, &self.c, &zero)?)
            }
            Method::AdjHajek => {
                let (f1, f0) = self.arm_fits()?;
                (
                    adj_hajek(&self.y, &self.t, &f1, &f0)?,
                    hajek_variance_plugin(&self.y, &self.t, f1.predictions(), &self.c, f0.predictions())?,
                )
            }
            Method::DcHajek => {
                let (fr, frb) = self.split_fits()?;
                let q = self.quad()?;
                (
                    dc_hajek(&self.y, q, &fr, &frb)?,
                    hajek_variance_plugin(&self.y, &q.m, fr.predictions(), &q.mbar, frb.predictions())?,
                )
            }
            Method::AdjOracleHajek => {
                let o = self.oracle()?;
                let (f1, f0) = (o.f1star.predictions(), o.f0star.predictions());
                (
                    adj_oracle_hajek(o.pop, &self.t, f1, f0)?,
                    hajek_variance_plugin(&self.y, &self.t, f1, &self.c, f0)?,
                )
            }
            Method::DcOracleHajek => {
                let o = self.oracle()?;
                let q = self.quad()?;
                let (f1, f0) = (o.f1star.predictions(), o.f0star.predictions());
                (dc_oracle_hajek(o.pop, q, f1, f0)?, hajek_variance_plugin(&self.y, &q.m, f1, &q.mbar, f0)?)
            }
        };
        EstimateReport::new(m.as_str(), point, Some(var), n, self.alpha_level)
    }
}

/// Stream key of replication `rep` in the cell of size `n`.
pub fn replication_key(config: &ExperimentConfig, n: usize, rep: usize) -> SeedKey {
    SeedKey::from_u64(config.master_seed).derive("replication", &[config.family.id(), n as u64, rep as u64])
}

/// One Monte Carlo trial: assignment, quadruple (only if a requested method
/// uses it), fits (only if needed), then every requested estimator.
/// Failures are reported per method.
pub fn run_replication(cell: &Cell, config: &ExperimentConfig, rep: usize) -> Vec<MethodOutcome> {
    let key = replication_key(config, cell.n, rep);
    let t = match draw_assignment(cell.n, config.pi_t, &key.stream(purpose::ASSIGNMENT)) {
        Ok(t) => t,
        Err(e) => {
            return config.estimator_set.iter().map(|&m| MethodOutcome { method: m, result: Err(e.clone()) }).collect()
        }
    };
    let quad = config
        .estimator_set
        .iter()
        .any(|m| m.uses_quadruples())
        .then(|| draw_quadruples(&t, &cell.probs, &key.stream(purpose::QUADRUPLE)));
    let y = cell.pop.observe(&t).expect("assignment has the population's length");
    let oracle = Oracle { pop: &cell.pop, f1star: &cell.f1star, f0star: &cell.f0star };
    let mut real = match Realization::new(cell.pop.x(), y, t, quad, cell.probs, config.alpha_level, config.fit_settings()) {
        Ok(r) => r.with_oracle(oracle),
        Err(e) => {
            return config.estimator_set.iter().map(|&m| MethodOutcome { method: m, result: Err(e.clone()) }).collect()
        }
    };
    config
        .estimator_set
        .iter()
        .map(|&m| MethodOutcome { method: m, result: real.evaluate(m) })
        .collect()
}

/// Error summaries of one method over the replications of a cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub mse: f64,
    /// Fraction of intervals containing the target; NaN if no replication
    /// produced an interval.
    pub coverage: f64,
    pub mean_ci_length: f64,
    pub reps_used: usize,
    pub reps_failed: usize,
}

/// Order-preserving accumulator behind [`aggregate`].
#[derive(Clone, Debug, Default)]
pub struct Tally {
    sq_err: f64,
    covered: usize,
    with_ci: usize,
    length: f64,
    used: usize,
    failed: usize,
}

impl Tally {
    /// Records one replication; `None` marks a failed one.
    pub fn push(&mut self, report: Option<&EstimateReport>, target: f64) {
        let Some(r) = report else {
            self.failed += 1;
            return;
        };
        self.used += 1;
        self.sq_err += (r.point - target).powi(2);
        if let (Some(covers), Some(len)) = (r.covers(target), r.ci_length()) {
            self.with_ci += 1;
            self.covered += covers as usize;
            self.length += len;
        }
    }

    pub fn finish(&self) -> Result<Summary> {
        if self.used == 0 {
            return Err(Error::InvalidInput(format!("all {} replications failed", self.failed)));
        }
        let (coverage, mean_ci_length) = if self.with_ci == 0 {
            (f64::NAN, f64::NAN)
        } else {
            (self.covered as f64 / self.with_ci as f64, self.length / self.with_ci as f64)
        };
        Ok(Summary {
            mse: self.sq_err / self.used as f64,
            coverage,
            mean_ci_length,
            reps_used: self.used,
            reps_failed: self.failed,
        })
    }
}

/// Mean squared error, coverage and mean interval length against `tau_star`,
/// skipping failed replications (`None`).
pub fn aggregate(reports: &[Option<EstimateReport>], tau_star: f64) -> Result<Summary> {
    let mut tally = Tally::default();
    for r in reports {
        tally.push(r.as_ref(), tau_star);
    }
    tally.finish()
}

/// One line of the metrics table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub family: Family,
    pub n: usize,
    pub d: usize,
    pub method: Method,
    pub mse: f64,
    pub coverage: f64,
    pub mean_ci_length: f64,
    pub reps_used: usize,
    pub reps_failed: usize,
}

impl MetricsRow {
    fn from_summary(family: Family, n: usize, d: usize, method: Method, s: Summary) -> Self {
        Self {
            family,
            n,
            d,
            method,
            mse: s.mse,
            coverage: s.coverage,
            mean_ci_length: s.mean_ci_length,
            reps_used: s.reps_used,
            reps_failed: s.reps_failed,
        }
    }

    fn failed(family: Family, n: usize, d: usize, method: Method, reps: usize) -> Self {
        Self {
            family,
            n,
            d,
            method,
            mse: f64::NAN,
            coverage: f64::NAN,
            mean_ci_length: f64::NAN,
            reps_used: 0,
            reps_failed: reps,
        }
    }

    /// CSV line matching [`METRICS_HEADER`]; NaN is written as `NaN`.
    pub fn csv_line(&self) -> String {
        let f = |v: f64| if v.is_nan() { "NaN".to_string() } else { fmt17(v) };
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.family,
            self.n,
            self.d,
            self.method,
            f(self.mse),
            f(self.coverage),
            f(self.mean_ci_length),
            self.reps_used,
            self.reps_failed
        )
    }
}

/// Result of a sweep.
#[derive(Clone, Debug, Default)]
pub struct ExperimentOutput {
    /// One row per `(n, method)`, in grid order then estimator-set order.
    pub rows: Vec<MetricsRow>,
    /// One JSON object per replication and method, when requested.
    pub raw: Vec<String>,
    /// Cell-level failures and the first failure of each method per cell.
    pub messages: Vec<String>,
}

#[cfg(feature = "parallel")]
fn map_reps<T: Send>(reps: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..reps).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_reps<T: Send>(reps: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..reps).map(f).collect()
}

fn raw_line(cell: (Family, usize, usize), rep: usize, tau: f64, o: &MethodOutcome) -> String {
    let (family, n, d) = cell;
    let head = format!("{{\"family\":\"{family}\",\"n\":{n},\"d\":{d},\"rep\":{rep},\"tau\":{}", crate::io::json_number(tau));
    match &o.result {
        Ok(r) => format!("{head},\"report\":{}}}", r.to_json()),
        Err(e) => {
            let msg = serde_json::to_string(&e.to_string()).expect("string serializes");
            format!("{head},\"method\":\"{}\",\"error\":{msg}}}", o.method)
        }
    }
}

/// Runs the whole sweep. Only an invalid configuration is an error; failed
/// cells and replications are tallied and described in `messages`.
pub fn run_experiment(config: &ExperimentConfig, keep_raw: bool) -> Result<ExperimentOutput> {
    config.validate()?;
    let mut out = ExperimentOutput::default();
    for &n in &config.n_grid {
        let d = config.dimension(n);
        let frozen = (!config.redraw_instance_per_rep).then(|| build_cell(config, n, None));
        if let Some(Err(e)) = &frozen {
            out.messages.push(format!("{} n={n}: instance construction failed: {e}", config.family));
            for &m in &config.estimator_set {
                out.rows.push(MetricsRow::failed(config.family, n, d, m, config.reps));
            }
            continue;
        }
        let results: Vec<Result<(f64, Vec<MethodOutcome>)>> = map_reps(config.reps, |rep| {
            let owned;
            let cell = match &frozen {
                Some(Ok(c)) => c,
                _ => {
                    owned = build_cell(config, n, Some(rep))?;
                    &owned
                }
            };
            Ok((cell.tau, run_replication(cell, config, rep)))
        });

        let k = config.estimator_set.len();
        let mut tallies = vec![Tally::default(); k];
        let mut first_error: Vec<Option<String>> = vec![None; k];
        for (rep, res) in results.iter().enumerate() {
            match res {
                Ok((tau, outcomes)) => {
                    for (j, o) in outcomes.iter().enumerate() {
                        tallies[j].push(o.result.as_ref().ok(), *tau);
                        if let Err(e) = &o.result {
                            first_error[j].get_or_insert_with(|| format!("rep {rep}: {e}"));
                        }
                        if keep_raw {
                            out.raw.push(raw_line((config.family, n, d), rep, *tau, o));
                        }
                    }
                }
                Err(e) => {
                    for (j, t) in tallies.iter_mut().enumerate() {
                        t.push(None, f64::NAN);
                        first_error[j].get_or_insert_with(|| format!("rep {rep}: instance construction failed: {e}"));
                    }
                }
            }
        }
        for (j, &m) in config.estimator_set.iter().enumerate() {
            if let Some(msg) = &first_error[j] {
                out.messages.push(format!("{} n={n} {m}: {} failed replication(s), first at {msg}", config.family, tallies[j].failed));
            }
            out.rows.push(match tallies[j].finish() {
                Ok(s) => MetricsRow::from_summary(config.family, n, d, m, s),
                Err(_) => MetricsRow::failed(config.family, n, d, m, config.reps),
            });
        }
    }
    Ok(out)
}

/// Writes the header and one line per row.
pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.csv_line())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn realization_reports_missing_inputs() {
        let x = DMatrix::from_fn(6, 1, |i, _| i as f64 / 6.0);
        let y = vec![1.0, 2.0, 0.5, 0.0, 3.0, 1.5];
        let t = vec![true, false, true, false, true, false];
        let probs = DecorrelationProbs::from_fit_probs(0.5, 0.2, 0.2).unwrap();
        let mut r = Realization::new(&x, y.clone(), t.clone(), None, probs, 0.05, FitSettings::new(Backend::Zero)).unwrap();
        assert!(matches!(r.evaluate(Method::Dc), Err(Error::InvalidInput(_))));
        assert!(matches!(r.evaluate(Method::AdjOracle), Err(Error::InvalidInput(_))));
        assert_eq!(r.evaluate(Method::Adj).unwrap().point, dim(&y, &t, 0.5).unwrap());

        let other = draw_quadruples(&[true; 6], &probs, &SeedKey::from_u64(1).stream(purpose::QUADRUPLE));
        let bad = Realization::new(&x, y, t, Some(other), probs, 0.05, FitSettings::new(Backend::Zero));
        assert!(bad.is_err());
    }

    fn report(point: f64, lo: f64, hi: f64) -> EstimateReport {
        EstimateReport {
            method: "dc".into(),
            point,
            variance_hat: Some(1.0),
            ci_low: Some(lo),
            ci_high: Some(hi),
            alpha_level: 0.05,
            n: 10,
        }
    }

    #[test]
    fn aggregate_matches_loop() {
        let reps = vec![Some(report(1.0, 0.5, 1.5)), None, Some(report(2.5, 2.0, 3.0)), Some(report(1.8, 1.0, 2.2))];
        let tau = 1.7;
        let s = aggregate(&reps, tau).unwrap();
        let ok: Vec<&EstimateReport> = reps.iter().flatten().collect();
        let mse = ok.iter().map(|r| (r.point - tau).powi(2)).sum::<f64>() / 3.0;
        let cov = ok.iter().filter(|r| r.ci_low.unwrap() <= tau && tau <= r.ci_high.unwrap()).count() as f64 / 3.0;
        let len = ok.iter().map(|r| r.ci_high.unwrap() - r.ci_low.unwrap()).sum::<f64>() / 3.0;
        assert!((s.mse - mse).abs() < 1e-15);
        assert!((s.coverage - cov).abs() < 1e-15);
        assert!((s.mean_ci_length - len).abs() < 1e-15);
        assert_eq!((s.reps_used, s.reps_failed), (3, 1));
    }

    #[test]
    fn aggregate_edge_cases() {
        let exact = vec![Some(report(2.0, 1.0, 3.0)); 4];
        let s = aggregate(&exact, 2.0).unwrap();
        assert_eq!(s.mse, 0.0);
        assert_eq!(s.coverage, 1.0);
        assert!(aggregate(&[None, None], 0.0).is_err());
    }

    fn small_config(family: Family, methods: Vec<Method>) -> ExperimentConfig {
        let (grid, exp) = match family {
            Family::LinearScaling => (vec![60, 120], 0.5),
            Family::Holder => (vec![80, 160], 0.6),
        };
        let mut c = ExperimentConfig::new(family, grid, exp, 4, 99).unwrap();
        c.estimator_set = methods;
        c
    }

    #[test]
    fn replications_are_reproducible() {
        let c = small_config(Family::LinearScaling, Method::ALL.to_vec());
        let cell = build_cell(&c, 60, None).unwrap();
        let a = run_replication(&cell, &c, 3);
        let b = run_replication(&cell, &c, 3);
        let render = |v: &[MethodOutcome]| {
            v.iter().map(|o| o.result.as_ref().map(|r| r.to_json()).unwrap_or_default()).collect::<Vec<_>>()
        };
        assert_eq!(render(&a), render(&b));
        assert_eq!(a.len(), Method::ALL.len());
        assert!(a.iter().all(|o| o.result.is_ok()));
        assert_ne!(render(&a), render(&run_replication(&cell, &c, 4)));
    }

    #[test]
    fn difference_in_means_needs_no_fit() {
        let mut c = small_config(Family::LinearScaling, vec![Method::Dim]);
        c.backend = Backend::External;
        let cell = build_cell(&c, 60, None).unwrap();
        let out = run_replication(&cell, &c, 0);
        assert!(out[0].result.is_ok());
        c.estimator_set = vec![Method::Adj];
        assert!(matches!(run_replication(&cell, &c, 0)[0].result, Err(Error::Config(_))));
    }

    #[test]
    fn interpolating_adjustment_has_zero_variance() {
        let c = small_config(Family::Holder, vec![Method::Adj, Method::Dc]);
        let cell = build_cell(&c, 160, None).unwrap();
        for rep in 0..5 {
            let out = run_replication(&cell, &c, rep);
            assert_eq!(out[0].result.as_ref().unwrap().variance_hat, Some(0.0));
            assert!(out[1].result.as_ref().unwrap().variance_hat.unwrap() > 0.0);
        }
    }

    #[test]
    fn smoke_sweep_emits_every_row() {
        for family in [Family::LinearScaling, Family::Holder] {
            let mut c = small_config(family, vec![Method::Dim, Method::Adj, Method::Dc, Method::DcOracle]);
            c.reps = 1;
            let out = run_experiment(&c, true).unwrap();
            assert_eq!(out.rows.len(), 2 * 4);
            assert_eq!(out.raw.len(), 2 * 4);
            for r in &out.rows {
                assert_eq!(r.reps_used + r.reps_failed, 1);
            }
            for line in &out.raw {
                let v: serde_json::Value = serde_json::from_str(line).unwrap();
                assert!(v.get("report").is_some() || v.get("error").is_some());
            }
        }
    }

    #[test]
    fn redrawn_instances_differ_between_replications() {
        let mut c = small_config(Family::Holder, vec![Method::Dim]);
        c.redraw_instance_per_rep = true;
        let a = build_cell(&c, 80, Some(0)).unwrap();
        let b = build_cell(&c, 80, Some(1)).unwrap();
        assert_ne!(a.tau, b.tau);
        let out = run_experiment(&c, false).unwrap();
        assert!(out.rows.iter().all(|r| r.reps_used == 4));
    }

    #[test]
    fn lasso_backend_runs() {
        let mut c = small_config(Family::LinearScaling, vec![Method::Adj, Method::Dc]);
        c.backend = Backend::Lasso;
        let cell = build_cell(&c, 120, None).unwrap();
        for o in run_replication(&cell, &c, 0) {
            assert!(o.result.unwrap().point.is_finite());
        }
    }

    #[test]
    fn csv_layout() {
        let row = MetricsRow::failed(Family::Holder, 100, 1, Method::Dc, 5);
        assert_eq!(row.csv_line(), "holder,100,1,dc,NaN,NaN,NaN,0,5");
        let mut buf = Vec::new();
        write_metrics_csv(&[row], &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with(METRICS_HEADER));
    }
}

//! Browser bindings for the demo page. Every entry point takes a JSON request
//! string and returns a JSON response string; the `*_json` functions carry
//! the logic and are callable from native code as well.

use decorr::decorrelation::{draw_assignment, draw_quadruples, DecorrelationProbs};
use decorr::diagnostics::{critical_radius, EntropySpec};
use decorr::estimators::Method;
use decorr::io::to_json17;
use decorr::rng::{purpose, SeedKey};
use decorr::simharness::{aggregate, build_cell, run_replication, ExperimentConfig, Family};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

/// Keeps a single request responsive in the browser.
const MAX_UNITS: usize = 1_000_000;
const MAX_REPS: usize = 5_000;
const MAX_SIM_N: usize = 20_000;

fn parse<'a, T: Deserialize<'a>>(input: &'a str) -> Result<T, String> {
    serde_json::from_str(input).map_err(|e| format!("bad request: {e}"))
}

fn render<T: Serialize>(value: &T) -> Result<String, String> {
    to_json17(value).map_err(|e| e.to_string())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadrupleRequest {
    pi_t: f64,
    pi_r: f64,
    pi_rbar: Option<f64>,
    n: usize,
    seed: u64,
}

#[derive(Serialize, Default)]
struct Rates {
    t: f64,
    r: f64,
    m: f64,
    rbar: f64,
    mbar: f64,
}

#[derive(Serialize)]
struct QuadrupleSummary {
    pi_m: f64,
    pi_mbar: f64,
    treated_weights: [f64; 3],
    control_weights: [f64; 3],
    target: Rates,
    observed: Rates,
    cov_r_m: f64,
    cov_m_mbar: f64,
    cov_m_mbar_target: f64,
    dominance_violations: usize,
}

/// Derived probabilities of a split design and the empirical rates of one
/// draw of `n` units.
pub fn quadruple_summary_json(input: &str) -> Result<String, String> {
    let req: QuadrupleRequest = parse(input)?;
    if req.n == 0 || req.n > MAX_UNITS {
        return Err(format!("n must lie in 1..={MAX_UNITS}"));
    }
    let probs = DecorrelationProbs::from_fit_probs(req.pi_t, req.pi_r, req.pi_rbar.unwrap_or(req.pi_r))
        .map_err(|e| e.to_string())?;
    let key = SeedKey::from_u64(req.seed);
    let t = draw_assignment(req.n, req.pi_t, &key.stream(purpose::ASSIGNMENT)).map_err(|e| e.to_string())?;
    let q = draw_quadruples(&t, &probs, &key.stream(purpose::QUADRUPLE));

    let nf = req.n as f64;
    let rate = |v: &[bool]| v.iter().filter(|&&b| b).count() as f64 / nf;
    let joint = |a: &[bool], b: &[bool]| a.iter().zip(b).filter(|(x, y)| **x && **y).count() as f64 / nf;
    let observed = Rates { t: rate(&q.t), r: rate(&q.r), m: rate(&q.m), rbar: rate(&q.rbar), mbar: rate(&q.mbar) };
    let summary = QuadrupleSummary {
        pi_m: probs.pi_m(),
        pi_mbar: probs.pi_mbar(),
        treated_weights: probs.treated_weights(),
        control_weights: probs.control_weights(),
        target: Rates { t: req.pi_t, r: probs.pi_r(), m: probs.pi_m(), rbar: probs.pi_rbar(), mbar: probs.pi_mbar() },
        cov_r_m: joint(&q.r, &q.m) - observed.r * observed.m,
        cov_m_mbar: joint(&q.m, &q.mbar) - observed.m * observed.mbar,
        cov_m_mbar_target: -probs.pi_m() * probs.pi_mbar(),
        dominance_violations: (0..req.n).filter(|&i| (q.r[i] || q.m[i]) && !q.t[i]).count(),
        observed,
    };
    render(&summary)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SamplingRequest {
    family: String,
    n: usize,
    /// `gamma` for the linear family, Hölder `alpha` otherwise.
    exponent: f64,
    reps: usize,
    seed: u64,
    methods: Option<Vec<String>>,
}

#[derive(Serialize)]
struct MethodDistribution {
    method: Method,
    points: Vec<f64>,
    mse: f64,
    coverage: f64,
    mean_ci_length: f64,
    failures: usize,
}

#[derive(Serialize)]
struct SamplingDistribution {
    tau: f64,
    n: usize,
    d: usize,
    pi_r: f64,
    methods: Vec<MethodDistribution>,
}

/// Point estimates of each method over `reps` replications on one frozen
/// population, with their error summaries.
pub fn sampling_distribution_json(input: &str) -> Result<String, String> {
    let req: SamplingRequest = parse(input)?;
    if req.reps == 0 || req.reps > MAX_REPS || req.n > MAX_SIM_N {
        return Err(format!("need 1 <= reps <= {MAX_REPS} and n <= {MAX_SIM_N}"));
    }
    let family: Family = req.family.parse().map_err(|e: decorr::Error| e.to_string())?;
    let mut config =
        ExperimentConfig::new(family, vec![req.n], req.exponent, req.reps, req.seed).map_err(|e| e.to_string())?;
    if let Some(names) = &req.methods {
        config.estimator_set =
            names.iter().map(|s| s.parse()).collect::<Result<Vec<Method>, _>>().map_err(|e| e.to_string())?;
        config.validate().map_err(|e| e.to_string())?;
    }
    let cell = build_cell(&config, req.n, None).map_err(|e| e.to_string())?;

    let k = config.estimator_set.len();
    let mut reports = vec![Vec::with_capacity(req.reps); k];
    for rep in 0..req.reps {
        for (slot, outcome) in reports.iter_mut().zip(run_replication(&cell, &config, rep)) {
            slot.push(outcome.result.ok());
        }
    }
    let mut methods = Vec::with_capacity(k);
    for (&method, reps) in config.estimator_set.iter().zip(&reports) {
        let summary = aggregate(reps, cell.tau).map_err(|e| e.to_string())?;
        methods.push(MethodDistribution {
            method,
            points: reps.iter().flatten().map(|r| r.point).collect(),
            mse: summary.mse,
            coverage: summary.coverage,
            mean_ci_length: summary.mean_ci_length,
            failures: summary.reps_failed,
        });
    }
    render(&SamplingDistribution { tau: cell.tau, n: cell.n, d: cell.d, pi_r: cell.probs.pi_r(), methods })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CurveRequest {
    alpha: f64,
    c: f64,
    pi_r: f64,
    delta: f64,
    log2_n_min: u32,
    log2_n_max: u32,
}

#[derive(Serialize)]
struct CurvePoint {
    n: usize,
    r: f64,
}

#[derive(Serialize)]
struct Curve {
    points: Vec<CurvePoint>,
    fitted_exponent: f64,
    /// Rate exponent of the regime `alpha` falls in (`alpha = 2` carries an
    /// extra logarithmic factor).
    regime_exponent: f64,
}

/// Critical radius of polynomial entropy `c t^{-alpha}` for `n = 2^k` over a
/// range of `k`, with the least-squares exponent of `r` in `n`.
pub fn critical_radius_curve_json(input: &str) -> Result<String, String> {
    let req: CurveRequest = parse(input)?;
    if req.log2_n_min < 1 || req.log2_n_max > 30 || req.log2_n_max <= req.log2_n_min {
        return Err("need 1 <= log2_n_min < log2_n_max <= 30".into());
    }
    let entropy = EntropySpec::Polynomial { alpha: req.alpha, c: req.c };
    let mut points = Vec::new();
    for k in req.log2_n_min..=req.log2_n_max {
        let n = 1usize << k;
        let r = critical_radius(&entropy, n, req.pi_r, req.delta).map_err(|e| e.to_string())?.r;
        points.push(CurvePoint { n, r });
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.r.ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let regime_exponent = if req.alpha < 2.0 {
        -1.0 / (2.0 + req.alpha)
    } else if req.alpha == 2.0 {
        -0.25
    } else {
        -1.0 / (2.0 * req.alpha)
    };
    render(&Curve { points, fitted_exponent: sxy / sxx, regime_exponent })
}

#[wasm_bindgen]
pub fn quadruple_summary(input: &str) -> Result<String, JsError> {
    quadruple_summary_json(input).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn sampling_distribution(input: &str) -> Result<String, JsError> {
    sampling_distribution_json(input).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn critical_radius_curve(input: &str) -> Result<String, JsError> {
    critical_radius_curve_json(input).map_err(|e| JsError::new(&e))
}

//! Treatment assignment and the decorrelating quadruple `(R, M, R̄, M̄)`.
//!
//! Treated units are split by a three-way categorical draw into a fitting
//! indicator `R` and an averaging indicator `M` that are independent
//! Bernoulli variables with `max(R, M) <= T`; control units get the mirror
//! pair `(R̄, M̄)`. The probabilities are tied to the treatment probability by
//!
//! ```text
//! π_T     = π_M + π_R − π_M π_R
//! 1 − π_T = π_M̄ + π_R̄ − π_M̄ π_R̄
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{check_open_unit, Error, Result};
use crate::rng::UnitStream;

/// Absolute tolerance on the two compatibility equations.
pub const COMPAT_TOL: f64 = 1e-12;

/// Solves `π_T = π_M + π_R − π_M π_R` for `π_M`.
pub fn solve_mean_prob(pi_t: f64, pi_r: f64) -> Result<f64> {
    check_open_unit("pi_t", pi_t)?;
    check_open_unit("pi_r", pi_r)?;
    if pi_r >= pi_t {
        return Err(Error::IncompatibleProbabilities(format!(
            "fitting probability {pi_r} must be below the arm probability {pi_t}"
        )));
    }
    Ok((pi_t - pi_r) / (1.0 - pi_r))
}

/// The common value `π` with `π_R = π_M = π` for a given arm probability.
pub fn symmetric_prob(pi_t: f64) -> Result<f64> {
    check_open_unit("pi_t", pi_t)?;
    Ok(1.0 - (1.0 - pi_t).sqrt())
}

/// Data-size default for the fitting probability:
/// `min(sqrt(d/n), 1/4, π_T/2, (1 − π_T)/2)`.
pub fn default_fit_prob(n: usize, d: usize, pi_t: f64) -> f64 {
    let cap = 0.25f64.min(0.5 * pi_t.min(1.0 - pi_t));
    (d as f64 / n as f64).sqrt().min(cap)
}

/// The five probabilities driving the quadruple sampler. Only constructible
/// in a compatible state; samplers rely on that.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecorrelationProbs {
    pi_t: f64,
    pi_r: f64,
    pi_m: f64,
    pi_rbar: f64,
    pi_mbar: f64,
}

impl DecorrelationProbs {
    pub fn new(pi_t: f64, pi_r: f64, pi_m: f64, pi_rbar: f64, pi_mbar: f64) -> Result<Self> {
        check_open_unit("pi_t", pi_t)?;
        check_open_unit("pi_r", pi_r)?;
        check_open_unit("pi_m", pi_m)?;
        check_open_unit("pi_rbar", pi_rbar)?;
        check_open_unit("pi_mbar", pi_mbar)?;
        let treated = pi_m + pi_r - pi_m * pi_r - pi_t;
        if treated.abs() > COMPAT_TOL {
            return Err(Error::IncompatibleProbabilities(format!(
                "pi_m + pi_r - pi_m*pi_r differs from pi_t by {treated:e}"
            )));
        }
        let control = pi_mbar + pi_rbar - pi_mbar * pi_rbar - (1.0 - pi_t);
        if control.abs() > COMPAT_TOL {
            return Err(Error::IncompatibleProbabilities(format!(
                "pi_mbar + pi_rbar - pi_mbar*pi_rbar differs from 1 - pi_t by {control:e}"
            )));
        }
        Ok(Self { pi_t, pi_r, pi_m, pi_rbar, pi_mbar })
    }

    /// Builds the probabilities from the two fitting probabilities, solving
    /// for the averaging ones.
    pub fn from_fit_probs(pi_t: f64, pi_r: f64, pi_rbar: f64) -> Result<Self> {
        let pi_m = solve_mean_prob(pi_t, pi_r)?;
        let pi_mbar = solve_mean_prob(1.0 - pi_t, pi_rbar)?;
        Self::new(pi_t, pi_r, pi_m, pi_rbar, pi_mbar)
    }

    /// `π_R = π_M` and `π_R̄ = π_M̄`.
    pub fn symmetric(pi_t: f64) -> Result<Self> {
        let p = symmetric_prob(pi_t)?;
        let q = symmetric_prob(1.0 - pi_t)?;
        Self::new(pi_t, p, p, q, q)
    }

    pub fn pi_t(&self) -> f64 {
        self.pi_t
    }
    pub fn pi_r(&self) -> f64 {
        self.pi_r
    }
    pub fn pi_m(&self) -> f64 {
        self.pi_m
    }
    pub fn pi_rbar(&self) -> f64 {
        self.pi_rbar
    }
    pub fn pi_mbar(&self) -> f64 {
        self.pi_mbar
    }

    /// Categorical weights for `Z ∈ {1, 2, 3}` given `T = 1`.
    pub fn treated_weights(&self) -> [f64; 3] {
        let (m, r, t) = (self.pi_m, self.pi_r, self.pi_t);
        [m * r / t, (m - m * r) / t, (r - m * r) / t]
    }

    /// Categorical weights for `Z ∈ {1, 2, 3}` given `T = 0`.
    pub fn control_weights(&self) -> [f64; 3] {
        let (m, r, c) = (self.pi_mbar, self.pi_rbar, 1.0 - self.pi_t);
        [m * r / c, (m - m * r) / c, (r - m * r) / c]
    }
}

/// Per-unit indicators `(T, R, M, R̄, M̄)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuadrupleDraw {
    pub t: Vec<bool>,
    pub r: Vec<bool>,
    pub m: Vec<bool>,
    pub rbar: Vec<bool>,
    pub mbar: Vec<bool>,
}

fn ones(v: &[bool]) -> Vec<usize> {
    v.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
}

impl QuadrupleDraw {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Indices with `R_i = 1`, the treated fitting subset.
    pub fn fit_indices(&self) -> Vec<usize> {
        ones(&self.r)
    }

    /// Indices with `R̄_i = 1`, the control fitting subset.
    pub fn fit_indices_bar(&self) -> Vec<usize> {
        ones(&self.rbar)
    }

    /// `(Σ T, n − Σ T, Σ M, Σ M̄)`.
    pub fn counts(&self) -> (usize, usize, usize, usize) {
        let n1 = self.t.iter().filter(|&&b| b).count();
        let nm = self.m.iter().filter(|&&b| b).count();
        let nmb = self.mbar.iter().filter(|&&b| b).count();
        (n1, self.len() - n1, nm, nmb)
    }
}

/// i.i.d. Bernoulli(`pi_t`) treatment indicators; unit `i` reads
/// `stream.uniform_at(i)`.
pub fn draw_assignment(n: usize, pi_t: f64, stream: &UnitStream) -> Result<Vec<bool>> {
    if n == 0 {
        return Err(Error::InvalidInput("assignment needs at least one unit".into()));
    }
    check_open_unit("pi_t", pi_t)?;
    Ok(stream.uniforms(n).into_iter().map(|u| u < pi_t).collect())
}

#[inline]
fn categorical(u: f64, w: &[f64; 3]) -> u8 {
    if u < w[0] {
        1
    } else if u < w[0] + w[1] {
        2
    } else {
        3
    }
}

/// Samples the quadruple for every unit given its treatment indicator.
///
/// `Z = 1` sets both the averaging and fitting indicator, `Z = 2` only the
/// averaging one, `Z = 3` only the fitting one.
pub fn draw_quadruples(t: &[bool], probs: &DecorrelationProbs, stream: &UnitStream) -> QuadrupleDraw {
    let n = t.len();
    let wt = probs.treated_weights();
    let wc = probs.control_weights();
    let mut draw = QuadrupleDraw {
        t: t.to_vec(),
        r: vec![false; n],
        m: vec![false; n],
        rbar: vec![false; n],
        mbar: vec![false; n],
    };
    for (i, u) in stream.uniforms(n).into_iter().enumerate() {
        if t[i] {
            let z = categorical(u, &wt);
            draw.m[i] = z != 3;
            draw.r[i] = z != 2;
        } else {
            let z = categorical(u, &wc);
            draw.mbar[i] = z != 3;
            draw.rbar[i] = z != 2;
        }
    }
    draw
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{purpose, SeedKey};

    #[test]
    fn mean_prob_examples() {
        assert!((solve_mean_prob(0.5, 0.25).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((solve_mean_prob(0.4, 0.1).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let tiny = solve_mean_prob(0.5, 0.5 - 1e-9).unwrap();
        assert!((tiny - 2e-9).abs() < 1e-15, "{tiny}");
    }

    #[test]
    fn mean_prob_round_trips() {
        let (t, r) = (0.37, 0.11);
        let m = solve_mean_prob(t, r).unwrap();
        assert!((m + r - m * r - t).abs() < 1e-15);
    }

    #[test]
    fn mean_prob_rejects_bad_inputs() {
        assert!(solve_mean_prob(0.5, 0.5).is_err());
        assert!(solve_mean_prob(0.5, 0.7).is_err());
        assert!(solve_mean_prob(1.0, 0.2).is_err());
        assert!(solve_mean_prob(0.5, 0.0).is_err());
    }

    #[test]
    fn symmetric_prob_examples() {
        assert!((symmetric_prob(0.5).unwrap() - 0.292_893_218_813_452_5).abs() < 1e-15);
        assert!((symmetric_prob(0.75).unwrap() - 0.5).abs() < 1e-15);
        assert!(symmetric_prob(0.0).is_err());
        assert!(symmetric_prob(1.0).is_err());
    }

    #[test]
    fn construction_enforces_compatibility() {
        assert!(DecorrelationProbs::new(0.5, 0.25, 1.0 / 3.0, 0.25, 1.0 / 3.0).is_ok());
        assert!(DecorrelationProbs::new(0.5, 0.25, 0.34, 0.25, 1.0 / 3.0).is_err());
        assert!(DecorrelationProbs::new(0.5, 0.25, 1.0 / 3.0, 0.25, 0.3).is_err());
        assert!(DecorrelationProbs::new(0.5, 0.0, 0.5, 0.25, 1.0 / 3.0).is_err());
        let s = DecorrelationProbs::symmetric(0.3).unwrap();
        assert_eq!(s.pi_r(), s.pi_m());
    }

    #[test]
    fn weights_sum_to_one() {
        let p = DecorrelationProbs::from_fit_probs(0.5, 0.3, 0.2).unwrap();
        for w in [p.treated_weights(), p.control_weights()] {
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn degenerate_bernoulli_is_all_ones() {
        let s = SeedKey::from_u64(1).stream(purpose::ASSIGNMENT);
        let t = draw_assignment(64, 1.0 - 1e-17, &s);
        // 1 - 1e-17 rounds to 1.0 in f64 and is rejected as an endpoint.
        assert!(t.is_err());
        let t = draw_assignment(64, 1.0 - 1e-15, &s).unwrap();
        assert!(t.iter().all(|&b| b));
    }

    #[test]
    fn assignment_is_deterministic() {
        let key = SeedKey::from_u64(99);
        let a = draw_assignment(1000, 0.5, &key.stream(purpose::ASSIGNMENT)).unwrap();
        let b = draw_assignment(1000, 0.5, &key.stream(purpose::ASSIGNMENT)).unwrap();
        assert_eq!(a, b);
        assert!(draw_assignment(0, 0.5, &key.stream(purpose::ASSIGNMENT)).is_err());
    }

    #[test]
    fn assignment_mean_at_large_n() {
        let key = SeedKey::from_u64(2024);
        let t = draw_assignment(1_000_000, 0.5, &key.stream(purpose::ASSIGNMENT)).unwrap();
        let mean = t.iter().filter(|&&b| b).count() as f64 / 1e6;
        assert!((mean - 0.5).abs() < 0.002, "{mean}");
    }

    #[test]
    fn quadruple_dominance_and_exclusivity() {
        let key = SeedKey::from_u64(5);
        let probs = DecorrelationProbs::from_fit_probs(0.4, 0.2, 0.3).unwrap();
        let t = draw_assignment(5000, 0.4, &key.stream(purpose::ASSIGNMENT)).unwrap();
        let q = draw_quadruples(&t, &probs, &key.stream(purpose::QUADRUPLE));
        for i in 0..t.len() {
            assert!(q.r[i] <= q.t[i] && q.m[i] <= q.t[i]);
            assert!(q.rbar[i] <= !q.t[i] && q.mbar[i] <= !q.t[i]);
            assert!(!(q.m[i] && q.mbar[i]));
        }
    }

    #[test]
    fn per_unit_draw_is_order_independent() {
        // Unit i's quadruple depends only on (key, i): drawing the first 10
        // units alone gives the same indicators as drawing 1000.
        let key = SeedKey::from_u64(11);
        let probs = DecorrelationProbs::from_fit_probs(0.5, 0.3, 0.3).unwrap();
        let t = draw_assignment(1000, 0.5, &key.stream(purpose::ASSIGNMENT)).unwrap();
        let full = draw_quadruples(&t, &probs, &key.stream(purpose::QUADRUPLE));
        let head = draw_quadruples(&t[..10], &probs, &key.stream(purpose::QUADRUPLE));
        assert_eq!(&full.m[..10], &head.m[..]);
        assert_eq!(&full.rbar[..10], &head.rbar[..]);
    }
}

//! Small stored populations and an exact enumerator over the joint law of
//! `(T, R, M, R̄, M̄)`, shared by the integration tests.

#![allow(dead_code)]

use decorr::decorrelation::{DecorrelationProbs, QuadrupleDraw};
use decorr::population::FinitePopulation;
use nalgebra::DMatrix;

/// Populations with `n ≤ 5`: an intercept column plus one covariate.
pub fn stored_instances() -> Vec<FinitePopulation> {
    let raw: [(&[f64], &[f64], &[f64]); 5] = [
        (&[0.0, 1.0], &[2.0, -1.0], &[0.5, 0.0]),
        (&[-1.0, 0.5, 2.0], &[1.0, 4.0, -2.0], &[0.0, 1.5, 3.0]),
        (&[0.1, 0.7, -0.3, 1.2], &[3.0, -1.0, 0.25, 2.0], &[1.0, 1.0, -2.0, 0.5]),
        (&[2.0, -1.0, 0.0, 1.0, -2.0], &[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0, 0.0, 0.0, 0.0, 0.0]),
        (&[0.3, -0.8, 1.1, 0.4, -0.2], &[-2.5, 0.75, 6.0, 1.0, -1.0], &[3.0, -4.0, 0.5, 2.0, 1.25]),
    ];
    raw.iter()
        .map(|(x, y1, y0)| {
            let n = x.len();
            let m = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
            FinitePopulation::new(m, y1.to_vec(), y0.to_vec(), true).unwrap()
        })
        .collect()
}

/// `(π_T, π_R, π_R̄)` settings for the enumeration checks.
pub fn stored_probs() -> Vec<DecorrelationProbs> {
    [(0.5, 0.2, 0.2), (0.3, 0.1, 0.25), (0.7, 0.35, 0.05), (0.5, 0.3, 0.3)]
        .iter()
        .map(|&(t, r, rb)| DecorrelationProbs::from_fit_probs(t, r, rb).unwrap())
        .collect()
}

/// Calls `visit(probability, draw)` for each of the `6ⁿ` per-unit state
/// combinations. Unit state `s < 3` is treated with category `s + 1`, and
/// `s ≥ 3` is control with category `s − 2`.
pub fn enumerate_quadruples(n: usize, probs: &DecorrelationProbs, mut visit: impl FnMut(f64, &QuadrupleDraw)) {
    let wt = probs.treated_weights();
    let wc = probs.control_weights();
    let pt = probs.pi_t();
    let unit_prob = |s: usize| if s < 3 { pt * wt[s] } else { (1.0 - pt) * wc[s - 3] };
    let mut draw = QuadrupleDraw {
        t: vec![false; n],
        r: vec![false; n],
        m: vec![false; n],
        rbar: vec![false; n],
        mbar: vec![false; n],
    };
    let total = 6usize.pow(n as u32);
    for code in 0..total {
        let mut c = code;
        let mut p = 1.0;
        for i in 0..n {
            let s = c % 6;
            c /= 6;
            p *= unit_prob(s);
            let treated = s < 3;
            let z = s % 3;
            draw.t[i] = treated;
            let (avg, fit) = (z != 2, z != 1);
            draw.m[i] = treated && avg;
            draw.r[i] = treated && fit;
            draw.mbar[i] = !treated && avg;
            draw.rbar[i] = !treated && fit;
        }
        visit(p, &draw);
    }
}

/// Calls `visit(probability, t)` for each of the `2ⁿ` assignments.
pub fn enumerate_assignments(n: usize, pi_t: f64, mut visit: impl FnMut(f64, &[bool])) {
    let mut t = vec![false; n];
    for code in 0..(1usize << n) {
        let mut p = 1.0;
        for (i, ti) in t.iter_mut().enumerate() {
            *ti = code >> i & 1 == 1;
            p *= if *ti { pi_t } else { 1.0 - pi_t };
        }
        visit(p, &t);
    }
}

/// Mean and `n`-scaled variance of a statistic under an enumerated law.
#[derive(Default)]
pub struct Moments {
    pub mass: f64,
    s1: f64,
    s2: f64,
}

impl Moments {
    pub fn push(&mut self, p: f64, v: f64) {
        self.mass += p;
        self.s1 += p * v;
        self.s2 += p * v * v;
    }

    pub fn mean(&self) -> f64 {
        self.s1
    }

    pub fn scaled_variance(&self, n: usize) -> f64 {
        n as f64 * (self.s2 - self.s1 * self.s1)
    }
}

/// Fixed prediction vectors that no estimator sees as trained.
pub fn frozen_predictions(n: usize, salt: f64) -> Vec<f64> {
    (0..n).map(|i| (i as f64 * 1.7 + salt).sin() * 2.0).collect()
}

//! Randomized search for the restricted-eigenvalue constant
//! `γ = min { ‖Xθ‖ₙ² : ‖θ‖₂ = 1, ‖θ_{Kᶜ}‖₁ ≤ 3‖θ_K‖₁ }`.
//!
//! Every evaluated direction lies in the cone, so the returned value is an
//! upper bound on γ.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::UnitStream;

/// Largest dimension the probe accepts.
pub const MAX_PROBE_DIM: usize = 12;
const CONE: f64 = 3.0;

#[derive(Clone, Debug, Serialize)]
pub struct ReProbe {
    /// Smallest `‖Xθ‖ₙ²` found; an upper bound on the RE constant.
    pub upper_bound: f64,
    pub direction: Vec<f64>,
}

fn in_cone(theta: &[f64], on_support: &[bool]) -> bool {
    let (mut s, mut off) = (0.0, 0.0);
    for (v, &k) in theta.iter().zip(on_support) {
        if k {
            s += v.abs();
        } else {
            off += v.abs();
        }
    }
    off <= CONE * s
}

fn quad(a: &DMatrix<f64>, theta: &DVector<f64>) -> f64 {
    theta.dot(&(a * theta))
}

fn sample_direction<R: Rng>(rng: &mut R, on_support: &[bool]) -> DVector<f64> {
    let d = on_support.len();
    let mut v = DVector::zeros(d);
    let mut l1 = 0.0;
    for j in 0..d {
        if on_support[j] {
            let z: f64 = rng.sample(StandardNormal);
            v[j] = z;
            l1 += z.abs();
        }
    }
    let off: Vec<usize> = (0..d).filter(|&j| !on_support[j]).collect();
    if !off.is_empty() {
        let mass = rng.random::<f64>() * CONE * l1;
        let w: Vec<f64> = off.iter().map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let total: f64 = w.iter().sum();
        for (&j, wj) in off.iter().zip(&w) {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            v[j] = sign * mass * wj / total;
        }
    }
    let norm = v.norm();
    v / norm
}

/// Samples `trials` cone directions, then hill-climbs from the best one.
pub fn re_constant_probe(x: &DMatrix<f64>, support: &[usize], trials: usize, stream: &UnitStream) -> Result<ReProbe> {
    let (n, d) = x.shape();
    if support.is_empty() {
        return Err(Error::InvalidInput("RE probe needs a nonempty support".into()));
    }
    if d > MAX_PROBE_DIM {
        return Err(Error::InvalidInput(format!("RE probe supports d <= {MAX_PROBE_DIM}, got {d}")));
    }
    if n == 0 || trials == 0 {
        return Err(Error::InvalidInput("RE probe needs rows and at least one trial".into()));
    }
    let mut on_support = vec![false; d];
    for &k in support {
        if k >= d {
            return Err(Error::InvalidInput(format!("support index {k} out of range for d = {d}")));
        }
        on_support[k] = true;
    }
    let a = x.tr_mul(x) / n as f64;
    let mut rng = stream.generator();

    let mut best_theta = sample_direction(&mut rng, &on_support);
    let mut best = quad(&a, &best_theta);
    for _ in 1..trials {
        let th = sample_direction(&mut rng, &on_support);
        let v = quad(&a, &th);
        if v < best {
            best = v;
            best_theta = th;
        }
    }

    let mut step = 0.5;
    while step > 1e-6 {
        let mut improved = false;
        for _ in 0..20 * d {
            let mut cand = best_theta.clone();
            for j in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                cand[j] += step * z;
            }
            let norm = cand.norm();
            if norm == 0.0 {
                continue;
            }
            cand /= norm;
            if !in_cone(cand.as_slice(), &on_support) {
                continue;
            }
            let v = quad(&a, &cand);
            if v < best {
                best = v;
                best_theta = cand;
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(ReProbe { upper_bound: best, direction: best_theta.as_slice().to_vec() })
}

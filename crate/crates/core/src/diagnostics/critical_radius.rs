//! Largest root of the localized-entropy fixed-point equation
//!
//! ```text
//! r² = (64/π_R) · inf_{γ ≥ 0} { γ + n^{-1/2} ∫_{γ/4}^{2r} sqrt(log N(t, F ∩ B(r))) dt + r sqrt(log(1/δ)/n) }
//! ```
//!
//! The localized entropy is taken as `log N(t, F)` for `t < r` and zero for
//! `t ≥ r`, since a single ball of radius `t ≥ r` covers `B(r)`. Because of
//! that cutoff only `γ ∈ [0, 4r]` matters: beyond it the integral vanishes
//! and the bracket grows linearly in γ.

use serde::Serialize;

use crate::error::{check_open_unit, Error, Result};

/// Upper end of the root search.
pub const R_MAX: f64 = 1e3;
/// Lower end of the root search.
pub const R_MIN: f64 = 1e-12;
const SIMPSON_TOL: f64 = 1e-9;
const SCAN_POINTS: usize = 600;

/// Metric-entropy model `t ↦ log N(t, F)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum EntropySpec {
    /// `c · t^{-α}`.
    Polynomial { alpha: f64, c: f64 },
    /// Values at increasing scales, interpolated linearly in `log t`, held at
    /// the first value below the table and zero above it.
    Tabulated { t: Vec<f64>, log_n: Vec<f64> },
}

impl EntropySpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Polynomial { alpha, c } => {
                if !(*alpha > 0.0 && *c > 0.0 && alpha.is_finite() && c.is_finite()) {
                    return Err(Error::InvalidInput(format!("polynomial entropy needs α > 0 and c > 0 (α = {alpha}, c = {c})")));
                }
            }
            Self::Tabulated { t, log_n } => {
                if t.is_empty() || t.len() != log_n.len() {
                    return Err(Error::InvalidInput("tabulated entropy needs matching, nonempty columns".into()));
                }
                if t[0] <= 0.0 || t.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidInput("tabulated entropy scales must be positive and increasing".into()));
                }
                if log_n.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                    return Err(Error::InvalidInput("tabulated log-covering numbers must be finite and nonnegative".into()));
                }
            }
        }
        Ok(())
    }

    /// `log N(t, F)`.
    pub fn log_covering(&self, t: f64) -> f64 {
        match self {
            Self::Polynomial { alpha, c } => c * t.powf(-alpha),
            Self::Tabulated { t: ts, log_n } => {
                if t <= ts[0] {
                    log_n[0]
                } else if t > ts[ts.len() - 1] {
                    0.0
                } else {
                    let k = ts.partition_point(|&s| s < t).max(1) - 1;
                    let (a, b) = (ts[k].ln(), ts[k + 1].ln());
                    let w = (t.ln() - a) / (b - a);
                    log_n[k] * (1.0 - w) + log_n[k + 1] * w
                }
            }
        }
    }
}

/// Solver output: the root plus what is needed to audit it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriticalRadius {
    pub r: f64,
    /// Bracket `[lo, hi]` the final bisection ran on.
    pub bracket: (f64, f64),
    /// `|r² − RHS(r)|` at the returned root.
    pub residual: f64,
    /// Minimizing γ of the inner problem at the root.
    pub gamma: f64,
}

fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    if b <= a {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, tol, 50)
}

/// `∫_lo^hi sqrt(log N(t)) dt`: closed form for the polynomial model,
/// adaptive Simpson in `u = log t` for tabulated curves.
fn entropy_integral(entropy: &EntropySpec, lo: f64, hi: f64) -> f64 {
    if lo >= hi {
        return 0.0;
    }
    match entropy {
        EntropySpec::Polynomial { alpha, c } => {
            let p = 1.0 - alpha / 2.0;
            if p.abs() < 1e-12 {
                c.sqrt() * (hi / lo).ln()
            } else {
                c.sqrt() * (hi.powf(p) - lo.powf(p)) / p
            }
        }
        EntropySpec::Tabulated { t, log_n } => {
            // Constant below the first scale.
            let split = t[0].clamp(lo, hi);
            let flat = log_n[0].sqrt() * (split - lo);
            if split >= hi {
                return flat;
            }
            let f = |u: f64| {
                let s = u.exp();
                entropy.log_covering(s).sqrt() * s
            };
            flat + adaptive_simpson(&f, split.ln(), hi.ln(), SIMPSON_TOL)
        }
    }
}

struct Problem<'a> {
    entropy: &'a EntropySpec,
    n: f64,
    pi_r: f64,
    tail: f64,
}

impl Problem<'_> {
    /// `∫_lo^{min(2r, r)} sqrt(log N(t)) dt`.
    fn integral(&self, lo: f64, r: f64) -> f64 {
        entropy_integral(self.entropy, lo, r)
    }

    fn bracket(&self, gamma: f64, r: f64) -> f64 {
        gamma + self.integral(gamma / 4.0, r) / self.n.sqrt()
    }

    /// Minimizes the (convex) bracket over `γ ∈ [0, 4r]` by golden section.
    fn inner_inf(&self, r: f64) -> (f64, f64) {
        let (mut a, mut b) = (0.0, 4.0 * r);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let mut fc = self.bracket(c, r);
        let mut fd = self.bracket(d, r);
        for _ in 0..200 {
            if (b - a) <= 1e-14 * r.max(1e-300) {
                break;
            }
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = self.bracket(c, r);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = self.bracket(d, r);
            }
        }
        let gm = 0.5 * (a + b);
        let mut best = (gm, self.bracket(gm, r));
        let right = self.bracket(4.0 * r, r);
        if right < best.1 {
            best = (4.0 * r, right);
        }
        best
    }

    fn rhs(&self, r: f64) -> (f64, f64) {
        let (gamma, inf) = self.inner_inf(r);
        (64.0 / self.pi_r * (inf + r * self.tail), gamma)
    }

    fn g(&self, r: f64) -> f64 {
        self.rhs(r).0 - r * r
    }
}

/// Solves for the largest root in `[R_MIN, R_MAX]`.
///
/// The scan walks a log grid downward from `R_MAX` and stops at the first
/// point where the right-hand side reaches `r²`; bisection then resolves the
/// crossing inside that grid cell.
pub fn critical_radius(entropy: &EntropySpec, n: usize, pi_r: f64, delta: f64) -> Result<CriticalRadius> {
    entropy.validate()?;
    check_open_unit("pi_R", pi_r)?;
    check_open_unit("delta", delta)?;
    if n == 0 {
        return Err(Error::InvalidInput("critical radius needs n >= 1".into()));
    }
    let nf = n as f64;
    let prob = Problem { entropy, n: nf, pi_r, tail: ((1.0 / delta).ln() / nf).sqrt() };

    let mut trace = String::new();
    let g_hi = prob.g(R_MAX);
    if g_hi >= 0.0 {
        return Err(Error::NoRoot {
            lo: R_MIN,
            hi: R_MAX,
            trace: format!("g({R_MAX:e}) = {g_hi:e} is not negative; root lies above the bracket"),
        });
    }
    let ratio = (R_MAX / R_MIN).ln() / SCAN_POINTS as f64;
    let mut hi = R_MAX;
    let mut lo = None;
    for k in 1..=SCAN_POINTS {
        let r = R_MAX * (-(k as f64) * ratio).exp();
        let v = prob.g(r);
        if k % 60 == 0 {
            trace.push_str(&format!("g({r:.3e})={v:.3e}; "));
        }
        if v >= 0.0 {
            lo = Some(r);
            break;
        }
        hi = r;
    }
    let Some(mut lo) = lo else {
        return Err(Error::NoRoot { lo: R_MIN, hi: R_MAX, trace });
    };
    let bracket = (lo, hi);
    let mut hi = hi;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if prob.g(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    let r = 0.5 * (lo + hi);
    let (rhs, gamma) = prob.rhs(r);
    Ok(CriticalRadius { r, bracket, residual: (rhs - r * r).abs(), gamma })
}

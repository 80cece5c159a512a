//! Randomized checks of the structural invariants.

use decorr::decorrelation::{draw_assignment, draw_quadruples, DecorrelationProbs, COMPAT_TOL};
use decorr::diagnostics::{
    critical_radius, lasso_bound, ols_bound, re_constant_probe, residual_uniformity, deviation_bound_formula, EntropySpec,
    LassoBoundInputs,
};
use decorr::estimators::{
    adj, adj_oracle_variance, confidence_interval, dc, dc_oracle_variance, delta_mse, dim, dim_hajek, sigma2_n, v_hat,
    v_upper, EstimateReport,
};
use decorr::population::{FinitePopulation, FunctionClassSpec, ResidualSet};
use decorr::regressors::{
    bin_count, fit_lasso_constrained, fit_ols_minnorm, fit_regressogram, fit_zero, interpolate_wrap, shrink_factor,
    LassoSpec, TrainingSubset,
};
use decorr::rng::{purpose, SeedKey};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn vec_in(len: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, len)
}

/// `(π_T, π_R, π_R̄)` with both fitting probabilities below their arm.
fn prob_triple() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.05f64..0.95, 0.01f64..0.99, 0.01f64..0.99).prop_map(|(t, a, b)| (t, a * t, b * (1.0 - t)))
}

fn population(n: usize, seed: u64) -> FinitePopulation {
    let u = SeedKey::from_u64(seed).stream(purpose::COVARIATES).uniforms(n * 5);
    let x = DMatrix::from_fn(n, 3, |i, j| if j == 0 { 1.0 } else { 4.0 * u[i * 5 + j] - 2.0 });
    let y1 = (0..n).map(|i| x[(i, 1)] * 2.0 + 3.0 * u[i * 5 + 3] - 1.0).collect();
    let y0 = (0..n).map(|i| -x[(i, 2)] + u[i * 5 + 4] * u[i * 5 + 4]).collect();
    FinitePopulation::new(x, y1, y0, true).unwrap()
}

fn ulps_apart(a: f64, b: f64) -> u64 {
    (a.to_bits() as i64).abs_diff(b.to_bits() as i64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn probabilities_are_compatible((pt, pr, prb) in prob_triple()) {
        let p = DecorrelationProbs::from_fit_probs(pt, pr, prb).unwrap();
        prop_assert!((p.pi_m() + p.pi_r() - p.pi_m() * p.pi_r() - pt).abs() <= COMPAT_TOL);
        prop_assert!((p.pi_mbar() + p.pi_rbar() - p.pi_mbar() * p.pi_rbar() - (1.0 - pt)).abs() <= COMPAT_TOL);
        for w in [p.treated_weights(), p.control_weights()] {
            prop_assert!(w.iter().all(|&v| v >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn quadruples_respect_dominance_and_disjointness(seed in any::<u64>(), (pt, pr, prb) in prob_triple(), n in 1usize..200) {
        let probs = DecorrelationProbs::from_fit_probs(pt, pr, prb).unwrap();
        let key = SeedKey::from_u64(seed);
        let t = draw_assignment(n, pt, &key.stream(purpose::ASSIGNMENT)).unwrap();
        let q = draw_quadruples(&t, &probs, &key.stream(purpose::QUADRUPLE));
        for i in 0..n {
            prop_assert!(!(q.r[i] || q.m[i]) || q.t[i]);
            prop_assert!(!(q.rbar[i] || q.mbar[i]) || !q.t[i]);
            prop_assert!(!(q.m[i] && q.mbar[i]));
            // Each unit lands in at least one subset of its arm.
            prop_assert!(q.r[i] || q.m[i] || q.rbar[i] || q.mbar[i]);
        }
        let again = draw_quadruples(&t, &probs, &key.stream(purpose::QUADRUPLE));
        prop_assert_eq!(q, again);
    }

    #[test]
    fn upper_bound_dominates_with_exact_gap(d1 in vec_in(12, -5.0, 5.0), d0 in vec_in(12, -5.0, 5.0), (pt, pr, prb) in prob_triple()) {
        let probs = DecorrelationProbs::from_fit_probs(pt, pr, prb).unwrap();
        let r = ResidualSet::new(d1.clone(), d0.clone()).unwrap();
        let gap: f64 = d1.iter().zip(&d0).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 12.0;
        let (vu, s2) = (v_upper(&r, &probs), sigma2_n(&r, &probs));
        prop_assert!(vu >= s2 - 1e-12 * vu.abs().max(1.0));
        prop_assert!((vu - s2 - gap).abs() <= 1e-9 * vu.abs().max(1.0));
    }

    #[test]
    fn mse_gap_is_the_oracle_variance_difference(d1 in vec_in(9, -3.0, 3.0), d0 in vec_in(9, -3.0, 3.0), (pt, pr, prb) in prob_triple()) {
        let probs = DecorrelationProbs::from_fit_probs(pt, pr, prb).unwrap();
        let r = ResidualSet::new(d1, d0).unwrap();
        let diff = dc_oracle_variance(&r, &probs) - adj_oracle_variance(&r, pt).unwrap();
        let dm = delta_mse(&r, &probs);
        prop_assert!(dm >= 0.0);
        prop_assert!((diff - dm).abs() <= 1e-9 * dm.abs().max(1.0));
    }

    #[test]
    fn intervals_are_symmetric(point in -1e3f64..1e3, v in 0.0f64..1e3, n in 1usize..100_000, alpha in 0.001f64..0.5) {
        let (lo, hi) = confidence_interval(point, v, n, alpha).unwrap();
        prop_assert!(lo <= point && point <= hi);
        let (up, down) = (hi - point, point - lo);
        prop_assert!(ulps_apart(up, down) <= 4 || (up - down).abs() <= 4.0 * f64::EPSILON * point.abs(), "{up} vs {down}");
    }

    #[test]
    fn report_json_round_trips(point in -1e6f64..1e6, v in prop::option::of(0.0f64..1e4), n in 1usize..10_000) {
        let r = EstimateReport::new("dc", point, v, n, 0.05).unwrap();
        let back: EstimateReport = serde_json::from_str(&r.to_json()).unwrap();
        prop_assert_eq!(back, r);
    }

    #[test]
    fn zero_fits_collapse_to_plain_differences(y in vec_in(20, -10.0, 10.0), seed in any::<u64>(), (pt, pr, prb) in prob_triple()) {
        let key = SeedKey::from_u64(seed);
        let t = draw_assignment(20, pt, &key.stream(purpose::ASSIGNMENT)).unwrap();
        let z = fit_zero(20);
        prop_assert_eq!(adj(&y, &t, &z, &z, pt).unwrap(), dim(&y, &t, pt).unwrap());

        let probs = DecorrelationProbs::from_fit_probs(pt, pr, prb).unwrap();
        let q = draw_quadruples(&t, &probs, &key.stream(purpose::QUADRUPLE));
        let (mut a, mut b) = (0.0, 0.0);
        for i in 0..20 {
            if q.m[i] { a += y[i]; }
            if q.mbar[i] { b += y[i]; }
        }
        let want = a / (20.0 * probs.pi_m()) - b / (20.0 * probs.pi_mbar());
        prop_assert!((dc(&y, &q, &z, &z, &probs).unwrap() - want).abs() <= 1e-12 * want.abs().max(1.0));
    }

    #[test]
    fn counterfactuals_never_reach_the_estimators(
        seed in any::<u64>(),
        (pt, pr, prb) in prob_triple(),
        noise in vec_in(40, -100.0, 100.0),
    ) {
        let n = 40;
        let pop = population(n, seed);
        let key = SeedKey::from_u64(seed ^ 0x5eed);
        let t = draw_assignment(n, pt, &key.stream(purpose::ASSIGNMENT)).unwrap();
        let probs = DecorrelationProbs::from_fit_probs(pt, pr, prb).unwrap();
        let q = draw_quadruples(&t, &probs, &key.stream(purpose::QUADRUPLE));

        // Overwrite every unobserved potential outcome.
        let y1: Vec<f64> = (0..n).map(|i| if t[i] { pop.y1()[i] } else { noise[i] }).collect();
        let y0: Vec<f64> = (0..n).map(|i| if t[i] { -noise[i] } else { pop.y0()[i] }).collect();
        let other = FinitePopulation::new(pop.x().clone(), y1, y0, true).unwrap();

        let run = |p: &FinitePopulation| {
            let y = p.observe(&t).unwrap();
            let fit = |mask: &[bool], prob: f64| {
                TrainingSubset::from_mask(mask, prob)
                    .ok()
                    .filter(|s| !s.is_empty())
                    .map(|s| fit_ols_minnorm(p.x(), &y, &s).unwrap())
                    .unwrap_or_else(|| fit_zero(n))
            };
            let (fr, frb) = (fit(&q.r, probs.pi_r()), fit(&q.rbar, probs.pi_rbar()));
            let c: Vec<bool> = t.iter().map(|b| !b).collect();
            let (f1, f0) = (fit(&t, pt), fit(&c, 1.0 - pt));
            (
                dim(&y, &t, pt).unwrap(),
                adj(&y, &t, &f1, &f0, pt).unwrap(),
                dc(&y, &q, &fr, &frb, &probs).unwrap(),
                v_hat(&y, &q, &fr, &frb, &probs).unwrap(),
            )
        };
        let (a, b) = (run(&pop), run(&other));
        prop_assert_eq!(a.0.to_bits(), b.0.to_bits());
        prop_assert_eq!(a.1.to_bits(), b.1.to_bits());
        prop_assert_eq!(a.2.to_bits(), b.2.to_bits());
        prop_assert_eq!(a.3.to_bits(), b.3.to_bits());
    }

    #[test]
    fn hajek_difference_ignores_constant_shifts(y in vec_in(15, -10.0, 10.0), c in -1e3f64..1e3, seed in any::<u64>()) {
        let t = draw_assignment(15, 0.5, &SeedKey::from_u64(seed).stream(purpose::ASSIGNMENT)).unwrap();
        prop_assume!(t.iter().any(|&b| b) && t.iter().any(|&b| !b));
        let shifted: Vec<f64> = y.iter().map(|v| v + c).collect();
        let (a, b) = (dim_hajek(&y, &t).unwrap(), dim_hajek(&shifted, &t).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + c.abs()));
    }

    #[test]
    fn linear_projection_is_orthogonal_and_permutation_equivariant(seed in any::<u64>(), n in 5usize..60) {
        let pop = population(n, seed);
        let (f1, f0) = pop.oracle_projection(&FunctionClassSpec::Linear).unwrap();
        let x = pop.x();
        for (y, f) in [(pop.y1(), &f1), (pop.y0(), &f0)] {
            let scale = y.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
            for j in 0..x.ncols() {
                let dot: f64 = (0..n).map(|i| x[(i, j)] * (y[i] - f[i])).sum();
                prop_assert!(dot.abs() <= 1e-8 * scale * n as f64);
            }
        }

        let perm: Vec<usize> = (0..n).rev().collect();
        let xp = DMatrix::from_fn(n, x.ncols(), |i, j| x[(perm[i], j)]);
        let pick = |v: &[f64]| perm.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let permuted = FinitePopulation::new(xp, pick(pop.y1()), pick(pop.y0()), true).unwrap();
        prop_assert!((permuted.ate() - pop.ate()).abs() <= 1e-12 * pop.ate().abs().max(1.0));
        let (g1, _) = permuted.oracle_projection(&FunctionClassSpec::Linear).unwrap();
        for i in 0..n {
            prop_assert!((g1[i] - f1[perm[i]]).abs() <= 1e-8 * (1.0 + f1[perm[i]].abs()));
        }
    }

    #[test]
    fn regressogram_projection_is_optimal(y in vec_in(30, -5.0, 5.0), bins in 1usize..8, bump in -1e-3f64..1e-3) {
        let x = DMatrix::from_fn(30, 1, |i, _| i as f64 / 30.0);
        let pop = FinitePopulation::new(x, y.clone(), vec![0.0; 30], false).unwrap();
        let (f, _) = pop.oracle_projection(&FunctionClassSpec::Regressogram { column: 0, bins }).unwrap();
        let sse = |g: &[f64]| y.iter().zip(g).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let base = sse(&f);
        for b in 0..bins {
            let moved: Vec<f64> = (0..30)
                .map(|i| if ((i as f64 / 30.0) * bins as f64).floor() as usize == b { f[i] + bump } else { f[i] })
                .collect();
            prop_assert!(sse(&moved) >= base - 1e-10);
        }
    }

    #[test]
    fn least_squares_residuals_are_orthogonal_and_nested(seed in any::<u64>(), n in 8usize..50, keep in 0.3f64..1.0) {
        let pop = population(n, seed);
        let mask: Vec<bool> = SeedKey::from_u64(seed).stream(purpose::PROBE).uniforms(n).iter().map(|&u| u < keep).collect();
        prop_assume!(mask.iter().filter(|&&b| b).count() >= 2);
        let subset = TrainingSubset::from_mask(&mask, keep).unwrap();
        let y = pop.y1();
        let full = fit_ols_minnorm(pop.x(), y, &subset).unwrap();
        let x_small = pop.x().columns(0, 2).into_owned();
        let small = fit_ols_minnorm(&x_small, y, &subset).unwrap();
        let sse = |p: &[f64]| subset.indices().iter().map(|&i| (y[i] - p[i]).powi(2)).sum::<f64>();
        let (a, b) = (sse(full.predictions()), sse(small.predictions()));
        prop_assert!(a <= b + 1e-9 * b.max(1.0));
        for j in 0..3 {
            let dot: f64 = subset.indices().iter().map(|&i| pop.x()[(i, j)] * (y[i] - full.predictions()[i])).sum();
            prop_assert!(dot.abs() <= 1e-8 * n as f64 * 10.0);
        }
    }

    #[test]
    fn interpolation_has_zero_training_error(y in vec_in(25, -5.0, 5.0), keep in 0.2f64..0.9, seed in any::<u64>()) {
        let mask: Vec<bool> = SeedKey::from_u64(seed).stream(purpose::PROBE).uniforms(25).iter().map(|&u| u < keep).collect();
        prop_assume!(mask.iter().any(|&b| b));
        let subset = TrainingSubset::from_mask(&mask, keep).unwrap();
        let xs: Vec<f64> = (0..25).map(|i| i as f64 / 25.0).collect();
        let base = fit_regressogram(&xs, &y, &subset, 0.5).unwrap();
        let wrapped = interpolate_wrap(&base, &y, &subset).unwrap();
        for &i in subset.indices() {
            prop_assert_eq!(wrapped.predictions()[i], y[i]);
        }
        prop_assert_eq!(wrapped.train_error(), 0.0);
    }

    #[test]
    fn regressogram_stays_inside_shrunken_bin_means(
        y in vec_in(60, -5.0, 5.0),
        alpha in 0.1f64..1.0,
        keep in 0.1f64..0.9,
        seed in any::<u64>(),
    ) {
        let n = 60;
        let mask: Vec<bool> = SeedKey::from_u64(seed).stream(purpose::PROBE).uniforms(n).iter().map(|&u| u < keep).collect();
        prop_assume!(mask.iter().any(|&b| b));
        let subset = TrainingSubset::from_mask(&mask, keep).unwrap();
        let xs: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let fit = fit_regressogram(&xs, &y, &subset, alpha).unwrap();
        let bins = bin_count(n, alpha);
        let mut sum = vec![0.0; bins];
        let mut cnt = vec![0usize; bins];
        for &i in subset.indices() {
            let b = ((xs[i] * bins as f64).floor() as usize).min(bins - 1);
            sum[b] += y[i];
            cnt[b] += 1;
        }
        let means: Vec<f64> = (0..bins).filter(|&b| cnt[b] > 0).map(|b| sum[b] / cnt[b] as f64).collect();
        let s = shrink_factor(n, alpha);
        let lo = s * means.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = s * means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for &p in fit.predictions() {
            prop_assert!(p >= lo - 1e-12 && p <= hi + 1e-12, "{p} outside [{lo}, {hi}]");
        }
    }

    #[test]
    fn residual_uniformity_lies_in_unit_range(d1 in vec_in(15, -4.0, 4.0), d0 in vec_in(15, -4.0, 4.0)) {
        let r = ResidualSet::new(d1, d0).unwrap();
        let mu = residual_uniformity(&r).unwrap();
        prop_assert!(mu >= 1.0 / 15.0 - 1e-12 && mu <= 1.0 + 1e-12);
    }

    #[test]
    fn bounds_scale_homogeneously(k2 in 0.01f64..2.0, d2 in 0.01f64..5.0, d in 2usize..500, pr in 0.01f64..0.4, delta in 0.01f64..0.5, s in 0.1f64..10.0) {
        let b = ols_bound(k2, d2, d, pr, delta).unwrap();
        prop_assert!((ols_bound(k2, s * d2, d, pr, delta).unwrap() - s * b).abs() <= 1e-12 * s * b.max(1.0));
        prop_assert!((ols_bound(k2, d2, d, pr / 2.0, delta).unwrap() - b * 2f64.sqrt()).abs() <= 1e-12 * b.max(1.0));

        let base = LassoBoundInputs { x_inf: 1.5, y_inf: d2, k: 3, d, gamma: k2, n: 400, pi_r: pr, lambda: 0.0, delta };
        let l = lasso_bound(&base).unwrap();
        let scaled = lasso_bound(&LassoBoundInputs { y_inf: s * d2, ..base }).unwrap();
        prop_assert!((scaled - s * l).abs() <= 1e-12 * s * l.max(1.0));

        let t = deviation_bound_formula(k2, d2, pr, 1.0 - pr, delta).unwrap();
        let ts = deviation_bound_formula(s * k2, s * d2, pr, 1.0 - pr, delta).unwrap();
        prop_assert!((ts - s * t).abs() <= 1e-12 * s * t.max(1.0));
    }

    #[test]
    fn lasso_fits_are_feasible_and_descend(seed in any::<u64>(), lambda in 0.0f64..0.5, cap in 0.2f64..3.0) {
        let n = 30;
        let u = SeedKey::from_u64(seed).stream(purpose::COVARIATES).uniforms(n * 5);
        let x = DMatrix::from_fn(n, 4, |i, j| 2.0 * u[i * 5 + j] - 1.0);
        let y: Vec<f64> = (0..n).map(|i| 3.0 * x[(i, 0)] - x[(i, 2)] + u[i * 5 + 4]).collect();
        let subset = TrainingSubset::new((0..n).step_by(2).collect(), 0.5, n).unwrap();
        let spec = LassoSpec::new(lambda, cap, x.amax()).unwrap();
        let fit = fit_lasso_constrained(&x, &y, &subset, &spec).unwrap();
        prop_assert!(fit.fitted.predictions().iter().all(|p| p.abs() <= cap * (1.0 + 1e-9)));
        let split = fit.rescaled_at.unwrap_or(fit.objective_trace.len());
        for seg in [&fit.objective_trace[..split], &fit.objective_trace[split..]] {
            for w in seg.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn critical_radius_shrinks_with_more_data_and_larger_fits(alpha in 0.3f64..4.0, c in 0.1f64..5.0, pr in 0.02f64..0.2) {
        let e = EntropySpec::Polynomial { alpha, c };
        let r = |n: usize, p: f64| critical_radius(&e, n, p, 0.05).unwrap().r;
        let base = r(4096, pr);
        prop_assert!(r(4096, 2.0 * pr) <= base * (1.0 + 1e-9));
        prop_assert!(r(16384, pr) <= base * (1.0 + 1e-9));
    }

    #[test]
    fn re_probe_never_undercuts_grid_lower_bound(seed in any::<u64>(), k in 0usize..3) {
        // d = 3: a spherical grid with covering radius ρ bounds γ from below by
        // min over the ρ-relaxed cone of θᵀAθ minus 2‖A‖ρ.
        let n = 12;
        let u = SeedKey::from_u64(seed).stream(purpose::COVARIATES).uniforms(n * 3);
        let x = DMatrix::from_fn(n, 3, |i, j| u[i * 3 + j] - 0.5 + if j == 2 { 0.8 * (u[i * 3] - 0.5) } else { 0.0 });
        let a = x.tr_mul(&x) / n as f64;
        let a_norm = a.symmetric_eigenvalues().amax();

        let steps = 360usize;
        let h_phi = std::f64::consts::PI / steps as f64;
        let h_psi = 2.0 * std::f64::consts::PI / (2 * steps) as f64;
        let rho = 0.5 * (h_phi * h_phi + h_psi * h_psi).sqrt();
        let slack = 4.0 * 3f64.sqrt() * rho;
        let mut lower = f64::INFINITY;
        for i in 0..=steps {
            let phi = i as f64 * h_phi;
            for j in 0..2 * steps {
                let psi = j as f64 * h_psi;
                let th = [phi.sin() * psi.cos(), phi.sin() * psi.sin(), phi.cos()];
                let on = th[k].abs();
                let off: f64 = (0..3).filter(|&m| m != k).map(|m| th[m].abs()).sum();
                if off <= 3.0 * on + slack {
                    let v = nalgebra::Vector3::from(th);
                    let q = v.dot(&(a.fixed_view::<3, 3>(0, 0) * v));
                    lower = lower.min(q);
                }
            }
        }
        let lower = lower - 2.0 * a_norm * rho;
        let probe = re_constant_probe(&x, &[k], 500, &SeedKey::from_u64(seed).stream(purpose::PROBE)).unwrap();
        prop_assert!(probe.upper_bound >= lower, "{} < {}", probe.upper_bound, lower);
    }
}

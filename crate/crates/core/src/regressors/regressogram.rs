use super::{Backend, FittedFunction, TrainingSubset};
use crate::error::{check_len, Error, Result};

/// Smallest integer not below `v`, ignoring float noise of a few ulps
/// (so `8^(1/3)` counts as 2, not 3).
fn robust_ceil(v: f64) -> usize {
    let r = v.round();
    if (v - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r as usize
    } else {
        v.ceil() as usize
    }
}

/// Number of equal-width segments, `⌈n^{1/(1+2α)}⌉`.
pub fn bin_count(n: usize, alpha: f64) -> usize {
    robust_ceil((n as f64).powf(1.0 / (1.0 + 2.0 * alpha))).max(1)
}

/// Multiplicative shrinkage `1 − n^{−α/(2α+1)}`.
pub fn shrink_factor(n: usize, alpha: f64) -> f64 {
    1.0 - (n as f64).powf(-alpha / (2.0 * alpha + 1.0))
}

/// Segment of `[0, 1]` containing `x`; `x = 1` falls in the last segment.
pub(crate) fn bin_of(x: f64, bins: usize) -> usize {
    let b = (x * bins as f64).floor();
    if b <= 0.0 {
        0
    } else {
        (b as usize).min(bins - 1)
    }
}

/// Shrunken regressogram on a one-dimensional design in `[0, 1]`.
///
/// Segments without any subset point predict the shrunken mean of the whole
/// subset.
pub fn fit_regressogram(x: &[f64], y: &[f64], subset: &TrainingSubset, alpha: f64) -> Result<FittedFunction> {
    check_len("y", x.len(), y.len())?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidInput(format!("Hölder exponent {alpha} must lie in (0, 1]")));
    }
    if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidInput("regressogram covariate must lie in [0, 1]".into()));
    }
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    let n = x.len();
    let bins = bin_count(n, alpha);
    let shrink = shrink_factor(n, alpha);

    let mut sum = vec![0.0; bins];
    let mut cnt = vec![0usize; bins];
    for &i in subset.indices() {
        let b = bin_of(x[i], bins);
        sum[b] += y[i];
        cnt[b] += 1;
    }
    let global = sum.iter().sum::<f64>() / subset.len() as f64;
    let level: Vec<f64> = sum
        .iter()
        .zip(&cnt)
        .map(|(&s, &c)| shrink * if c > 0 { s / c as f64 } else { global })
        .collect();
    let pred = x.iter().map(|&xi| level[bin_of(xi, bins)]).collect();
    FittedFunction::trained(pred, y, subset, Backend::Regressogram, None)
}

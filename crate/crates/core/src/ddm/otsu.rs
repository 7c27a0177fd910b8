//! Otsu thresholding over a 256-bin histogram.

use crate::{Error, Result};

pub const OTSU_BINS: usize = 256;

/// Threshold maximizing the between-class variance of a 256-bin histogram
/// over values in [0, 1]. Ties break toward the smallest qualifying
/// threshold; the returned value is the lower edge of the first bin of the
/// upper class, so `v >= threshold` selects the upper class.
pub fn otsu_threshold(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::domain(
            "otsu_threshold needs at least two values".to_string(),
        ));
    }
    if values.iter().any(|v| !v.is_finite() || !(0.0..=1.0).contains(v)) {
        return Err(Error::domain(
            "otsu_threshold expects values in [0, 1]".to_string(),
        ));
    }
    let hist = histogram(values);
    let total = values.len() as f64;
    let total_sum: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, &n)| i as f64 * n as f64)
        .sum();

    let mut best_k = None;
    let mut best_var = 0.0;
    let mut w0 = 0.0;
    let mut sum0 = 0.0;
    // Candidate k: class 0 holds bins 0..=k, class 1 holds the rest.
    for (k, &count) in hist.iter().enumerate().take(OTSU_BINS - 1) {
        w0 += count as f64;
        sum0 += k as f64 * count as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let mu0 = sum0 / w0;
        let mu1 = (total_sum - sum0) / w1;
        let var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if var > best_var {
            best_var = var;
            best_k = Some(k);
        }
    }
    match best_k {
        Some(k) => Ok((k + 1) as f64 / OTSU_BINS as f64),
        None => Err(Error::DegenerateHistogram),
    }
}

pub(crate) fn histogram(values: &[f64]) -> [u32; OTSU_BINS] {
    let mut hist = [0u32; OTSU_BINS];
    for &v in values {
        let bin = ((v * OTSU_BINS as f64) as usize).min(OTSU_BINS - 1);
        hist[bin] += 1;
    }
    hist
}

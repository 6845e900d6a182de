//! Learning-curve post-processing for log-scale rate inspection.

use std::ops::Range;

use serde::Serialize;

/// Subtracts `discount` times the mean of the last `tail_window` points and
/// clamps the result at machine epsilon so it can be plotted on a log axis.
pub fn bias_subtracted_series(series: &[f64], tail_window: usize, discount: f64) -> Vec<f64> {
    if series.is_empty() {
        return Vec::new();
    }
    let w = tail_window.clamp(1, series.len());
    let tail = &series[series.len() - w..];
    let bias = discount * tail.iter().sum::<f64>() / w as f64;
    series.iter().map(|&y| (y - bias).max(f64::EPSILON)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    /// Per-index slope of `ln y`; `exp(slope)` is the per-point contraction.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(i, ln series[i])` for `i` in `window`.
/// Non-positive and non-finite points are skipped. `None` with fewer than two
/// usable points.
pub fn linear_rate_fit(series: &[f64], window: Range<usize>) -> Option<LinearFit> {
    let end = window.end.min(series.len());
    let pts: Vec<(f64, f64)> = (window.start..end)
        .filter(|&i| series[i] > 0.0 && series[i].is_finite())
        .map(|i| (i as f64, series[i].ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    Some(LinearFit { slope, intercept, r_squared })
}

/// The middle half of `0..len`.
pub fn middle_half(len: usize) -> Range<usize> {
    len / 4..len - len / 4
}

//! Percentiles with linear interpolation between order statistics.
//!
//! For `n` sorted values and percentile `p`, the rank is `h = (n - 1) * p / 100`
//! and the result is `x[floor(h)] + (h - floor(h)) * (x[floor(h) + 1] - x[floor(h)])`.
//! This is the same rule as numpy's default `linear` method.

/// Percentile of already-sorted data. `p` is in `[0, 100]`.
///
/// Panics on empty input.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty slice");
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * (p / 100.0).clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    if lo >= n - 1 {
        return sorted[n - 1];
    }
    let frac = h - lo as f64;
    let (a, b) = (sorted[lo], sorted[lo + 1]);
    if frac == 0.0 {
        a
    } else {
        a + frac * (b - a)
    }
}

/// Sorts a copy of `values` and evaluates each percentile in `ps`.
pub fn percentiles(values: &[f64], ps: &[f64]) -> Vec<f64> {
    let sorted = sorted_copy(values);
    ps.iter().map(|&p| percentile_sorted(&sorted, p)).collect()
}

pub fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}

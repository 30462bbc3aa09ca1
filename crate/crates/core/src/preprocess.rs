//! Intensity conditioning applied before mixture fitting.
//!
//! All statistics are taken over masked voxels only; unmasked voxels are
//! written as 0 in every output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantile::{percentile_sorted, sorted_copy};
use crate::volume::Volume;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipNormReport {
    /// Intensity at the lower clip percentile.
    pub p_low: f64,
    /// Intensity at the upper clip percentile.
    pub p_high: f64,
    /// Min and max of the masked output values.
    pub applied_range: (f64, f64),
}

/// How a corpus or a single image is brought onto the unit interval before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum NormalizeMode {
    /// Clip at the configured percentiles, then map `[p_low, p_high]` onto `[0, 1]`.
    #[default]
    #[serde(rename = "minmax01")]
    MinMax01,
    /// Inputs are already on the unit interval; intensities are used as-is.
    #[serde(rename = "none")]
    None,
}

/// Preprocessing descriptor stored alongside population statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub clip_lo_pct: f64,
    pub clip_hi_pct: f64,
    pub normalize: NormalizeMode,
}

impl Default for Preprocessing {
    fn default() -> Self {
        Self {
            clip_lo_pct: 1.0,
            clip_hi_pct: 99.0,
            normalize: NormalizeMode::MinMax01,
        }
    }
}

impl Preprocessing {
    pub fn validate(&self) -> Result<()> {
        check_pcts(self.clip_lo_pct, self.clip_hi_pct)
    }

    /// Applies the descriptor. With [`NormalizeMode::None`] the volume is
    /// only masked (unmasked voxels zeroed).
    pub fn apply(&self, vol: &Volume, mask: &[bool]) -> Result<Volume> {
        match self.normalize {
            NormalizeMode::MinMax01 => clip_normalize(vol, mask, self.clip_lo_pct, self.clip_hi_pct).map(|(v, _)| v),
            NormalizeMode::None => {
                check_mask(vol, mask)?;
                let data = vol
                    .data()
                    .iter()
                    .zip(mask)
                    .map(|(&v, &m)| if m { v } else { 0.0 })
                    .collect();
                vol.with_data(data)
            }
        }
    }
}

fn check_pcts(lo: f64, hi: f64) -> Result<()> {
    if !(0.0..=100.0).contains(&lo) || !(0.0..=100.0).contains(&hi) || lo >= hi {
        return Err(Error::InvalidArgument(format!(
            "percentiles must satisfy 0 <= lo < hi <= 100, got lo={lo} hi={hi}"
        )));
    }
    Ok(())
}

fn check_mask(vol: &Volume, mask: &[bool]) -> Result<()> {
    if mask.len() != vol.len() {
        return Err(Error::ShapeMismatch {
            expected: vol.dims().to_vec(),
            found: vec![mask.len()],
        });
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::EmptyMask);
    }
    Ok(())
}

/// Clips masked intensities to their `[lo_pct, hi_pct]` percentiles and maps
/// that range affinely onto `[0, 1]`.
pub fn clip_normalize(vol: &Volume, mask: &[bool], lo_pct: f64, hi_pct: f64) -> Result<(Volume, ClipNormReport)> {
    check_pcts(lo_pct, hi_pct)?;
    check_mask(vol, mask)?;
    let sorted = sorted_copy(&vol.masked_values(mask)?);
    let p_low = percentile_sorted(&sorted, lo_pct);
    let p_high = percentile_sorted(&sorted, hi_pct);
    if p_low >= p_high {
        return Err(Error::DegenerateIntensity(format!(
            "percentiles {lo_pct} and {hi_pct} coincide at {p_low}"
        )));
    }
    let width = p_high - p_low;
    let mut lo_seen = f64::INFINITY;
    let mut hi_seen = f64::NEG_INFINITY;
    let data: Vec<f64> = vol
        .data()
        .iter()
        .zip(mask)
        .map(|(&v, &m)| {
            if !m {
                return 0.0;
            }
            let out = ((v.clamp(p_low, p_high) - p_low) / width).clamp(0.0, 1.0);
            lo_seen = lo_seen.min(out);
            hi_seen = hi_seen.max(out);
            out
        })
        .collect();
    let report = ClipNormReport {
        p_low,
        p_high,
        applied_range: (lo_seen, hi_seen),
    };
    Ok((vol.with_data(data)?, report))
}

/// `(v - median) / sd_inner`, where `sd_inner` is the population standard
/// deviation of the masked values lying within their 10th..90th percentiles.
pub fn robust_zscore(vol: &Volume, mask: &[bool]) -> Result<Volume> {
    check_mask(vol, mask)?;
    let sorted = sorted_copy(&vol.masked_values(mask)?);
    let median = percentile_sorted(&sorted, 50.0);
    let p10 = percentile_sorted(&sorted, 10.0);
    let p90 = percentile_sorted(&sorted, 90.0);
    let inner: Vec<f64> = sorted.iter().copied().filter(|&v| v >= p10 && v <= p90).collect();
    let sd = population_sd(&inner);
    if p90 <= p10 || !(sd > 0.0) {
        return Err(Error::DegenerateIntensity(
            "zero spread between the 10th and 90th percentiles".into(),
        ));
    }
    let data = vol
        .data()
        .iter()
        .zip(mask)
        .map(|(&v, &m)| if m { (v - median) / sd } else { 0.0 })
        .collect();
    vol.with_data(data)
}

fn population_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

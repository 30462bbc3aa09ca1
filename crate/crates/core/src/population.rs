//! Corpus-level spread of mixture parameters.
//!
//! Every image is masked (`intensity > 0`), preprocessed, and fitted on its
//! own. For each component index (after the per-image mean sort) the sample
//! mean and sample standard deviation (n - 1 denominator) of the fitted
//! means and variances across images are recorded. Those standard deviations
//! bound the perturbations drawn in [`crate::augment`].

use std::fs;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{fit_em, EmConfig, GmmParams};
use crate::preprocess::Preprocessing;
use crate::volume::{foreground_mask, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpread {
    pub mu_mean: f64,
    pub mu_std: f64,
    pub var_mean: f64,
    pub var_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationStats {
    pub k: usize,
    pub components: Vec<ComponentSpread>,
    pub n_images: usize,
    pub preprocessing: Preprocessing,
}

impl PopulationStats {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.components.len() != self.k {
            return Err(Error::InvalidStats(format!(
                "k = {} but {} components listed",
                self.k,
                self.components.len()
            )));
        }
        if self.n_images < 2 {
            return Err(Error::InvalidStats(format!(
                "n_images = {}; at least 2 are needed for a spread",
                self.n_images
            )));
        }
        for (i, c) in self.components.iter().enumerate() {
            let fields = [c.mu_mean, c.mu_std, c.var_mean, c.var_std];
            if fields.iter().any(|f| !f.is_finite()) {
                return Err(Error::InvalidStats(format!("component {i} has a non-finite field")));
            }
            if c.mu_std < 0.0 || c.var_std < 0.0 {
                return Err(Error::InvalidStats(format!("component {i} has a negative spread")));
            }
        }
        if self.components.windows(2).any(|w| w[0].mu_mean > w[1].mu_mean) {
            return Err(Error::InvalidStats("components are not ordered by mu_mean".into()));
        }
        self.preprocessing
            .validate()
            .map_err(|e| Error::InvalidStats(e.to_string()))
    }

    pub fn mu_std(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.mu_std).collect()
    }

    pub fn var_std(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.var_std).collect()
    }
}

/// Statistics together with the images that could not be fitted.
#[derive(Debug)]
pub struct PopulationFit {
    pub stats: PopulationStats,
    /// Per-image fits in input order (`None` where the image was skipped).
    pub fits: Vec<Option<GmmParams>>,
    pub skipped: Vec<(usize, Error)>,
}

/// Fits one image the way the corpus estimator does.
pub fn fit_image(vol: &Volume, k: usize, prep: &Preprocessing, cfg: &EmConfig) -> Result<GmmParams> {
    let mask = foreground_mask(vol, None)?;
    let normalized = prep.apply(vol, &mask)?;
    let values = normalized.masked_values(&mask)?;
    fit_em(&values, k, cfg)
}

pub fn estimate_population(volumes: &[Volume], k: usize, cfg: &EmConfig) -> Result<PopulationStats> {
    estimate_population_with(volumes, k, &Preprocessing::default(), cfg).map(|f| f.stats)
}

pub fn estimate_population_with(
    volumes: &[Volume],
    k: usize,
    prep: &Preprocessing,
    cfg: &EmConfig,
) -> Result<PopulationFit> {
    prep.validate()?;
    let results: Vec<Result<GmmParams>> = volumes.par_iter().map(|v| fit_image(v, k, prep, cfg)).collect();

    let mut fits = Vec::with_capacity(results.len());
    let mut skipped = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(p) => fits.push(Some(p)),
            Err(e) => {
                warn!("image {i} skipped: {e}");
                skipped.push((i, e));
                fits.push(None);
            }
        }
    }
    let ok: Vec<&GmmParams> = fits.iter().flatten().collect();
    let stats = aggregate(&ok, k, *prep)?;
    Ok(PopulationFit { stats, fits, skipped })
}

/// Reduces per-image fits to per-component spreads.
pub fn aggregate(fits: &[&GmmParams], k: usize, prep: Preprocessing) -> Result<PopulationStats> {
    if fits.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} successful fits; need at least 2",
            fits.len()
        )));
    }
    let components = (0..k)
        .map(|j| {
            let mus: Vec<f64> = fits.iter().map(|p| p.means[j]).collect();
            let vars: Vec<f64> = fits.iter().map(|p| p.variances[j]).collect();
            let (mu_mean, mu_std) = mean_and_sample_sd(&mus);
            let (var_mean, var_std) = mean_and_sample_sd(&vars);
            ComponentSpread {
                mu_mean,
                mu_std,
                var_mean,
                var_std,
            }
        })
        .collect();
    Ok(PopulationStats {
        k,
        components,
        n_images: fits.len(),
        preprocessing: prep,
    })
}

/// Mean and n-1 standard deviation, summed in sorted order so the result
/// does not depend on the order of the corpus.
fn mean_and_sample_sd(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

pub fn save_stats(stats: &PopulationStats, path: impl AsRef<Path>) -> Result<()> {
    stats.validate()?;
    fs::write(path, serde_json::to_string_pretty(stats)?)?;
    Ok(())
}

pub fn load_stats(path: impl AsRef<Path>) -> Result<PopulationStats> {
    parse_stats(&fs::read_to_string(path)?)
}

pub fn parse_stats(json: &str) -> Result<PopulationStats> {
    let stats: PopulationStats = serde_json::from_str(json).map_err(|e| Error::InvalidStats(e.to_string()))?;
    stats.validate()?;
    Ok(stats)
}

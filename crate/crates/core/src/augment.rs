//! Mixture perturbation and the distance-preserving intensity remap.
//!
//! For a voxel `v` and component `k` the standardized distance
//! `d = (v - mu_k) / sigma_k` is kept fixed while the component moves to
//! `(mu'_k, sigma'_k)`, giving `v'_k = mu'_k + d * sigma'_k`. The per-component
//! values are merged with the posterior responsibilities of the original fit,
//! `v' = sum_k gamma_k(v) * v'_k`, which reduces to `v` for a zero
//! perturbation. Hard assignment to the most probable component is available
//! through [`RemapOptions::hard_assign`].

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{argmax, fit_em, EmConfig, GmmParams, LogTerms, VARIANCE_FLOOR};
use crate::population::PopulationStats;
use crate::preprocess::Preprocessing;
use crate::rng;
use crate::volume::{foreground_mask, LabelVolume, Volume};

/// Sampled shifts for one augmentation draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub q_mu: Vec<f64>,
    pub q_var: Vec<f64>,
    pub seed: u64,
}

impl Perturbation {
    pub fn zero(k: usize) -> Self {
        Self {
            q_mu: vec![0.0; k],
            q_var: vec![0.0; k],
            seed: 0,
        }
    }
}

/// Draws `q_mu[k] ~ U(-mu_std_k, mu_std_k)` and `q_var[k] ~ U(-var_std_k, var_std_k)`.
///
/// Draw order is component 0 `q_mu`, component 0 `q_var`, component 1 `q_mu`, ...
/// from [`rng::stream`]`(seed)`.
pub fn sample_perturbation(stats: &PopulationStats, seed: u64) -> Perturbation {
    let mut r = rng::stream(seed);
    draw(stats, &mut r, seed)
}

fn draw(stats: &PopulationStats, r: &mut rng::StreamRng, seed: u64) -> Perturbation {
    let mut q_mu = Vec::with_capacity(stats.k);
    let mut q_var = Vec::with_capacity(stats.k);
    for c in &stats.components {
        q_mu.push(rng::symmetric(r, c.mu_std));
        q_var.push(rng::symmetric(r, c.var_std));
    }
    Perturbation { q_mu, q_var, seed }
}

/// Like [`sample_perturbation`], but keeps drawing from the same stream until
/// the perturbed means of `params` stay strictly ascending.
pub fn sample_order_preserving(
    stats: &PopulationStats,
    params: &GmmParams,
    seed: u64,
    max_tries: usize,
) -> Result<Perturbation> {
    check_k(params.k, stats.k)?;
    let mut r = rng::stream(seed);
    for attempt in 0..max_tries {
        let q = draw(stats, &mut r, seed);
        let ordered = params
            .means
            .iter()
            .zip(&q.q_mu)
            .map(|(m, d)| m + d)
            .collect::<Vec<_>>()
            .windows(2)
            .all(|w| w[0] < w[1]);
        if ordered {
            if attempt > 0 {
                debug!("seed {seed}: order-preserving draw after {attempt} rejections");
            }
            return Ok(q);
        }
    }
    Err(Error::InvalidArgument(format!(
        "no order-preserving perturbation in {max_tries} draws for seed {seed}"
    )))
}

fn check_k(got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::ShapeMismatch {
            expected: vec![want],
            found: vec![got],
        });
    }
    Ok(())
}

/// A fitted mixture together with its shifted parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedGmm {
    pub base: GmmParams,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    /// Components whose shifted variance fell below the floor and was clamped.
    pub clamped: Vec<usize>,
}

impl PerturbedGmm {
    /// The shifted model as a mixture with the base weights.
    pub fn as_params(&self) -> GmmParams {
        GmmParams {
            k: self.base.k,
            weights: self.base.weights.clone(),
            means: self.means.clone(),
            variances: self.variances.clone(),
            log_likelihood: 0.0,
            iterations: 0,
        }
    }

    /// `mu'_k + ((v - mu_k) / sigma_k) * sigma'_k`.
    #[inline]
    pub fn component_value(&self, v: f64, k: usize) -> f64 {
        let d = (v - self.base.means[k]) / self.base.variances[k].sqrt();
        self.means[k] + d * self.variances[k].sqrt()
    }
}

pub fn apply_perturbation(params: &GmmParams, q: &Perturbation) -> Result<PerturbedGmm> {
    check_k(q.q_mu.len(), params.k)?;
    check_k(q.q_var.len(), params.k)?;
    let means = params.means.iter().zip(&q.q_mu).map(|(m, d)| m + d).collect();
    let mut clamped = Vec::new();
    let variances = params
        .variances
        .iter()
        .zip(&q.q_var)
        .enumerate()
        .map(|(k, (v, d))| {
            let shifted = v + d;
            if shifted < VARIANCE_FLOOR {
                clamped.push(k);
                VARIANCE_FLOOR
            } else {
                shifted
            }
        })
        .collect();
    if !clamped.is_empty() {
        warn!("seed {}: variance clamped to floor for components {clamped:?}", q.seed);
    }
    Ok(PerturbedGmm {
        base: params.clone(),
        means,
        variances,
        clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemapOptions {
    /// Use only the most probable component instead of the responsibility-weighted sum.
    pub hard_assign: bool,
    /// Clip remapped values to `[0, 1]`.
    pub clip_output: bool,
}

impl Default for RemapOptions {
    fn default() -> Self {
        Self {
            hard_assign: false,
            clip_output: true,
        }
    }
}

/// Remaps every masked voxel of `vol` from `pert.base` to the shifted model.
/// Unmasked voxels are copied unchanged.
pub fn remap(vol: &Volume, mask: &[bool], pert: &PerturbedGmm, opts: RemapOptions) -> Result<Volume> {
    if mask.len() != vol.len() {
        return Err(Error::ShapeMismatch {
            expected: vol.dims().to_vec(),
            found: vec![mask.len()],
        });
    }
    let k = pert.base.k;
    let terms = LogTerms::from_params(&pert.base);
    let mut out = vol.data().to_vec();
    out.par_chunks_mut(1 << 14)
        .zip(mask.par_chunks(1 << 14))
        .for_each(|(vs, ms)| {
            let mut gamma = vec![0.0; k];
            for (v, &m) in vs.iter_mut().zip(ms) {
                if !m {
                    continue;
                }
                terms.posterior(*v, &mut gamma);
                let mapped = if opts.hard_assign {
                    pert.component_value(*v, argmax(&gamma))
                } else {
                    gamma
                        .iter()
                        .enumerate()
                        .map(|(j, g)| g * pert.component_value(*v, j))
                        .sum()
                };
                *v = if opts.clip_output {
                    mapped.clamp(0.0, 1.0)
                } else {
                    mapped
                };
            }
        });
    vol.with_data(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub em: EmConfig,
    pub remap: RemapOptions,
    /// Redraw perturbations whose shifted means change the component order.
    pub reject_order_inversion: bool,
    pub max_redraws: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            em: EmConfig::default(),
            remap: RemapOptions::default(),
            reject_order_inversion: false,
            max_redraws: 10_000,
        }
    }
}

/// Sidecar record written next to each augmented volume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub fit: GmmParams,
    pub perturbation: PerturbationTerms,
    pub clamped_variances: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationTerms {
    pub q_mu: Vec<f64>,
    pub q_var: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Augmented {
    pub volume: Volume,
    pub fit: GmmParams,
    pub perturbation: Perturbation,
    pub perturbed: PerturbedGmm,
}

impl Augmented {
    pub fn provenance(&self) -> Provenance {
        Provenance {
            seed: self.perturbation.seed,
            fit: self.fit.clone(),
            perturbation: PerturbationTerms {
                q_mu: self.perturbation.q_mu.clone(),
                q_var: self.perturbation.q_var.clone(),
            },
            clamped_variances: self.perturbed.clamped.clone(),
        }
    }
}

/// Mask, normalized intensities and mixture fit of one input, reusable
/// across any number of draws.
#[derive(Debug, Clone)]
pub struct PreparedVolume {
    pub mask: Vec<bool>,
    pub normalized: Volume,
    pub fit: GmmParams,
}

impl PreparedVolume {
    pub fn new(
        vol: &Volume,
        explicit_mask: Option<&LabelVolume>,
        k: usize,
        prep: &Preprocessing,
        em: &EmConfig,
    ) -> Result<Self> {
        let mask = foreground_mask(vol, explicit_mask)?;
        let normalized = prep.apply(vol, &mask)?;
        let fit = fit_em(&normalized.masked_values(&mask)?, k, em)?;
        Ok(Self { mask, normalized, fit })
    }

    pub fn draw(&self, stats: &PopulationStats, seed: u64, cfg: &AugmentConfig) -> Result<Augmented> {
        check_k(self.fit.k, stats.k)?;
        let perturbation = if cfg.reject_order_inversion {
            sample_order_preserving(stats, &self.fit, seed, cfg.max_redraws)?
        } else {
            sample_perturbation(stats, seed)
        };
        let perturbed = apply_perturbation(&self.fit, &perturbation)?;
        let volume = remap(&self.normalized, &self.mask, &perturbed, cfg.remap)?;
        Ok(Augmented {
            volume,
            fit: self.fit.clone(),
            perturbation,
            perturbed,
        })
    }
}

/// Full pipeline: mask, preprocess as recorded in `stats`, fit, sample, shift, remap.
pub fn augment_volume(vol: &Volume, stats: &PopulationStats, seed: u64, cfg: &AugmentConfig) -> Result<Augmented> {
    PreparedVolume::new(vol, None, stats.k, &stats.preprocessing, &cfg.em)?.draw(stats, seed, cfg)
}

//! Gaussian-mixture tissue intensity augmentation for skull-stripped brain MRI.
//!
//! A per-image 1-D mixture is fitted to the foreground intensities, each
//! component's mean and variance is shifted by a uniform draw bounded by the
//! spread observed across a multi-scanner corpus, and every voxel is remapped
//! so that its standardized distance to each component mean is preserved.
//!
//! Module map:
//!
//! * [`volume`]: in-memory volumes and NIfTI-1 I/O
//! * [`preprocess`]: percentile clipping and robust z-scoring
//! * [`gmm`]: EM fitting and posterior responsibilities
//! * [`population`]: corpus-level spread of component parameters
//! * [`augment`]: perturbation sampling and the distance-preserving remap
//! * [`phantom`]: synthetic three-tissue volumes
//! * [`metrics`]: overlap metrics and IQR outlier statistics

// `!(x > 0.0)` is used deliberately so NaN falls into the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod error;
pub mod gmm;
pub mod metrics;
pub mod phantom;
pub mod population;
pub mod preprocess;
pub mod quantile;
pub mod rng;
pub mod volume;

pub use augment::{
    apply_perturbation, augment_volume, remap, sample_order_preserving, sample_perturbation, AugmentConfig, Augmented,
    Perturbation, PerturbedGmm, PreparedVolume, Provenance, RemapOptions,
};
pub use error::{Error, Result};
pub use gmm::{fit_em, log_likelihood, responsibilities, EmConfig, GmmParams, Responsibilities};
pub use metrics::{outlier_fraction, overlap, summarize, OverlapReport};
pub use phantom::{generate_phantom, PhantomSpec};
pub use population::{estimate_population, load_stats, save_stats, PopulationStats};
pub use preprocess::{clip_normalize, robust_zscore, ClipNormReport};
pub use volume::{foreground_mask, read_volume, write_volume, LabelVolume, Volume};

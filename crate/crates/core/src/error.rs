use std::io;

use thiserror::Error;

/// Errors raised anywhere in the augmentation pipeline.
///
/// Display strings start with the variant name so command-line users can
/// grep for the failure class.
#[derive(Debug, Error)]
pub enum Error {
    #[error("NotNifti: {0}")]
    NotNifti(String),

    #[error("UnsupportedDatatype: NIfTI datatype code {0} is not one of uint8/int16/float32/float64")]
    UnsupportedDatatype(i16),

    #[error("UnsupportedDimensions: {0}")]
    UnsupportedDimensions(String),

    #[error("CorruptFile: {0}")]
    CorruptFile(String),

    #[error("IoError: {0}")]
    Io(#[from] io::Error),

    #[error("ShapeMismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch { expected: Vec<usize>, found: Vec<usize> },

    #[error("EmptyMask: mask selects no voxels")]
    EmptyMask,

    #[error("DegenerateIntensity: {0}")]
    DegenerateIntensity(String),

    #[error("InsufficientData: {0}")]
    InsufficientData(String),

    #[error("DegenerateComponent: component {component} responsibility mass {mass:e} collapsed")]
    DegenerateComponent { component: usize, mass: f64 },

    #[error("InvalidStats: {0}")]
    InvalidStats(String),

    #[error("InvalidSpec: {0}")]
    InvalidSpec(String),

    #[error("InvalidArgument: {0}")]
    InvalidArgument(String),

    #[error("JsonError: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CsvError: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::DegenerateIntensity(_) | Error::DegenerateComponent { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

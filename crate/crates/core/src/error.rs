use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error")]
    Io(#[from] std::io::Error),

    #[error("I/O error on {path}")]
    IoPath {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid NIfTI file: {0}")]
    Format(String),

    #[error("non-3D volume ({0} non-singleton dimensions)")]
    NotThreeD(usize),

    #[error("non-finite affine")]
    NonFiniteAffine,

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("geometry mismatch between {0}")]
    GeometryMismatch(&'static str),

    #[error("label value {0} outside the supported range 0..=36")]
    LabelOutOfRange(f64),

    #[error("invalid orientation code: {0}")]
    InvalidOrientation(String),

    #[error("empty segmentation")]
    EmptySegmentation,

    #[error("invalid spacing: {0:?}")]
    InvalidSpacing([f64; 3]),

    #[error("no intensity prior for label {0}")]
    MissingPrior(u16),

    #[error("intensity {0} outside [0, 1]")]
    IntensityOutOfRange(f32),

    #[error("degenerate output grid {0:?}")]
    DegenerateGrid([usize; 3]),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("label set mismatch: {0}")]
    LabelSetMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{subjects} subjects cannot be split into {folds} folds")]
    NotEnoughSubjects { subjects: usize, folds: usize },

    #[error("all values are NaN")]
    AllNan,
}

pub type Result<T> = std::result::Result<T, Error>;

//! Volumetric toolkit for training-data synthesis and evaluation of
//! whole-brain segmentation at ultra-high field.
//!
//! The crate covers label-map preparation with an extra-cerebral label, a
//! domain-randomization generator of (image, target) training pairs,
//! resolution resampling, inference post-processing, overlap and surface
//! metrics, and group volumetry statistics. All volumes share the
//! [`volume::Volume`] data model and are read from / written to NIfTI-1.

#![allow(clippy::needless_range_loop)]

pub mod components;
pub mod error;
pub mod folds;
pub mod genmodel;
pub mod labelprep;
pub mod labels;
pub mod metrics;
pub mod nifti;
pub mod orientation;
pub mod postproc;
pub mod resample;
pub mod rng;
pub mod volume;
pub mod volumetry;

pub use error::{Error, Result};
pub use orientation::{reorient, OrientationCode};
pub use volume::{BrainMask, Geometry, LabelVolume, ScalarVolume, Volume};

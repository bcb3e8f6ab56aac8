//! Multichannel source separation for microphone arrays.
//!
//! The crate provides the building blocks of a blind separation pipeline and
//! the objectives used to train neural separators without ground truth:
//!
//! - [`stft`]: analysis/synthesis with perfect reconstruction,
//! - [`geometry`]: array geometry, far-field steering vectors and mixing systems,
//! - [`doa`]: MUSIC direction-of-arrival estimation and sliding-window clustering,
//! - [`wpe`]: weighted prediction error dereverberation,
//! - [`iva`]: AuxIVA with iterative source steering updates,
//! - [`mvdr`]: mask-driven MVDR beamforming,
//! - [`losses`]: spatial, KLD and CI-SDR objectives,
//! - [`sim`] and [`metrics`]: far-field mixture simulation and evaluation,
//! - [`formats`]: binary and JSON interchange documents.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod doa;
pub mod dsp;
pub mod error;
pub mod formats;
pub mod geometry;
pub mod iva;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod mvdr;
pub mod sim;
pub mod stft;
pub mod wpe;

pub use assignment::Assignment;
pub use doa::{CovarianceSet, DoaEstimate, NoiseSubspace};
pub use error::{Error, Result};
pub use geometry::{ArrayGeometry, Direction, MixingSystem};
pub use iva::{DemixingSystem, MaskSet, ProjectionReference, SourceVarianceModel};
pub use mvdr::BeamformerWeights;
pub use stft::{Spectrogram, StftConfig, TimeSignal, WindowKind};
pub use wpe::WpeConfig;

pub use num_complex::Complex64;

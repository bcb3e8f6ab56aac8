//! Direction-of-arrival estimation.
//!
//! [`music`] scans the MUSIC pseudo-spectrum of the noise subspace and
//! refines its peaks; [`cluster`] turns per-window estimates over a long
//! recording into a consolidated set of source directions.

pub mod cluster;
pub mod music;

use std::ops::Range;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_config, invalid_input, Result};
use crate::geometry::Direction;
use crate::linalg::{hermitian_eigh, hermitize, CMatrix};
use crate::stft::Spectrogram;

pub use cluster::{cluster_doas, select_clusters, sliding_doa_cluster, ClusterConfig, SlidingConfig};
pub use music::{music_locate, music_locate_covariance, music_spectrum, MusicConfig, MusicGrid, MusicPeaks};

/// Per-frequency spatial covariance matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSet {
    pub matrices: Vec<CMatrix>,
    /// Center frequency of each matrix in Hz.
    pub frequencies: Vec<f64>,
    pub frame_count: usize,
}

impl CovarianceSet {
    pub fn n_channels(&self) -> usize {
        self.matrices.first().map_or(0, |m| m.nrows())
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }
}

/// Sample covariance `(1/|range|) Σ_t x_{f,t} x_{f,t}ᴴ` over every bin.
pub fn spatial_covariance(spec: &Spectrogram, frames: Range<usize>) -> Result<CovarianceSet> {
    let bins: Vec<usize> = (0..spec.n_freqs()).collect();
    spatial_covariance_bins(spec, frames, &bins)
}

/// [`spatial_covariance`] restricted to the listed bins.
pub fn spatial_covariance_bins(spec: &Spectrogram, frames: Range<usize>, bins: &[usize]) -> Result<CovarianceSet> {
    if frames.is_empty() {
        return invalid_input("empty frame range");
    }
    if frames.end > spec.n_frames() {
        return invalid_input(format!("frame range {frames:?} exceeds {} frames", spec.n_frames()));
    }
    let m = spec.n_channels();
    let scale = 1.0 / frames.len() as f64;
    let matrices = bins
        .iter()
        .map(|&f| {
            let mut r = CMatrix::zeros(m, m);
            for t in frames.clone() {
                for i in 0..m {
                    let xi = spec.data[[i, f, t]];
                    for j in i..m {
                        r[(i, j)] += xi * spec.data[[j, f, t]].conj();
                    }
                }
            }
            for i in 0..m {
                for j in 0..i {
                    r[(i, j)] = r[(j, i)].conj();
                }
            }
            r *= Complex64::new(scale, 0.0);
            hermitize(&mut r);
            r
        })
        .collect();
    Ok(CovarianceSet {
        matrices,
        frequencies: bins.iter().map(|&f| spec.bin_frequency(f)).collect(),
        frame_count: frames.len(),
    })
}

/// Orthonormal bases `E_f` of the noise subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSubspace {
    pub bases: Vec<CMatrix>,
    pub frequencies: Vec<f64>,
}

impl NoiseSubspace {
    /// The projector `E_f E_fᴴ`.
    pub fn projector(&self, f: usize) -> CMatrix {
        &self.bases[f] * self.bases[f].adjoint()
    }
}

/// Eigenvectors of the `M − n_sources` smallest eigenvalues at each bin.
pub fn noise_subspace(cov: &CovarianceSet, n_sources: usize) -> Result<NoiseSubspace> {
    let m = cov.n_channels();
    if n_sources >= m {
        return invalid_config(format!("{n_sources} sources leave no noise subspace with {m} channels"));
    }
    let dim = m - n_sources;
    let bases = cov
        .matrices
        .iter()
        .map(|r| hermitian_eigh(r).map(|(_, vecs)| vecs.columns(0, dim).into_owned()))
        .collect::<Result<Vec<_>>>()?;
    Ok(NoiseSubspace { bases, frequencies: cov.frequencies.clone() })
}

/// Consolidated source directions.
#[derive(Debug, Clone, PartialEq)]
pub struct DoaEstimate {
    /// At most `n_sources` directions, largest cluster first.
    pub directions: Vec<Direction>,
    /// Element count of the cluster behind each direction.
    pub cluster_sizes: Vec<usize>,
    /// Number of sources requested.
    pub n_sources: usize,
    /// All `n_sources` directions were found.
    pub complete: bool,
}

/// Serialized form of a [`DoaEstimate`]; angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoaDocument {
    pub n_sources: usize,
    pub complete: bool,
    pub sources: Vec<DoaSourceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoaSourceEntry {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub cluster_size: usize,
}

impl DoaEstimate {
    pub fn to_document(&self) -> DoaDocument {
        DoaDocument {
            n_sources: self.n_sources,
            complete: self.complete,
            sources: self
                .directions
                .iter()
                .zip(&self.cluster_sizes)
                .map(|(d, &size)| DoaSourceEntry {
                    azimuth_deg: d.azimuth().to_degrees(),
                    elevation_deg: d.elevation().to_degrees(),
                    cluster_size: size,
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &DoaDocument) -> Result<Self> {
        let directions = doc
            .sources
            .iter()
            .map(|s| Direction::from_degrees(s.azimuth_deg, s.elevation_deg))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            complete: doc.complete && directions.len() == doc.n_sources,
            cluster_sizes: doc.sources.iter().map(|s| s.cluster_size).collect(),
            directions,
            n_sources: doc.n_sources,
        })
    }
}

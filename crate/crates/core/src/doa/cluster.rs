//! Sliding-window DOA consolidation.
//!
//! Each window of `L` frames contributes its `N` MUSIC peaks. The pooled
//! (elevation, azimuth) pairs are grouped by k-means, small clusters are
//! dropped, near-duplicate azimuths are merged into the larger cluster and
//! the `N` largest survivors become the source directions.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::music::{band_bins, locate_with_table, SteeringTable};
use super::{spatial_covariance_bins, DoaEstimate, MusicConfig};
use crate::error::{invalid_config, Result};
use crate::geometry::{azimuth_distance, wrap_angle, ArrayGeometry, Direction};
use crate::stft::Spectrogram;

const MAX_KMEANS_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    /// k-means cluster count `K`.
    pub n_clusters: usize,
    /// Clusters holding less than this share of all points are dropped.
    pub e_thres_ratio: f64,
    /// Minimum azimuth separation between returned directions, radians.
    pub theta_thres: f64,
    pub restarts: usize,
    /// Seed of the ChaCha8 generator used for k-means++ seeding.
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self { n_clusters: 3, e_thres_ratio: 0.1, theta_thres: 10f64.to_radians(), restarts: 10, seed: 0x5eed }
    }
}

impl ClusterConfig {
    fn validate(&self, n_sources: usize) -> Result<()> {
        if self.n_clusters == 0 || self.n_clusters < n_sources {
            return invalid_config(format!("{} clusters cannot hold {n_sources} sources", self.n_clusters));
        }
        if !(0.0..=1.0).contains(&self.e_thres_ratio) {
            return invalid_config("e_thres_ratio must lie in [0, 1]");
        }
        if !(self.theta_thres >= 0.0 && self.theta_thres <= PI) {
            return invalid_config("theta_thres must lie in [0, π]");
        }
        if self.restarts == 0 {
            return invalid_config("k-means needs at least one restart");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlidingConfig {
    /// Window length `L` in frames.
    pub window_frames: usize,
    /// Window stride `S` in frames.
    pub shift_frames: usize,
    pub cluster: ClusterConfig,
    pub music: MusicConfig,
}

impl Default for SlidingConfig {
    fn default() -> Self {
        Self { window_frames: 15, shift_frames: 1, cluster: ClusterConfig::default(), music: MusicConfig::default() }
    }
}

/// Per-window MUSIC followed by [`cluster_doas`].
pub fn sliding_doa_cluster(spec: &Spectrogram, geom: &ArrayGeometry, n_sources: usize, cfg: &SlidingConfig) -> Result<DoaEstimate> {
    cfg.cluster.validate(n_sources)?;
    let (l, s, t) = (cfg.window_frames, cfg.shift_frames, spec.n_frames());
    if l == 0 || s == 0 {
        return invalid_config("window length and shift must be positive");
    }
    if l > t {
        return invalid_config(format!("window of {l} frames exceeds the {t} available"));
    }
    if n_sources >= geom.n_mics() {
        return invalid_config(format!("{n_sources} sources need more than {} microphones", geom.n_mics()));
    }
    let bins = band_bins(spec, &cfg.music)?;
    let freqs: Vec<f64> = bins.iter().map(|&f| spec.bin_frequency(f)).collect();
    let table = SteeringTable::new(geom, cfg.music.grid.directions(), &freqs);
    let starts: Vec<usize> = (0..=t - l).step_by(s).collect();
    let per_window = starts
        .par_iter()
        .map(|&start| {
            let cov = spatial_covariance_bins(spec, start..start + l, &bins)?;
            locate_with_table(&cov, geom, n_sources, &cfg.music, &table).map(|p| p.directions)
        })
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<Direction> = per_window.into_iter().flatten().collect();
    log::debug!("{} windows produced {} direction estimates", starts.len(), points.len());
    cluster_doas(&points, n_sources, &cfg.cluster)
}

/// k-means over the pooled directions, then [`select_clusters`].
pub fn cluster_doas(points: &[Direction], n_sources: usize, cfg: &ClusterConfig) -> Result<DoaEstimate> {
    cfg.validate(n_sources)?;
    if points.is_empty() {
        return Ok(DoaEstimate { directions: Vec::new(), cluster_sizes: Vec::new(), n_sources, complete: n_sources == 0 });
    }
    let pts: Vec<(f64, f64)> = points.iter().map(|d| (d.elevation(), d.azimuth())).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<KMeans> = None;
    for _ in 0..cfg.restarts {
        let run = kmeans(&pts, cfg.n_clusters, &mut rng);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");
    let mut sizes = vec![0usize; cfg.n_clusters];
    for &a in &best.assignment {
        sizes[a] += 1;
    }
    let centroids: Vec<Option<Direction>> = best
        .centroids
        .iter()
        .zip(&sizes)
        .map(|(&(el, az), &n)| (n > 0).then(|| Direction::from_angles(wrap_angle(az), el.clamp(0.0, PI)).expect("clamped")))
        .collect();
    Ok(select_clusters(&centroids, &sizes, n_sources, cfg))
}

/// Pruning and selection over clustered centroids. Empty clusters are `None`.
pub fn select_clusters(centroids: &[Option<Direction>], sizes: &[usize], n_sources: usize, cfg: &ClusterConfig) -> DoaEstimate {
    let total: usize = sizes.iter().sum();
    let min_size = cfg.e_thres_ratio * total as f64;
    let mut order: Vec<usize> = (0..centroids.len())
        .filter(|&k| centroids[k].is_some() && sizes[k] > 0 && sizes[k] as f64 >= min_size)
        .collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));

    let mut kept: Vec<usize> = Vec::new();
    for k in order {
        let az = centroids[k].expect("filtered").azimuth();
        if kept.iter().all(|&j| azimuth_distance(centroids[j].expect("filtered").azimuth(), az) >= cfg.theta_thres) {
            kept.push(k);
        }
    }
    kept.truncate(n_sources);
    DoaEstimate {
        directions: kept.iter().map(|&k| centroids[k].expect("filtered")).collect(),
        cluster_sizes: kept.iter().map(|&k| sizes[k]).collect(),
        n_sources,
        complete: kept.len() == n_sources,
    }
}

struct KMeans {
    centroids: Vec<(f64, f64)>,
    assignment: Vec<usize>,
    inertia: f64,
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    let de = a.0 - b.0;
    let da = wrap_angle(a.1 - b.1);
    de * de + da * da
}

/// Nearest centroid; ties go to the lower index.
fn nearest(p: (f64, f64), centroids: &[(f64, f64)]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, &c) in centroids.iter().enumerate() {
        let d = dist2(p, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn kmeans(pts: &[(f64, f64)], k: usize, rng: &mut ChaCha8Rng) -> KMeans {
    // k-means++ seeding
    let mut centroids = vec![pts[rng.gen_range(0..pts.len())]];
    while centroids.len() < k {
        let d: Vec<f64> = pts.iter().map(|&p| nearest(p, &centroids).1).collect();
        let total: f64 = d.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut idx = pts.len() - 1;
            for (i, &di) in d.iter().enumerate() {
                if u < di {
                    idx = i;
                    break;
                }
                u -= di;
            }
            idx
        } else {
            rng.gen_range(0..pts.len())
        };
        centroids.push(pts[pick]);
    }

    let mut assignment: Vec<usize> = pts.iter().map(|&p| nearest(p, &centroids).0).collect();
    for _ in 0..MAX_KMEANS_ITERATIONS {
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<(f64, f64)> = pts.iter().zip(&assignment).filter(|(_, &a)| a == c).map(|(&p, _)| p).collect();
            if members.is_empty() {
                continue;
            }
            let el = members.iter().map(|p| p.0).sum::<f64>() / members.len() as f64;
            let (s, co) = members.iter().fold((0.0, 0.0), |(s, co), p| (s + p.1.sin(), co + p.1.cos()));
            let az = if s.hypot(co) > 1e-12 { s.atan2(co) } else { centroid.1 };
            *centroid = (el, az);
        }
        let next: Vec<usize> = pts.iter().map(|&p| nearest(p, &centroids).0).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }
    let inertia = pts.iter().zip(&assignment).map(|(&p, &a)| dist2(p, centroids[a])).sum();
    KMeans { centroids, assignment, inertia }
}

//! MUSIC pseudo-spectrum, grid search and golden-section peak refinement.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{noise_subspace, spatial_covariance_bins, CovarianceSet, NoiseSubspace};
use crate::error::{invalid_config, invalid_input, Result};
use crate::geometry::{steering_unchecked, ArrayGeometry, Direction};
use crate::linalg::CMatrix;
use crate::stft::Spectrogram;

/// Per-microphone floor added to `‖E_fᴴ a_f‖²`; the total floor is
/// `1e−12·M`, which caps the pseudo-spectrum at exact orthogonality.
pub const DENOMINATOR_FLOOR_PER_MIC: f64 = 1e-12;

/// Peaks whose height over the median of the scanned grid is below this
/// many dB are indistinguishable from a flat (source-free) spectrum.
pub const PEAK_PROMINENCE_DB: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MusicGrid {
    /// Full circle of azimuths at a fixed elevation.
    Azimuth { resolution: f64, elevation: f64 },
    /// Fibonacci lattice over the whole sphere.
    Sphere { points: usize },
}

impl Default for MusicGrid {
    fn default() -> Self {
        MusicGrid::Azimuth { resolution: 1f64.to_radians(), elevation: PI / 2.0 }
    }
}

impl MusicGrid {
    pub fn directions(&self) -> Vec<Direction> {
        match *self {
            MusicGrid::Azimuth { resolution, elevation } => {
                let n = azimuth_count(resolution);
                (0..n)
                    .map(|i| Direction::from_angles(2.0 * PI * i as f64 / n as f64, elevation).expect("validated elevation"))
                    .collect()
            }
            MusicGrid::Sphere { points } => {
                let golden = PI * (3.0 - 5f64.sqrt());
                (0..points)
                    .map(|i| {
                        let z = 1.0 - (2.0 * i as f64 + 1.0) / points as f64;
                        let r = (1.0 - z * z).sqrt();
                        let a = golden * i as f64;
                        Direction::from_vector([r * a.cos(), r * a.sin(), z]).expect("unit vector")
                    })
                    .collect()
            }
        }
    }

    /// Typical spacing between neighbouring grid points in radians.
    pub fn step(&self) -> f64 {
        match *self {
            MusicGrid::Azimuth { resolution, .. } => 2.0 * PI / azimuth_count(resolution) as f64,
            MusicGrid::Sphere { points } => (4.0 * PI / points as f64).sqrt(),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            MusicGrid::Azimuth { resolution, elevation } => {
                if !(resolution > 0.0 && resolution <= PI) {
                    return invalid_config(format!("azimuth resolution {resolution} rad out of range"));
                }
                if !(0.0..=PI).contains(&elevation) {
                    return invalid_config("grid elevation outside [0, π]");
                }
            }
            MusicGrid::Sphere { points } => {
                if points < 12 {
                    return invalid_config("spherical grid needs at least 12 points");
                }
            }
        }
        Ok(())
    }
}

fn azimuth_count(resolution: f64) -> usize {
    ((2.0 * PI / resolution).round() as usize).max(3)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MusicConfig {
    pub grid: MusicGrid,
    /// Frequency band averaged by the pseudo-spectrum, in Hz.
    pub freq_band: (f64, f64),
    /// Stopping width of the golden-section refinement, in radians.
    pub refine_tolerance: f64,
}

impl Default for MusicConfig {
    fn default() -> Self {
        Self { grid: MusicGrid::default(), freq_band: (300.0, 3500.0), refine_tolerance: 1e-6 }
    }
}

/// Refined MUSIC peaks, strongest first.
#[derive(Debug, Clone, PartialEq)]
pub struct MusicPeaks {
    pub directions: Vec<Direction>,
    /// Pseudo-spectrum value at each refined direction.
    pub values: Vec<f64>,
    /// Grid peak height over the grid median, in dB.
    pub contrast_db: Vec<f64>,
    /// As many peaks as sources were found.
    pub complete: bool,
}

impl MusicPeaks {
    /// Number of peaks that rise above [`PEAK_PROMINENCE_DB`].
    pub fn prominent(&self) -> usize {
        self.contrast_db.iter().filter(|&&c| c >= PEAK_PROMINENCE_DB).count()
    }
}

/// Steering vectors of a fixed grid at a fixed set of frequencies.
pub(crate) struct SteeringTable {
    /// One `M × G` matrix per frequency.
    per_freq: Vec<CMatrix>,
    grid: Vec<Direction>,
}

impl SteeringTable {
    pub(crate) fn new(geom: &ArrayGeometry, grid: Vec<Direction>, freqs: &[f64]) -> Self {
        let m = geom.n_mics();
        let per_freq = freqs
            .iter()
            .map(|&f| {
                let mut a = CMatrix::zeros(m, grid.len());
                for (g, d) in grid.iter().enumerate() {
                    a.set_column(g, &steering_unchecked(geom, d, f));
                }
                a
            })
            .collect();
        Self { per_freq, grid }
    }
}

fn spectrum_from_table(sub: &NoiseSubspace, table: &SteeringTable, floor: f64) -> Vec<f64> {
    let g = table.grid.len();
    let mut acc = vec![0.0; g];
    for (e, a) in sub.bases.iter().zip(&table.per_freq) {
        let proj = e.adjoint() * a;
        for (k, col) in proj.column_iter().enumerate() {
            acc[k] += 1.0 / (col.norm_squared() + floor);
        }
    }
    let scale = 1.0 / sub.bases.len().max(1) as f64;
    acc.iter().map(|v| v * scale).collect()
}

fn pseudo_power(sub: &NoiseSubspace, geom: &ArrayGeometry, dir: &Direction, floor: f64) -> f64 {
    let total: f64 = sub
        .bases
        .iter()
        .zip(&sub.frequencies)
        .map(|(e, &f)| {
            let a = steering_unchecked(geom, dir, f);
            1.0 / ((e.adjoint() * a).norm_squared() + floor)
        })
        .sum();
    total / sub.bases.len().max(1) as f64
}

fn check_dims(sub: &NoiseSubspace, geom: &ArrayGeometry) -> Result<()> {
    if sub.bases.is_empty() {
        return invalid_input("noise subspace has no frequencies");
    }
    if sub.bases.iter().any(|e| e.nrows() != geom.n_mics()) {
        return invalid_input("noise subspace dimension does not match the geometry");
    }
    Ok(())
}

/// `𝒢(q) = (1/F)·Σ_f (‖E_fᴴ a_f(q)‖² + ε)^{-1}` at each grid direction.
pub fn music_spectrum(sub: &NoiseSubspace, geom: &ArrayGeometry, grid: &[Direction]) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return invalid_input("empty direction grid");
    }
    check_dims(sub, geom)?;
    let table = SteeringTable::new(geom, grid.to_vec(), &sub.frequencies);
    Ok(spectrum_from_table(sub, &table, DENOMINATOR_FLOOR_PER_MIC * geom.n_mics() as f64))
}

/// MUSIC over every frame of `spec`, restricted to the configured band.
pub fn music_locate(spec: &Spectrogram, geom: &ArrayGeometry, n_sources: usize, cfg: &MusicConfig) -> Result<MusicPeaks> {
    let bins = band_bins(spec, cfg)?;
    let cov = spatial_covariance_bins(spec, 0..spec.n_frames(), &bins)?;
    music_locate_covariance(&cov, geom, n_sources, cfg)
}

pub(crate) fn band_bins(spec: &Spectrogram, cfg: &MusicConfig) -> Result<Vec<usize>> {
    let bins = spec.bins_in_band(cfg.freq_band.0, cfg.freq_band.1);
    if bins.is_empty() {
        return invalid_config(format!("no STFT bins inside the band {:?} Hz", cfg.freq_band));
    }
    Ok(bins)
}

/// MUSIC from precomputed covariances.
pub fn music_locate_covariance(cov: &CovarianceSet, geom: &ArrayGeometry, n_sources: usize, cfg: &MusicConfig) -> Result<MusicPeaks> {
    cfg.grid.validate()?;
    let table = SteeringTable::new(geom, cfg.grid.directions(), &cov.frequencies);
    locate_with_table(cov, geom, n_sources, cfg, &table)
}

pub(crate) fn locate_with_table(
    cov: &CovarianceSet,
    geom: &ArrayGeometry,
    n_sources: usize,
    cfg: &MusicConfig,
    table: &SteeringTable,
) -> Result<MusicPeaks> {
    if cov.n_channels() != geom.n_mics() {
        return invalid_input(format!("covariance has {} channels, geometry {} microphones", cov.n_channels(), geom.n_mics()));
    }
    let sub = noise_subspace(cov, n_sources)?;
    check_dims(&sub, geom)?;
    let floor = DENOMINATOR_FLOOR_PER_MIC * geom.n_mics() as f64;
    let values = spectrum_from_table(&sub, table, floor);
    let peaks = match cfg.grid {
        MusicGrid::Azimuth { .. } => circular_maxima(&values),
        MusicGrid::Sphere { .. } => neighbourhood_maxima(&table.grid, &values, 8),
    };
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];

    let step = cfg.grid.step();
    let mut out = MusicPeaks { directions: Vec::new(), values: Vec::new(), contrast_db: Vec::new(), complete: false };
    for &idx in peaks.iter().take(n_sources) {
        let (dir, val) = refine(&sub, geom, table.grid[idx], values[idx], step, cfg, floor);
        out.directions.push(dir);
        out.values.push(val);
        out.contrast_db.push(10.0 * (values[idx] / median).log10());
    }
    out.complete = out.directions.len() == n_sources;
    Ok(out)
}

/// Strict local maxima of a circular sequence, highest first.
fn circular_maxima(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    let mut peaks: Vec<usize> = (0..n)
        .filter(|&i| {
            let prev = values[(i + n - 1) % n];
            let next = values[(i + 1) % n];
            values[i] > prev && values[i] > next
        })
        .collect();
    peaks.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    peaks
}

/// Points strictly above their `k` nearest neighbours, highest first.
fn neighbourhood_maxima(grid: &[Direction], values: &[f64], k: usize) -> Vec<usize> {
    let mut peaks: Vec<usize> = (0..grid.len())
        .filter(|&i| {
            let mut dists: Vec<(f64, usize)> =
                (0..grid.len()).filter(|&j| j != i).map(|j| (grid[i].angle_to(&grid[j]), j)).collect();
            dists.sort_by(|a, b| a.0.total_cmp(&b.0));
            dists.iter().take(k).all(|&(_, j)| values[i] > values[j])
        })
        .collect();
    peaks.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    peaks
}

fn refine(
    sub: &NoiseSubspace,
    geom: &ArrayGeometry,
    start: Direction,
    start_value: f64,
    step: f64,
    cfg: &MusicConfig,
    floor: f64,
) -> (Direction, f64) {
    let (mut az, mut el) = start.to_angles();
    let eval = |az: f64, el: f64| {
        let d = Direction::from_angles(az, el.clamp(0.0, PI)).expect("clamped");
        pseudo_power(sub, geom, &d, floor)
    };
    let rounds = match cfg.grid {
        MusicGrid::Azimuth { .. } => 1,
        MusicGrid::Sphere { .. } => 3,
    };
    for _ in 0..rounds {
        let el_now = el;
        az = golden_section_max(|a| eval(a, el_now), az - step, az + step, cfg.refine_tolerance);
        if matches!(cfg.grid, MusicGrid::Sphere { .. }) {
            let az_now = az;
            el = golden_section_max(|e| eval(az_now, e), (el - step).max(0.0), (el + step).min(PI), cfg.refine_tolerance);
        }
    }
    let refined = Direction::from_angles(crate::geometry::wrap_angle(az), el.clamp(0.0, PI)).expect("clamped");
    let value = pseudo_power(sub, geom, &refined, floor);
    // the refined point never loses to the grid point it started from
    if value >= start_value {
        (refined, value)
    } else {
        (start, start_value)
    }
}

/// Maximizer of a unimodal function on `[lo, hi]`.
pub(crate) fn golden_section_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

/// Convenience for tests and callers holding exact covariances.
pub fn covariance_from_matrices(matrices: Vec<CMatrix>, frequencies: Vec<f64>) -> CovarianceSet {
    CovarianceSet { matrices, frequencies, frame_count: 0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::steering_vector;
    use crate::linalg::CVector;
    use num_complex::Complex64;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn exact_covariance(geom: &ArrayGeometry, dirs: &[Direction], freqs: &[f64], noise: f64) -> CovarianceSet {
        let m = geom.n_mics();
        let mats = freqs
            .iter()
            .map(|&f| {
                let mut r = CMatrix::identity(m, m) * c(noise);
                for d in dirs {
                    let a = steering_vector(geom, d, f).unwrap();
                    r += &a * a.adjoint();
                }
                r
            })
            .collect();
        covariance_from_matrices(mats, freqs.to_vec())
    }

    fn band() -> Vec<f64> {
        (10..110).map(|k| k as f64 * 31.25).collect()
    }

    #[test]
    fn golden_section_finds_parabola_peak() {
        let x = golden_section_max(|x| -(x - 0.37).powi(2), -1.0, 1.0, 1e-9);
        assert!((x - 0.37).abs() < 1e-8);
    }

    #[test]
    fn exact_orthogonality_hits_the_floor_cap() {
        let geom = ArrayGeometry::circular(6, 0.0425, true).unwrap();
        let target = Direction::horizontal(0.4);
        let freqs = [1000.0, 2000.0];
        // Basis of the orthogonal complement of a(q*) at each frequency.
        let bases = freqs
            .iter()
            .map(|&f| {
                let a = steering_vector(&geom, &target, f).unwrap();
                let p = CMatrix::identity(7, 7) - &a * a.adjoint();
                let (_, vecs) = crate::linalg::hermitian_eigh(&p).unwrap();
                let e = vecs.columns(1, 6).into_owned();
                // scrub the tiny leakage so orthogonality is exact in floating point
                let leak = e.adjoint() * &a;
                assert!(leak.norm() < 1e-12);
                e
            })
            .collect();
        let sub = NoiseSubspace { bases, frequencies: freqs.to_vec() };
        let g = music_spectrum(&sub, &geom, &[target]).unwrap()[0];
        let cap = 1.0 / (DENOMINATOR_FLOOR_PER_MIC * 7.0);
        // 𝒢 reaches the floor-limited maximum up to the residual leakage
        assert!(g > 0.5 * cap && g <= cap * (1.0 + 1e-12));
    }

    #[test]
    fn spectrum_depends_only_on_projector() {
        let geom = ArrayGeometry::circular(6, 0.0425, true).unwrap();
        let cov = exact_covariance(&geom, &[Direction::horizontal(1.0)], &band()[..5], 0.1);
        let sub = noise_subspace(&cov, 1).unwrap();
        let grid = MusicGrid::default().directions();
        let base = music_spectrum(&sub, &geom, &grid).unwrap();
        // rotate each basis by a unitary (phase diag * permutation)
        let rotated = NoiseSubspace {
            bases: sub
                .bases
                .iter()
                .map(|e| {
                    let k = e.ncols();
                    let mut u = CMatrix::zeros(k, k);
                    for i in 0..k {
                        u[((i + 1) % k, i)] = Complex64::from_polar(1.0, 0.3 * i as f64);
                    }
                    e * u
                })
                .collect(),
            frequencies: sub.frequencies.clone(),
        };
        let other = music_spectrum(&rotated, &geom, &grid).unwrap();
        for (a, b) in base.iter().zip(&other) {
            assert!(*a > 0.0);
            assert!((a - b).abs() <= 1e-9 * a);
        }
    }

    #[test]
    fn flat_spectrum_when_only_the_source_is_excluded() {
        // E spans the complement of a(q0) at every f; directions whose steering
        // vectors have equal overlap with a(q0) then share one 𝒢 value.
        let geom = ArrayGeometry::linear(2, 0.05).unwrap();
        let q0 = Direction::horizontal(PI / 2.0);
        let f = 2000.0;
        let a0 = steering_vector(&geom, &q0, f).unwrap();
        let e = CVector::from_vec(vec![a0[1].conj() * c(-1.0), a0[0].conj()]).normalize();
        let sub = NoiseSubspace { bases: vec![CMatrix::from_column_slice(2, 1, e.as_slice())], frequencies: vec![f] };
        // mirror-image directions about broadside have the same overlap
        let grid = [Direction::horizontal(PI / 2.0 - 0.4), Direction::horizontal(PI / 2.0 + 0.4)];
        let g = music_spectrum(&sub, &geom, &grid).unwrap();
        assert!((g[0] - g[1]).abs() < 1e-12 * g[0]);
    }

    #[test]
    fn single_source_grid_argmax() {
        let geom = ArrayGeometry::circular(6, 0.0425, true).unwrap();
        let cov = exact_covariance(&geom, &[Direction::horizontal(60f64.to_radians())], &band(), 1e-3);
        let sub = noise_subspace(&cov, 1).unwrap();
        let grid = MusicGrid::default().directions();
        let g = music_spectrum(&sub, &geom, &grid).unwrap();
        let best = (0..g.len()).max_by(|&a, &b| g[a].total_cmp(&g[b])).unwrap();
        assert!((grid[best].azimuth().to_degrees() - 60.0).abs() <= 1.0);
    }

    #[test]
    fn refinement_lands_within_half_a_grid_step() {
        let geom = ArrayGeometry::circular(6, 0.0425, true).unwrap();
        let truth = 47.3f64.to_radians();
        let cov = exact_covariance(&geom, &[Direction::horizontal(truth)], &band(), 1e-4);
        let cfg = MusicConfig { grid: MusicGrid::Azimuth { resolution: 5f64.to_radians(), elevation: PI / 2.0 }, ..Default::default() };
        let peaks = music_locate_covariance(&cov, &geom, 1, &cfg).unwrap();
        assert!(peaks.complete);
        assert!(crate::geometry::azimuth_distance(peaks.directions[0].azimuth(), truth) < 2.5f64.to_radians());
        assert!(crate::geometry::azimuth_distance(peaks.directions[0].azimuth(), truth) < 1e-4);
    }

    #[test]
    fn spherical_grid_recovers_elevated_source() {
        let geom = ArrayGeometry::new(
            vec![[0.03, 0.0, 0.0], [-0.03, 0.0, 0.0], [0.0, 0.03, 0.0], [0.0, -0.03, 0.0], [0.0, 0.0, 0.03], [0.0, 0.0, -0.03]],
            343.0,
        )
        .unwrap();
        let truth = Direction::from_angles(1.0, 1.2).unwrap();
        let cov = exact_covariance(&geom, &[truth], &band(), 1e-4);
        let cfg = MusicConfig { grid: MusicGrid::Sphere { points: 800 }, ..Default::default() };
        let peaks = music_locate_covariance(&cov, &geom, 1, &cfg).unwrap();
        assert!(peaks.directions[0].angle_to(&truth) < 1f64.to_radians());
    }

    #[test]
    fn empty_grid_rejected() {
        let geom = ArrayGeometry::linear(3, 0.05).unwrap();
        let cov = exact_covariance(&geom, &[Direction::horizontal(0.0)], &[1000.0], 0.1);
        let sub = noise_subspace(&cov, 1).unwrap();
        assert!(music_spectrum(&sub, &geom, &[]).is_err());
    }
}

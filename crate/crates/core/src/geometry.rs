//! Array geometry, source directions and far-field steering.
//!
//! The steering vector uses the positive phase convention
//! `a_m = M^{-1/2}·exp(+j·2πf/c·d_mᵀq)`; the simulator and MUSIC share it.

use std::f64::consts::PI;

use ndarray::Array3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_config, invalid_input, Result};
use crate::linalg::{CMatrix, CVector};

pub const DEFAULT_SOUND_SPEED: f64 = 343.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    mic_positions: Vec<[f64; 3]>,
    sound_speed: f64,
}

/// On-disk geometry document (positions in meters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryDocument {
    #[serde(default = "default_sound_speed")]
    pub sound_speed: f64,
    pub mic_positions: Vec<[f64; 3]>,
}

fn default_sound_speed() -> f64 {
    DEFAULT_SOUND_SPEED
}

impl ArrayGeometry {
    pub fn new(mic_positions: Vec<[f64; 3]>, sound_speed: f64) -> Result<Self> {
        if mic_positions.len() < 2 {
            return invalid_config(format!("need at least 2 microphones, got {}", mic_positions.len()));
        }
        if mic_positions.iter().flatten().any(|v| !v.is_finite()) {
            return invalid_config("non-finite microphone position");
        }
        if !(sound_speed > 0.0 && sound_speed.is_finite()) {
            return invalid_config("sound speed must be positive");
        }
        Ok(Self { mic_positions, sound_speed })
    }

    /// `count` microphones evenly spaced on a horizontal circle, optionally
    /// preceded by one at the center.
    pub fn circular(count: usize, radius: f64, with_center: bool) -> Result<Self> {
        let mut pos = Vec::with_capacity(count + 1);
        if with_center {
            pos.push([0.0, 0.0, 0.0]);
        }
        for i in 0..count {
            let a = 2.0 * PI * i as f64 / count as f64;
            pos.push([radius * a.cos(), radius * a.sin(), 0.0]);
        }
        Self::new(pos, DEFAULT_SOUND_SPEED)
    }

    /// Microphones on the x axis with the given spacing, centered at the origin.
    pub fn linear(count: usize, spacing: f64) -> Result<Self> {
        let offset = (count as f64 - 1.0) / 2.0;
        Self::new((0..count).map(|i| [(i as f64 - offset) * spacing, 0.0, 0.0]).collect(), DEFAULT_SOUND_SPEED)
    }

    pub fn from_document(doc: GeometryDocument) -> Result<Self> {
        Ok(Self::new(doc.mic_positions, doc.sound_speed)?.recentered())
    }

    /// Parses a JSON geometry document and recenters it on the centroid.
    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(text)?)
    }

    pub fn to_document(&self) -> GeometryDocument {
        GeometryDocument { sound_speed: self.sound_speed, mic_positions: self.mic_positions.clone() }
    }

    pub fn n_mics(&self) -> usize {
        self.mic_positions.len()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.mic_positions
    }

    pub fn sound_speed(&self) -> f64 {
        self.sound_speed
    }

    pub fn centroid(&self) -> [f64; 3] {
        let n = self.n_mics() as f64;
        let mut c = [0.0; 3];
        for p in &self.mic_positions {
            for i in 0..3 {
                c[i] += p[i] / n;
            }
        }
        c
    }

    pub fn recentered(&self) -> Self {
        self.translated(self.centroid().map(|v| -v))
    }

    pub fn translated(&self, by: [f64; 3]) -> Self {
        let mic_positions = self.mic_positions.iter().map(|p| [p[0] + by[0], p[1] + by[1], p[2] + by[2]]).collect();
        Self { mic_positions, sound_speed: self.sound_speed }
    }

    /// Rotates every microphone by `angle` radians about the z axis.
    pub fn rotated_z(&self, angle: f64) -> Self {
        let mic_positions = self.mic_positions.iter().map(|p| rotate_z(*p, angle)).collect();
        Self { mic_positions, sound_speed: self.sound_speed }
    }

    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.n_mics()) {
            return invalid_config(format!("microphone {bad} out of range"));
        }
        Self::new(idx.iter().map(|&i| self.mic_positions[i]).collect(), self.sound_speed)
    }

    /// Largest distance between two microphones.
    pub fn aperture(&self) -> f64 {
        let mut best: f64 = 0.0;
        for a in &self.mic_positions {
            for b in &self.mic_positions {
                best = best.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt());
            }
        }
        best
    }

    /// True when all microphones share the same z coordinate.
    pub fn is_planar_xy(&self) -> bool {
        let z0 = self.mic_positions[0][2];
        self.mic_positions.iter().all(|p| (p[2] - z0).abs() < 1e-12)
    }
}

fn rotate_z(p: [f64; 3], angle: f64) -> [f64; 3] {
    let (s, c) = angle.sin_cos();
    [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]]
}

/// Unit vector pointing from the array towards a source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    q: [f64; 3],
}

impl Direction {
    /// `q = [cos θ sin φ, sin θ sin φ, cos φ]` for azimuth θ and elevation φ
    /// (polar angle from +z, so the horizontal plane is φ = π/2).
    pub fn from_angles(azimuth: f64, elevation: f64) -> Result<Self> {
        if !(0.0..=PI).contains(&elevation) {
            return invalid_input(format!("elevation {elevation} outside [0, π]"));
        }
        if !azimuth.is_finite() {
            return invalid_input("non-finite azimuth");
        }
        let (st, ct) = azimuth.sin_cos();
        let (sp, cp) = elevation.sin_cos();
        Ok(Self { q: [ct * sp, st * sp, cp] })
    }

    /// Horizontal-plane direction at `azimuth` radians.
    pub fn horizontal(azimuth: f64) -> Self {
        Self::from_angles(azimuth, PI / 2.0).expect("π/2 is a valid elevation")
    }

    pub fn from_degrees(azimuth_deg: f64, elevation_deg: f64) -> Result<Self> {
        Self::from_angles(azimuth_deg.to_radians(), elevation_deg.to_radians())
    }

    /// Normalizes an arbitrary nonzero vector.
    pub fn from_vector(v: [f64; 3]) -> Result<Self> {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return invalid_input("direction vector must be finite and nonzero");
        }
        Ok(Self { q: v.map(|c| c / n) })
    }

    pub fn vector(&self) -> [f64; 3] {
        self.q
    }

    /// Azimuth in `(−π, π]`.
    pub fn azimuth(&self) -> f64 {
        self.q[1].atan2(self.q[0])
    }

    pub fn elevation(&self) -> f64 {
        self.q[2].clamp(-1.0, 1.0).acos()
    }

    pub fn to_angles(&self) -> (f64, f64) {
        (self.azimuth(), self.elevation())
    }

    pub fn rotated_z(&self, angle: f64) -> Self {
        Self { q: rotate_z(self.q, angle) }
    }

    /// Angle between two directions in radians.
    pub fn angle_to(&self, other: &Direction) -> f64 {
        let d = self.q[0] * other.q[0] + self.q[1] * other.q[1] + self.q[2] * other.q[2];
        d.clamp(-1.0, 1.0).acos()
    }
}

/// Shortest signed difference `a − b` between two angles, in `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

pub fn azimuth_distance(a: f64, b: f64) -> f64 {
    wrap_angle(a - b).abs()
}

/// Far-field steering vector at `freq` Hz, unit L2 norm.
pub fn steering_vector(geom: &ArrayGeometry, dir: &Direction, freq: f64) -> Result<CVector> {
    if !(freq >= 0.0) {
        return invalid_input(format!("frequency must be nonnegative, got {freq}"));
    }
    Ok(steering_unchecked(geom, dir, freq))
}

pub(crate) fn steering_unchecked(geom: &ArrayGeometry, dir: &Direction, freq: f64) -> CVector {
    let m = geom.n_mics();
    let gain = 1.0 / (m as f64).sqrt();
    let omega = 2.0 * PI * freq / geom.sound_speed;
    let q = dir.q;
    CVector::from_iterator(
        m,
        geom.mic_positions.iter().map(|d| {
            let proj = d[0] * q[0] + d[1] * q[1] + d[2] * q[2];
            Complex64::from_polar(gain, omega * proj)
        }),
    )
}

/// Per-frequency steering matrices `Ā_f`, stored `(frequency, mic, source)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingSystem {
    pub matrices: Array3<Complex64>,
    pub frequencies: Vec<f64>,
}

impl MixingSystem {
    pub fn n_freqs(&self) -> usize {
        self.matrices.dim().0
    }

    pub fn n_mics(&self) -> usize {
        self.matrices.dim().1
    }

    pub fn n_sources(&self) -> usize {
        self.matrices.dim().2
    }

    /// `Ā_f` as an `M × N` matrix.
    pub fn matrix(&self, f: usize) -> CMatrix {
        let (_, m, n) = self.matrices.dim();
        CMatrix::from_fn(m, n, |i, j| self.matrices[[f, i, j]])
    }

    pub fn column(&self, f: usize, n: usize) -> CVector {
        CVector::from_iterator(self.n_mics(), (0..self.n_mics()).map(|m| self.matrices[[f, m, n]]))
    }

    pub fn from_matrices(mats: &[CMatrix], frequencies: Vec<f64>) -> Self {
        let m = mats.first().map_or(0, |a| a.nrows());
        let n = mats.first().map_or(0, |a| a.ncols());
        let mut matrices = Array3::zeros((mats.len(), m, n));
        for (f, a) in mats.iter().enumerate() {
            for i in 0..m {
                for j in 0..n {
                    matrices[[f, i, j]] = a[(i, j)];
                }
            }
        }
        Self { matrices, frequencies }
    }

    /// `|a_iᴴ a_j|` between columns `i` and `j` at every frequency.
    pub fn column_coherence(&self, i: usize, j: usize) -> Vec<f64> {
        (0..self.n_freqs())
            .map(|f| crate::linalg::inner(self.column(f, i).iter(), self.column(f, j).iter()).norm())
            .collect()
    }
}

/// Steering vectors of every direction at every frequency.
///
/// Coincident directions produce a rank-deficient system; this is allowed
/// but logged as a warning.
pub fn mixing_matrix(geom: &ArrayGeometry, dirs: &[Direction], freqs: &[f64]) -> Result<MixingSystem> {
    let n = dirs.len();
    let m = geom.n_mics();
    if n == 0 {
        return invalid_config("at least one direction is required");
    }
    if n > m {
        return invalid_config(format!("{n} directions exceed {m} microphones"));
    }
    if let Some(bad) = freqs.iter().find(|f| !(**f >= 0.0)) {
        return invalid_input(format!("frequency must be nonnegative, got {bad}"));
    }
    if has_coincident_directions(dirs) {
        log::warn!("mixing system has coincident directions; steering matrices are rank deficient");
    }
    let mut matrices = Array3::zeros((freqs.len(), m, n));
    for (fi, &freq) in freqs.iter().enumerate() {
        for (j, d) in dirs.iter().enumerate() {
            let a = steering_unchecked(geom, d, freq);
            for i in 0..m {
                matrices[[fi, i, j]] = a[i];
            }
        }
    }
    Ok(MixingSystem { matrices, frequencies: freqs.to_vec() })
}

pub fn has_coincident_directions(dirs: &[Direction]) -> bool {
    dirs.iter().enumerate().any(|(i, a)| dirs[i + 1..].iter().any(|b| a.angle_to(b) < 1e-9))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_frequency_is_uniform() {
        let g = ArrayGeometry::circular(6, 0.05, true).unwrap();
        let a = steering_vector(&g, &Direction::horizontal(0.7), 0.0).unwrap();
        let expect = 1.0 / 7f64.sqrt();
        assert!(a.iter().all(|z| (z - Complex64::new(expect, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn origin_microphone_has_constant_entry() {
        let g = ArrayGeometry::circular(4, 0.05, true).unwrap();
        for f in [100.0, 1000.0, 7000.0] {
            let a = steering_vector(&g, &Direction::from_angles(1.2, 0.9).unwrap(), f).unwrap();
            assert!((a[0] - Complex64::new(1.0 / 5f64.sqrt(), 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn broadside_pair_has_equal_entries() {
        let g = ArrayGeometry::new(vec![[0.05, 0.0, 0.0], [-0.05, 0.0, 0.0]], 343.0).unwrap();
        let q = Direction::from_vector([0.0, 1.0, 0.0]).unwrap();
        for f in [0.0, 440.0, 5000.0] {
            let a = steering_vector(&g, &q, f).unwrap();
            assert!((a[0] - a[1]).norm() < 1e-15);
        }
    }

    #[test]
    fn negative_frequency_rejected() {
        let g = ArrayGeometry::linear(2, 0.1).unwrap();
        assert!(matches!(steering_vector(&g, &Direction::horizontal(0.0), -1.0), Err(crate::Error::InvalidInput(_))));
    }

    #[test]
    fn angle_conversions() {
        let q = Direction::from_angles(0.0, PI / 2.0).unwrap().vector();
        assert!((q[0] - 1.0).abs() < 1e-15 && q[1].abs() < 1e-15 && q[2].abs() < 1e-15);
        let q = Direction::from_angles(PI / 2.0, PI / 2.0).unwrap().vector();
        assert!(q[0].abs() < 1e-15 && (q[1] - 1.0).abs() < 1e-15 && q[2].abs() < 1e-15);
        let d = Direction::from_angles(0.3, 1.1).unwrap();
        let q = d.vector();
        assert!((q[0] - 0.3f64.cos() * 1.1f64.sin()).abs() < 1e-15);
        assert!((q[1] - 0.3f64.sin() * 1.1f64.sin()).abs() < 1e-15);
        assert!((q[2] - 1.1f64.cos()).abs() < 1e-15);
        let (az, el) = d.to_angles();
        assert!((az - 0.3).abs() < 1e-12 && (el - 1.1).abs() < 1e-12);
        assert!(Direction::from_angles(0.0, -0.1).is_err());
        assert!(Direction::from_angles(0.0, 3.2).is_err());
    }

    #[test]
    fn mixing_matrix_columns_are_steering_vectors() {
        let g = ArrayGeometry::circular(4, 0.05, false).unwrap();
        let dirs = [Direction::horizontal(0.2), Direction::horizontal(1.9)];
        let freqs = [0.0, 500.0, 2500.0];
        let a = mixing_matrix(&g, &dirs, &freqs).unwrap();
        for (fi, &f) in freqs.iter().enumerate() {
            for (j, d) in dirs.iter().enumerate() {
                assert_eq!(a.column(fi, j), steering_vector(&g, d, f).unwrap());
            }
        }
        let single = mixing_matrix(&g, &dirs[..1], &freqs).unwrap();
        assert_eq!(single.n_sources(), 1);
        assert_eq!(single.column(2, 0), steering_vector(&g, &dirs[0], 2500.0).unwrap());
    }

    #[test]
    fn mixing_matrix_rejects_underdetermined_and_flags_duplicates() {
        let g = ArrayGeometry::linear(2, 0.05).unwrap();
        let dirs = [Direction::horizontal(0.0), Direction::horizontal(1.0), Direction::horizontal(2.0)];
        assert!(matches!(mixing_matrix(&g, &dirs, &[100.0]), Err(crate::Error::InvalidConfig(_))));
        let dup = [Direction::horizontal(0.4), Direction::horizontal(0.4)];
        assert!(has_coincident_directions(&dup));
        let a = mixing_matrix(&g, &dup, &[300.0, 900.0]).unwrap();
        for f in 0..2 {
            assert_eq!(a.column(f, 0), a.column(f, 1));
        }
    }

    #[test]
    fn geometry_document_is_recentered() {
        let g = ArrayGeometry::from_json(r#"{"mic_positions": [[1.0, 0.0, 0.0], [1.2, 0.0, 0.0]]}"#).unwrap();
        assert!((g.positions()[0][0] + 0.1).abs() < 1e-12);
        assert_eq!(g.sound_speed(), DEFAULT_SOUND_SPEED);
        assert!(ArrayGeometry::from_json(r#"{"mic_positions": [[0.0, 0.0, 0.0]]}"#).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((azimuth_distance(0.1, 2.0 * PI - 0.1) - 0.2).abs() < 1e-12);
    }
}

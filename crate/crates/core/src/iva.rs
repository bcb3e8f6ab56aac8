//! Determined AuxIVA with iterative source steering (ISS) updates.
//!
//! The cost is `𝒥 = −2T·Σ_f log|det W_f| + Σ_{n,f,t} |w_{n,f}ᴴx_{f,t}|²/r_{n,f,t}`.
//! One sweep visits every source `k` and applies the rank-one update
//! `W_f ← W_f − v_f·w_{k,f}ᴴ`, where each entry of `v_f` minimizes the cost
//! exactly with the variances held fixed, so `𝒥` never increases within a
//! sweep. For `n ≠ k` the weight is
//! `v_n = Σ_t y_n y_k* / r_n ÷ Σ_t |y_k|² / r_n`, using the variance of the
//! row being updated; `v_k = 1 − (Σ_t |y_k|²/r_k ÷ T)^{−1/2}`.

use ndarray::{Array3, ArrayView2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_config, invalid_input, Result};
use crate::linalg::{inverse_or_pinv, log_abs_det, CMatrix};
use crate::stft::Spectrogram;

/// Default variance floor relative to the mean input power.
pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-6;
/// Masks are clipped from below to this value before inversion.
pub const MASK_FLOOR: f64 = 1e-4;

/// Per-frequency demixing matrices, stored `(frequency, source, mic)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DemixingSystem {
    pub matrices: Array3<Complex64>,
    pub reference: ProjectionReference,
}

/// How separated outputs are rescaled after demixing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionReference {
    /// Source images at this microphone: `y_n·(W_f⁻¹)_{m,n}`.
    Channel(usize),
    /// Source `n` imaged at microphone `n`: `y_n·(W_f⁻¹)_{n,n}`.
    #[default]
    MinimalDistortion,
}

impl DemixingSystem {
    pub fn identity(n_freqs: usize, n: usize) -> Self {
        let mut matrices = Array3::zeros((n_freqs, n, n));
        for f in 0..n_freqs {
            for i in 0..n {
                matrices[[f, i, i]] = Complex64::new(1.0, 0.0);
            }
        }
        Self { matrices, reference: ProjectionReference::default() }
    }

    pub fn from_matrices(mats: &[CMatrix], reference: ProjectionReference) -> Result<Self> {
        let (n, m) = mats.first().map_or((0, 0), |w| w.shape());
        if mats.iter().any(|w| w.shape() != (n, m)) {
            return invalid_input("demixing matrices differ in shape");
        }
        let mut matrices = Array3::zeros((mats.len(), n, m));
        for (f, w) in mats.iter().enumerate() {
            for i in 0..n {
                for j in 0..m {
                    matrices[[f, i, j]] = w[(i, j)];
                }
            }
        }
        Ok(Self { matrices, reference })
    }

    pub fn n_freqs(&self) -> usize {
        self.matrices.dim().0
    }

    pub fn n_sources(&self) -> usize {
        self.matrices.dim().1
    }

    pub fn n_mics(&self) -> usize {
        self.matrices.dim().2
    }

    pub fn matrix(&self, f: usize) -> CMatrix {
        let (_, n, m) = self.matrices.dim();
        CMatrix::from_fn(n, m, |i, j| self.matrices[[f, i, j]])
    }

    pub fn matrices_vec(&self) -> Vec<CMatrix> {
        (0..self.n_freqs()).map(|f| self.matrix(f)).collect()
    }

    /// Keeps the listed rows (sources) in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self { matrices: self.matrices.select(Axis(1), rows), reference: self.reference }
    }

    /// `y_{f,t} = W_f x_{f,t}`.
    pub fn apply(&self, spec: &Spectrogram) -> Result<Spectrogram> {
        if spec.n_freqs() != self.n_freqs() || spec.n_channels() != self.n_mics() {
            return invalid_input(format!(
                "demixing system is {}×{} over {} bins, spectrogram has {} channels and {} bins",
                self.n_sources(),
                self.n_mics(),
                self.n_freqs(),
                spec.n_channels(),
                spec.n_freqs()
            ));
        }
        let mats: Vec<CMatrix> =
            (0..self.n_freqs()).into_par_iter().map(|f| self.matrix(f) * spec.freq_matrix(f)).collect();
        Ok(Spectrogram::from_freq_matrices(&mats, spec.config, spec.sample_rate))
    }
}

/// Time-frequency masks, stored `(source, frequency, frame)`, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    pub values: Array3<f64>,
}

impl MaskSet {
    pub fn new(values: Array3<f64>) -> Result<Self> {
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return invalid_input("mask values must lie in [0, 1]");
        }
        Ok(Self { values })
    }

    pub fn n_sources(&self) -> usize {
        self.values.dim().0
    }

    pub fn n_freqs(&self) -> usize {
        self.values.dim().1
    }

    pub fn n_frames(&self) -> usize {
        self.values.dim().2
    }

    pub fn source(&self, n: usize) -> ArrayView2<'_, f64> {
        self.values.index_axis(Axis(0), n)
    }
}

/// Source prior behind `r_{n,f,t}`.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceVarianceModel {
    /// `r_{n,t} = max(floor, (1/F)·Σ_f |y_{n,f,t}|²)`, shared across frequency.
    GaussSpherical { floor: f64 },
    /// `r = max(g_n / max(mask, 1e−4), floor)` with the per-source gain
    /// `g_n = (1/FT)·Σ_{f,t} mask·|y|²`, the maximum-likelihood scale of a
    /// variance proportional to `1/mask`.
    ExternalMask { masks: MaskSet, floor: f64 },
}

impl Default for SourceVarianceModel {
    fn default() -> Self {
        SourceVarianceModel::GaussSpherical { floor: DEFAULT_VARIANCE_FLOOR }
    }
}

impl SourceVarianceModel {
    fn floor_ratio(&self) -> f64 {
        match self {
            SourceVarianceModel::GaussSpherical { floor } | SourceVarianceModel::ExternalMask { floor, .. } => *floor,
        }
    }

    /// Variances `(source, frequency, frame)` for outputs `y`. `floor` is absolute.
    pub fn variances(&self, y: &Spectrogram, floor: f64) -> Array3<f64> {
        let (n, nf, t) = y.data.dim();
        let mut r = Array3::zeros((n, nf, t));
        match self {
            SourceVarianceModel::GaussSpherical { .. } => {
                for s in 0..n {
                    for k in 0..t {
                        let p = (0..nf).map(|f| y.data[[s, f, k]].norm_sqr()).sum::<f64>() / nf as f64;
                        let v = p.max(floor);
                        for f in 0..nf {
                            r[[s, f, k]] = v;
                        }
                    }
                }
            }
            SourceVarianceModel::ExternalMask { masks, .. } => {
                for s in 0..n {
                    let mut gain = 0.0;
                    for f in 0..nf {
                        for k in 0..t {
                            gain += masks.values[[s, f, k]] * y.data[[s, f, k]].norm_sqr();
                        }
                    }
                    gain /= (nf * t) as f64;
                    for f in 0..nf {
                        for k in 0..t {
                            r[[s, f, k]] = (gain / masks.values[[s, f, k]].max(MASK_FLOOR)).max(floor);
                        }
                    }
                }
            }
        }
        r
    }

    fn check(&self, spec: &Spectrogram) -> Result<()> {
        let ratio = self.floor_ratio();
        if !(ratio > 0.0 && ratio.is_finite()) {
            return invalid_config("variance floor must be positive");
        }
        if let SourceVarianceModel::ExternalMask { masks, .. } = self {
            let want = (spec.n_channels(), spec.n_freqs(), spec.n_frames());
            if masks.values.dim() != want {
                return invalid_input(format!("mask shape {:?} does not match {:?}", masks.values.dim(), want));
            }
        }
        Ok(())
    }
}

/// `𝒥` for demixing `w` and variances `r`. Singular `W_f` gives `+∞`.
pub fn iva_cost(w: &DemixingSystem, spec: &Spectrogram, r: &Array3<f64>) -> Result<f64> {
    let y = w.apply(spec)?;
    if r.dim() != y.data.dim() {
        return invalid_input(format!("variance shape {:?} does not match outputs {:?}", r.dim(), y.data.dim()));
    }
    if w.n_sources() != w.n_mics() {
        return invalid_input("cost needs square demixing matrices");
    }
    let t = spec.n_frames() as f64;
    let mut log_det = 0.0;
    for f in 0..w.n_freqs() {
        match log_abs_det(&w.matrix(f)) {
            Some(v) => log_det += v,
            None => return Ok(f64::INFINITY),
        }
    }
    let quad: f64 = y.data.iter().zip(r.iter()).map(|(z, v)| z.norm_sqr() / v).sum();
    Ok(-2.0 * t * log_det + quad)
}

/// Cost before and after one ISS sweep, both with the sweep's variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IssSweep {
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone)]
pub struct IvaOutput {
    pub demixing: DemixingSystem,
    /// Raw outputs `W x` before rescaling.
    pub separated: Spectrogram,
    /// Outputs after [`projection_back`].
    pub projected: Spectrogram,
    pub trace: Vec<IssSweep>,
}

pub fn auxiva_iss(
    spec: &Spectrogram,
    n_iter: usize,
    model: &SourceVarianceModel,
    reference: ProjectionReference,
) -> Result<IvaOutput> {
    model.check(spec)?;
    let m = spec.n_channels();
    if m == 0 || spec.n_frames() == 0 {
        return invalid_input("empty spectrogram");
    }
    if let ProjectionReference::Channel(c) = reference {
        if c >= m {
            return invalid_config(format!("reference channel {c} out of range for {m} channels"));
        }
    }
    let nf = spec.n_freqs();
    let floor = model.floor_ratio() * spec.mean_power().max(f64::MIN_POSITIVE);
    let xs: Vec<CMatrix> = (0..nf).map(|f| spec.freq_matrix(f)).collect();
    let mut ws: Vec<CMatrix> = vec![CMatrix::identity(m, m); nf];
    let mut ys: Vec<CMatrix> = xs.clone();
    let mut trace = Vec::with_capacity(n_iter);

    for _ in 0..n_iter {
        let y_spec = Spectrogram::from_freq_matrices(&ys, spec.config, spec.sample_rate);
        let r = model.variances(&y_spec, floor);
        let before = cost_from_parts(&ws, &ys, &r);
        ws.par_iter_mut().zip(ys.par_iter_mut()).enumerate().for_each(|(f, (w, y))| {
            iss_sweep(w, y, r.index_axis(Axis(1), f));
        });
        let after = cost_from_parts(&ws, &ys, &r);
        trace.push(IssSweep { before, after });
    }

    let demixing = DemixingSystem::from_matrices(&ws, reference)?;
    let separated = demixing.apply(spec)?;
    let projected = projection_back(&separated, &demixing, reference)?;
    Ok(IvaOutput { demixing, separated, projected, trace })
}

fn cost_from_parts(ws: &[CMatrix], ys: &[CMatrix], r: &Array3<f64>) -> f64 {
    let t = ys.first().map_or(0, |y| y.ncols()) as f64;
    let mut total = 0.0;
    for (f, (w, y)) in ws.iter().zip(ys).enumerate() {
        match log_abs_det(w) {
            Some(v) => total -= 2.0 * t * v,
            None => return f64::INFINITY,
        }
        for n in 0..y.nrows() {
            for k in 0..y.ncols() {
                total += y[(n, k)].norm_sqr() / r[[n, f, k]];
            }
        }
    }
    total
}

/// One ISS sweep at a single frequency; `r` is `(source, frame)`.
fn iss_sweep(w: &mut CMatrix, y: &mut CMatrix, r: ArrayView2<'_, f64>) {
    let (n, t) = y.shape();
    for k in 0..n {
        let mut v = vec![Complex64::new(0.0, 0.0); n];
        for (row, vn) in v.iter_mut().enumerate() {
            let mut num = Complex64::new(0.0, 0.0);
            let mut den = 0.0;
            for s in 0..t {
                let phi = 1.0 / r[[row, s]];
                num += y[(row, s)] * y[(k, s)].conj() * phi;
                den += y[(k, s)].norm_sqr() * phi;
            }
            if !(den > 0.0 && den.is_finite()) {
                continue;
            }
            *vn = if row == k { Complex64::new(1.0 - (den / t as f64).sqrt().recip(), 0.0) } else { num / den };
        }
        let yk: Vec<Complex64> = (0..t).map(|s| y[(k, s)]).collect();
        let wk: Vec<Complex64> = (0..w.ncols()).map(|j| w[(k, j)]).collect();
        for (row, &vn) in v.iter().enumerate() {
            if vn == Complex64::new(0.0, 0.0) {
                continue;
            }
            for s in 0..t {
                y[(row, s)] -= vn * yk[s];
            }
            for (j, &wkj) in wk.iter().enumerate() {
                w[(row, j)] -= vn * wkj;
            }
        }
    }
}

/// Rescales each output by an entry of `W_f⁻¹` so it becomes a source image.
pub fn projection_back(y: &Spectrogram, w: &DemixingSystem, reference: ProjectionReference) -> Result<Spectrogram> {
    if w.n_sources() != w.n_mics() {
        return invalid_input("projection back needs square demixing matrices");
    }
    if y.n_channels() != w.n_sources() || y.n_freqs() != w.n_freqs() {
        return invalid_input("outputs do not match the demixing system");
    }
    if let ProjectionReference::Channel(c) = reference {
        if c >= w.n_mics() {
            return invalid_config(format!("reference channel {c} out of range"));
        }
    }
    let mut out = y.clone();
    let mut fallbacks = 0;
    for f in 0..w.n_freqs() {
        let (inv, fallback) = inverse_or_pinv(&w.matrix(f));
        fallbacks += fallback as usize;
        for n in 0..w.n_sources() {
            let row = match reference {
                ProjectionReference::Channel(c) => c,
                ProjectionReference::MinimalDistortion => n,
            };
            let scale = inv[(row, n)];
            out.data.slice_mut(ndarray::s![n, f, ..]).mapv_inplace(|z| z * scale);
        }
    }
    if fallbacks > 0 {
        log::warn!("{fallbacks} singular demixing matrices rescaled with the pseudo-inverse");
    }
    Ok(out)
}

/// Iteration count used for a given number of channels.
pub fn default_iterations(n_channels: usize) -> usize {
    match n_channels {
        0..=2 => 30,
        3..=5 => 25,
        _ => 15,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stft::StftConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_spec(ch: usize, nf: usize, t: usize, seed: u64) -> Spectrogram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, 1.0).unwrap();
        let cfg = StftConfig::new(2 * (nf - 1), (nf - 1) / 2);
        let mut s = Spectrogram::zeros(ch, t, cfg, 16000.0);
        s.data.mapv_inplace(|_| c(n.sample(&mut rng), n.sample(&mut rng)));
        s
    }

    #[test]
    fn cost_of_identity_on_zero() {
        let s = Spectrogram::zeros(2, 4, StftConfig::new(4, 1), 16000.0);
        let r = Array3::from_elem((2, 3, 4), 1.0);
        assert_eq!(iva_cost(&DemixingSystem::identity(3, 2), &s, &r).unwrap(), 0.0);
    }

    #[test]
    fn unit_ratio_terms() {
        let mut s = Spectrogram::zeros(2, 1, StftConfig::new(2, 1), 16000.0);
        s.data.fill(c(0.6, 0.8));
        let r = Array3::from_elem((2, 2, 1), 1.0);
        let cost = iva_cost(&DemixingSystem::identity(2, 2), &s, &r).unwrap();
        assert!((cost - 4.0).abs() < 1e-12);
    }

    #[test]
    fn singular_cost_is_infinite() {
        let s = random_spec(2, 3, 4, 1);
        let mut w = DemixingSystem::identity(3, 2);
        w.matrices[[1, 1, 1]] = c(0.0, 0.0);
        let r = Array3::from_elem((2, 3, 4), 1.0);
        assert_eq!(iva_cost(&w, &s, &r).unwrap(), f64::INFINITY);
    }

    #[test]
    fn zero_iterations_is_identity() {
        let s = random_spec(2, 5, 20, 2);
        let out = auxiva_iss(&s, 0, &SourceVarianceModel::default(), ProjectionReference::MinimalDistortion).unwrap();
        assert_eq!(out.demixing, DemixingSystem::identity(5, 2));
        assert_eq!(out.projected.data, s.data);
    }

    #[test]
    fn projection_back_diagonal() {
        let mut w = DemixingSystem::identity(1, 2);
        w.matrices[[0, 0, 0]] = c(2.0, 0.0);
        w.matrices[[0, 1, 1]] = c(0.5, 0.0);
        let mut y = Spectrogram::zeros(2, 1, StftConfig::new(1, 1), 16000.0);
        y.data.fill(c(1.0, 1.0));
        let out = projection_back(&y, &w, ProjectionReference::MinimalDistortion).unwrap();
        assert!((out.data[[0, 0, 0]] - c(0.5, 0.5)).norm() < 1e-15);
        assert!((out.data[[1, 0, 0]] - c(2.0, 2.0)).norm() < 1e-15);
    }

    #[test]
    fn sweep_matches_separate_row_updates() {
        // W tracks Y: after a sweep, W x reproduces the incrementally updated Y.
        let s = random_spec(3, 4, 30, 8);
        let x = s.freq_matrix(2);
        let mut w = CMatrix::identity(3, 3);
        let mut y = x.clone();
        let r = ndarray::Array2::from_elem((3, 30), 0.7);
        iss_sweep(&mut w, &mut y, r.view());
        assert!((&w * &x - &y).norm() < 1e-10 * y.norm());
    }

    #[test]
    fn masks_out_of_range_rejected() {
        assert!(MaskSet::new(Array3::from_elem((1, 1, 1), 1.5)).is_err());
        assert!(MaskSet::new(Array3::from_elem((1, 1, 1), 0.25)).is_ok());
    }

    #[test]
    fn mask_model_shape_checked() {
        let s = random_spec(2, 5, 10, 4);
        let masks = MaskSet::new(Array3::from_elem((2, 5, 9), 0.5)).unwrap();
        let model = SourceVarianceModel::ExternalMask { masks, floor: 1e-6 };
        assert!(auxiva_iss(&s, 1, &model, ProjectionReference::MinimalDistortion).is_err());
    }

    #[test]
    fn iteration_defaults() {
        assert_eq!(default_iterations(2), 30);
        assert_eq!(default_iterations(3), 25);
        assert_eq!(default_iterations(6), 15);
    }
}

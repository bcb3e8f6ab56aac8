//! Mask-driven MVDR beamforming.
//!
//! `w = R⁻¹ã / (ãᴴR⁻¹ã)` minimizes `wᴴRw` subject to `wᴴã = 1`. `R` is always
//! loaded with `1e−6·tr(R)/M` on the diagonal before solving.

use ndarray::{s, Array3, ArrayView2};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::doa::CovarianceSet;
use crate::error::{invalid_input, Result};
use crate::geometry::{steering_vector, ArrayGeometry, Direction};
use crate::iva::MaskSet;
use crate::linalg::{hermitian_eigh, hermitize, solve_hermitian, trace_re, CMatrix, CVector};
use crate::stft::Spectrogram;

pub const DIAGONAL_LOADING: f64 = 1e-6;

/// Weights and steering vectors, both stored `(source, frequency, mic)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerWeights {
    pub weights: Array3<Complex64>,
    pub steering_used: Array3<Complex64>,
}

impl BeamformerWeights {
    pub fn n_sources(&self) -> usize {
        self.weights.dim().0
    }

    pub fn weight(&self, n: usize, f: usize) -> CVector {
        CVector::from_iterator(self.weights.dim().2, self.weights.slice(s![n, f, ..]).iter().copied())
    }

    pub fn steering(&self, n: usize, f: usize) -> CVector {
        CVector::from_iterator(self.steering_used.dim().2, self.steering_used.slice(s![n, f, ..]).iter().copied())
    }
}

/// `R_f = Σ_t mask·x xᴴ / Σ_t mask`. Bins with an all-zero mask use the
/// unmasked average.
pub fn masked_covariance(spec: &Spectrogram, mask: ArrayView2<'_, f64>) -> Result<CovarianceSet> {
    let (m, nf, t) = spec.data.dim();
    if mask.dim() != (nf, t) {
        return invalid_input(format!("mask shape {:?} does not match ({nf}, {t})", mask.dim()));
    }
    if mask.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return invalid_input("mask values must lie in [0, 1]");
    }
    let results: Vec<(CMatrix, bool)> = (0..nf)
        .into_par_iter()
        .map(|f| {
            let total: f64 = mask.row(f).sum();
            let fallback = total <= 0.0;
            let mut r = CMatrix::zeros(m, m);
            for k in 0..t {
                let wgt = if fallback { 1.0 } else { mask[[f, k]] };
                if wgt == 0.0 {
                    continue;
                }
                let x = spec.frame_vector(f, k);
                r += &x * x.adjoint() * Complex64::new(wgt, 0.0);
            }
            r /= Complex64::new(if fallback { t as f64 } else { total }, 0.0);
            hermitize(&mut r);
            (r, fallback)
        })
        .collect();
    let fallbacks = results.iter().filter(|r| r.1).count();
    if fallbacks > 0 {
        log::warn!("{fallbacks} bins with an all-zero mask fell back to the unmasked covariance");
    }
    Ok(CovarianceSet {
        matrices: results.into_iter().map(|r| r.0).collect(),
        frequencies: spec.frequencies(),
        frame_count: t,
    })
}

/// Unit-norm principal eigenvector with the `reference` entry real and nonnegative.
pub fn steering_from_covariance(r: &CMatrix, reference: usize) -> Result<CVector> {
    if reference >= r.nrows() {
        return invalid_input(format!("reference {reference} out of range"));
    }
    let (_, vecs) = hermitian_eigh(r)?;
    let mut a: CVector = vecs.column(r.ncols() - 1).into_owned();
    a /= Complex64::new(a.norm(), 0.0);
    let pivot = a[reference];
    if pivot.norm() > 0.0 {
        a *= pivot.conj() / pivot.norm();
    }
    Ok(a)
}

/// `R + δ·tr(R)/M·I`.
pub fn load_diagonal(r: &CMatrix) -> CMatrix {
    let m = r.nrows();
    let load = DIAGONAL_LOADING * trace_re(r) / m as f64;
    let mut out = r.clone();
    for i in 0..m {
        out[(i, i)] += load;
    }
    out
}

/// MVDR weight for one covariance and steering vector.
pub fn mvdr_vector(r: &CMatrix, a: &CVector) -> Result<CVector> {
    if a.norm() == 0.0 {
        return invalid_input("zero steering vector");
    }
    let mut loaded = load_diagonal(r);
    if trace_re(&loaded) <= 0.0 {
        loaded = CMatrix::identity(r.nrows(), r.ncols());
    }
    let ra = solve_hermitian(&loaded, &CMatrix::from_column_slice(a.len(), 1, a.as_slice()), 1e-10);
    let ra = ra.column(0).into_owned();
    let denom = a.dotc(&ra);
    if denom.norm() == 0.0 || !denom.is_finite() {
        return Err(crate::Error::Numerical("MVDR normalization vanished".into()));
    }
    Ok(ra / denom.conj())
}

/// Weights for each source from its noise covariances and steering vectors `(source, frequency, mic)`.
pub fn mvdr_weights(noise: &[CovarianceSet], steering: &Array3<Complex64>) -> Result<BeamformerWeights> {
    let (n, nf, m) = steering.dim();
    if noise.len() != n {
        return invalid_input(format!("{} noise covariances for {n} sources", noise.len()));
    }
    if noise.iter().any(|c| c.len() != nf || c.n_channels() != m) {
        return invalid_input("noise covariance shape does not match the steering vectors");
    }
    let mut weights = Array3::zeros((n, nf, m));
    for (src, cov) in noise.iter().enumerate() {
        let cols = (0..nf)
            .into_par_iter()
            .map(|f| {
                let a = CVector::from_iterator(m, steering.slice(s![src, f, ..]).iter().copied());
                mvdr_vector(&cov.matrices[f], &a)
            })
            .collect::<Result<Vec<_>>>()?;
        for (f, w) in cols.into_iter().enumerate() {
            for i in 0..m {
                weights[[src, f, i]] = w[i];
            }
        }
    }
    Ok(BeamformerWeights { weights, steering_used: steering.clone() })
}

/// `y_{n,f,t} = w_{n,f}ᴴ x_{f,t}`.
pub fn apply_beamformer(bw: &BeamformerWeights, spec: &Spectrogram) -> Result<Spectrogram> {
    let (n, nf, m) = bw.weights.dim();
    if spec.n_channels() != m || spec.n_freqs() != nf {
        return invalid_input("beamformer does not match the spectrogram");
    }
    let mut out = Spectrogram::zeros(n, spec.n_frames(), spec.config, spec.sample_rate);
    for src in 0..n {
        for f in 0..nf {
            let w = bw.weight(src, f);
            for t in 0..spec.n_frames() {
                out.data[[src, f, t]] = (0..m).map(|i| w[i].conj() * spec.data[[i, f, t]]).sum();
            }
        }
    }
    Ok(out)
}

/// Multiplies each output by the `reference` entry of its steering vector so
/// it becomes the source image at that microphone.
pub fn rescale_to_reference(y: &Spectrogram, bw: &BeamformerWeights, reference: usize) -> Result<Spectrogram> {
    let (n, nf, m) = bw.steering_used.dim();
    if reference >= m || y.n_channels() != n || y.n_freqs() != nf {
        return invalid_input("rescaling does not match the beamformer");
    }
    let mut out = y.clone();
    for src in 0..n {
        for f in 0..nf {
            let g = bw.steering_used[[src, f, reference]];
            out.data.slice_mut(s![src, f, ..]).mapv_inplace(|z| z * g);
        }
    }
    Ok(out)
}

/// Mask-driven MVDR: target steering from the `mask_n` covariance, noise
/// from `1 − mask_n`. Outputs are rescaled to the reference microphone.
pub fn mask_mvdr(spec: &Spectrogram, masks: &MaskSet, reference: usize) -> Result<(BeamformerWeights, Spectrogram)> {
    let (m, nf, t) = spec.data.dim();
    if masks.values.dim() != (masks.n_sources(), nf, t) {
        return invalid_input("mask shape does not match the spectrogram");
    }
    let n = masks.n_sources();
    let mut steering = Array3::zeros((n, nf, m));
    let mut noise = Vec::with_capacity(n);
    for src in 0..n {
        let target = masked_covariance(spec, masks.source(src))?;
        for f in 0..nf {
            let a = steering_from_covariance(&target.matrices[f], reference)?;
            for i in 0..m {
                steering[[src, f, i]] = a[i];
            }
        }
        let inverse = masks.source(src).mapv(|v| (1.0 - v).clamp(0.0, 1.0));
        noise.push(masked_covariance(spec, inverse.view())?);
    }
    let bw = mvdr_weights(&noise, &steering)?;
    let y = rescale_to_reference(&apply_beamformer(&bw, spec)?, &bw, reference)?;
    Ok((bw, y))
}

/// Geometric steering vectors `(source, frequency, mic)` for `dirs`.
pub fn steering_from_doas(geom: &ArrayGeometry, dirs: &[Direction], freqs: &[f64]) -> Result<Array3<Complex64>> {
    let m = geom.n_mics();
    let mut out = Array3::zeros((dirs.len(), freqs.len(), m));
    for (n, d) in dirs.iter().enumerate() {
        for (f, &hz) in freqs.iter().enumerate() {
            let a = steering_vector(geom, d, hz)?;
            for i in 0..m {
                out[[n, f, i]] = a[i];
            }
        }
    }
    Ok(out)
}

/// MVDR steered by DOAs. With masks the noise covariance of source `n` uses
/// `1 − mask_n`; without them the mixture covariance is used for every
/// source (minimum power distortionless response).
pub fn doa_mvdr(
    spec: &Spectrogram,
    geom: &ArrayGeometry,
    dirs: &[Direction],
    masks: Option<&MaskSet>,
) -> Result<(BeamformerWeights, Spectrogram)> {
    if geom.n_mics() != spec.n_channels() {
        return invalid_input("geometry does not match the spectrogram channels");
    }
    let steering = steering_from_doas(geom, dirs, &spec.frequencies())?;
    let noise = match masks {
        Some(mk) => {
            if mk.n_sources() != dirs.len() {
                return invalid_input("one mask per direction is required");
            }
            (0..dirs.len())
                .map(|src| {
                    let inverse = mk.source(src).mapv(|v| (1.0 - v).clamp(0.0, 1.0));
                    masked_covariance(spec, inverse.view())
                })
                .collect::<Result<Vec<_>>>()?
        }
        None => {
            let all = crate::doa::spatial_covariance(spec, 0..spec.n_frames())?;
            vec![all; dirs.len()]
        }
    };
    let bw = mvdr_weights(&noise, &steering)?;
    let y = apply_beamformer(&bw, spec)?;
    Ok((bw, y))
}

//! Short-time Fourier analysis and weighted overlap-add synthesis.
//!
//! Frames are one-sided (`n_fft/2 + 1` bins). The signal is zero-padded by
//! `n_fft − hop` samples at the front and by `n_fft − hop` plus up to
//! `hop − 1` alignment samples at the back, so every input sample is covered
//! by a full set of overlapping frames and synthesis is exact.

use std::f64::consts::PI;

use ndarray::{Array3, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_config, invalid_input, Result};
use crate::linalg::{CMatrix, CVector};

/// Relative ripple tolerated in the summed squared window.
const COLA_TOLERANCE: f64 = 1e-10;

/// Multichannel real time-domain signal.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal {
    pub channels: Vec<Vec<f64>>,
    pub sample_rate: f64,
}

impl TimeSignal {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate > 0.0) {
            return invalid_input("sample rate must be positive");
        }
        if let Some(first) = channels.first() {
            if channels.iter().any(|c| c.len() != first.len()) {
                return invalid_input("channels differ in length");
            }
        }
        Ok(Self { channels, sample_rate })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, m: usize) -> &[f64] {
        &self.channels[m]
    }

    pub fn energy(&self) -> f64 {
        self.channels.iter().flatten().map(|v| v * v).sum()
    }

    /// Keeps only the listed channels, in the given order.
    pub fn select_channels(&self, idx: &[usize]) -> Result<Self> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.n_channels()) {
            return invalid_config(format!("channel {bad} out of range ({} available)", self.n_channels()));
        }
        Ok(Self { channels: idx.iter().map(|&i| self.channels[i].clone()).collect(), sample_rate: self.sample_rate })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WindowKind {
    /// Periodic Hann.
    #[default]
    Hann,
    /// Square root of the periodic Hann window.
    SqrtHann,
    Rectangular,
}

impl WindowKind {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let hann = 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos();
                match self {
                    WindowKind::Hann => hann,
                    WindowKind::SqrtHann => hann.sqrt(),
                    WindowKind::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop: usize,
    #[serde(default)]
    pub window: WindowKind,
}

impl StftConfig {
    /// Periodic Hann with the given sizes.
    pub fn new(n_fft: usize, hop: usize) -> Self {
        Self { n_fft, hop, window: WindowKind::Hann }
    }

    /// Hann at 4× overlap.
    pub fn with_default_hop(n_fft: usize) -> Self {
        Self::new(n_fft, n_fft / 4)
    }

    pub fn n_freqs(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Checks sizes and that `Σ_k w²[n − k·hop]` is constant.
    pub fn validate(&self) -> Result<()> {
        if self.n_fft < 2 || !self.n_fft.is_multiple_of(2) {
            return invalid_config(format!("n_fft must be even and ≥ 2, got {}", self.n_fft));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return invalid_config(format!("hop {} must be in 1..={}", self.hop, self.n_fft));
        }
        let w = self.window.coefficients(self.n_fft);
        let sums: Vec<f64> = (0..self.hop)
            .map(|r| (r..self.n_fft).step_by(self.hop).map(|i| w[i] * w[i]).sum())
            .collect();
        let max = sums.iter().cloned().fold(f64::MIN, f64::max);
        let min = sums.iter().cloned().fold(f64::MAX, f64::min);
        if !(min > 0.0) || (max - min) > COLA_TOLERANCE * max {
            return invalid_config(format!(
                "{:?} window with n_fft={} hop={} does not overlap-add to a constant",
                self.window, self.n_fft, self.hop
            ));
        }
        Ok(())
    }

    /// Front and back zero padding for a signal of `len` samples.
    pub fn padding(&self, len: usize) -> (usize, usize) {
        let front = self.n_fft - self.hop;
        let base = len + 2 * front;
        if base < self.n_fft {
            return (front, front + self.n_fft - base);
        }
        let align = (self.hop - (base - self.n_fft) % self.hop) % self.hop;
        (front, front + align)
    }

    /// Number of frames produced for `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        let (front, back) = self.padding(len);
        (len + front + back - self.n_fft) / self.hop + 1
    }
}

/// Complex STFT tensor indexed `(channel, frequency, frame)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub data: Array3<Complex64>,
    pub config: StftConfig,
    pub sample_rate: f64,
}

impl Spectrogram {
    pub fn zeros(channels: usize, frames: usize, config: StftConfig, sample_rate: f64) -> Self {
        Self { data: Array3::zeros((channels, config.n_freqs(), frames)), config, sample_rate }
    }

    pub fn n_channels(&self) -> usize {
        self.data.dim().0
    }

    pub fn n_freqs(&self) -> usize {
        self.data.dim().1
    }

    pub fn n_frames(&self) -> usize {
        self.data.dim().2
    }

    /// Center frequency of bin `f` in Hz.
    pub fn bin_frequency(&self, f: usize) -> f64 {
        f as f64 * self.sample_rate / self.config.n_fft as f64
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.n_freqs()).map(|f| self.bin_frequency(f)).collect()
    }

    /// Bins whose center frequency lies in `[lo, hi]`.
    pub fn bins_in_band(&self, lo: f64, hi: f64) -> Vec<usize> {
        (0..self.n_freqs()).filter(|&f| (lo..=hi).contains(&self.bin_frequency(f))).collect()
    }

    /// The channel vector `x_{f,t}`.
    pub fn frame_vector(&self, f: usize, t: usize) -> CVector {
        CVector::from_iterator(self.n_channels(), (0..self.n_channels()).map(|m| self.data[[m, f, t]]))
    }

    /// All frames of bin `f` as a `channels × frames` matrix.
    pub fn freq_matrix(&self, f: usize) -> CMatrix {
        let (c, _, t) = self.data.dim();
        CMatrix::from_fn(c, t, |m, k| self.data[[m, f, k]])
    }

    /// Assembles a spectrogram from per-bin `channels × frames` matrices.
    pub fn from_freq_matrices(mats: &[CMatrix], config: StftConfig, sample_rate: f64) -> Self {
        let c = mats.first().map_or(0, |m| m.nrows());
        let t = mats.first().map_or(0, |m| m.ncols());
        let mut data = Array3::zeros((c, mats.len(), t));
        for (f, mat) in mats.iter().enumerate() {
            for m in 0..c {
                for k in 0..t {
                    data[[m, f, k]] = mat[(m, k)];
                }
            }
        }
        Self { data, config, sample_rate }
    }

    /// Keeps the listed channels in the given order.
    pub fn select_channels(&self, idx: &[usize]) -> Self {
        Self { data: self.data.select(Axis(0), idx), config: self.config, sample_rate: self.sample_rate }
    }

    /// `Σ_{f,t} |x_{c,f,t}|²` per channel.
    pub fn channel_energies(&self) -> Vec<f64> {
        self.data.outer_iter().map(|ch| ch.iter().map(|z| z.norm_sqr()).sum()).collect()
    }

    /// Mean of `|x|²` over every entry.
    pub fn mean_power(&self) -> f64 {
        let n = self.data.len();
        if n == 0 {
            return 0.0;
        }
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64
    }

    pub fn same_shape(&self, other: &Spectrogram) -> bool {
        self.data.dim() == other.data.dim()
    }
}

/// Forward STFT of every channel.
pub fn stft(signal: &TimeSignal, config: &StftConfig) -> Result<Spectrogram> {
    if config.hop > config.n_fft {
        return invalid_config(format!("hop {} exceeds n_fft {}", config.hop, config.n_fft));
    }
    config.validate()?;
    if signal.is_empty() || signal.n_channels() == 0 {
        return invalid_input("empty signal");
    }
    let len = signal.len();
    let (front, back) = config.padding(len);
    let frames = config.frame_count(len);
    let n_fft = config.n_fft;
    let window = config.window.coefficients(n_fft);
    let fft = RealFftPlanner::<f64>::new().plan_fft_forward(n_fft);

    let per_channel: Vec<Vec<Vec<Complex64>>> = signal
        .channels
        .par_iter()
        .map(|samples| {
            let mut padded = vec![0.0; len + front + back];
            padded[front..front + len].copy_from_slice(samples);
            let mut buf = vec![0.0; n_fft];
            let mut scratch = fft.make_scratch_vec();
            (0..frames)
                .map(|t| {
                    let start = t * config.hop;
                    for (i, b) in buf.iter_mut().enumerate() {
                        *b = padded[start + i] * window[i];
                    }
                    let mut out = fft.make_output_vec();
                    fft.process_with_scratch(&mut buf, &mut out, &mut scratch).expect("fft length");
                    out
                })
                .collect()
        })
        .collect();

    let mut spec = Spectrogram::zeros(signal.n_channels(), frames, *config, signal.sample_rate);
    for (m, ch) in per_channel.into_iter().enumerate() {
        for (t, frame) in ch.into_iter().enumerate() {
            for (f, v) in frame.into_iter().enumerate() {
                spec.data[[m, f, t]] = v;
            }
        }
    }
    Ok(spec)
}

/// Inverse STFT by weighted overlap-add, trimmed to `target_length` samples.
pub fn istft(spec: &Spectrogram, target_length: usize) -> Result<TimeSignal> {
    let config = spec.config;
    config.validate()?;
    if spec.n_freqs() != config.n_freqs() {
        return invalid_input(format!("spectrogram has {} bins, expected {}", spec.n_freqs(), config.n_freqs()));
    }
    let n_fft = config.n_fft;
    let frames = spec.n_frames();
    let window = config.window.coefficients(n_fft);
    let (front, _) = config.padding(target_length);
    let total = (frames.saturating_sub(1)) * config.hop + n_fft;
    let ifft = RealFftPlanner::<f64>::new().plan_fft_inverse(n_fft);

    // Σ_k w²[n − k·hop] over the overlap-add support.
    let mut norm = vec![0.0; total];
    for t in 0..frames {
        for i in 0..n_fft {
            norm[t * config.hop + i] += window[i] * window[i];
        }
    }

    let channels: Vec<Vec<f64>> = (0..spec.n_channels())
        .into_par_iter()
        .map(|m| {
            let mut acc = vec![0.0; total];
            let mut bins = vec![Complex64::new(0.0, 0.0); config.n_freqs()];
            let mut buf = vec![0.0; n_fft];
            let mut scratch = ifft.make_scratch_vec();
            for t in 0..frames {
                for (f, b) in bins.iter_mut().enumerate() {
                    *b = spec.data[[m, f, t]];
                }
                // A real frame has purely real DC and Nyquist bins.
                bins[0].im = 0.0;
                let last = bins.len() - 1;
                bins[last].im = 0.0;
                ifft.process_with_scratch(&mut bins, &mut buf, &mut scratch).expect("fft length");
                let start = t * config.hop;
                for i in 0..n_fft {
                    acc[start + i] += buf[i] * window[i] / n_fft as f64;
                }
            }
            (0..target_length)
                .map(|i| {
                    let p = front + i;
                    if p < total && norm[p] > 1e-12 {
                        acc[p] / norm[p]
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    TimeSignal::new(channels, spec.sample_rate)
}

//! Weighted prediction error dereverberation.
//!
//! Per frequency, the late reverberation of `x_t` is predicted from the
//! delayed frames `x̃_t = [x_{t−D}; …; x_{t−D−K+1}]` of every channel and
//! subtracted: `d_t = x_t − Gᴴx̃_t`. Variances `λ_t` and the filter `G` are
//! updated alternately, each step minimizing
//! `Σ_t Σ_m |d_{m,t}|²/λ_t + M·log λ_t` over its own block.

use ndarray::Array3;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_config, Result};
use crate::linalg::{solve_hermitian, CMatrix};
use crate::stft::Spectrogram;

/// Diagonal loading used only when the weighted normal equations are singular.
pub const NORMAL_EQUATION_LOADING: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WpeConfig {
    pub taps: usize,
    pub delay: usize,
    pub iterations: usize,
    /// Variance floor relative to the mean power of each frequency bin.
    pub variance_floor: f64,
}

impl Default for WpeConfig {
    fn default() -> Self {
        Self { taps: 10, delay: 3, iterations: 3, variance_floor: 1e-10 }
    }
}

impl WpeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.taps == 0 || self.delay == 0 || self.iterations == 0 {
            return invalid_config("WPE taps, delay and iterations must all be at least 1");
        }
        if !(self.variance_floor > 0.0 && self.variance_floor.is_finite()) {
            return invalid_config("WPE variance floor must be positive");
        }
        Ok(())
    }
}

/// Diagnostics of a [`wpe_with_trace`] run.
#[derive(Debug, Clone, PartialEq)]
pub struct WpeTrace {
    /// Objective at `d_0 = x` and after each iteration, each evaluated at
    /// the optimal variances for that `d`, summed over frequencies.
    pub objective: Vec<f64>,
    /// Frobenius norm of the final prediction filter per frequency.
    pub filter_norms: Vec<f64>,
}

pub fn wpe(spec: &Spectrogram, cfg: &WpeConfig) -> Result<Spectrogram> {
    wpe_with_trace(spec, cfg).map(|(out, _)| out)
}

pub fn wpe_with_trace(spec: &Spectrogram, cfg: &WpeConfig) -> Result<(Spectrogram, WpeTrace)> {
    cfg.validate()?;
    let t = spec.n_frames();
    if t <= cfg.delay + cfg.taps {
        return invalid_config(format!(
            "{t} frames are too few for delay {} and {} taps",
            cfg.delay, cfg.taps
        ));
    }
    let results: Vec<BinResult> = (0..spec.n_freqs())
        .into_par_iter()
        .map(|f| wpe_bin(&spec.freq_matrix(f), cfg))
        .collect();

    let (c, nf, _) = spec.data.dim();
    let mut data = Array3::zeros((c, nf, t));
    let mut objective = vec![0.0; cfg.iterations + 1];
    let mut filter_norms = Vec::with_capacity(nf);
    for (f, r) in results.into_iter().enumerate() {
        for m in 0..c {
            for k in 0..t {
                data[[m, f, k]] = r.output[(m, k)];
            }
        }
        for (acc, v) in objective.iter_mut().zip(&r.objective) {
            *acc += v;
        }
        filter_norms.push(r.filter_norm);
    }
    let out = Spectrogram { data, config: spec.config, sample_rate: spec.sample_rate };
    Ok((out, WpeTrace { objective, filter_norms }))
}

struct BinResult {
    output: CMatrix,
    objective: Vec<f64>,
    filter_norm: f64,
}

/// Stacked delayed frames `x̃`, `(M·K) × T`, zero before the first frame.
fn delayed_stack(x: &CMatrix, delay: usize, taps: usize) -> CMatrix {
    let (m, t) = x.shape();
    let mut s = CMatrix::zeros(m * taps, t);
    for k in 0..taps {
        let shift = delay + k;
        for col in shift..t {
            for ch in 0..m {
                s[(k * m + ch, col)] = x[(ch, col - shift)];
            }
        }
    }
    s
}

fn variances(d: &CMatrix, floor: f64) -> Vec<f64> {
    let m = d.nrows() as f64;
    d.column_iter().map(|col| (col.norm_squared() / m).max(floor)).collect()
}

fn objective(d: &CMatrix, lambda: &[f64]) -> f64 {
    let m = d.nrows() as f64;
    d.column_iter().zip(lambda).map(|(col, &l)| col.norm_squared() / l + m * l.ln()).sum()
}

fn wpe_bin(x: &CMatrix, cfg: &WpeConfig) -> BinResult {
    let mean_power = x.norm_squared() / x.len().max(1) as f64;
    if mean_power == 0.0 {
        return BinResult { output: x.clone(), objective: vec![0.0; cfg.iterations + 1], filter_norm: 0.0 };
    }
    let floor = cfg.variance_floor * mean_power;
    let stack = delayed_stack(x, cfg.delay, cfg.taps);
    let mut d = x.clone();
    let mut lambda = variances(&d, floor);
    let mut trace = vec![objective(&d, &lambda)];
    let mut g = CMatrix::zeros(stack.nrows(), x.nrows());
    for _ in 0..cfg.iterations {
        let mut weighted = stack.clone();
        for (mut col, &l) in weighted.column_iter_mut().zip(&lambda) {
            col /= Complex64::new(l, 0.0);
        }
        let r = &weighted * stack.adjoint();
        let p = &weighted * x.adjoint();
        g = solve_hermitian(&r, &p, NORMAL_EQUATION_LOADING);
        d = x - g.adjoint() * &stack;
        lambda = variances(&d, floor);
        trace.push(objective(&d, &lambda));
    }
    BinResult { output: d, objective: trace, filter_norm: g.norm() }
}

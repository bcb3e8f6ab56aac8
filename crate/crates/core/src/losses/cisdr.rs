//! Convolution-invariant SDR.
//!
//! The reference is passed through the least-squares FIR filter over lags
//! `1..=K` that best matches the estimate; the loss term is
//! `−10·log10(‖S̃α‖² / (‖S̃α − ŝ‖² + ε))` with `ε = 1e−8·‖S̃α‖²`, so each
//! term lies in `[−80, ∞)` dB. A silent reference scores `+80`.

use crate::assignment::{solve_min_cost, Assignment};
use crate::dsp::fir_least_squares;
use crate::error::{invalid_config, invalid_input, Result};
use crate::stft::TimeSignal;

/// Filter length used at 16 kHz.
pub const DEFAULT_CISDR_TAPS: usize = 512;
/// Relative residual floor `ε / ‖S̃α‖²`.
pub const RESIDUAL_FLOOR: f64 = 1e-8;
/// Tikhonov loading for a singular Gram matrix.
pub const GRAM_LOADING: f64 = 1e-10;
/// Term assigned when the filtered reference has no energy.
pub const SILENT_REFERENCE_TERM: f64 = 80.0;

/// Loss term for one reference/estimate pair with `taps` lags.
pub fn cisdr_term(reference: &[f64], estimate: &[f64], taps: usize) -> Result<f64> {
    if taps == 0 {
        return invalid_config("CI-SDR needs at least one tap");
    }
    if reference.len() != estimate.len() {
        return invalid_input("reference and estimate lengths differ");
    }
    if reference.len() <= taps {
        return invalid_input(format!("signal of {} samples is not longer than {taps} taps", reference.len()));
    }
    let fit = fir_least_squares(reference, estimate, 1..taps + 1, GRAM_LOADING)?;
    if fit.signal_energy <= 0.0 {
        return Ok(SILENT_REFERENCE_TERM);
    }
    let eps = RESIDUAL_FLOOR * fit.signal_energy;
    Ok(-10.0 * (fit.signal_energy / (fit.residual_energy + eps)).log10())
}

/// Sum of [`cisdr_term`] over sources, minimized over the permutation.
/// `permutation[n]` is the estimate matched to reference `n`.
pub fn cisdr_loss(reference: &TimeSignal, estimate: &TimeSignal, taps: usize) -> Result<(f64, Assignment)> {
    let n = reference.n_channels();
    if estimate.n_channels() != n {
        return invalid_input(format!("{n} references but {} estimates", estimate.n_channels()));
    }
    let mut cost = vec![vec![0.0; n]; n];
    for (r, row) in cost.iter_mut().enumerate() {
        for (e, c) in row.iter_mut().enumerate() {
            *c = cisdr_term(reference.channel(r), estimate.channel(e), taps)?;
        }
    }
    let pi = solve_min_cost(&cost);
    Ok((pi.cost(&cost), pi))
}

//! Correlation and multi-lag least-squares helpers on real time signals.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use realfft::RealFftPlanner;

use crate::error::{invalid_input, Result};

/// Cross-correlation `c[l] = Σ_i a[i]·b[i + l]` for `l` in `lags`.
///
/// Computed with one zero-padded real FFT pair.
pub fn cross_correlation(a: &[f64], b: &[f64], lags: Range<usize>) -> Vec<f64> {
    if lags.is_empty() {
        return Vec::new();
    }
    if a.is_empty() || b.is_empty() {
        return vec![0.0; lags.len()];
    }
    let n = (a.len() + b.len()).next_power_of_two();
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let mut buf_a = vec![0.0; n];
    buf_a[..a.len()].copy_from_slice(a);
    let mut buf_b = vec![0.0; n];
    buf_b[..b.len()].copy_from_slice(b);
    let mut spec_a = fwd.make_output_vec();
    let mut spec_b = fwd.make_output_vec();
    fwd.process(&mut buf_a, &mut spec_a).expect("fft length");
    fwd.process(&mut buf_b, &mut spec_b).expect("fft length");
    let mut prod: Vec<Complex64> = spec_a.iter().zip(&spec_b).map(|(x, y)| x.conj() * y).collect();
    // DC and Nyquist bins of a real signal's spectrum are real.
    prod[0].im = 0.0;
    let last = prod.len() - 1;
    prod[last].im = 0.0;
    let mut out = vec![0.0; n];
    inv.process(&mut prod, &mut out).expect("fft length");
    let scale = 1.0 / n as f64;
    lags.map(|l| if l < n { out[l] * scale } else { 0.0 }).collect()
}

/// Result of fitting a target with delayed copies of a reference.
#[derive(Debug, Clone)]
pub struct FirFit {
    /// Filter taps, one per lag of the requested range.
    pub taps: Vec<f64>,
    /// `‖S̃α‖²`, the energy of the filtered reference.
    pub signal_energy: f64,
    /// `‖S̃α − target‖²`.
    pub residual_energy: f64,
}

/// Least-squares fit `target ≈ Σ_k taps[k]·reference[i − lag_k]` over the
/// lags in `lags`, with samples before the start of `reference` taken as zero.
///
/// The Gram matrix is assembled from one autocorrelation and a diagonal
/// recursion, so the cost is `O(I log I + K²)` plus a `K×K` Cholesky solve.
/// A singular Gram matrix is regularized with `delta·trace·I`.
pub fn fir_least_squares(reference: &[f64], target: &[f64], lags: Range<usize>, delta: f64) -> Result<FirFit> {
    let len = target.len();
    if reference.len() != len {
        return invalid_input(format!("length mismatch: reference {} vs target {}", reference.len(), len));
    }
    if lags.is_empty() {
        return invalid_input("empty lag range");
    }
    let k = lags.len();
    let first = lags.start;

    // Columns whose lag reaches past the end are identically zero.
    let usable = len.saturating_sub(first);
    let auto = cross_correlation(&reference[..usable], &reference[..usable], 0..k);
    let mut gram = DMatrix::<f64>::zeros(k, k);
    for d in 0..k {
        gram[(0, d)] = auto[d];
    }
    // G[j+1][k+1] = G[j][k] − r[I−1−l_k]·r[I−1−l_j]
    for j in 0..k.saturating_sub(1) {
        for kk in j..(k - 1) {
            let lj = first + j;
            let lk = first + kk;
            let drop = if lk < len { reference[len - 1 - lk] * reference[len - 1 - lj] } else { 0.0 };
            gram[(j + 1, kk + 1)] = gram[(j, kk)] - drop;
        }
    }
    for j in 0..k {
        for kk in 0..j {
            gram[(j, kk)] = gram[(kk, j)];
        }
    }
    let cross = DVector::from_vec(cross_correlation(reference, target, lags.clone()));

    let taps = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&cross),
        None => {
            let tr = gram.trace();
            if tr <= 0.0 {
                DVector::zeros(k)
            } else {
                let mut loaded = gram.clone();
                for i in 0..k {
                    loaded[(i, i)] += delta * tr;
                }
                match loaded.clone().cholesky() {
                    Some(ch) => ch.solve(&cross),
                    None => loaded.lu().solve(&cross).unwrap_or_else(|| DVector::zeros(k)),
                }
            }
        }
    };
    // Energies from the filtered signal itself; the expanded quadratic form
    // loses the residual to cancellation when the fit is nearly exact.
    let mut h = vec![0.0; lags.end];
    for (j, t) in taps.iter().enumerate() {
        h[first + j] = *t;
    }
    let filtered = fft_convolve(reference, &h);
    let signal_energy: f64 = filtered.iter().map(|v| v * v).sum();
    let residual_energy: f64 = filtered.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(FirFit { taps: taps.iter().copied().collect(), signal_energy, residual_energy })
}

/// Linear convolution `a * h`, truncated to `a.len()` samples.
pub fn fft_convolve(a: &[f64], h: &[f64]) -> Vec<f64> {
    if a.is_empty() || h.is_empty() {
        return vec![0.0; a.len()];
    }
    let n = (a.len() + h.len()).next_power_of_two();
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf_a = vec![0.0; n];
    buf_a[..a.len()].copy_from_slice(a);
    let mut buf_h = vec![0.0; n];
    buf_h[..h.len()].copy_from_slice(h);
    let mut spec_a = fwd.make_output_vec();
    let mut spec_h = fwd.make_output_vec();
    fwd.process(&mut buf_a, &mut spec_a).expect("fft length");
    fwd.process(&mut buf_h, &mut spec_h).expect("fft length");
    let mut prod: Vec<Complex64> = spec_a.iter().zip(&spec_h).map(|(x, y)| x * y).collect();
    prod[0].im = 0.0;
    let last = prod.len() - 1;
    prod[last].im = 0.0;
    let mut out = vec![0.0; n];
    inv.process(&mut prod, &mut out).expect("fft length");
    let scale = 1.0 / n as f64;
    out.truncate(a.len());
    out.iter_mut().for_each(|v| *v *= scale);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_xcorr(a: &[f64], b: &[f64], l: usize) -> f64 {
        (0..a.len()).filter(|i| i + l < b.len()).map(|i| a[i] * b[i + l]).sum()
    }

    #[test]
    fn convolution_matches_direct_sum() {
        let a: Vec<f64> = (0..29).map(|i| ((i * 5 % 7) as f64 - 3.0) * 0.5).collect();
        let h = [1.0, -0.5, 0.25, 0.0, 2.0];
        let got = fft_convolve(&a, &h);
        for (i, g) in got.iter().enumerate() {
            let want: f64 = (0..h.len()).filter(|&k| k <= i).map(|k| h[k] * a[i - k]).sum();
            assert!((g - want).abs() < 1e-12);
        }
    }

    #[test]
    fn fft_correlation_matches_direct_sum() {
        let a: Vec<f64> = (0..37).map(|i| ((i * 7 % 11) as f64 - 5.0) * 0.3).collect();
        let b: Vec<f64> = (0..37).map(|i| ((i * 5 % 13) as f64 - 6.0) * 0.2).collect();
        let fast = cross_correlation(&a, &b, 0..10);
        for (l, v) in fast.iter().enumerate() {
            assert!((v - naive_xcorr(&a, &b, l)).abs() < 1e-12);
        }
    }

    #[test]
    fn pure_delay_is_fit_exactly() {
        let r: Vec<f64> = (0..64).map(|i| ((i * 13 % 17) as f64).sin()).collect();
        let mut t = vec![0.0; 64];
        t[3..].copy_from_slice(&r[..61]);
        let fit = fir_least_squares(&r, &t, 1..6, 1e-10).unwrap();
        assert!(fit.residual_energy < 1e-10 * fit.signal_energy);
        assert!((fit.taps[2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn silent_reference_gives_zero_taps() {
        let fit = fir_least_squares(&[0.0; 8], &[1.0; 8], 0..3, 1e-10).unwrap();
        assert!(fit.taps.iter().all(|&v| v == 0.0));
        assert_eq!(fit.signal_energy, 0.0);
        assert!((fit.residual_energy - 8.0).abs() < 1e-12);
    }
}

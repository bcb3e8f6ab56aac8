//! KL divergence between complex Gaussian source posteriors.
//!
//! Per bin, `KL(𝒩(ȳ, r̄) ‖ 𝒩(ŷ, r̂)) = |ŷ − ȳ|²/r̂ + r̄/r̂ + log(r̂/r̄) − 1`.

use ndarray::Array3;

use crate::assignment::{solve_min_cost, Assignment};
use crate::error::{invalid_input, Result};
use crate::stft::Spectrogram;
use num_complex::Complex64;

/// KL divergence of one time-frequency bin.
pub fn kld_term(y_hat: Complex64, r_hat: f64, y_bar: Complex64, r_bar: f64) -> f64 {
    (y_hat - y_bar).norm_sqr() / r_hat + r_bar / r_hat + (r_hat / r_bar).ln() - 1.0
}

/// Loss over every bin and source, minimized over one global permutation.
/// `permutation[n]` is the estimate matched to target source `n`.
pub fn kld_loss(y_hat: &Spectrogram, r_hat: &Array3<f64>, y_bar: &Spectrogram, r_bar: &Array3<f64>) -> Result<(f64, Assignment)> {
    let shape = y_hat.data.dim();
    if y_bar.data.dim() != shape || r_hat.dim() != shape || r_bar.dim() != shape {
        return invalid_input("estimate, target and variance shapes must agree");
    }
    if r_hat.iter().chain(r_bar.iter()).any(|&v| !(v > 0.0 && v.is_finite())) {
        return invalid_input("variances must be positive and finite");
    }
    let (n, nf, t) = shape;
    let mut cost = vec![vec![0.0; n]; n];
    for (target, row) in cost.iter_mut().enumerate() {
        for (est, c) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for f in 0..nf {
                for k in 0..t {
                    acc += kld_term(y_hat.data[[est, f, k]], r_hat[[est, f, k]], y_bar.data[[target, f, k]], r_bar[[target, f, k]]);
                }
            }
            *c = acc;
        }
    }
    let pi = solve_min_cost(&cost);
    Ok((pi.cost(&cost), pi))
}

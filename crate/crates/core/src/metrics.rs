//! Separation metrics and output selection.

use crate::assignment::{solve_min_cost, Assignment};
use crate::error::{invalid_input, Result};
use crate::stft::{Spectrogram, TimeSignal};

/// SI-SDR values are clipped to `±SDR_CAP_DB`.
pub const SDR_CAP_DB: f64 = 80.0;

/// Scale-invariant SDR `10·log10(‖βs‖² / ‖βs − ŝ‖²)` with `β = ⟨ŝ, s⟩/‖s‖²`.
pub fn si_sdr(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return invalid_input(format!("estimate has {} samples, reference {}", estimate.len(), reference.len()));
    }
    let ref_energy: f64 = reference.iter().map(|v| v * v).sum();
    if !(ref_energy > 0.0) {
        return invalid_input("reference is silent");
    }
    let beta = estimate.iter().zip(reference).map(|(e, r)| e * r).sum::<f64>() / ref_energy;
    let target = beta * beta * ref_energy;
    let error: f64 = estimate.iter().zip(reference).map(|(e, r)| (beta * r - e).powi(2)).sum();
    let value = if error == 0.0 {
        SDR_CAP_DB
    } else if target == 0.0 {
        -SDR_CAP_DB
    } else {
        10.0 * (target / error).log10()
    };
    Ok(value.clamp(-SDR_CAP_DB, SDR_CAP_DB))
}

/// Indices of the `n` largest energies in ascending index order; ties favour lower indices.
pub fn select_top(energies: &[f64], n: usize) -> Result<Vec<usize>> {
    if n > energies.len() {
        return invalid_input(format!("cannot select {n} of {} outputs", energies.len()));
    }
    let mut order: Vec<usize> = (0..energies.len()).collect();
    order.sort_by(|&a, &b| energies[b].total_cmp(&energies[a]).then(a.cmp(&b)));
    let mut picked = order[..n].to_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// The `n` output channels with the greatest total `|y|²`.
pub fn select_by_power(outputs: &Spectrogram, n: usize) -> Result<Vec<usize>> {
    select_top(&outputs.channel_energies(), n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermutationScore {
    pub mean: f64,
    /// `permutation[n]` is the estimate matched to reference `n`.
    pub assignment: Assignment,
    /// SI-SDR of each reference against its matched estimate.
    pub per_source: Vec<f64>,
}

/// Best mean SI-SDR over all estimate-to-reference assignments.
pub fn permutation_sdr(estimates: &TimeSignal, references: &TimeSignal) -> Result<PermutationScore> {
    let n = references.n_channels();
    if estimates.n_channels() != n {
        return invalid_input(format!("{} estimates for {n} references", estimates.n_channels()));
    }
    let mut table = vec![vec![0.0; n]; n];
    for (r, row) in table.iter_mut().enumerate() {
        for (e, v) in row.iter_mut().enumerate() {
            *v = si_sdr(estimates.channel(e), references.channel(r))?;
        }
    }
    let cost: Vec<Vec<f64>> = table.iter().map(|row| row.iter().map(|v| -v).collect()).collect();
    let assignment = solve_min_cost(&cost);
    let per_source: Vec<f64> = assignment.permutation.iter().enumerate().map(|(r, &e)| table[r][e]).collect();
    let mean = per_source.iter().sum::<f64>() / n.max(1) as f64;
    Ok(PermutationScore { mean, assignment, per_source })
}

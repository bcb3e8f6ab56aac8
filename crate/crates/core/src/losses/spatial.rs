//! Spatial loss between a demixing system and a DOA-derived mixing system.
//!
//! `B_f` is a normalized `|Ŵ_f Ā_f|` with entries in `[0, 1]` and the loss
//! is `min_Π Σ_f Σ_{n,m} |Π_{n,m} − B_{f,n,m}|` with one `Π` for every
//! frequency. Because `Π` is binary the objective equals
//! `Σ_f Σ B_f + Σ_{assigned} Σ_f (1 − 2·B_{f,n,m})`, which is a linear
//! assignment problem.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{brute_force_min, solve_min_cost, Assignment};
use crate::error::{invalid_input, Result};
use crate::geometry::MixingSystem;
use crate::iva::DemixingSystem;
use crate::linalg::CMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpatialLossMode {
    /// L2-normalize the rows of `Ŵ` and the columns of `Ā`, then take `|ŴĀ|`.
    Doa1,
    /// Divide each row of `|ŴĀ|` by its largest entry.
    Doa2,
}

/// `B_f` for one frequency; `w` is `N×M`, `a` is `M×N`.
pub fn normalized_response(w: &CMatrix, a: &CMatrix, mode: SpatialLossMode) -> DMatrix<f64> {
    match mode {
        SpatialLossMode::Doa1 => {
            let mut wn = w.clone();
            for mut row in wn.row_iter_mut() {
                let norm = row.norm();
                if norm > 0.0 {
                    row /= Complex64::new(norm, 0.0);
                }
            }
            let mut an = a.clone();
            for mut col in an.column_iter_mut() {
                let norm = col.norm();
                if norm > 0.0 {
                    col /= Complex64::new(norm, 0.0);
                }
            }
            (wn * an).map(|z| z.norm().min(1.0))
        }
        SpatialLossMode::Doa2 => {
            let mut b = (w * a).map(|z| z.norm());
            for mut row in b.row_iter_mut() {
                let max = row.max();
                if max > 0.0 {
                    row /= max;
                }
            }
            b
        }
    }
}

fn responses(w: &DemixingSystem, a: &MixingSystem, mode: SpatialLossMode) -> Result<Vec<DMatrix<f64>>> {
    if w.n_freqs() != a.n_freqs() {
        return invalid_input(format!("demixing has {} bins, mixing {}", w.n_freqs(), a.n_freqs()));
    }
    if w.n_mics() != a.n_mics() || w.n_sources() != a.n_sources() {
        return invalid_input(format!(
            "demixing is {}×{} but mixing is {}×{}",
            w.n_sources(),
            w.n_mics(),
            a.n_mics(),
            a.n_sources()
        ));
    }
    Ok((0..w.n_freqs()).into_par_iter().map(|f| normalized_response(&w.matrix(f), &a.matrix(f), mode)).collect())
}

/// `Σ_f Σ_{n,m} |Π_{n,m} − B_{f,n,m}|`, where `π(m)` is the demixing row
/// matched to source `m`.
pub fn loss_for_assignment(b: &[DMatrix<f64>], pi: &Assignment) -> f64 {
    let mut total = 0.0;
    for bf in b {
        for m in 0..bf.ncols() {
            for n in 0..bf.nrows() {
                let target = if pi.permutation[m] == n { 1.0 } else { 0.0 };
                total += (target - bf[(n, m)]).abs();
            }
        }
    }
    total
}

/// Loss and the optimal assignment; `permutation[m]` is the row of `Ŵ` matched to source `m`.
pub fn spatial_loss(w: &DemixingSystem, a: &MixingSystem, mode: SpatialLossMode) -> Result<(f64, Assignment)> {
    let b = responses(w, a, mode)?;
    let n = w.n_sources();
    let mut cost = vec![vec![0.0; n]; n];
    for bf in &b {
        for (m, row) in cost.iter_mut().enumerate() {
            for (r, c) in row.iter_mut().enumerate() {
                *c += 1.0 - 2.0 * bf[(r, m)];
            }
        }
    }
    let pi = solve_min_cost(&cost);
    Ok((loss_for_assignment(&b, &pi), pi))
}

/// Contribution of each frequency to the loss under a fixed assignment.
pub fn spatial_loss_per_frequency(w: &DemixingSystem, a: &MixingSystem, mode: SpatialLossMode, pi: &Assignment) -> Result<Vec<f64>> {
    if pi.len() != w.n_sources() {
        return invalid_input("assignment size does not match the demixing system");
    }
    let b = responses(w, a, mode)?;
    Ok(b.iter().map(|bf| loss_for_assignment(std::slice::from_ref(bf), pi)).collect())
}

/// Exhaustive search over all `N!` assignments.
pub fn spatial_loss_brute_force(w: &DemixingSystem, a: &MixingSystem, mode: SpatialLossMode) -> Result<(f64, Assignment)> {
    let b = responses(w, a, mode)?;
    Ok(brute_force_min(w.n_sources(), |pi| loss_for_assignment(&b, pi)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn real(rows: usize, cols: usize, v: &[f64]) -> CMatrix {
        CMatrix::from_row_slice(rows, cols, &v.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>())
    }

    #[test]
    fn doa2_hand_example() {
        let w = DemixingSystem::from_matrices(&[real(2, 2, &[0.9, 0.1, 0.2, 0.8])], Default::default()).unwrap();
        let a = MixingSystem::from_matrices(&[CMatrix::identity(2, 2)], vec![1000.0]);
        let (loss, pi) = spatial_loss(&w, &a, SpatialLossMode::Doa2).unwrap();
        assert!((loss - (1.0 / 9.0 + 0.25)).abs() < 1e-12);
        assert!(pi.is_identity());
        let b = responses(&w, &a, SpatialLossMode::Doa2).unwrap();
        let swapped = loss_for_assignment(&b, &Assignment::new(vec![1, 0]).unwrap());
        assert!((swapped - (4.0 - 1.0 / 9.0 - 0.25)).abs() < 1e-12);
    }

    #[test]
    fn zero_row_stays_zero() {
        let b = normalized_response(&real(2, 2, &[0.0, 0.0, 1.0, 2.0]), &CMatrix::identity(2, 2), SpatialLossMode::Doa2);
        assert_eq!(b[(0, 0)], 0.0);
        assert_eq!(b[(0, 1)], 0.0);
        assert_eq!(b[(1, 1)], 1.0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let w = DemixingSystem::identity(2, 2);
        let a = MixingSystem::from_matrices(&[CMatrix::identity(2, 2)], vec![1000.0]);
        assert!(spatial_loss(&w, &a, SpatialLossMode::Doa1).is_err());
    }
}

//! Training objectives for separation networks.
//!
//! - [`spatial`]: agreement between a demixing system and DOA-derived steering,
//! - [`kld`]: Gaussian KL divergence between estimated and target sources,
//! - [`cisdr`]: convolution-invariant SDR in the time domain.
//!
//! Every loss is minimized over the source permutation and returns the
//! optimal [`Assignment`](crate::Assignment).

pub mod cisdr;
pub mod kld;
pub mod spatial;

use crate::error::{invalid_input, Result};

pub use cisdr::{cisdr_loss, cisdr_term, DEFAULT_CISDR_TAPS};
pub use kld::{kld_loss, kld_term};
pub use spatial::{
    loss_for_assignment, normalized_response, spatial_loss, spatial_loss_brute_force, spatial_loss_per_frequency, SpatialLossMode,
};

/// Signal-loss weight used with IVA back ends.
pub const ALPHA_IVA: f64 = 0.2;
/// Signal-loss weight used with MVDR back ends.
pub const ALPHA_MVDR: f64 = 1.0;

/// `spatial + alpha·signal`.
pub fn combined_loss(spatial: f64, signal: f64, alpha: f64) -> Result<f64> {
    if !(alpha >= 0.0) {
        return invalid_input(format!("alpha must be nonnegative, got {alpha}"));
    }
    Ok(spatial + alpha * signal)
}

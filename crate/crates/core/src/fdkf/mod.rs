//! Frequency-domain Kalman filter (FDKF) feedback canceller.
//!
//! The filter works on blocks of `block` new samples with a `2 * block`
//! point FFT in overlap-save form, so every block of microphone input
//! produces a block of error signal with no extra latency. The path
//! estimate is split into `partitions` contiguous segments of `block` taps.
//!
//! Per bin and partition `p` (diagonal covariance model):
//!
//! ```text
//! E      = Y - sum_p R_p H_p
//! psi_vv = s psi_vv + (1 - s) |E|^2
//! K_p    = P_p R_p* / (sum_q |R_q|^2 P_q + psi_vv + eps)
//! H_p'   = A (H_p + K_p E)
//! P_p'   = A^2 (1 - Re(K_p R_p)) P_p + (1 - A^2) |H_p'|^2
//! ```
//!
//! In the streaming form `Y` and `E` are spectra of the zero-padded block
//! `[0; y]` and the increment `K_p E` is projected onto filters with
//! `block` taps of time support before it is added.

mod kalman;

pub use kalman::{process_stream, BlockTrace, KalmanCanceller, KalmanConfig, KalmanState};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KalmanError {
    #[error("invalid Kalman configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in bin {bin} at frame {frame}")]
    NonFinite { frame: u64, bin: usize },
    #[error(transparent)]
    Dsp(#[from] crate::dsp::DspError),
}

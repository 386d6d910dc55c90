//! Block DSP primitives: signals, framing, STFT/iSTFT, convolution, delays.

mod conv;
pub(crate) mod fft;
mod signal;
mod stft;

pub use conv::{convolve, convolve_direct, PartitionedConvolver};
pub use fft::RealFft;
pub use signal::{delay, delay_truncated, TimeSignal, DEFAULT_SAMPLE_RATE};
pub use stft::{frame_mean_squares, istft, stft, Spectrogram, StftConfig, Window};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("sample rate must be positive")]
    InvalidSampleRate,
    #[error("non-finite sample at index {index}")]
    NonFinite { index: usize },
    #[error("sample rates differ: {left} Hz vs {right} Hz")]
    SampleRateMismatch { left: u32, right: u32 },
    #[error("lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("negative delay {0}")]
    NegativeDelay(i64),
    #[error("invalid STFT configuration: {0}")]
    InvalidConfig(String),
    #[error("shape error: {0}")]
    Shape(String),
}

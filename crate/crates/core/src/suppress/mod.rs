//! Suppressors: anything that sits between microphone and amplifier in the
//! loop, plus the deep-filtering operator and DNN input features.
//!
//! A suppressor consumes one block of `hop` new samples per call and emits
//! one block. Samples cross this boundary as `f32`, the precision of the
//! external plugin protocol, so in-process and out-of-process processors
//! are interchangeable bit for bit.

mod basic;
mod cascade;
mod deepfilter;
mod features;
mod kalman;
mod notch;
pub mod plugin;

pub use basic::{ChannelSelect, GainLimiter, OracleSuppressor, Passthrough};
pub use cascade::Cascade;
pub use deepfilter::deep_filter_apply;
pub use features::{extract_features, FeatureSet, LPS_EPSILON};
pub use kalman::KalmanSuppressor;
pub use notch::{Biquad, NotchBank};
pub use plugin::{PluginConfig, PluginSuppressor, ProtocolError};

use thiserror::Error;

use crate::dsp::StftConfig;
use crate::fdkf::KalmanError;

/// What the host tells a suppressor before streaming starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamContext {
    pub sample_rate: u32,
    pub stft: StftConfig,
    /// Blocks between a final loop output block and its first arrival
    /// (through the loudspeaker path) in the microphone input.
    pub feedback_delay_blocks: usize,
}

impl StreamContext {
    pub fn new(sample_rate: u32, stft: StftConfig, feedback_delay_blocks: usize) -> Self {
        Self {
            sample_rate,
            stft,
            feedback_delay_blocks,
        }
    }

    pub fn hop(&self) -> usize {
        self.stft.hop
    }
}

#[derive(Debug, Error)]
pub enum SuppressorError {
    #[error("suppressor configuration: {0}")]
    Config(String),
    #[error("block shape: {0}")]
    Shape(String),
    #[error(transparent)]
    Kalman(#[from] KalmanError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Dsp(#[from] crate::dsp::DspError),
}

pub trait Suppressor: Send {
    fn name(&self) -> String;

    /// Prepares for a stream; also implies `reset`.
    fn init(&mut self, ctx: &StreamContext) -> Result<(), SuppressorError>;

    /// Number of input channels: 1 (microphone) or 2 (microphone and a
    /// preprocessed signal, in cascades).
    fn input_channels(&self) -> usize {
        1
    }

    /// Blocks between an input block and the output block it produces.
    fn latency_blocks(&self) -> usize {
        0
    }

    /// Whether the output is a feedback-cancelled error signal (enables ERLE
    /// diagnostics).
    fn is_canceller(&self) -> bool {
        false
    }

    fn process(&mut self, inputs: &[&[f32]], output: &mut [f32]) -> Result<(), SuppressorError>;

    /// Receives the block the loop finally sent to the amplifier.
    fn feedback(&mut self, _loop_output: &[f32]) {}

    /// Returns to the `init` state.
    fn reset(&mut self) -> Result<(), SuppressorError>;
}

impl<S: Suppressor + ?Sized> Suppressor for Box<S> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn init(&mut self, ctx: &StreamContext) -> Result<(), SuppressorError> {
        (**self).init(ctx)
    }
    fn input_channels(&self) -> usize {
        (**self).input_channels()
    }
    fn latency_blocks(&self) -> usize {
        (**self).latency_blocks()
    }
    fn is_canceller(&self) -> bool {
        (**self).is_canceller()
    }
    fn process(&mut self, inputs: &[&[f32]], output: &mut [f32]) -> Result<(), SuppressorError> {
        (**self).process(inputs, output)
    }
    fn feedback(&mut self, loop_output: &[f32]) {
        (**self).feedback(loop_output)
    }
    fn reset(&mut self) -> Result<(), SuppressorError> {
        (**self).reset()
    }
}

pub(crate) fn check_block(inputs: &[&[f32]], channels: usize, output: &[f32]) -> Result<(), SuppressorError> {
    if inputs.len() < channels {
        return Err(SuppressorError::Shape(format!(
            "expected {channels} input channels, got {}",
            inputs.len()
        )));
    }
    if inputs.iter().any(|c| c.len() != output.len()) {
        return Err(SuppressorError::Shape("input and output block lengths differ".into()));
    }
    Ok(())
}

/// Feeds whole signals through a suppressor outside the loop (no feedback
/// calls). The tail is zero-padded to a whole block.
pub fn process_offline<S: Suppressor + ?Sized>(
    suppressor: &mut S,
    channels: &[&[f32]],
    hop: usize,
) -> Result<Vec<f32>, SuppressorError> {
    let len = channels.first().map_or(0, |c| c.len());
    let blocks = len.div_ceil(hop);
    let padded: Vec<Vec<f32>> = channels
        .iter()
        .map(|c| {
            let mut v = c.to_vec();
            v.resize(blocks * hop, 0.0);
            v
        })
        .collect();
    let mut out = vec![0.0f32; blocks * hop];
    for (k, o) in out.chunks_exact_mut(hop).enumerate() {
        let ins: Vec<&[f32]> = padded.iter().map(|c| &c[k * hop..(k + 1) * hop]).collect();
        suppressor.process(&ins, o)?;
    }
    out.truncate(len);
    Ok(out)
}

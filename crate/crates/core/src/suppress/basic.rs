use super::{check_block, StreamContext, Suppressor, SuppressorError};
use crate::dsp::TimeSignal;

/// Identity.
#[derive(Debug, Clone, Copy, Default)]
pub struct Passthrough;

impl Suppressor for Passthrough {
    fn name(&self) -> String {
        "passthrough".into()
    }

    fn init(&mut self, _ctx: &StreamContext) -> Result<(), SuppressorError> {
        Ok(())
    }

    fn process(&mut self, inputs: &[&[f32]], output: &mut [f32]) -> Result<(), SuppressorError> {
        check_block(inputs, 1, output)?;
        output.copy_from_slice(inputs[0]);
        Ok(())
    }

    fn reset(&mut self) -> Result<(), SuppressorError> {
        Ok(())
    }
}

/// Forwards one input channel unchanged (0-based).
#[derive(Debug, Clone, Copy)]
pub struct ChannelSelect {
    pub channel: usize,
}

impl ChannelSelect {
    pub fn new(channel: usize) -> Self {
        Self { channel }
    }
}

impl Suppressor for ChannelSelect {
    fn name(&self) -> String {
        format!("channel{}", self.channel + 1)
    }

    fn init(&mut self, _ctx: &StreamContext) -> Result<(), SuppressorError> {
        Ok(())
    }

    fn input_channels(&self) -> usize {
        self.channel + 1
    }

    fn process(&mut self, inputs: &[&[f32]], output: &mut [f32]) -> Result<(), SuppressorError> {
        check_block(inputs, self.channel + 1, output)?;
        output.copy_from_slice(inputs[self.channel]);
        Ok(())
    }

    fn reset(&mut self) -> Result<(), SuppressorError> {
        Ok(())
    }
}

/// Caps how far a block's RMS may rise above the recent output level.
///
/// The reference level follows the output RMS with a one-pole smoother
/// (`time_constant` seconds). A block louder than `max_gain_db` above it is
/// scaled down; the gain is ramped linearly across each block.
#[derive(Debug, Clone)]
pub struct GainLimiter {
    pub max_gain_db: f64,
    pub time_constant: f64,
    /// Blocks quieter than this RMS are never attenuated.
    pub floor_rms: f64,
    smoothing: f64,
    reference: Option<f64>,
    gain: f64,
}

impl GainLimiter {
    pub fn new(max_gain_db: f64) -> Self {
        Self {
            max_gain_db,
            time_constant: 1.0,
            floor_rms: 1e-3,
            smoothing: 0.0,
            reference: None,
            gain: 1.0,
        }
    }
}

impl Suppressor for GainLimiter {
    fn name(&self) -> String {
        format!("gain_limiter({} dB)", self.max_gain_db)
    }

    fn init(&mut self, ctx: &StreamContext) -> Result<(), SuppressorError> {
        if !(self.max_gain_db >= 0.0 && self.time_constant > 0.0 && self.floor_rms >= 0.0) {
            return Err(SuppressorError::Config(
                "gain limiter needs max_gain_db >= 0, time_constant > 0, floor >= 0".into(),
            ));
        }
        let block_s = ctx.hop() as f64 / f64::from(ctx.sample_rate);
        self.smoothing = (-block_s / self.time_constant).exp();
        self.reset()
    }

    fn process(&mut self, inputs: &[&[f32]], output: &mut [f32]) -> Result<(), SuppressorError> {
        check_block(inputs, 1, output)?;
        let input = inputs[0];
        let n = input.len();
        let rms = (input.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>() / n as f64).sqrt();
        let reference = *self.reference.get_or_insert(rms);
        let allowed = (reference * 10f64.powf(self.max_gain_db / 20.0)).max(self.floor_rms);
        let target = if rms > allowed { allowed / rms } else { 1.0 };
        for (i, (o, &v)) in output.iter_mut().zip(input).enumerate() {
            let g = self.gain + (target - self.gain) * (i + 1) as f64 / n as f64;
            *o = (f64::from(v) * g) as f32;
        }
        self.gain = target;
        let out_rms = rms * target;
        self.reference = Some(self.smoothing * reference + (1.0 - self.smoothing) * out_rms);
        Ok(())
    }

    fn reset(&mut self) -> Result<(), SuppressorError> {
        self.reference = None;
        self.gain = 1.0;
        Ok(())
    }
}

/// Emits a known clean signal block by block, ignoring its input: the
/// perfect suppressor that turns the loop into the teacher-forced mixture.
#[derive(Debug, Clone)]
pub struct OracleSuppressor {
    clean: Vec<f32>,
    block: usize,
}

impl OracleSuppressor {
    pub fn new(clean: &TimeSignal) -> Self {
        Self {
            clean: clean.to_f32(),
            block: 0,
        }
    }
}

impl Suppressor for OracleSuppressor {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn init(&mut self, _ctx: &StreamContext) -> Result<(), SuppressorError> {
        self.reset()
    }

    fn process(&mut self, inputs: &[&[f32]], output: &mut [f32]) -> Result<(), SuppressorError> {
        check_block(inputs, 1, output)?;
        let start = self.block * output.len();
        for (i, o) in output.iter_mut().enumerate() {
            *o = self.clean.get(start + i).copied().unwrap_or(0.0);
        }
        self.block += 1;
        Ok(())
    }

    fn reset(&mut self) -> Result<(), SuppressorError> {
        self.block = 0;
        Ok(())
    }
}

use serde::{Deserialize, Serialize};

use super::DspError;

/// Default sample rate of every profile shipped with the crate.
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// A mono, finite, sampled waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSignal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl TimeSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, DspError> {
        if sample_rate == 0 {
            return Err(DspError::InvalidSampleRate);
        }
        if let Some(index) = samples.iter().position(|x| !x.is_finite()) {
            return Err(DspError::NonFinite { index });
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    /// Unit impulse of `len` samples with the spike at index 0.
    pub fn impulse(len: usize, sample_rate: u32) -> Self {
        let mut s = Self::zeros(len, sample_rate);
        if len > 0 {
            s.samples[0] = 1.0;
        }
        s
    }

    pub fn from_f32(samples: &[f32], sample_rate: u32) -> Result<Self, DspError> {
        Self::new(samples.iter().map(|&x| f64::from(x)).collect(), sample_rate)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum()
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.energy() / self.samples.len() as f64).sqrt()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|x| x * factor).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Truncates or zero-extends to exactly `len` samples.
    pub fn resized(&self, len: usize) -> Self {
        let mut samples = self.samples.clone();
        samples.resize(len, 0.0);
        Self {
            samples,
            sample_rate: self.sample_rate,
        }
    }

    /// Rounds every sample to the nearest `f32`, the resolution of the
    /// suppressor interface and of float WAV files.
    pub fn quantized_f32(&self) -> Self {
        Self {
            samples: self.samples.iter().map(|&x| f64::from(x as f32)).collect(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.samples.iter().map(|&x| x as f32).collect()
    }

    /// Sample-wise sum; lengths must agree.
    pub fn add(&self, other: &Self) -> Result<Self, DspError> {
        self.check_compatible(other)?;
        Ok(Self {
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + b)
                .collect(),
            sample_rate: self.sample_rate,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, DspError> {
        self.check_compatible(other)?;
        Ok(Self {
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a - b)
                .collect(),
            sample_rate: self.sample_rate,
        })
    }

    pub(crate) fn check_compatible(&self, other: &Self) -> Result<(), DspError> {
        if self.sample_rate != other.sample_rate {
            return Err(DspError::SampleRateMismatch {
                left: self.sample_rate,
                right: other.sample_rate,
            });
        }
        if self.len() != other.len() {
            return Err(DspError::LengthMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        Ok(())
    }
}

/// Prepends `n` zeros (the signal grows by `n` samples).
pub fn delay(signal: &TimeSignal, n: i64) -> Result<TimeSignal, DspError> {
    if n < 0 {
        return Err(DspError::NegativeDelay(n));
    }
    let n = n as usize;
    let mut samples = Vec::with_capacity(signal.len() + n);
    samples.resize(n, 0.0);
    samples.extend_from_slice(signal.samples());
    Ok(TimeSignal {
        samples,
        sample_rate: signal.sample_rate(),
    })
}

/// Like [`delay`] but keeps the original length, dropping the tail.
pub fn delay_truncated(signal: &TimeSignal, n: i64) -> Result<TimeSignal, DspError> {
    let mut out = delay(signal, n)?;
    out.samples.truncate(signal.len());
    Ok(out)
}

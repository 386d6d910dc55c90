use std::collections::VecDeque;
use std::f64::consts::PI;

use super::{check_block, StreamContext, Suppressor, SuppressorError};
use crate::dsp::{StftConfig, TimeSignal};
use crate::sim::detect_howling;

/// Second-order IIR section, direct form I, normalized so `a0 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
    x: [f64; 2],
    y: [f64; 2],
    pub frequency: f64,
}

impl Biquad {
    /// Notch with centre `frequency` Hz and quality `q` (cookbook design).
    pub fn notch(frequency: f64, q: f64, fs: u32) -> Result<Self, SuppressorError> {
        let nyquist = f64::from(fs) / 2.0;
        if !(frequency > 0.0 && frequency < nyquist) {
            return Err(SuppressorError::Config(format!(
                "notch frequency {frequency} Hz outside (0, {nyquist})"
            )));
        }
        if !(q > 0.0) {
            return Err(SuppressorError::Config("notch Q must be positive".into()));
        }
        let w0 = 2.0 * PI * frequency / f64::from(fs);
        let alpha = w0.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        let c = -2.0 * w0.cos();
        Ok(Self {
            b: [1.0 / a0, c / a0, 1.0 / a0],
            a: [c / a0, (1.0 - alpha) / a0],
            x: [0.0; 2],
            y: [0.0; 2],
            frequency,
        })
    }

    pub fn process_sample(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.b[1] * self.x[0] + self.b[2] * self.x[1]
            - self.a[0] * self.y[0]
            - self.a[1] * self.y[1];
        self.x = [x, self.x[0]];
        self.y = [y, self.y[0]];
        y
    }

    pub fn clear(&mut self) {
        self.x = [0.0; 2];
        self.y = [0.0; 2];
    }
}

/// Bank of notch filters. Fixed notches come from the constructor; in
/// adaptive mode the bank periodically runs the howling detector on its
/// recent input and adds a notch at each newly detected peak.
#[derive(Debug, Clone)]
pub struct NotchBank {
    fixed: Vec<f64>,
    pub q: f64,
    pub adaptive: bool,
    pub max_notches: usize,
    /// Seconds of input history inspected by the detector.
    pub history_s: f64,
    /// Seconds between detector runs.
    pub interval_s: f64,
    fs: u32,
    stft: StftConfig,
    filters: Vec<Biquad>,
    history: VecDeque<f32>,
    blocks: usize,
}

impl NotchBank {
    pub fn fixed(frequencies: Vec<f64>, q: f64) -> Self {
        Self {
            fixed: frequencies,
            q,
            adaptive: false,
            max_notches: 8,
            history_s: 2.0,
            interval_s: 0.25,
            fs: 0,
            stft: StftConfig::default(),
            filters: Vec::new(),
            history: VecDeque::new(),
            blocks: 0,
        }
    }

    pub fn adaptive(q: f64) -> Self {
        Self {
            adaptive: true,
            ..Self::fixed(Vec::new(), q)
        }
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.filters.iter().map(|f| f.frequency).collect()
    }

    fn history_len(&self) -> usize {
        (self.history_s * f64::from(self.fs)) as usize
    }

    fn maybe_add_notch(&mut self) -> Result<(), SuppressorError> {
        let interval = ((self.interval_s * f64::from(self.fs)) as usize / self.stft.hop).max(1);
        if !self.blocks.is_multiple_of(interval)
            || self.history.len() < self.history_len()
            || self.filters.len() >= self.max_notches
        {
            return Ok(());
        }
        let samples: Vec<f64> = self.history.iter().map(|&v| f64::from(v)).collect();
        let sig = TimeSignal::new(samples, self.fs)?;
        let report = detect_howling(&sig, &self.stft);
        if let Some(f) = report.peak_frequency_hz.filter(|_| report.detected) {
            let bin = f64::from(self.fs) / self.stft.fft_size as f64;
            if self.filters.iter().all(|n| (n.frequency - f).abs() > bin) {
                self.filters.push(Biquad::notch(f, self.q, self.fs)?);
                // the old history already contains the tone
                self.history.clear();
            }
        }
        Ok(())
    }
}

impl Suppressor for NotchBank {
    fn name(&self) -> String {
        if self.adaptive {
            "notch(adaptive)".into()
        } else {
            format!("notch({:?})", self.fixed)
        }
    }

    fn init(&mut self, ctx: &StreamContext) -> Result<(), SuppressorError> {
        self.fs = ctx.sample_rate;
        self.stft = ctx.stft;
        self.reset()
    }

    fn process(&mut self, inputs: &[&[f32]], output: &mut [f32]) -> Result<(), SuppressorError> {
        check_block(inputs, 1, output)?;
        for (o, &v) in output.iter_mut().zip(inputs[0]) {
            let mut s = f64::from(v);
            for f in &mut self.filters {
                s = f.process_sample(s);
            }
            *o = s as f32;
        }
        if self.adaptive {
            self.history.extend(inputs[0]);
            let cap = self.history_len();
            while self.history.len() > cap {
                self.history.pop_front();
            }
            self.blocks += 1;
            self.maybe_add_notch()?;
        }
        Ok(())
    }

    fn reset(&mut self) -> Result<(), SuppressorError> {
        if self.fs == 0 {
            return Err(SuppressorError::Config("notch bank used before init".into()));
        }
        self.filters = self
            .fixed
            .iter()
            .map(|&f| Biquad::notch(f, self.q, self.fs))
            .collect::<Result<_, _>>()?;
        self.history.clear();
        self.blocks = 0;
        Ok(())
    }
}

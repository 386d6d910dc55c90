//! Short-time Fourier analysis and overlap-add synthesis.
//!
//! Framing convention: the signal is zero-padded with `frame_len - hop`
//! samples at the front, and at the end with the smallest amount
//! `>= frame_len - hop` that makes the padded length land on the frame grid:
//!
//! ```text
//! pad_front = frame_len - hop
//! pad_end   = smallest p >= frame_len - hop with (pad_front + len + p - frame_len) % hop == 0
//! frames    = (pad_front + len + pad_end - frame_len) / hop + 1
//! ```
//!
//! With this padding every original sample sits where the full set of
//! overlapping frames exists, so analysis followed by synthesis reconstructs
//! the whole signal. Spectra are one-sided (`fft_size / 2 + 1` bins), the
//! forward transform is unnormalized and the inverse carries `1 / fft_size`.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fft::RealFft;
use super::{DspError, TimeSignal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// Periodic square-root Hann, used for both analysis and synthesis.
    SqrtHann,
    Rectangular,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::SqrtHann => (0..len)
                .map(|n| (std::f64::consts::PI * n as f64 / len as f64).sin())
                .collect(),
            Window::Rectangular => vec![1.0; len],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub fft_size: usize,
    pub frame_len: usize,
    pub hop: usize,
    pub window: Window,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self::wideband()
    }
}

impl StftConfig {
    /// 32 ms frames, 16 ms hop, 512-point transform at 16 kHz.
    pub const fn wideband() -> Self {
        Self {
            fft_size: 512,
            frame_len: 512,
            hop: 256,
            window: Window::SqrtHann,
        }
    }

    /// 8 ms frames, 4 ms hop at 16 kHz, for small deployable models.
    pub const fn low_latency() -> Self {
        Self {
            fft_size: 128,
            frame_len: 128,
            hop: 64,
            window: Window::SqrtHann,
        }
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn window_coefficients(&self) -> Vec<f64> {
        self.window.coefficients(self.frame_len)
    }

    /// Checks the size relations and the constant-overlap-add property of
    /// the analysis·synthesis window product; returns the overlap-add gain.
    pub fn validate(&self) -> Result<f64, DspError> {
        if self.hop == 0 || self.hop > self.frame_len || self.frame_len > self.fft_size {
            return Err(DspError::InvalidConfig(format!(
                "need 0 < hop <= frame_len <= fft_size, got hop={} frame_len={} fft_size={}",
                self.hop, self.frame_len, self.fft_size
            )));
        }
        if !self.fft_size.is_multiple_of(2) {
            return Err(DspError::InvalidConfig(format!(
                "fft_size must be even, got {}",
                self.fft_size
            )));
        }
        let w = self.window_coefficients();
        let sums: Vec<f64> = (0..self.hop)
            .map(|n| {
                (n..self.frame_len)
                    .step_by(self.hop)
                    .map(|i| w[i] * w[i])
                    .sum()
            })
            .collect();
        let max = sums.iter().cloned().fold(f64::MIN, f64::max);
        let min = sums.iter().cloned().fold(f64::MAX, f64::min);
        if max <= 0.0 || (max - min) > 1e-10 * max {
            return Err(DspError::InvalidConfig(format!(
                "{:?} window of {} samples is not overlap-add constant at hop {}",
                self.window, self.frame_len, self.hop
            )));
        }
        Ok(max)
    }

    /// `(pad_front, pad_end)` for a signal of `len` samples.
    pub fn padding(&self, len: usize) -> (usize, usize) {
        let front = self.frame_len - self.hop;
        let mut end = self.frame_len - self.hop;
        let covered = front + len + end;
        if covered < self.frame_len {
            end += self.frame_len - covered;
        }
        let rem = (front + len + end - self.frame_len) % self.hop;
        if rem != 0 {
            end += self.hop - rem;
        }
        (front, end)
    }

    pub fn frame_count(&self, len: usize) -> usize {
        let (front, end) = self.padding(len);
        (front + len + end - self.frame_len) / self.hop + 1
    }

    /// Index of the first original sample covered by frame `frame`
    /// (may be negative inside the front padding).
    pub fn frame_start(&self, frame: usize) -> i64 {
        (frame * self.hop) as i64 - (self.frame_len - self.hop) as i64
    }
}

/// Complex time-frequency matrix (`frames × bins`).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    data: Array2<Complex64>,
    config: StftConfig,
    signal_len: usize,
    sample_rate: u32,
}

impl Spectrogram {
    pub fn new(
        data: Array2<Complex64>,
        config: StftConfig,
        signal_len: usize,
        sample_rate: u32,
    ) -> Result<Self, DspError> {
        config.validate()?;
        let (frames, bins) = data.dim();
        if bins != config.bins() {
            return Err(DspError::Shape(format!(
                "spectrogram has {bins} bins, config expects {}",
                config.bins()
            )));
        }
        if frames != config.frame_count(signal_len) {
            return Err(DspError::Shape(format!(
                "spectrogram has {frames} frames, a {signal_len}-sample signal needs {}",
                config.frame_count(signal_len)
            )));
        }
        if data.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(DspError::Shape("spectrogram contains non-finite entries".into()));
        }
        Ok(Self {
            data,
            config,
            signal_len,
            sample_rate,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            data: Array2::zeros(self.data.dim()),
            ..self.clone()
        }
    }

    pub fn frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn bins(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<Complex64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array2<Complex64> {
        &mut self.data
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn magnitudes(&self) -> Array2<f64> {
        self.data.mapv(|c| c.norm())
    }

    pub fn same_shape(&self, other: &Self) -> Result<(), DspError> {
        if self.data.dim() != other.data.dim() {
            return Err(DspError::Shape(format!(
                "spectrogram shapes differ: {:?} vs {:?}",
                self.data.dim(),
                other.data.dim()
            )));
        }
        Ok(())
    }
}

pub fn stft(signal: &TimeSignal, config: &StftConfig) -> Result<Spectrogram, DspError> {
    config.validate()?;
    let len = signal.len();
    let (front, end) = config.padding(len);
    let mut padded = vec![0.0; front + len + end];
    padded[front..front + len].copy_from_slice(signal.samples());

    let frames = config.frame_count(len);
    let window = config.window_coefficients();
    let fft = RealFft::new(config.fft_size);
    let mut data = Array2::zeros((frames, config.bins()));
    let mut buf = vec![0.0; config.fft_size];
    let mut spec = vec![Complex64::new(0.0, 0.0); config.bins()];
    for f in 0..frames {
        let start = f * config.hop;
        buf.iter_mut().for_each(|x| *x = 0.0);
        for (i, w) in window.iter().enumerate() {
            buf[i] = padded[start + i] * w;
        }
        fft.forward(&mut buf, &mut spec);
        data.row_mut(f)
            .iter_mut()
            .zip(&spec)
            .for_each(|(d, s)| *d = *s);
    }
    Ok(Spectrogram {
        data,
        config: *config,
        signal_len: len,
        sample_rate: signal.sample_rate(),
    })
}

pub fn istft(spec: &Spectrogram) -> Result<TimeSignal, DspError> {
    let config = spec.config;
    let cola = config.validate()?;
    if spec.bins() != config.bins() {
        return Err(DspError::Shape(format!(
            "spectrogram has {} bins, config expects {}",
            spec.bins(),
            config.bins()
        )));
    }
    let len = spec.signal_len;
    if spec.frames() != config.frame_count(len) {
        return Err(DspError::Shape(format!(
            "spectrogram has {} frames, a {len}-sample signal needs {}",
            spec.frames(),
            config.frame_count(len)
        )));
    }
    let (front, end) = config.padding(len);
    let mut out = vec![0.0; front + len + end];
    let window = config.window_coefficients();
    let fft = RealFft::new(config.fft_size);
    let mut frame = vec![0.0; config.fft_size];
    let mut buf: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); config.bins()];
    for f in 0..spec.frames() {
        buf.iter_mut()
            .zip(spec.data.row(f))
            .for_each(|(b, s)| *b = *s);
        fft.inverse(&mut buf, &mut frame);
        let start = f * config.hop;
        for (i, w) in window.iter().enumerate() {
            out[start + i] += frame[i] * w;
        }
    }
    let samples = out[front..front + len].iter().map(|x| x / cola).collect();
    TimeSignal::new(samples, spec.sample_rate)
}

/// Frame-level energies of the raw (unwindowed) frames on the STFT grid,
/// as mean squares.
pub fn frame_mean_squares(signal: &TimeSignal, config: &StftConfig) -> Vec<f64> {
    let len = signal.len();
    let x = signal.samples();
    (0..config.frame_count(len))
        .map(|f| {
            let start = config.frame_start(f);
            let sum: f64 = (0..config.frame_len as i64)
                .filter_map(|i| {
                    let idx = start + i;
                    (idx >= 0 && (idx as usize) < len).then(|| x[idx as usize].powi(2))
                })
                .sum();
            sum / config.frame_len as f64
        })
        .collect()
}

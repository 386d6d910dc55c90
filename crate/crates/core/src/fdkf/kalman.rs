use std::collections::VecDeque;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::KalmanError;
use crate::dsp::{RealFft, StftConfig, TimeSignal};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanConfig {
    /// New samples per update; the FFT size is twice this.
    pub block: usize,
    pub partitions: usize,
    /// Transition factor A.
    pub transition: f64,
    pub initial_p_cov: f64,
    /// Recursive smoothing constant for the observation-noise estimate.
    pub smoothing: f64,
    pub epsilon: f64,
    /// Project the update onto `block`-tap filters (overlap-save constraint).
    pub constrain: bool,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self::from_stft(&StftConfig::default())
    }
}

impl KalmanConfig {
    /// Block equal to the STFT hop, total filter support equal to the frame.
    pub fn from_stft(stft: &StftConfig) -> Self {
        Self {
            block: stft.hop,
            partitions: stft.frame_len.div_ceil(stft.hop).max(1),
            transition: 0.999,
            initial_p_cov: 1.0,
            smoothing: 0.9,
            epsilon: 1e-10,
            constrain: true,
        }
    }

    pub fn with_partitions(mut self, partitions: usize) -> Self {
        self.partitions = partitions;
        self
    }

    pub fn fft_size(&self) -> usize {
        2 * self.block
    }

    pub fn bins(&self) -> usize {
        self.block + 1
    }

    pub fn validate(&self) -> Result<(), KalmanError> {
        let err = |m: String| Err(KalmanError::Config(m));
        if self.block == 0 {
            return err("block must be positive".into());
        }
        if self.partitions == 0 {
            return err("partitions must be >= 1".into());
        }
        if !(self.transition > 0.0 && self.transition <= 1.0) {
            return err(format!("transition {} outside (0, 1]", self.transition));
        }
        if !(self.initial_p_cov >= 0.0 && self.initial_p_cov.is_finite()) {
            return err(format!("initial covariance {} must be >= 0", self.initial_p_cov));
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            return err(format!("smoothing {} outside [0, 1)", self.smoothing));
        }
        if !(self.epsilon > 0.0) {
            return err("epsilon must be positive".into());
        }
        Ok(())
    }
}

/// Per-bin filter state. Partition-major: `h_hat[p][bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub h_hat: Vec<Vec<Complex64>>,
    pub p_cov: Vec<Vec<f64>>,
    pub psi_vv: Vec<f64>,
    pub psi_dd: Vec<Vec<f64>>,
    pub transition: f64,
    pub frame_index: u64,
    smoothing: f64,
    epsilon: f64,
    constraint: Option<RealFft>,
    scratch: Vec<f64>,
    gain: Vec<Complex64>,
}

impl KalmanState {
    pub fn new(config: &KalmanConfig) -> Result<Self, KalmanError> {
        config.validate()?;
        let bins = config.bins();
        let parts = config.partitions;
        Ok(Self {
            h_hat: vec![vec![ZERO; bins]; parts],
            p_cov: vec![vec![config.initial_p_cov; bins]; parts],
            psi_vv: vec![0.0; bins],
            psi_dd: vec![vec![0.0; bins]; parts],
            transition: config.transition,
            frame_index: 0,
            smoothing: config.smoothing,
            epsilon: config.epsilon,
            constraint: config.constrain.then(|| RealFft::new(config.fft_size())),
            scratch: vec![0.0; config.fft_size()],
            gain: vec![ZERO; bins],
        })
    }

    pub fn bins(&self) -> usize {
        self.psi_vv.len()
    }

    pub fn partitions(&self) -> usize {
        self.h_hat.len()
    }

    /// Euclidean norm of the stacked path estimate.
    pub fn h_norm(&self) -> f64 {
        self.h_hat
            .iter()
            .flatten()
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    fn check_shapes(&self, y: &[Complex64], r: &[Vec<Complex64>]) -> Result<(), KalmanError> {
        if y.len() != self.bins() {
            return Err(KalmanError::Shape(format!(
                "frame has {} bins, filter has {}",
                y.len(),
                self.bins()
            )));
        }
        if r.len() != self.partitions() || r.iter().any(|p| p.len() != self.bins()) {
            return Err(KalmanError::Shape(format!(
                "reference needs {} partitions of {} bins",
                self.partitions(),
                self.bins()
            )));
        }
        Ok(())
    }

    /// `E = Y - sum_p R_p H_p`. `r[p]` is the reference spectrum `p` blocks
    /// ago.
    pub fn predict(&self, y: &[Complex64], r: &[Vec<Complex64>]) -> Result<Vec<Complex64>, KalmanError> {
        self.check_shapes(y, r)?;
        let mut e = y.to_vec();
        for (rp, hp) in r.iter().zip(&self.h_hat) {
            for ((ev, rv), hv) in e.iter_mut().zip(rp).zip(hp) {
                *ev -= rv * hv;
            }
        }
        Ok(e)
    }

    pub fn update(&mut self, e: &[Complex64], r: &[Vec<Complex64>]) -> Result<(), KalmanError> {
        self.check_shapes(e, r)?;
        if let Some(bin) = e.iter().position(|c| !c.is_finite()) {
            return Err(KalmanError::NonFinite {
                frame: self.frame_index,
                bin,
            });
        }
        let a = self.transition;
        let a2 = a * a;
        let s = self.smoothing;
        let bins = self.bins();

        for (psi, ev) in self.psi_vv.iter_mut().zip(e) {
            *psi = s * *psi + (1.0 - s) * ev.norm_sqr();
        }
        let mut denom: Vec<f64> = self.psi_vv.iter().map(|v| v + self.epsilon).collect();
        for (rp, pp) in r.iter().zip(&self.p_cov) {
            for ((d, rv), pv) in denom.iter_mut().zip(rp).zip(pp) {
                *d += rv.norm_sqr() * pv;
            }
        }

        for p in 0..self.partitions() {
            let rp = &r[p];
            for k in 0..bins {
                self.gain[k] = rp[k].conj() * (self.p_cov[p][k] / denom[k]);
            }
            let increment: Vec<Complex64> = self.gain.iter().zip(e).map(|(g, ev)| g * ev).collect();
            let increment = match &self.constraint {
                Some(fft) => constrain(fft, increment, &mut self.scratch),
                None => increment,
            };
            for k in 0..bins {
                let h = a * (self.h_hat[p][k] + increment[k]);
                let kr = (self.gain[k] * rp[k]).re;
                let dd = (1.0 - a2) * h.norm_sqr();
                let pc = a2 * (1.0 - kr).max(0.0) * self.p_cov[p][k] + dd;
                if !(h.is_finite() && pc.is_finite()) {
                    return Err(KalmanError::NonFinite {
                        frame: self.frame_index,
                        bin: k,
                    });
                }
                self.h_hat[p][k] = h;
                self.psi_dd[p][k] = dd;
                self.p_cov[p][k] = pc;
            }
        }
        self.frame_index += 1;
        Ok(())
    }
}

/// Keeps the first half of the time-domain response and zeroes the rest.
fn constrain(fft: &RealFft, mut spectrum: Vec<Complex64>, scratch: &mut [f64]) -> Vec<Complex64> {
    fft.inverse(&mut spectrum, scratch);
    let half = scratch.len() / 2;
    scratch[half..].iter_mut().for_each(|v| *v = 0.0);
    fft.forward(scratch, &mut spectrum);
    spectrum
}

/// Per-block diagnostics of a running canceller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockTrace {
    /// `10 log10(|y|^2 / |e|^2)` over the block, capped at +/-120 dB.
    pub erle_db: f64,
    pub h_norm: f64,
}

/// Streaming overlap-save FDKF: one call per block of `block` samples.
#[derive(Debug, Clone)]
pub struct KalmanCanceller {
    config: KalmanConfig,
    state: KalmanState,
    fft: RealFft,
    refs: VecDeque<Vec<Complex64>>,
    prev_ref: Vec<f64>,
    frame: Vec<f64>,
    spectrum: Vec<Complex64>,
    time: Vec<f64>,
}

impl KalmanCanceller {
    pub fn new(config: KalmanConfig) -> Result<Self, KalmanError> {
        let state = KalmanState::new(&config)?;
        let n = config.fft_size();
        let bins = config.bins();
        Ok(Self {
            refs: (0..config.partitions).map(|_| vec![ZERO; bins]).collect(),
            prev_ref: vec![0.0; config.block],
            frame: vec![0.0; n],
            spectrum: vec![ZERO; bins],
            time: vec![0.0; n],
            fft: RealFft::new(n),
            state,
            config,
        })
    }

    pub fn config(&self) -> &KalmanConfig {
        &self.config
    }

    pub fn state(&self) -> &KalmanState {
        &self.state
    }

    pub fn reset(&mut self) {
        *self = Self::new(self.config).expect("config validated at construction");
    }

    /// Cancels the feedback predicted from `reference` in `mic`, writes the
    /// error block and adapts.
    pub fn process_block(
        &mut self,
        mic: &[f64],
        reference: &[f64],
        error: &mut [f64],
    ) -> Result<BlockTrace, KalmanError> {
        let b = self.config.block;
        if mic.len() != b || reference.len() != b || error.len() != b {
            return Err(KalmanError::Shape(format!("blocks must have {b} samples")));
        }

        self.frame[..b].copy_from_slice(&self.prev_ref);
        self.frame[b..].copy_from_slice(reference);
        self.prev_ref.copy_from_slice(reference);
        let mut newest = self.refs.pop_back().expect("at least one partition");
        self.fft.forward(&mut self.frame, &mut newest);
        self.refs.push_front(newest);
        let refs = self.refs.make_contiguous();

        // Y = FFT([0; y]); the first half of IFFT(E) is circular garbage
        // and gets replaced by zeros before the update.
        self.frame[..b].iter_mut().for_each(|v| *v = 0.0);
        self.frame[b..].copy_from_slice(mic);
        self.fft.forward(&mut self.frame, &mut self.spectrum);
        let mut e = self.state.predict(&self.spectrum, refs)?;
        self.fft.inverse(&mut e, &mut self.time);
        error.copy_from_slice(&self.time[b..]);
        self.time[..b].iter_mut().for_each(|v| *v = 0.0);
        self.fft.forward(&mut self.time, &mut e);

        self.state.update(&e, refs)?;

        let ey: f64 = mic.iter().map(|v| v * v).sum();
        let ee: f64 = error.iter().map(|v| v * v).sum();
        Ok(BlockTrace {
            erle_db: crate::metrics::capped_ratio_db(ey, ee).value,
            h_norm: self.state.h_norm(),
        })
    }
}

/// Runs the canceller over whole signals. The last partial block is
/// zero-padded; `e` has the length of `y`.
pub fn process_stream(
    config: &KalmanConfig,
    y: &TimeSignal,
    r: &TimeSignal,
) -> Result<(TimeSignal, Vec<BlockTrace>), KalmanError> {
    y.check_compatible(r)?;
    let mut canceller = KalmanCanceller::new(*config)?;
    let b = config.block;
    let blocks = y.len().div_ceil(b);
    let mut padded_y = y.samples().to_vec();
    let mut padded_r = r.samples().to_vec();
    padded_y.resize(blocks * b, 0.0);
    padded_r.resize(blocks * b, 0.0);
    let mut e = vec![0.0; blocks * b];
    let mut trace = Vec::with_capacity(blocks);
    for ((yb, rb), eb) in padded_y
        .chunks_exact(b)
        .zip(padded_r.chunks_exact(b))
        .zip(e.chunks_exact_mut(b))
    {
        trace.push(canceller.process_block(yb, rb, eb)?);
    }
    e.truncate(y.len());
    Ok((TimeSignal::new(e, y.sample_rate())?, trace))
}

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::dsp::{convolve, delay_truncated, frame_mean_squares, PartitionedConvolver, StftConfig, TimeSignal};
use crate::room::{apply_nonlinearity, NonlinearityModel, RirSet};

/// Frames quieter than this (dBFS, frame mean square) are ignored when
/// measuring SPR and SNR.
pub const ACTIVE_FRAME_DBFS: f64 = -40.0;

/// Loop samples are limited to this magnitude.
pub const SATURATION_LIMIT: f64 = 10.0;

/// Piecewise-constant amplifier gain over time. Breakpoints are
/// `(time_s, gain)`; the gain before the first breakpoint is the first
/// gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct GainSchedule {
    breakpoints: Vec<(f64, f64)>,
}

impl From<Vec<(f64, f64)>> for GainSchedule {
    fn from(mut breakpoints: Vec<(f64, f64)>) -> Self {
        breakpoints.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self { breakpoints }
    }
}

impl From<GainSchedule> for Vec<(f64, f64)> {
    fn from(g: GainSchedule) -> Self {
        g.breakpoints
    }
}

impl GainSchedule {
    pub fn constant(gain: f64) -> Self {
        Self {
            breakpoints: vec![(0.0, gain)],
        }
    }

    pub fn steps(breakpoints: Vec<(f64, f64)>) -> Self {
        breakpoints.into()
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.breakpoints.is_empty() {
            return Err(SimError::Config("gain schedule is empty".into()));
        }
        if self
            .breakpoints
            .iter()
            .any(|&(t, g)| !(t.is_finite() && g >= 0.0 && g.is_finite()))
        {
            return Err(SimError::Config("gains must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn at(&self, time_s: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&(t, _)| t <= time_s);
        self.breakpoints[idx.saturating_sub(1)].1
    }

    /// Gain for every sample index.
    pub fn per_sample(&self, len: usize, fs: u32) -> Vec<f64> {
        let fsf = f64::from(fs);
        (0..len).map(|i| self.at(i as f64 / fsf)).collect()
    }

    pub fn max_gain(&self) -> f64 {
        self.breakpoints.iter().map(|b| b.1).fold(0.0, f64::max)
    }
}

/// One amplification-loop experiment.
///
/// `target` and `noise` are dry source signals; they reach the microphone
/// through `rirs.h_nearend` and `rirs.h_noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub target: TimeSignal,
    /// Looped or truncated to the scenario length.
    pub noise: Option<TimeSignal>,
    pub rirs: RirSet,
    pub gain: GainSchedule,
    /// Microphone-to-loudspeaker delay in seconds, rounded to whole hops.
    pub system_delay: f64,
    pub nonlinearity: NonlinearityModel,
    /// Target-to-playback ratio of the one-time playback at unit gain;
    /// `None` keeps the physical scale of the loudspeaker path.
    pub spr_db: Option<f64>,
    /// `None` adds the noise unscaled.
    pub snr_db: Option<f64>,
    /// Active-frame RMS of the microphone target; `None` keeps its level.
    pub target_level_dbfs: Option<f64>,
    pub stft: StftConfig,
    pub duration: f64,
}

impl ScenarioConfig {
    /// Scalar loudspeaker path `a * delta`, identity nonlinearity, no noise
    /// and no rescaling.
    pub fn scalar_toy(target: TimeSignal, a: f64, gain: f64, system_delay: f64) -> Self {
        let fs = target.sample_rate();
        Self {
            duration: target.duration_secs(),
            target,
            noise: None,
            rirs: RirSet::scalar(a, fs),
            gain: GainSchedule::constant(gain),
            system_delay,
            nonlinearity: NonlinearityModel::Identity,
            spr_db: None,
            snr_db: None,
            target_level_dbfs: None,
            stft: StftConfig::default(),
        }
    }

    pub fn sample_rate(&self) -> u32 {
        self.target.sample_rate()
    }

    pub fn hop(&self) -> usize {
        self.stft.hop
    }

    /// Δt in whole hops.
    pub fn delay_blocks(&self) -> usize {
        (self.system_delay * f64::from(self.sample_rate()) / self.stft.hop as f64).round() as usize
    }

    pub fn len(&self) -> usize {
        (self.duration * f64::from(self.sample_rate())).round() as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.stft.validate()?;
        self.gain.validate()?;
        self.nonlinearity.validate()?;
        let fs = self.sample_rate();
        for h in [&self.rirs.h_loudspeaker, &self.rirs.h_nearend, &self.rirs.h_noise] {
            if h.sample_rate() != fs {
                return Err(SimError::Config(format!(
                    "RIR sample rate {} differs from target {fs}",
                    h.sample_rate()
                )));
            }
        }
        if let Some(n) = &self.noise {
            if n.sample_rate() != fs {
                return Err(SimError::Config("noise sample rate differs from target".into()));
            }
        }
        if !(self.system_delay >= 0.0 && self.system_delay.is_finite()) {
            return Err(SimError::Config("system delay must be >= 0".into()));
        }
        if !(self.duration > 0.0) || self.len() > self.target.len() {
            return Err(SimError::Config(format!(
                "duration {} s must be positive and within the target ({} s)",
                self.duration,
                self.target.duration_secs()
            )));
        }
        if self.delay_blocks() == 0 {
            return Err(SimError::Config(format!(
                "system delay {} s rounds to zero hops",
                self.system_delay
            )));
        }
        Ok(())
    }

    /// Resolves the scenario into microphone-side components and the
    /// playback chain parameters.
    pub fn prepare(&self) -> Result<PreparedScenario, SimError> {
        self.validate()?;
        let fs = self.sample_rate();
        let len = self.len();
        let hop = self.hop();
        let delay_blocks = self.delay_blocks();

        let dry = self.target.resized(len);
        let mut s = reverberate(&dry, &self.rirs.h_nearend, len)?;
        if let Some(level) = self.target_level_dbfs {
            let want = 10f64.powf(level / 20.0);
            if s.rms() == 0.0 {
                return Err(SimError::Scaling("target has zero energy".into()));
            }
            // coarse pass on the whole signal so the active-frame threshold
            // is meaningful, then the active-frame correction
            s = s.scaled(want / s.rms());
            let p = active_power(&s, &s, &self.stft)?.expect("non-zero target");
            s = s.scaled(want / p.sqrt());
        }
        // the suppressor boundary is single precision; keep the target on
        // that grid so an ideal suppressor reproduces it exactly
        let s = s.quantized_f32();

        let n = match &self.noise {
            Some(noise) if !noise.is_empty() => {
                let looped: Vec<f64> = noise.samples().iter().copied().cycle().take(len).collect();
                let n = reverberate(&TimeSignal::new(looped, fs)?, &self.rirs.h_noise, len)?;
                match self.snr_db {
                    Some(snr) => {
                        let ps = active_power(&s, &s, &self.stft)?
                            .ok_or_else(|| SimError::Scaling("target has zero energy".into()))?;
                        let pn = active_power(&s, &n, &self.stft)?
                            .filter(|p| *p > 0.0)
                            .ok_or_else(|| SimError::Scaling("noise has zero energy".into()))?;
                        n.scaled((ps / (pn * 10f64.powf(snr / 10.0))).sqrt())
                    }
                    None => n,
                }
            }
            _ => TimeSignal::zeros(len, fs),
        };

        let playback_scale = match self.spr_db {
            Some(spr) => {
                let ps = active_power(&s, &s, &self.stft)?.ok_or_else(|| {
                    SimError::Scaling("zero-energy target cannot be scaled to an SPR".into())
                })?;
                let src = delay_truncated(&s, (delay_blocks * hop) as i64)?;
                let raw = reverberate(
                    &apply_nonlinearity(&src, &self.nonlinearity),
                    &self.rirs.h_loudspeaker,
                    len,
                )?;
                let pd = active_power(&s, &raw, &self.stft)?
                    .filter(|p| *p > 0.0)
                    .ok_or_else(|| SimError::Scaling("one-time playback has zero energy".into()))?;
                (ps / (pd * 10f64.powf(spr / 10.0))).sqrt()
            }
            None => 1.0,
        };

        Ok(PreparedScenario {
            target: s,
            noise: n,
            kernel: self.rirs.h_loudspeaker.scaled(playback_scale),
            playback_scale,
            gains: self.gain.per_sample(len.div_ceil(hop) * hop, fs),
            nonlinearity: self.nonlinearity,
            delay_blocks,
            stft: self.stft,
        })
    }
}

fn reverberate(x: &TimeSignal, h: &TimeSignal, len: usize) -> Result<TimeSignal, SimError> {
    Ok(convolve(x, h)?.resized(len))
}

/// Mean frame power of `x` over the active frames of `reference`. Falls back
/// to all frames when no frame is active but `reference` has energy;
/// `None` when `reference` is silent.
pub fn active_power(
    reference: &TimeSignal,
    x: &TimeSignal,
    config: &StftConfig,
) -> Result<Option<f64>, SimError> {
    if reference.energy() == 0.0 {
        return Ok(None);
    }
    let mr = frame_mean_squares(reference, config);
    let mx = frame_mean_squares(x, config);
    let threshold = 10f64.powf(ACTIVE_FRAME_DBFS / 10.0);
    let active: Vec<usize> = (0..mr.len()).filter(|&i| mr[i] > threshold).collect();
    let frames: Vec<usize> = if active.is_empty() {
        (0..mr.len()).collect()
    } else {
        active
    };
    Ok(Some(frames.iter().map(|&i| mx[i]).sum::<f64>() / frames.len() as f64))
}

/// Microphone-side components and playback parameters of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedScenario {
    /// Target as picked up by the microphone, on the f32 grid.
    pub target: TimeSignal,
    pub noise: TimeSignal,
    /// Loudspeaker-to-microphone response including the SPR scale.
    pub kernel: TimeSignal,
    pub playback_scale: f64,
    /// Amplifier gain per sample, padded to whole hops.
    gains: Vec<f64>,
    pub nonlinearity: NonlinearityModel,
    pub delay_blocks: usize,
    pub stft: StftConfig,
}

impl PreparedScenario {
    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn hop(&self) -> usize {
        self.stft.hop
    }

    pub fn blocks(&self) -> usize {
        self.len().div_ceil(self.hop())
    }

    pub fn sample_rate(&self) -> u32 {
        self.target.sample_rate()
    }

    pub fn playback_chain(&self) -> PlaybackChain {
        PlaybackChain {
            conv: PartitionedConvolver::new(self.kernel.samples(), self.hop()),
            nonlinearity: self.nonlinearity,
            gains: self.gains.clone(),
            hop: self.hop(),
            block: 0,
            distorted: vec![0.0; self.hop()],
        }
    }

    /// `target + noise` for block `k`, zero-padded past the end.
    pub(crate) fn near_end_block(&self, k: usize, out: &mut [f64]) {
        let start = k * self.hop();
        let s = self.target.samples();
        let n = self.noise.samples();
        for (i, o) in out.iter_mut().enumerate() {
            let t = start + i;
            *o = if t < s.len() { s[t] + n[t] } else { 0.0 };
        }
    }
}

/// Amplifier, loudspeaker nonlinearity and room path, one hop at a time:
/// `x = G(t) * src`, `d = kernel * NL(x)`.
#[derive(Debug, Clone)]
pub struct PlaybackChain {
    conv: PartitionedConvolver,
    nonlinearity: NonlinearityModel,
    gains: Vec<f64>,
    hop: usize,
    block: usize,
    distorted: Vec<f64>,
}

impl PlaybackChain {
    pub fn process(&mut self, src: &[f64], x: &mut [f64], d: &mut [f64]) {
        let start = self.block * self.hop;
        for (i, (xv, &sv)) in x.iter_mut().zip(src).enumerate() {
            *xv = self.gains.get(start + i).copied().unwrap_or(0.0) * sv;
            self.distorted[i] = self.nonlinearity.apply_sample(*xv);
        }
        self.conv.process(&self.distorted, d);
        self.block += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::source::{synthetic_noise, synthetic_speech};

    const FS: u32 = 16_000;

    #[test]
    fn gain_schedule_steps() {
        let g = GainSchedule::steps(vec![(2.0, 3.0), (0.0, 1.0), (1.0, 2.0)]);
        assert_eq!(g.at(0.0), 1.0);
        assert_eq!(g.at(0.99), 1.0);
        assert_eq!(g.at(1.0), 2.0);
        assert_eq!(g.at(10.0), 3.0);
        assert_eq!(GainSchedule::steps(vec![(0.5, 2.0)]).at(0.0), 2.0);
        let json = serde_json::to_string(&g).unwrap();
        assert_eq!(json, "[[0.0,1.0],[1.0,2.0],[2.0,3.0]]");
        assert_eq!(serde_json::from_str::<GainSchedule>(&json).unwrap(), g);
    }

    fn scenario() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::scalar_toy(synthetic_speech(1, 3.0, FS), 0.7, 1.0, 0.1);
        cfg.noise = Some(synthetic_noise(2, 1.0, FS));
        cfg
    }

    #[test]
    fn snr_and_spr_scaling() {
        let mut cfg = scenario();
        cfg.snr_db = Some(5.0);
        cfg.spr_db = Some(-3.0);
        let p = cfg.prepare().unwrap();
        let ps = active_power(&p.target, &p.target, &cfg.stft).unwrap().unwrap();
        let pn = active_power(&p.target, &p.noise, &cfg.stft).unwrap().unwrap();
        assert!((10.0 * (ps / pn).log10() - 5.0).abs() < 1e-9);
        // scalar path: raw playback is 0.7 * delayed target
        let delayed = delay_truncated(&p.target, (p.delay_blocks * 256) as i64).unwrap();
        let pd = active_power(&p.target, &delayed.scaled(0.7), &cfg.stft).unwrap().unwrap();
        let expected = (ps / (pd * 10f64.powf(-0.3))).sqrt();
        assert!((p.playback_scale - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn equal_power_zero_spr_gives_unit_scale() {
        let mut cfg = scenario();
        cfg.spr_db = Some(0.0);
        // first pass measures the raw playback power through a unit path
        cfg.rirs = RirSet::scalar(1.0, FS);
        let c1 = cfg.prepare().unwrap().playback_scale;
        // a path of gain c1 makes raw playback and target equal in power
        cfg.rirs = RirSet::scalar(c1, FS);
        let c = cfg.prepare().unwrap().playback_scale;
        assert!((c - 1.0).abs() < 1e-12, "{c}");
    }

    #[test]
    fn zero_target_with_spr_is_a_scaling_error() {
        let mut cfg = ScenarioConfig::scalar_toy(TimeSignal::zeros(16_000, FS), 1.0, 1.0, 0.1);
        cfg.spr_db = Some(0.0);
        assert!(matches!(cfg.prepare(), Err(SimError::Scaling(_))));
    }

    #[test]
    fn invalid_scenarios() {
        let mut cfg = scenario();
        cfg.system_delay = 0.001;
        assert!(matches!(cfg.validate(), Err(SimError::Config(_))));
        let mut cfg = scenario();
        cfg.duration = 100.0;
        assert!(matches!(cfg.validate(), Err(SimError::Config(_))));
        let mut cfg = scenario();
        cfg.gain = GainSchedule::constant(-1.0);
        assert!(matches!(cfg.validate(), Err(SimError::Config(_))));
    }
}

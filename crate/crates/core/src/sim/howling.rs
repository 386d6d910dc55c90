use serde::{Deserialize, Serialize};

use crate::dsp::{frame_mean_squares, stft, StftConfig, TimeSignal};

/// Growth detector: regression window and sustain span.
const SLOPE_WINDOW_S: f64 = 0.5;
const MIN_SLOPE_DB_PER_S: f64 = 3.0;
const MIN_RISE_DB: f64 = 10.0;
/// Build-up that counts as howling even when it is over within one window.
const FAST_RISE_DB: f64 = 25.0;
/// Running-max envelope span; bridges gaps between recirculated bursts.
const ENVELOPE_S: f64 = 0.4;
/// Tonal detector.
const TONAL_FRACTION: f64 = 0.5;
const TONAL_FRAMES: usize = 20;
const TONAL_RISE_DB: f64 = 10.0;
const FLOOR_DB: f64 = -100.0;
/// Span after the first active frame that anchors the baseline, so a loop
/// that saturates within the first second still shows its rise.
const ONSET_S: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HowlingReport {
    pub detected: bool,
    pub onset_frame: Option<usize>,
    /// Level growth over the detected region; 0 when nothing is detected.
    pub growth_rate_db_per_s: f64,
    pub peak_frequency_hz: Option<f64>,
}

impl HowlingReport {
    pub fn none() -> Self {
        Self {
            detected: false,
            onset_frame: None,
            growth_rate_db_per_s: 0.0,
            peak_frequency_hz: None,
        }
    }
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return FLOOR_DB;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len().is_multiple_of(2) {
        0.5 * (s[m - 1] + s[m])
    } else {
        s[m]
    }
}

/// Least-squares slope of `y` against `x`.
fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Flags howling when the frame level keeps growing by at least 3 dB/s for
/// 0.5 s (windowed regressions on a running-max envelope, ending at least
/// 10 dB above the baseline), or when one bin holds at least half of the
/// frame energy for 20 consecutive frames at 10 dB or more above the
/// baseline. The baseline is the lower of the first-second median level and
/// the median envelope over 0.25 s from the first non-silent frame.
pub fn detect_howling(sig: &TimeSignal, config: &StftConfig) -> HowlingReport {
    if sig.is_empty() || config.validate().is_err() {
        return HowlingReport::none();
    }
    let frame_rate = f64::from(sig.sample_rate()) / config.hop as f64;
    let level: Vec<f64> = frame_mean_squares(sig, config)
        .iter()
        .map(|&m| if m > 0.0 { (10.0 * m.log10()).max(FLOOR_DB) } else { FLOOR_DB })
        .collect();
    let frames = level.len();
    let env_len = ((ENVELOPE_S * frame_rate).round() as usize).max(1);
    let env: Vec<f64> = (0..frames)
        .map(|i| {
            level[(i + 1).saturating_sub(env_len)..=i]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let first_second = (frame_rate.round() as usize).clamp(1, frames);
    let baseline = match level.iter().position(|&l| l > FLOOR_DB) {
        Some(start) => {
            let end = (start + (ONSET_S * frame_rate).round() as usize).clamp(start + 1, frames);
            median(&env[start..end]).min(median(&level[..first_second]))
        }
        None => median(&level[..first_second]),
    };
    let times: Vec<f64> = (0..frames).map(|i| i as f64 / frame_rate).collect();

    let growth = growth_run(&env, &times, baseline, frame_rate);
    let tonal = tonal_run(sig, config, &level, baseline);

    let (onset, rate) = match (growth, tonal) {
        (Some((start, rate)), Some(t)) => (start.min(t), rate),
        (Some((start, rate)), None) => (start, rate),
        (None, Some(t)) => {
            // average build-up from the baseline to the end of the tonal run
            let end = t + TONAL_FRAMES - 1;
            (t, ((level[end] - baseline) / times[end].max(1.0 / frame_rate)).max(f64::MIN_POSITIVE))
        }
        (None, None) => return HowlingReport::none(),
    };
    HowlingReport {
        detected: true,
        onset_frame: Some(onset),
        growth_rate_db_per_s: rate,
        peak_frequency_hz: peak_frequency(sig, config, onset),
    }
}

/// First run of window starts whose regression slope and rise both pass,
/// spanning at least 1.5 window lengths, or shorter when the envelope climbs
/// by [`FAST_RISE_DB`] within it. Returns the onset frame and the envelope
/// slope over the run.
fn growth_run(env: &[f64], times: &[f64], baseline: f64, frame_rate: f64) -> Option<(usize, f64)> {
    let win = ((SLOPE_WINDOW_S * frame_rate).round() as usize).max(2);
    if env.len() < win {
        return None;
    }
    let ok: Vec<bool> = (0..=env.len() - win)
        .map(|j| {
            slope(&times[j..j + win], &env[j..j + win]) >= MIN_SLOPE_DB_PER_S
                && env[j + win - 1] >= baseline + MIN_RISE_DB
        })
        .collect();
    let mut j = 0;
    while j < ok.len() {
        if !ok[j] {
            j += 1;
            continue;
        }
        let start = j;
        while j < ok.len() && ok[j] {
            j += 1;
        }
        let last = j + win - 2;
        let rise = env[last] - env[start].max(baseline);
        if j - start >= win + win / 2 || rise >= FAST_RISE_DB {
            let rate = slope(&times[start..=last], &env[start..=last]);
            if rate > 0.0 {
                return Some((start, rate));
            }
        }
    }
    None
}

fn tonal_run(sig: &TimeSignal, config: &StftConfig, level: &[f64], baseline: f64) -> Option<usize> {
    let spec = stft(sig, config).ok()?;
    let mut run = 0;
    for (f, row) in spec.data().rows().into_iter().enumerate() {
        let powers = row.iter().map(|c| c.norm_sqr());
        let (total, max) = powers.fold((0.0, 0.0_f64), |(t, m), p| (t + p, m.max(p)));
        let tonal = total > 0.0 && max >= TONAL_FRACTION * total && level[f] >= baseline + TONAL_RISE_DB;
        run = if tonal { run + 1 } else { 0 };
        if run == TONAL_FRAMES {
            return Some(f + 1 - TONAL_FRAMES);
        }
    }
    None
}

/// Strongest non-DC bin of the power spectrum summed from `onset` on.
fn peak_frequency(sig: &TimeSignal, config: &StftConfig, onset: usize) -> Option<f64> {
    let spec = stft(sig, config).ok()?;
    let bins = spec.bins();
    let mut acc = vec![0.0; bins];
    for row in spec.data().rows().into_iter().skip(onset) {
        for (a, c) in acc.iter_mut().zip(row) {
            *a += c.norm_sqr();
        }
    }
    let (bin, &p) = acc
        .iter()
        .enumerate()
        .skip(1)
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    (p > 0.0).then(|| bin as f64 * f64::from(sig.sample_rate()) / config.fft_size as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::source::synthetic_speech;

    const FS: u32 = 16_000;

    #[test]
    fn silence_is_not_howling() {
        let r = detect_howling(&TimeSignal::zeros(FS as usize * 3, FS), &StftConfig::default());
        assert_eq!(r, HowlingReport::none());
    }

    #[test]
    fn constant_level_speech_is_not_howling() {
        for seed in 0..5 {
            let s = synthetic_speech(seed, 6.0, FS);
            let r = detect_howling(&s, &StftConfig::default());
            assert!(!r.detected, "seed {seed}: {r:?}");
        }
    }

    #[test]
    fn growing_sinusoid_is_howling() {
        let cfg = StftConfig::default();
        let x: Vec<f64> = (0..FS as usize * 4)
            .map(|i| {
                let t = i as f64 / f64::from(FS);
                1e-3 * 10f64.powf(6.0 * t / 20.0) * (2.0 * std::f64::consts::PI * 2000.0 * t).sin()
            })
            .collect();
        let r = detect_howling(&TimeSignal::new(x, FS).unwrap(), &cfg);
        assert!(r.detected);
        assert!(r.onset_frame.is_some());
        assert!((r.growth_rate_db_per_s - 6.0).abs() < 0.3, "{r:?}");
        let bin_width = f64::from(FS) / cfg.fft_size as f64;
        assert!((r.peak_frequency_hz.unwrap() - 2000.0).abs() <= bin_width);
    }

    #[test]
    fn steady_tone_after_quiet_start_is_tonal_howling() {
        let x: Vec<f64> = (0..FS as usize * 3)
            .map(|i| {
                let t = i as f64 / f64::from(FS);
                let a = if t < 1.2 { 1e-3 } else { 0.5 };
                a * (2.0 * std::f64::consts::PI * 1000.0 * t).sin()
            })
            .collect();
        let r = detect_howling(&TimeSignal::new(x, FS).unwrap(), &StftConfig::default());
        assert!(r.detected && r.growth_rate_db_per_s > 0.0, "{r:?}");
    }

    #[test]
    fn loop_saturating_within_first_second_is_howling() {
        // 40 dB rise in 0.4 s, then pinned at the limiter for 3.6 s
        let x: Vec<f64> = (0..FS as usize * 4)
            .map(|i| {
                let t = i as f64 / f64::from(FS);
                let a = 1e-2 * 10f64.powf((100.0 * t).min(40.0) / 20.0);
                (a * (2.0 * std::f64::consts::PI * 700.0 * t).sin()).clamp(-0.9, 0.9)
            })
            .collect();
        let r = detect_howling(&TimeSignal::new(x, FS).unwrap(), &StftConfig::default());
        assert!(r.detected, "{r:?}");
        assert!(r.onset_frame.unwrap() < 20);
    }

    #[test]
    fn speech_in_noise_is_not_howling() {
        use crate::sim::source::synthetic_noise;
        for seed in 0..30 {
            let s = synthetic_speech(seed, 4.0, FS);
            let n = synthetic_noise(seed + 100, 4.0, FS).scaled(0.02);
            let mix: Vec<f64> = s.samples().iter().zip(n.samples()).map(|(a, b)| a + b).collect();
            let r = detect_howling(&TimeSignal::new(mix, FS).unwrap(), &StftConfig::default());
            assert!(!r.detected, "seed {seed}: {r:?}");
        }
    }
}

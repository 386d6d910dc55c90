use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::howling::{detect_howling, HowlingReport};
use super::scenario::{PreparedScenario, ScenarioConfig, SATURATION_LIMIT};
use super::SimError;
use crate::dsp::{frame_mean_squares, TimeSignal};
use crate::metrics::erle;
use crate::suppress::{StreamContext, Suppressor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameDiagnostics {
    pub frame: usize,
    pub mic_rms_db: f64,
    pub enhanced_rms_db: f64,
    /// The saturation guard clipped a microphone sample inside this frame.
    pub limiter_engaged: bool,
    pub latency_frames: usize,
    pub erle_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamResult {
    /// y: microphone signal.
    pub mic: TimeSignal,
    /// ŝ: suppressor output.
    pub enhanced: TimeSignal,
    /// x: amplifier output before the loudspeaker nonlinearity.
    pub loudspeaker: TimeSignal,
    /// d: playback as received at the microphone.
    pub playback: TimeSignal,
    /// s as picked up by the microphone (reference for metrics).
    pub target: TimeSignal,
    pub noise: TimeSignal,
    pub per_frame: Vec<FrameDiagnostics>,
    pub howling: HowlingReport,
    pub limiter_engaged: bool,
    pub delay_blocks: usize,
    pub latency_blocks: usize,
    pub playback_scale: f64,
}

fn level_db(ms: f64) -> f64 {
    if ms > 0.0 {
        (10.0 * ms.log10()).max(-100.0)
    } else {
        -100.0
    }
}

/// Runs the closed loop one hop at a time:
///
/// ```text
/// y_k = s_k + n_k + d_k,   d_k = h * NL(G x ŝ_{k-D}),   ŝ_k = suppressor(y_k)
/// ```
///
/// The suppressor's declared latency is taken out of the explicit delay
/// line, so the total microphone-to-loudspeaker delay stays `D` hops.
pub fn run_streaming<S: Suppressor + ?Sized>(
    cfg: &ScenarioConfig,
    suppressor: &mut S,
) -> Result<StreamResult, SimError> {
    let prepared = cfg.prepare()?;
    run_prepared(&prepared, suppressor)
}

pub fn run_prepared<S: Suppressor + ?Sized>(
    p: &PreparedScenario,
    suppressor: &mut S,
) -> Result<StreamResult, SimError> {
    let hop = p.hop();
    let fs = p.sample_rate();
    let latency = suppressor.latency_blocks();
    if p.delay_blocks <= latency {
        return Err(SimError::Config(format!(
            "system delay of {} hops does not cover the suppressor latency of {latency} hops",
            p.delay_blocks
        )));
    }
    let line = p.delay_blocks - latency;
    let ctx = StreamContext::new(fs, p.stft, line);
    suppressor
        .init(&ctx)
        .map_err(|source| SimError::Suppressor { frame: 0, source })?;
    if suppressor.input_channels() != 1 {
        return Err(SimError::Config(format!(
            "loop suppressor must take one channel, {} takes {}",
            suppressor.name(),
            suppressor.input_channels()
        )));
    }

    let blocks = p.blocks();
    let total = blocks * hop;
    let mut chain = p.playback_chain();
    let mut pending: VecDeque<Vec<f64>> = (0..line).map(|_| vec![0.0; hop]).collect();
    let mut y = vec![0.0; total];
    let mut s_hat = vec![0.0; total];
    let mut x = vec![0.0; total];
    let mut d = vec![0.0; total];
    let mut clipped = Vec::new();
    let mut base = vec![0.0; hop];
    let mut y32 = vec![0.0f32; hop];
    let mut out32 = vec![0.0f32; hop];

    for k in 0..blocks {
        let r = k * hop..(k + 1) * hop;
        let src = pending.pop_front().expect("delay line is never empty");
        chain.process(&src, &mut x[r.clone()], &mut d[r.clone()]);
        p.near_end_block(k, &mut base);
        for i in 0..hop {
            let v = base[i] + d[k * hop + i];
            if v.is_nan() {
                return Err(SimError::Divergence { frame: k });
            }
            let limited = v.clamp(-SATURATION_LIMIT, SATURATION_LIMIT);
            if limited != v {
                clipped.push(k * hop + i);
            }
            y[k * hop + i] = limited;
            y32[i] = limited as f32;
        }
        suppressor
            .process(&[&y32], &mut out32)
            .map_err(|source| SimError::Suppressor { frame: k, source })?;
        if out32.iter().any(|v| !v.is_finite()) {
            return Err(SimError::Divergence { frame: k });
        }
        suppressor.feedback(&out32);
        let mut next = vec![0.0; hop];
        for (i, (n, &o)) in next.iter_mut().zip(&out32).enumerate() {
            *n = f64::from(o);
            s_hat[k * hop + i] = *n;
        }
        pending.push_back(next);
    }

    let len = p.len();
    let sig = |mut v: Vec<f64>| {
        v.truncate(len);
        TimeSignal::new(v, fs).expect("loop signals are finite")
    };
    let (mic, enhanced, loudspeaker, playback) = (sig(y), sig(s_hat), sig(x), sig(d));

    let config = p.stft;
    let my = frame_mean_squares(&mic, &config);
    let me = frame_mean_squares(&enhanced, &config);
    let erle_db = if suppressor.is_canceller() {
        Some(erle(&mic, &enhanced, &config, 1)?)
    } else {
        None
    };
    let mut frame_clipped = vec![false; my.len()];
    let (pad_front, _) = config.padding(len);
    for &t in clipped.iter().filter(|&&t| t < len) {
        // frames j with j*hop <= t + pad_front < j*hop + frame_len
        let pos = t + pad_front;
        let last = pos / hop;
        let first = (pos + 1).saturating_sub(config.frame_len).div_ceil(hop);
        for f in frame_clipped.iter_mut().take(last + 1).skip(first) {
            *f = true;
        }
    }
    let per_frame = (0..my.len())
        .map(|f| FrameDiagnostics {
            frame: f,
            mic_rms_db: level_db(my[f]),
            enhanced_rms_db: level_db(me[f]),
            limiter_engaged: frame_clipped[f],
            latency_frames: latency,
            erle_db: erle_db.as_ref().map(|e| e[f].value),
        })
        .collect();

    Ok(StreamResult {
        howling: detect_howling(&mic, &config),
        limiter_engaged: !clipped.is_empty(),
        mic,
        enhanced,
        loudspeaker,
        playback,
        target: p.target.clone(),
        noise: p.noise.clone(),
        per_frame,
        delay_blocks: p.delay_blocks,
        latency_blocks: latency,
        playback_scale: p.playback_scale,
    })
}

/// Components of the one-time (teacher-forced) mixture, `y = s + n + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub mic: TimeSignal,
    pub target: TimeSignal,
    pub playback: TimeSignal,
    pub noise: TimeSignal,
    /// Amplifier output `G * s(t - Δt)`.
    pub loudspeaker: TimeSignal,
    pub delay_blocks: usize,
    pub playback_scale: f64,
}

/// Replaces the loop output by the clean target: the playback is
/// `h * NL(G s(t - Δt))`, computed by the same block chain as the loop.
pub fn make_teacher_forced_mixture(cfg: &ScenarioConfig) -> Result<Mixture, SimError> {
    let p = cfg.prepare()?;
    Ok(teacher_forced(&p))
}

pub fn teacher_forced(p: &PreparedScenario) -> Mixture {
    let hop = p.hop();
    let blocks = p.blocks();
    let total = blocks * hop;
    let mut padded = p.target.samples().to_vec();
    padded.resize(total, 0.0);
    let mut chain = p.playback_chain();
    let zeros = vec![0.0; hop];
    let mut x = vec![0.0; total];
    let mut d = vec![0.0; total];
    let mut y = vec![0.0; total];
    let mut base = vec![0.0; hop];
    for k in 0..blocks {
        let r = k * hop..(k + 1) * hop;
        let src = if k >= p.delay_blocks {
            &padded[(k - p.delay_blocks) * hop..(k - p.delay_blocks + 1) * hop]
        } else {
            &zeros[..]
        };
        chain.process(src, &mut x[r.clone()], &mut d[r.clone()]);
        p.near_end_block(k, &mut base);
        for i in 0..hop {
            y[k * hop + i] = base[i] + d[k * hop + i];
        }
    }
    let len = p.len();
    let fs = p.sample_rate();
    let sig = |mut v: Vec<f64>| {
        v.truncate(len);
        TimeSignal::new(v, fs).expect("finite mixture")
    };
    Mixture {
        mic: sig(y),
        target: p.target.clone(),
        playback: sig(d),
        noise: p.noise.clone(),
        loudspeaker: sig(x),
        delay_blocks: p.delay_blocks,
        playback_scale: p.playback_scale,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::room::{NonlinearityModel, Point3, RirSet, RoomSpec};
    use crate::sim::source::{synthetic_noise, synthetic_speech};
    use crate::sim::GainSchedule;
    use crate::suppress::{OracleSuppressor, Passthrough};

    const FS: u32 = 16_000;

    fn impulse_target(seconds: f64, amp: f64) -> TimeSignal {
        let mut s = TimeSignal::zeros((seconds * f64::from(FS)) as usize, FS).into_samples();
        s[0] = amp;
        TimeSignal::new(s, FS).unwrap()
    }

    /// y(t) = s(t) + g y(t - L), evaluated directly.
    fn scalar_oracle(s: &[f64], g: f64, lag: usize) -> Vec<f64> {
        let mut y = vec![0.0; s.len()];
        for t in 0..s.len() {
            y[t] = s[t] + if t >= lag { g * y[t - lag] } else { 0.0 };
        }
        y
    }

    #[test]
    fn zero_gain_breaks_the_loop() {
        let mut cfg = ScenarioConfig::scalar_toy(synthetic_speech(1, 2.0, FS), 0.8, 0.0, 0.1);
        cfg.noise = Some(synthetic_noise(2, 2.0, FS));
        cfg.snr_db = Some(10.0);
        let r = run_streaming(&cfg, &mut Passthrough).unwrap();
        let expected = r.target.add(&r.noise).unwrap();
        assert_eq!(r.mic, expected);
        assert!(r.playback.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_path_matches_recursion_oracle() {
        for (ga, detected) in [(1.2, true), (0.5, false)] {
            let s = impulse_target(4.0, 1e-3);
            let cfg = ScenarioConfig::scalar_toy(s.clone(), ga / 2.0, 2.0, 0.128);
            let r = run_streaming(&cfg, &mut Passthrough).unwrap();
            let lag = r.delay_blocks * cfg.hop();
            assert_eq!(lag, 2048);
            let oracle = scalar_oracle(s.samples(), ga, lag);
            for (t, (a, b)) in r.mic.samples().iter().zip(&oracle).enumerate() {
                // the loop runs on the f32 grid, the oracle in f64
                assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-3), "t={t}: {a} vs {b}");
            }
            for n in 0..5 {
                let tap = r.mic.samples()[n * lag];
                assert!((tap - 1e-3 * ga.powi(n as i32)).abs() < 1e-9);
            }
            assert_eq!(r.howling.detected, detected, "{:?}", r.howling);
        }
    }

    #[test]
    fn oracle_suppressor_reproduces_teacher_forced_mixture() {
        let room = RoomSpec::new([5.0, 4.0, 3.0], 0.3);
        let rirs = RirSet::from_geometry(
            crate::room::Geometry {
                room,
                mic: Point3::new(1.0, 1.0, 1.5),
                loudspeaker: Point3::new(3.5, 2.5, 1.6),
                talker: Point3::new(1.5, 2.0, 1.6),
                noise: Point3::new(4.0, 3.0, 1.0),
            },
            FS,
        )
        .unwrap();
        let cfg = ScenarioConfig {
            target: synthetic_speech(3, 3.0, FS),
            noise: Some(synthetic_noise(4, 3.0, FS)),
            rirs,
            gain: GainSchedule::constant(2.0),
            system_delay: 0.15,
            nonlinearity: NonlinearityModel::hard_clip(),
            spr_db: Some(0.0),
            snr_db: Some(20.0),
            target_level_dbfs: Some(-25.0),
            stft: crate::dsp::StftConfig::default(),
            duration: 3.0,
        };
        let mix = make_teacher_forced_mixture(&cfg).unwrap();
        let mut oracle = OracleSuppressor::new(&mix.target);
        let run = run_streaming(&cfg, &mut oracle).unwrap();
        assert_eq!(run.mic, mix.mic);
        assert_eq!(run.playback, mix.playback);
        // components recombine exactly
        for i in 0..mix.mic.len() {
            let (s, n, d) = (mix.target.samples()[i], mix.noise.samples()[i], mix.playback.samples()[i]);
            assert_eq!(mix.mic.samples()[i] - (s + n + d), 0.0);
        }
    }

    #[test]
    fn playback_lags_by_delay_plus_direct_path() {
        let room = RoomSpec::new([6.0, 5.0, 3.0], 0.0);
        let geometry = crate::room::Geometry {
            room,
            mic: Point3::new(1.0, 1.0, 1.5),
            loudspeaker: Point3::new(4.0, 3.0, 1.5),
            talker: Point3::new(1.5, 1.5, 1.5),
            noise: Point3::new(5.0, 4.0, 1.0),
        };
        let rirs = RirSet::from_geometry(geometry, FS).unwrap();
        let direct = (geometry.loudspeaker.distance(&geometry.mic) / 343.0 * f64::from(FS)).round() as usize;
        let s = synthetic_noise(5, 2.0, FS).scaled(0.05);
        let cfg = ScenarioConfig {
            rirs: rirs.clone(),
            ..ScenarioConfig::scalar_toy(s, 1.0, 1.0, 0.1)
        };
        let mix = make_teacher_forced_mixture(&cfg).unwrap();
        // NL-free surrogate: the microphone-side target itself
        let surrogate = mix.target.samples();
        let dv = mix.playback.samples();
        let best = (0..4000)
            .max_by(|&a, &b| {
                let c = |lag: usize| -> f64 {
                    dv[lag..].iter().zip(surrogate).map(|(x, y)| x * y).sum()
                };
                c(a).total_cmp(&c(b))
            })
            .unwrap();
        // 0.1 s rounds to 6 hops
        let loop_delay = mix.delay_blocks * 256;
        assert_eq!(loop_delay, 1536);
        assert!(best.abs_diff(loop_delay + direct) <= 1, "lag {best}, direct {direct}");
    }

    #[test]
    fn deterministic_and_causal() {
        let cfg = ScenarioConfig::scalar_toy(synthetic_speech(6, 2.0, FS), 0.6, 1.5, 0.1);
        let a = run_streaming(&cfg, &mut Passthrough).unwrap();
        let b = run_streaming(&cfg, &mut Passthrough).unwrap();
        assert_eq!(a, b);
        let mut changed = cfg.clone();
        let mut v = changed.target.clone().into_samples();
        let cut = 20_000;
        v[cut..].iter_mut().for_each(|x| *x = -*x * 0.5);
        changed.target = TimeSignal::new(v, FS).unwrap();
        let c = run_streaming(&changed, &mut Passthrough).unwrap();
        assert_eq!(a.mic.samples()[..cut], c.mic.samples()[..cut]);
        assert_ne!(a.mic.samples()[cut..], c.mic.samples()[cut..]);
    }

    #[test]
    fn saturation_guard_is_recorded() {
        let s = impulse_target(3.0, 0.5);
        let cfg = ScenarioConfig::scalar_toy(s, 2.0, 1.0, 0.064);
        let r = run_streaming(&cfg, &mut Passthrough).unwrap();
        assert!(r.limiter_engaged);
        assert!(r.per_frame.iter().any(|f| f.limiter_engaged));
        assert!(r.mic.peak() <= SATURATION_LIMIT);
        assert_eq!(r.per_frame.len(), cfg.stft.frame_count(r.mic.len()));
    }
}

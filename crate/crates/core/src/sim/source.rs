//! Seeded synthetic sources: a speech-like babble of voiced syllables and
//! coloured background noise. They stand in for a speech corpus in tests
//! and examples.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dsp::TimeSignal;

/// Vowel formant triples (Hz).
const FORMANTS: [[f64; 3]; 5] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
    [300.0, 870.0, 2240.0],
];

fn formant_gain(f: f64, formants: &[f64; 3]) -> f64 {
    formants
        .iter()
        .map(|&fc| {
            let bw = 80.0 + 0.06 * fc;
            1.0 / (1.0 + ((f - fc) / bw).powi(2))
        })
        .sum::<f64>()
        * (-f / 4000.0).exp()
}

/// Speech-like utterance of `seconds`, normalized to a peak of 0.5.
///
/// Syllables of 120..320 ms carry a harmonic tone with a drifting pitch,
/// shaped by vowel formants; some start with a noise burst. Gaps between
/// syllables are 30..150 ms.
pub fn synthetic_speech(seed: u64, seconds: f64, fs: u32) -> TimeSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fsf = f64::from(fs);
    let len = (seconds * fsf).round() as usize;
    let mut out = vec![0.0; len];
    let base_f0: f64 = rng.random_range(95.0..220.0);
    let mut t = (rng.random_range(0.0..0.05) * fsf) as usize;
    while t < len {
        let dur = (rng.random_range(0.12..0.32) * fsf) as usize;
        let vowel = FORMANTS[rng.random_range(0..FORMANTS.len())];
        let f0_start = base_f0 * rng.random_range(0.85..1.2);
        let f0_end = f0_start * rng.random_range(0.8..1.15);
        let amp = rng.random_range(0.4..1.0);
        let n_harm = (3800.0 / f0_start.max(f0_end)) as usize;
        let gains: Vec<f64> = (1..=n_harm)
            .map(|k| formant_gain(k as f64 * 0.5 * (f0_start + f0_end), &vowel))
            .collect();
        let mut phase = vec![0.0; n_harm];
        let fricative = rng.random_bool(0.35);
        let fric_len = (0.05 * fsf) as usize;
        let mut prev = 0.0;
        for i in 0..dur.min(len - t) {
            let x = i as f64 / dur as f64;
            let env = (PI * x).sin().powf(0.6);
            let f0 = f0_start + (f0_end - f0_start) * x;
            let mut v = 0.0;
            for (k, (ph, g)) in phase.iter_mut().zip(&gains).enumerate() {
                *ph += 2.0 * PI * f0 * (k + 1) as f64 / fsf;
                v += g * ph.sin();
            }
            let mut sample = amp * env * v;
            if fricative && i < fric_len {
                let w: f64 = rng.sample(StandardNormal);
                // first difference tilts the burst towards high frequencies
                sample += 0.3 * amp * (w - prev) * (1.0 - i as f64 / fric_len as f64);
                prev = w;
            }
            out[t + i] += sample;
        }
        t += dur + (rng.random_range(0.03..0.15) * fsf) as usize;
    }
    let peak = out.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    TimeSignal::new(out, fs).expect("finite synthesis")
}

/// Stationary noise with a 1/f-like tilt, unit RMS.
pub fn synthetic_noise(seed: u64, seconds: f64, fs: u32) -> TimeSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = (seconds * f64::from(fs)).round() as usize;
    // sum of three one-pole lowpassed white noises (Voss-like pinking)
    let poles = [0.99, 0.9, 0.5];
    let mut states = [0.0; 3];
    let mut out: Vec<f64> = (0..len)
        .map(|_| {
            let w: f64 = rng.sample(StandardNormal);
            let mut acc = 0.2 * w;
            for (s, p) in states.iter_mut().zip(poles) {
                *s = p * *s + (1.0 - p) * w;
                acc += *s;
            }
            acc
        })
        .collect();
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v /= rms);
    }
    TimeSignal::new(out, fs).expect("finite synthesis")
}

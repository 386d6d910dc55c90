//! Evaluation metrics: SI-SDR, spectral magnitude MAE, the training loss,
//! ERLE and per-run reports.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{frame_mean_squares, stft, DspError, Spectrogram, StftConfig, TimeSignal};
use crate::sim::HowlingReport;

/// Magnitude at which dB ratios are clipped and flagged.
pub const DB_CAP: f64 = 120.0;

/// Spectral MAE weight of the training loss.
pub const DEFAULT_LAMBDA: f64 = 10_000.0;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("reference signal has zero energy")]
    ZeroReference,
    #[error("lengths differ: estimate {est} vs reference {reference}")]
    LengthMismatch { est: usize, reference: usize },
    #[error(transparent)]
    Dsp(#[from] DspError),
}

/// A dB value, possibly clipped to `[-DB_CAP, DB_CAP]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Db {
    pub value: f64,
    pub saturated: bool,
}

/// `10 log10(num / den)` for energies, capped.
pub fn capped_ratio_db(num: f64, den: f64) -> Db {
    let raw = if num == 0.0 && den == 0.0 {
        0.0
    } else {
        10.0 * (num / den).log10()
    };
    if raw.is_nan() {
        return Db { value: 0.0, saturated: true };
    }
    Db {
        value: raw.clamp(-DB_CAP, DB_CAP),
        saturated: raw.abs() > DB_CAP,
    }
}

fn check_lengths(est: &TimeSignal, reference: &TimeSignal) -> Result<(), MetricsError> {
    if est.len() != reference.len() {
        return Err(MetricsError::LengthMismatch {
            est: est.len(),
            reference: reference.len(),
        });
    }
    est.check_compatible(reference)?;
    Ok(())
}

/// Scale-invariant SDR. No mean removal; the estimate is projected onto the
/// reference.
pub fn si_sdr(est: &TimeSignal, reference: &TimeSignal) -> Result<Db, MetricsError> {
    check_lengths(est, reference)?;
    let rr: f64 = reference.energy();
    if rr == 0.0 {
        return Err(MetricsError::ZeroReference);
    }
    let er: f64 = est
        .samples()
        .iter()
        .zip(reference.samples())
        .map(|(a, b)| a * b)
        .sum();
    let alpha = er / rr;
    let (mut target, mut residual) = (0.0, 0.0);
    for (&e, &r) in est.samples().iter().zip(reference.samples()) {
        let t = alpha * r;
        target += t * t;
        residual += (e - t) * (e - t);
    }
    Ok(capped_ratio_db(target, residual))
}

/// Mean over frames and bins of `||a| - |b||`.
pub fn spectral_mae(a: &Spectrogram, b: &Spectrogram) -> Result<f64, MetricsError> {
    a.same_shape(b)?;
    let n = a.data().len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x.norm() - y.norm()).abs())
        .sum();
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Loss {
    pub value: f64,
    pub si_sdr: Db,
    pub spectral_mae: f64,
}

/// `-SI-SDR(est, ref) + lambda * MAE(|EST|, |REF|)`.
pub fn combined_loss(
    est: &TimeSignal,
    reference: &TimeSignal,
    config: &StftConfig,
    lambda: f64,
) -> Result<Loss, MetricsError> {
    let sdr = si_sdr(est, reference)?;
    let mae = spectral_mae(&stft(est, config)?, &stft(reference, config)?)?;
    Ok(Loss {
        value: -sdr.value + lambda * mae,
        si_sdr: sdr,
        spectral_mae: mae,
    })
}

/// Per-frame ERLE on the STFT frame grid, with energies summed over the
/// last `window` frames (causal moving sum).
pub fn erle(
    mic: &TimeSignal,
    err: &TimeSignal,
    config: &StftConfig,
    window: usize,
) -> Result<Vec<Db>, MetricsError> {
    check_lengths(err, mic)?;
    config.validate()?;
    let my = frame_mean_squares(mic, config);
    let me = frame_mean_squares(err, config);
    let w = window.max(1);
    Ok((0..my.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            let sy: f64 = my[lo..=i].iter().sum();
            let se: f64 = me[lo..=i].iter().sum();
            capped_ratio_db(sy, se)
        })
        .collect())
}

/// Shifts `est` earlier by `latency` samples and trims both signals to the
/// overlapping part.
pub fn align(est: &TimeSignal, reference: &TimeSignal, latency: usize) -> (TimeSignal, TimeSignal) {
    let n = est.len().min(reference.len()).saturating_sub(latency);
    let e = TimeSignal::new(est.samples()[latency..latency + n].to_vec(), est.sample_rate())
        .expect("slice of a valid signal");
    (e, reference.resized(n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub si_sdr_db: f64,
    pub si_sdr_saturated: bool,
    pub spectral_mae: f64,
    pub combined_loss: f64,
    pub erle_db: Option<f64>,
    /// Reserved; PESQ is not computed.
    pub pesq: Option<f64>,
    pub howling: HowlingReport,
}

impl MetricsReport {
    /// Scores `est` against `reference` after compensating `latency`
    /// samples. `erle_pair` is the `(mic, error)` pair of a canceller.
    pub fn compute(
        est: &TimeSignal,
        reference: &TimeSignal,
        config: &StftConfig,
        latency: usize,
        erle_pair: Option<(&TimeSignal, &TimeSignal)>,
        howling: HowlingReport,
    ) -> Result<Self, MetricsError> {
        let (e, r) = align(est, reference, latency);
        let loss = combined_loss(&e, &r, config, DEFAULT_LAMBDA)?;
        let erle_db = match erle_pair {
            Some((y, err)) => {
                check_lengths(err, y)?;
                Some(capped_ratio_db(y.energy(), err.energy()).value)
            }
            None => None,
        };
        Ok(Self {
            si_sdr_db: loss.si_sdr.value,
            si_sdr_saturated: loss.si_sdr.saturated,
            spectral_mae: loss.spectral_mae,
            combined_loss: loss.value,
            erle_db,
            pesq: None,
            howling,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const FS: u32 = 16_000;

    fn sig(v: Vec<f64>) -> TimeSignal {
        TimeSignal::new(v, FS).unwrap()
    }

    fn random(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn si_sdr_examples() {
        let s = sig(random(4000, 1));
        let same = si_sdr(&s, &s).unwrap();
        assert_eq!(same, Db { value: DB_CAP, saturated: true });
        assert_eq!(si_sdr(&s.scaled(2.7), &s).unwrap(), same);
        let hand = si_sdr(&sig(vec![1.0, 1.0]), &sig(vec![1.0, 0.0])).unwrap();
        assert_eq!(hand.value, 0.0);
        assert!(!hand.saturated);
    }

    #[test]
    fn si_sdr_errors() {
        assert!(matches!(
            si_sdr(&sig(vec![1.0, 2.0]), &sig(vec![0.0, 0.0])),
            Err(MetricsError::ZeroReference)
        ));
        assert!(matches!(
            si_sdr(&sig(vec![1.0]), &sig(vec![1.0, 0.0])),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn si_sdr_orthogonal_noise_closed_form() {
        let r = sig(random(1000, 2));
        let mut w = random(1000, 3);
        // Gram-Schmidt against r
        let proj: f64 = w.iter().zip(r.samples()).map(|(a, b)| a * b).sum::<f64>() / r.energy();
        for (wv, rv) in w.iter_mut().zip(r.samples()) {
            *wv -= proj * rv;
        }
        let w = sig(w);
        let expected = 10.0 * (r.energy() / w.energy()).log10();
        let got = si_sdr(&r.add(&w).unwrap(), &r).unwrap().value;
        assert!((got - expected).abs() < 1e-9);
    }

    #[test]
    fn spectral_mae_examples() {
        let cfg = StftConfig::default();
        let a = stft(&sig(random(3000, 4)), &cfg).unwrap();
        assert_eq!(spectral_mae(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        b.data_mut().iter_mut().for_each(|c| {
            let m = c.norm();
            *c = if m > 0.0 { *c * ((m + 0.25) / m) } else { 0.25.into() };
        });
        assert!((spectral_mae(&b, &a).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn spectral_mae_matches_naive_loops() {
        let cfg = StftConfig::low_latency();
        let a = stft(&sig(random(2000, 5)), &cfg).unwrap();
        let b = stft(&sig(random(2000, 6)), &cfg).unwrap();
        let mut sum = 0.0;
        for f in 0..a.frames() {
            for k in 0..a.bins() {
                sum += (a.data()[[f, k]].norm() - b.data()[[f, k]].norm()).abs();
            }
        }
        let naive = sum / (a.frames() * a.bins()) as f64;
        assert!((spectral_mae(&a, &b).unwrap() - naive).abs() < 1e-12);
        assert_eq!(spectral_mae(&a, &b).unwrap(), spectral_mae(&b, &a).unwrap());
    }

    #[test]
    fn combined_loss_composition() {
        let cfg = StftConfig::default();
        let r = sig(random(4000, 7));
        let e = r.add(&sig(random(4000, 8)).scaled(0.3)).unwrap();
        let l = combined_loss(&e, &r, &cfg, DEFAULT_LAMBDA).unwrap();
        let hand = -si_sdr(&e, &r).unwrap().value
            + 10_000.0 * spectral_mae(&stft(&e, &cfg).unwrap(), &stft(&r, &cfg).unwrap()).unwrap();
        assert!((l.value - hand).abs() < 1e-9);
        assert_eq!(combined_loss(&e, &r, &cfg, 0.0).unwrap().value, -si_sdr(&e, &r).unwrap().value);
        let same = combined_loss(&r, &r, &cfg, DEFAULT_LAMBDA).unwrap();
        assert_eq!(same.value, -DB_CAP);
    }

    #[test]
    fn combined_loss_monotone_in_residual_scale() {
        let cfg = StftConfig::default();
        let r = sig(random(4000, 9));
        let w = sig(random(4000, 10));
        let losses: Vec<f64> = [1.0, 0.5, 0.25, 0.1]
            .iter()
            .map(|&g| {
                let e = r.add(&w.scaled(g)).unwrap();
                combined_loss(&e, &r, &cfg, DEFAULT_LAMBDA).unwrap().value
            })
            .collect();
        assert!(losses.windows(2).all(|p| p[1] < p[0]), "{losses:?}");
    }

    #[test]
    fn erle_examples() {
        let cfg = StftConfig::default();
        let y = sig(random(8000, 11));
        for v in erle(&y, &y, &cfg, 4).unwrap() {
            assert_eq!(v.value, 0.0);
        }
        for v in erle(&y, &y.scaled(0.1), &cfg, 4).unwrap() {
            assert!((v.value - 20.0).abs() < 1e-9);
        }
        let zero = TimeSignal::zeros(8000, FS);
        assert!(erle(&y, &zero, &cfg, 4).unwrap().iter().all(|v| v.saturated));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn si_sdr_scale_invariant(seed in 0u64..1000, alpha in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0]) {
                let r = sig(random(256, seed));
                let e = sig(random(256, seed + 7777));
                let a = si_sdr(&e, &r).unwrap().value;
                let b = si_sdr(&e.scaled(alpha), &r).unwrap().value;
                prop_assert!((a - b).abs() < 1e-9);
            }

            #[test]
            fn mae_non_negative(seed in 0u64..1000) {
                let cfg = StftConfig::low_latency();
                let a = stft(&sig(random(300, seed)), &cfg).unwrap();
                let b = stft(&sig(random(300, seed + 1)), &cfg).unwrap();
                prop_assert!(spectral_mae(&a, &b).unwrap() > 0.0);
            }
        }
    }
}

use ndarray::{Array2, Array3, ArrayView1, Axis};
use num_complex::Complex64;

use crate::dsp::{DspError, Spectrogram};

pub const LPS_EPSILON: f64 = 1e-12;

/// DNN input features of a `(Y, E)` spectrogram pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    /// `log(|Y|^2 + eps)`, zero mean and unit variance per bin over the
    /// utterance. frames x bins.
    pub lps_y: Array2<f64>,
    pub lps_e: Array2<f64>,
    /// frames x (2 ctx + 1); column `ctx + l` is the normalized correlation
    /// magnitude between frame `f` and frame `f + l`.
    pub temporal_corr: Array2<f64>,
    /// frames x (bins - 1); column `b` correlates bins `b` and `b + 1` over
    /// frames `f - ctx ..= f + ctx`.
    pub frequency_corr: Array2<f64>,
    /// frames x 2 x 2 Gram matrix of the `(Y, E)` frame vectors.
    pub channel_cov: Array3<Complex64>,
    pub context: usize,
}

fn normalized_lps(x: &Spectrogram) -> Array2<f64> {
    let mut lps = x.data().mapv(|c| (c.norm_sqr() + LPS_EPSILON).ln());
    let frames = lps.nrows().max(1) as f64;
    for mut col in lps.columns_mut() {
        let mean = col.sum() / frames;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / frames;
        let sd = var.sqrt();
        col.mapv_inplace(|v| if sd > 0.0 { (v - mean) / sd } else { v - mean });
    }
    lps
}

fn inner(a: ArrayView1<Complex64>, b: ArrayView1<Complex64>) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

fn norm_sqr(a: ArrayView1<Complex64>) -> f64 {
    a.iter().map(|c| c.norm_sqr()).sum()
}

/// Magnitude-normalized correlations computed on the stacked `[Y; E]`
/// vectors, so both inputs contribute.
pub fn extract_features(y: &Spectrogram, e: &Spectrogram, ctx: usize) -> Result<FeatureSet, DspError> {
    y.same_shape(e)?;
    let frames = y.frames();
    let bins = y.bins();
    let (yd, ed) = (y.data(), e.data());

    let frame_energy: Vec<f64> = (0..frames)
        .map(|f| norm_sqr(yd.row(f)) + norm_sqr(ed.row(f)))
        .collect();
    let width = 2 * ctx + 1;
    let mut temporal = Array2::<f64>::zeros((frames, width));
    for f in 0..frames {
        for j in 0..width {
            let g = f as isize + j as isize - ctx as isize;
            if g < 0 || g >= frames as isize {
                continue;
            }
            let g = g as usize;
            let den = (frame_energy[f] * frame_energy[g]).sqrt();
            if den > 0.0 {
                let num = inner(yd.row(f), yd.row(g)) + inner(ed.row(f), ed.row(g));
                temporal[[f, j]] = if f == g { 1.0 } else { (num.norm() / den).min(1.0) };
            }
        }
    }

    let mut frequency = Array2::<f64>::zeros((frames, bins.saturating_sub(1)));
    for f in 0..frames {
        let lo = f.saturating_sub(ctx);
        let hi = (f + ctx).min(frames - 1);
        for b in 0..bins.saturating_sub(1) {
            let (mut num, mut p0, mut p1) = (Complex64::new(0.0, 0.0), 0.0, 0.0);
            for g in lo..=hi {
                for d in [yd, ed] {
                    let (x0, x1) = (d[[g, b]], d[[g, b + 1]]);
                    num += x0 * x1.conj();
                    p0 += x0.norm_sqr();
                    p1 += x1.norm_sqr();
                }
            }
            let den = (p0 * p1).sqrt();
            if den > 0.0 {
                frequency[[f, b]] = (num.norm() / den).min(1.0);
            }
        }
    }

    let mut cov = Array3::<Complex64>::zeros((frames, 2, 2));
    for f in 0..frames {
        let rows = [yd.row(f), ed.row(f)];
        for i in 0..2 {
            for j in 0..2 {
                cov[[f, i, j]] = inner(rows[i], rows[j]);
            }
        }
    }

    Ok(FeatureSet {
        lps_y: normalized_lps(y),
        lps_e: normalized_lps(e),
        temporal_corr: temporal,
        frequency_corr: frequency,
        channel_cov: cov,
        context: ctx,
    })
}

impl FeatureSet {
    pub fn frames(&self) -> usize {
        self.lps_y.len_of(Axis(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{stft, StftConfig, TimeSignal};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn white(len: usize, seed: u64) -> TimeSignal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TimeSignal::new((0..len).map(|_| rng.sample(StandardNormal)).collect(), 16_000).unwrap()
    }

    fn spec(len: usize, seed: u64) -> Spectrogram {
        stft(&white(len, seed), &StftConfig::default()).unwrap()
    }

    #[test]
    fn identical_channels_are_fully_coherent() {
        let y = spec(8000, 1);
        let fs = extract_features(&y, &y, 2).unwrap();
        for f in 0..fs.frames() {
            let c = fs.channel_cov.index_axis(Axis(0), f);
            let diag = c[[0, 0]].norm();
            assert!((c[[1, 1]].norm() - diag).abs() <= 1e-12 * diag);
            assert!((c[[0, 1]].norm() - diag).abs() <= 1e-12 * diag);
            assert_eq!(c[[0, 1]], c[[1, 0]].conj());
            assert_eq!(fs.temporal_corr[[f, 2]], 1.0);
        }
    }

    #[test]
    fn lps_is_normalized_per_bin() {
        let fs = extract_features(&spec(16000, 2), &spec(16000, 3), 1).unwrap();
        for col in fs.lps_y.columns() {
            let n = col.len() as f64;
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-10 && (var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn white_noise_frames_are_uncorrelated() {
        // 1000 frames at hop 256
        let len = 999 * 256;
        let mut means = Vec::new();
        for seed in 0..5 {
            let fs = extract_features(&spec(len, 10 + seed), &spec(len, 20 + seed), 2).unwrap();
            assert_eq!(fs.frames(), 1000);
            let mut vals = Vec::new();
            for f in 2..fs.frames() - 2 {
                for j in [0, 1, 3, 4] {
                    vals.push(fs.temporal_corr[[f, j]]);
                }
            }
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
            // 3 sigma of the sample mean on top of the 0.1 bound
            assert!(mean <= 0.1 + 3.0 * sd / (vals.len() as f64).sqrt(), "{mean}");
            means.push(mean);
        }
        assert!(means.iter().all(|&m| m <= 0.1), "{means:?}");
    }

    #[test]
    fn invariant_to_joint_phase_rotation() {
        let y = spec(6000, 4);
        let e = spec(6000, 5);
        let rot = Complex64::from_polar(1.0, 0.7);
        let rotate = |s: &Spectrogram| {
            Spectrogram::new(s.data().mapv(|c| c * rot), *s.config(), s.signal_len(), s.sample_rate()).unwrap()
        };
        let a = extract_features(&y, &e, 2).unwrap();
        let b = extract_features(&rotate(&y), &rotate(&e), 2).unwrap();
        let close = |p: &Array2<f64>, q: &Array2<f64>| p.iter().zip(q).all(|(u, v)| (u - v).abs() < 1e-10);
        assert!(close(&a.lps_y, &b.lps_y) && close(&a.lps_e, &b.lps_e));
        assert!(close(&a.temporal_corr, &b.temporal_corr));
        assert!(close(&a.frequency_corr, &b.frequency_corr));
        for (p, q) in a.channel_cov.iter().zip(&b.channel_cov) {
            assert!((p - q).norm() <= 1e-10 * p.norm().max(1.0));
        }
    }

    #[test]
    fn shape_mismatch() {
        assert!(extract_features(&spec(4000, 6), &spec(5000, 7), 1).is_err());
    }
}

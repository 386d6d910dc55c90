use ndarray::{Array2, Array3};
use num_complex::Complex64;

use crate::dsp::{DspError, Spectrogram};

/// Deep filtering: every time-frequency bin is replaced by a complex
/// weighted sum of the same bin in neighbouring frames,
///
/// ```text
/// out(k, f) = sum_t filters(k, f, t) * spec(k + offsets[t], f)
/// ```
///
/// Frames outside the spectrogram count as zero.
pub fn deep_filter_apply(
    spec: &Spectrogram,
    filters: &Array3<Complex64>,
    offsets: &[isize],
) -> Result<Spectrogram, DspError> {
    let (frames, bins, taps) = filters.dim();
    if frames != spec.frames() || bins != spec.bins() {
        return Err(DspError::Shape(format!(
            "filters are {frames}x{bins}, spectrogram is {}x{}",
            spec.frames(),
            spec.bins()
        )));
    }
    if taps != offsets.len() {
        return Err(DspError::Shape(format!(
            "{taps} filter taps but {} offsets",
            offsets.len()
        )));
    }
    let x = spec.data();
    let mut out = Array2::<Complex64>::zeros((frames, bins));
    for (t, &off) in offsets.iter().enumerate() {
        for k in 0..frames {
            let src = k as isize + off;
            if src < 0 || src >= frames as isize {
                continue;
            }
            let src = src as usize;
            for f in 0..bins {
                out[[k, f]] += filters[[k, f, t]] * x[[src, f]];
            }
        }
    }
    Spectrogram::new(out, *spec.config(), spec.signal_len(), spec.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::StftConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spec(rng: &mut ChaCha8Rng, frames: usize) -> Spectrogram {
        let cfg = StftConfig::low_latency();
        let data = Array2::from_shape_fn((frames, cfg.bins()), |_| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        Spectrogram::new(data, cfg, (frames - 1) * cfg.hop, 16_000).unwrap()
    }

    fn random_filters(rng: &mut ChaCha8Rng, frames: usize, bins: usize, taps: usize) -> Array3<Complex64> {
        Array3::from_shape_fn((frames, bins, taps), |_| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn identity_and_zero_filters() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = random_spec(&mut rng, 12);
        let mut id = Array3::zeros((12, spec.bins(), 3));
        id.slice_mut(ndarray::s![.., .., 1]).fill(Complex64::new(1.0, 0.0));
        let out = deep_filter_apply(&spec, &id, &[-1, 0, 1]).unwrap();
        assert_eq!(out.data(), spec.data());
        let zero = deep_filter_apply(&spec, &Array3::zeros((12, spec.bins(), 3)), &[-1, 0, 1]).unwrap();
        assert!(zero.data().iter().all(|c| *c == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn shape_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = random_spec(&mut rng, 5);
        assert!(deep_filter_apply(&spec, &Array3::zeros((4, spec.bins(), 1)), &[0]).is_err());
        assert!(deep_filter_apply(&spec, &Array3::zeros((5, spec.bins(), 2)), &[0]).is_err());
    }

    #[test]
    fn matches_naive_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = random_spec(&mut rng, 9);
        let filt = random_filters(&mut rng, 9, spec.bins(), 3);
        let offsets = [-2, 0, 1];
        let out = deep_filter_apply(&spec, &filt, &offsets).unwrap();
        for k in 0..9 {
            for f in 0..spec.bins() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (t, &o) in offsets.iter().enumerate() {
                    let j = k as isize + o;
                    if (0..9).contains(&j) {
                        acc += filt[[k, f, t]] * spec.data()[[j as usize, f]];
                    }
                }
                assert!((acc - out.data()[[k, f]]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_in_spec_and_filters() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_spec(&mut rng, 7);
        let b = random_spec(&mut rng, 7);
        let f = random_filters(&mut rng, 7, a.bins(), 2);
        let g = random_filters(&mut rng, 7, a.bins(), 2);
        let off = [0, -1];
        let sum = Spectrogram::new(a.data() + b.data(), *a.config(), a.signal_len(), 16_000).unwrap();
        let lhs = deep_filter_apply(&sum, &f, &off).unwrap();
        let rhs = deep_filter_apply(&a, &f, &off).unwrap().data() + deep_filter_apply(&b, &f, &off).unwrap().data();
        assert!(lhs.data().iter().zip(&rhs).all(|(x, y)| (x - y).norm() < 1e-12));
        let lhs = deep_filter_apply(&a, &(&f + &g), &off).unwrap();
        let rhs = deep_filter_apply(&a, &f, &off).unwrap().data() + deep_filter_apply(&a, &g, &off).unwrap().data();
        assert!(lhs.data().iter().zip(&rhs).all(|(x, y)| (x - y).norm() < 1e-12));
    }
}

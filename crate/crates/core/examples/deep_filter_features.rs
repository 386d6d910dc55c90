//! Network inputs and the deep-filtering operator: features of a mixture,
//! an identity filter, and the oracle single-tap filter S/Y.

use howlsim::dsp::{istft, stft, StftConfig};
use howlsim::metrics::si_sdr;
use howlsim::sim::source::{synthetic_noise, synthetic_speech};
use howlsim::suppress::{deep_filter_apply, extract_features};
use ndarray::Array3;
use num_complex::Complex64;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fs = 16_000;
    let cfg = StftConfig::default();
    let s = synthetic_speech(6, 2.0, fs);
    let y = s.add(&synthetic_noise(7, 2.0, fs).scaled(0.05))?;
    let (ys, ss) = (stft(&y, &cfg)?, stft(&s, &cfg)?);

    let f = extract_features(&ys, &ys, 2)?;
    println!(
        "features: lps {:?}, temporal corr {:?}, frequency corr {:?}, channel cov {:?}",
        f.lps_y.dim(),
        f.temporal_corr.dim(),
        f.frequency_corr.dim(),
        f.channel_cov.dim()
    );

    let offsets = [-1isize, 0, 1];
    let mut identity = Array3::zeros((ys.frames(), ys.bins(), offsets.len()));
    identity.slice_mut(ndarray::s![.., .., 1]).fill(Complex64::new(1.0, 0.0));
    let out = deep_filter_apply(&ys, &identity, &offsets)?;
    println!("identity filter exact: {}", out.data() == ys.data());

    let mut oracle = Array3::zeros((ys.frames(), ys.bins(), 1));
    for ((t, k), y) in ys.data().indexed_iter() {
        if y.norm() > 0.0 {
            oracle[[t, k, 0]] = ss.data()[[t, k]] / y;
        }
    }
    let enhanced = istft(&deep_filter_apply(&ys, &oracle, &[0])?)?;
    println!(
        "SI-SDR mixture {:.2} dB, oracle filter {:.2} dB",
        si_sdr(&y, &s)?.value,
        si_sdr(&enhanced, &s)?.value
    );
    Ok(())
}

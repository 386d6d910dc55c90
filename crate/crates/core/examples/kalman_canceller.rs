//! Frequency-domain Kalman filter identifying a static 256-tap path.

use howlsim::dsp::{convolve, TimeSignal};
use howlsim::fdkf::{process_stream, KalmanConfig};
use howlsim::sim::source::synthetic_noise;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fs = 16_000;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let taps: Vec<f64> = (0..256)
        .map(|i| rng.random_range(-1.0..1.0) * (-(i as f64) / 40.0).exp())
        .collect();
    let path = TimeSignal::new(taps, fs)?;
    let r = synthetic_noise(11, 10.0, fs);
    let y = convolve(&r, &path)?.resized(r.len());

    let (e, trace) = process_stream(&KalmanConfig::default(), &y, &r)?;
    let per_second = fs as usize / 256;
    for (s, chunk) in trace.chunks(per_second).enumerate().step_by(2) {
        let mean = chunk.iter().map(|t| t.erle_db).sum::<f64>() / chunk.len() as f64;
        println!("second {s}: mean block ERLE {mean:6.1} dB, |H| = {:.3}", chunk.last().unwrap().h_norm);
    }
    let tail = fs as usize;
    let erle = 10.0
        * (y.samples()[y.len() - tail..].iter().map(|v| v * v).sum::<f64>()
            / e.samples()[e.len() - tail..].iter().map(|v| v * v).sum::<f64>())
        .log10();
    println!("final-second ERLE {erle:.1} dB");
    Ok(())
}

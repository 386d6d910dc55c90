//! Analysis/synthesis round trip with both STFT profiles.

use howlsim::dsp::{istft, stft, StftConfig, TimeSignal};
use howlsim::sim::source::synthetic_speech;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let x: TimeSignal = synthetic_speech(1, 2.0, 16_000);
    for (name, cfg) in [("wideband", StftConfig::wideband()), ("low-latency", StftConfig::low_latency())] {
        let spec = stft(&x, &cfg)?;
        let y = istft(&spec)?;
        let err = x
            .samples()
            .iter()
            .zip(y.samples())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!(
            "{name:12} {} frames x {} bins, max reconstruction error {err:.2e}",
            spec.frames(),
            spec.bins()
        );
    }
    Ok(())
}

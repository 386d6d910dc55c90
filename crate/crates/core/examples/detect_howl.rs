//! Howling detector on a growing tone, on speech and on a WAV file.
//!
//!     cargo run --example detect_howl -- [file.wav]

use howlsim::dsp::{StftConfig, TimeSignal};
use howlsim::io::read_wav;
use howlsim::sim::detect_howling;
use howlsim::sim::source::synthetic_speech;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fs = 16_000;
    let cfg = StftConfig::default();
    let tone: Vec<f64> = (0..fs as usize * 4)
        .map(|i| {
            let t = i as f64 / f64::from(fs);
            1e-3 * 10f64.powf(8.0 * t / 20.0) * (2.0 * std::f64::consts::PI * 1500.0 * t).sin()
        })
        .collect();
    println!("growing 1.5 kHz tone: {:?}", detect_howling(&TimeSignal::new(tone, fs)?, &cfg));
    println!("speech:               {:?}", detect_howling(&synthetic_speech(4, 4.0, fs), &cfg));
    if let Some(path) = std::env::args().nth(1) {
        println!("{path}: {:?}", detect_howling(&read_wav(path.as_ref())?, &cfg));
    }
    Ok(())
}

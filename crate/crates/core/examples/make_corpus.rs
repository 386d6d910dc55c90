//! Writes generated speech-like utterances as WAVs, usable as a corpus for
//! `ahs gen-dataset --corpus`.
//!
//!     cargo run --example make_corpus -- out_dir [count] [seconds]

use std::path::PathBuf;

use howlsim::io::{write_wav, WavFormat};
use howlsim::sim::source::synthetic_speech;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().ok_or("usage: make_corpus out_dir [count] [seconds]")?);
    let count: u64 = args.next().map(|a| a.parse()).transpose()?.unwrap_or(20);
    let seconds: f64 = args.next().map(|a| a.parse()).transpose()?.unwrap_or(5.0);
    std::fs::create_dir_all(&dir)?;
    for i in 0..count {
        write_wav(
            &dir.join(format!("utt{i:04}.wav")),
            &synthetic_speech(i, seconds, 16_000),
            WavFormat::Float32,
        )?;
    }
    println!("wrote {count} utterances to {}", dir.display());
    Ok(())
}

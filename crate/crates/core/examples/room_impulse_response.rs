//! Image-method responses: direct-path arrival and Schroeder RT60.
//!
//!     cargo run --example room_impulse_response -- [out_dir]

use howlsim::io::{write_wav, WavFormat};
use howlsim::room::{direct_path_delay, generate_rir, schroeder_rt60, Point3, RoomSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fs = 16_000;
    let src = Point3::new(1.0, 1.0, 1.0);
    let mic = Point3::new(4.0, 3.0, 2.0);
    for rt60 in [0.0, 0.3, 0.6] {
        let room = RoomSpec::new([5.0, 4.0, 3.0], rt60);
        let h = generate_rir(&room, &src, &mic, fs)?;
        let first = h.samples().iter().position(|&v| v != 0.0).unwrap_or(0);
        let est = schroeder_rt60(&h, 20.0).map_or("-".to_string(), |t| format!("{t:.3} s"));
        println!(
            "rt60 {rt60:.1} s: {} taps, first arrival at {first} (expected {}), estimated RT60 {est}",
            h.len(),
            direct_path_delay(&room, &src, &mic, fs).round()
        );
        if let Some(dir) = std::env::args().nth(1) {
            std::fs::create_dir_all(&dir)?;
            write_wav(
                &std::path::Path::new(&dir).join(format!("rir_{:03}ms.wav", (rt60 * 1000.0) as u32)),
                &h,
                WavFormat::Float32,
            )?;
        }
    }
    Ok(())
}

//! The scalar toy loop: growth per trip matches 20 log10(G a) when the loop
//! gain exceeds one, and the Kalman canceller keeps the same loop bounded.

use howlsim::sim::source::synthetic_noise;
use howlsim::sim::{run_streaming, ScenarioConfig};
use howlsim::suppress::{KalmanSuppressor, Passthrough};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fs = 16_000;
    let excitation = synthetic_noise(5, 4.0, fs).scaled(1e-4);
    for (label, loop_gain) in [("stable", 0.5), ("unstable", 1.2)] {
        let cfg = ScenarioConfig::scalar_toy(excitation.clone(), 1.0, loop_gain, 0.1);
        let open = run_streaming(&cfg, &mut Passthrough)?;
        let kalman = run_streaming(&cfg, &mut KalmanSuppressor::new(None))?;
        let trip_s = (open.delay_blocks * cfg.hop()) as f64 / f64::from(fs);
        let growth = if open.howling.detected {
            format!("{:.2} dB/trip", open.howling.growth_rate_db_per_s * trip_s)
        } else {
            "none".into()
        };
        println!(
            "G*a = {loop_gain} ({label}): passthrough howling={} growth {growth} (theory {:.2} dB/trip), limiter={}; kalman howling={}, output rms {:.1e}",
            open.howling.detected,
            20.0 * f64::log10(loop_gain),
            open.limiter_engaged,
            kalman.howling.detected,
            kalman.enhanced.rms(),
        );
    }
    Ok(())
}

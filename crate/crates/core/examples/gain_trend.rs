//! Mean SI-SDR of the unprocessed microphone signal and of the Kalman
//! canceller on a small test set, with the amplifier gain forced to 1, 2
//! and 3 (closed loop and teacher-forced).
//!
//!     cargo run --release --example gain_trend -- [scenarios]

use howlsim::experiment::dataset::{kalman_preprocess, DatasetPlan, DatasetSignals};
use howlsim::experiment::{ExperimentSpec, Preprocess, Split, SplitCounts};
use howlsim::metrics::si_sdr;
use howlsim::sim::{run_streaming, teacher_forced, GainSchedule};
use howlsim::suppress::{KalmanSuppressor, Passthrough};
use rayon::prelude::*;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(50);
    let mut spec = ExperimentSpec::default();
    spec.seed = 2024;
    spec.counts = SplitCounts { train: 0, val: 0, test: n };
    let plan = DatasetPlan::new(spec)?;

    for g in [1.0, 2.0, 3.0] {
        let rows: Vec<[f64; 4]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let (mut cfg, meta) = plan.scenario(Split::Test, i).unwrap();
                cfg.gain = GainSchedule::constant(g);
                let un = run_streaming(&cfg, &mut Passthrough).unwrap();
                let ka = run_streaming(&cfg, &mut KalmanSuppressor::new(None)).unwrap();
                let p = cfg.prepare().unwrap();
                let mix = teacher_forced(&p);
                let sig = DatasetSignals::from_mixture(&mix.target, &mix.noise, &mix.playback).unwrap();
                let e = kalman_preprocess(&sig, &cfg.stft, meta.delay_blocks, Preprocess::TeacherForced).unwrap();
                [
                    si_sdr(&un.enhanced, &un.target).unwrap().value,
                    si_sdr(&ka.enhanced, &ka.target).unwrap().value,
                    si_sdr(&sig.y, &sig.s).unwrap().value,
                    si_sdr(&e, &sig.s).unwrap().value,
                ]
            })
            .collect();
        let mean = |k: usize| rows.iter().map(|r| r[k]).sum::<f64>() / rows.len() as f64;
        println!(
            "G={g}: loop unprocessed {:7.2} dB, loop kalman {:7.2} dB | teacher-forced y {:7.2} dB, e {:7.2} dB",
            mean(0),
            mean(1),
            mean(2),
            mean(3)
        );
    }
    Ok(())
}

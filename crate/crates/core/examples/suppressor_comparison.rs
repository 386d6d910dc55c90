//! One reverberant scenario with every built-in suppressor in the loop.

use howlsim::experiment::dataset::DatasetPlan;
use howlsim::experiment::stream::build_suppressor;
use howlsim::experiment::{ExperimentSpec, Split, SplitCounts, SuppressorSpec};
use howlsim::metrics::si_sdr;
use howlsim::sim::{run_streaming, GainSchedule};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut spec = ExperimentSpec::default();
    spec.seed = 8;
    spec.counts = SplitCounts { train: 0, val: 0, test: 1 };
    let plan = DatasetPlan::new(spec)?;
    let (mut cfg, meta) = plan.scenario(Split::Test, 0)?;
    cfg.gain = GainSchedule::constant(1.5);
    println!("room rt60 {:.2} s, delay {:.3} s, {:?}", meta.geometry.room.rt60, meta.delay_s, meta.nonlinearity);
    let target = cfg.prepare()?.target;
    for s in ["none", "kalman", "notch", "gain-limiter:0", "oracle"] {
        let spec = SuppressorSpec::parse(s, None)?;
        let mut sup = build_suppressor(&spec, &target)?;
        let r = run_streaming(&cfg, &mut sup)?;
        println!(
            "{:14} howling={:5} limiter={:5} SI-SDR {:7.2} dB",
            spec.label(),
            r.howling.detected,
            r.limiter_engaged,
            si_sdr(&r.enhanced, &r.target)?.value
        );
    }
    Ok(())
}

//! Generate a small dataset, evaluate the stored mixtures and Kalman
//! outputs, export features of one scenario and read a tensor back.
//!
//!     cargo run --release --example dataset_pipeline -- [out_dir]

use std::path::PathBuf;

use howlsim::experiment::dataset::scenario_dir_name;
use howlsim::experiment::{cmd_evaluate, cmd_export_features, gen_dataset, ExperimentSpec, Split, SplitCounts};
use howlsim::io::read_tensor;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/dataset-demo".into()));
    let mut spec = ExperimentSpec::default();
    spec.seed = 42;
    spec.counts = SplitCounts { train: 4, val: 1, test: 3 };
    spec.duration_s = 2.0;

    let manifest = gen_dataset(&spec, &out, None, true)?;
    println!("{} scenarios, spec hash {}", manifest.scenarios.len(), &manifest.spec_hash[..16]);
    println!("files verified: {}", manifest.verify(&out)?.is_empty());

    let table = cmd_evaluate(&out.join("test"), &out.join("eval"), &spec.stft.config())?;
    for row in &table.summary {
        let mean = row.si_sdr_mean.map_or("-".into(), |v| format!("{v:.2} dB"));
        println!("{:12} {:3} n={} SI-SDR {mean}", row.method, row.bucket, row.count);
    }

    let scenario = out.join(scenario_dir_name(Split::Train, 0));
    let (_, tensors) = cmd_export_features(&scenario, &out.join("features"), 2)?;
    for t in &tensors {
        let back = read_tensor(&out.join("features").join(&t.file))?;
        println!("{:20} {:?} {:?}", t.file, back.dims, t.axes);
    }
    Ok(())
}

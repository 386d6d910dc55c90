//! Experiment workflows behind the command line: dataset generation,
//! streaming runs, batch evaluation, feature export, room responses and
//! howling detection on files.

pub mod corpus;
pub mod dataset;
pub mod evaluate;
pub mod features;
pub mod spec;
pub mod stream;

pub use dataset::{gen_dataset, RunManifest, ScenarioMeta, ScenarioRecord};
pub use evaluate::{cmd_evaluate, EvaluationTable};
pub use features::cmd_export_features;
pub use spec::{ExperimentSpec, Preprocess, Split, SplitCounts, SuppressorSpec};
pub use stream::{cmd_stream, load_scenario, MatrixFormat, ScenarioFile, StreamReport};

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dsp::DspError;
use crate::fdkf::KalmanError;
use crate::io::{write_json, write_wav, FileError, WavFormat};
use crate::metrics::MetricsError;
use crate::room::{sample_rir_set, RoomError};
use crate::sim::SimError;
use crate::suppress::{SuppressorError, ProtocolError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    File(#[from] FileError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Suppressor(#[from] SuppressorError),
    #[error(transparent)]
    Kalman(#[from] KalmanError),
    #[error(transparent)]
    Room(#[from] RoomError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_PROTOCOL: i32 = 4;

fn suppressor_code(e: &SuppressorError) -> i32 {
    match e {
        SuppressorError::Protocol(_) => EXIT_PROTOCOL,
        SuppressorError::Kalman(KalmanError::NonFinite { .. }) => EXIT_DIVERGENCE,
        _ => EXIT_DATA,
    }
}

impl ExperimentError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Usage(_) => EXIT_USAGE,
            ExperimentError::Sim(SimError::Divergence { .. }) => EXIT_DIVERGENCE,
            ExperimentError::Sim(SimError::Suppressor { source, .. }) => suppressor_code(source),
            ExperimentError::Suppressor(e) => suppressor_code(e),
            ExperimentError::Kalman(KalmanError::NonFinite { .. }) => EXIT_DIVERGENCE,
            _ => EXIT_DATA,
        }
    }

    pub fn protocol(&self) -> Option<&ProtocolError> {
        match self {
            ExperimentError::Sim(SimError::Suppressor {
                source: SuppressorError::Protocol(p),
                ..
            })
            | ExperimentError::Suppressor(SuppressorError::Protocol(p)) => Some(p),
            _ => None,
        }
    }
}

/// Draws `count` room response sets from the spec's ranges and writes
/// `h_loudspeaker.wav`, `h_nearend.wav`, `h_noise.wav` and `geometry.json`
/// per set.
pub fn cmd_gen_rir(spec: &ExperimentSpec, count: usize, out: &Path) -> Result<(), ExperimentError> {
    spec.validate().map_err(ExperimentError::Usage)?;
    let ranges = spec.room.with_rt60(spec.ranges.rt60_s);
    for k in 0..count {
        let seed = dataset::derive_seed(spec.seed, "gen-rir", Split::Train, k);
        let set = sample_rir_set(&mut ChaCha8Rng::seed_from_u64(seed), &ranges, spec.sample_rate)?;
        let dir = out.join(format!("rir-{k:05}"));
        std::fs::create_dir_all(&dir).map_err(|e| FileError::io(&dir, e))?;
        write_wav(&dir.join("h_loudspeaker.wav"), &set.h_loudspeaker, WavFormat::Float32)?;
        write_wav(&dir.join("h_nearend.wav"), &set.h_nearend, WavFormat::Float32)?;
        write_wav(&dir.join("h_noise.wav"), &set.h_noise, WavFormat::Float32)?;
        write_json(
            &dir.join("geometry.json"),
            &serde_json::json!({ "seed": seed, "geometry": set.geometry }),
        )?;
    }
    Ok(())
}

//! The closed amplification loop: scenario preparation, frame-synchronous
//! streaming with a suppressor in the loop, the teacher-forced one-time
//! mixture, and howling detection.

mod howling;
mod scenario;
pub mod source;
mod streaming;

pub use howling::{detect_howling, HowlingReport};
pub use scenario::{
    active_power, GainSchedule, PlaybackChain, PreparedScenario, ScenarioConfig, ACTIVE_FRAME_DBFS,
    SATURATION_LIMIT,
};
pub use streaming::{
    make_teacher_forced_mixture, run_prepared, run_streaming, teacher_forced, FrameDiagnostics,
    Mixture, StreamResult,
};

use thiserror::Error;

use crate::suppress::SuppressorError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario configuration: {0}")]
    Config(String),
    #[error("scaling error: {0}")]
    Scaling(String),
    #[error("suppressor failed at frame {frame}: {source}")]
    Suppressor {
        frame: usize,
        #[source]
        source: SuppressorError,
    },
    #[error("numeric divergence at frame {frame}")]
    Divergence { frame: usize },
    #[error(transparent)]
    Dsp(#[from] crate::dsp::DspError),
    #[error(transparent)]
    Room(#[from] crate::room::RoomError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
}

//! Physical layer: image-method room responses and loudspeaker distortion.

mod nonlinearity;
mod rir;

pub use nonlinearity::{apply_nonlinearity, NonlinearityModel};
pub use rir::{
    direct_path_delay, generate_rir, sample_geometry, sample_rir_set, schroeder_rt60, Geometry,
    Point3, RirSamplingRanges, RirSet, RoomSpec, RIR_TAIL_SAMPLES, SPEED_OF_SOUND,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RoomError {
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("room model error: {0}")]
    Model(String),
    #[error("unsatisfiable sampling constraints: {0}")]
    Unsatisfiable(String),
}

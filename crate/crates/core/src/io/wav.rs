use std::path::Path;

use hound::{SampleFormat, WavSpec, WavWriter};
use serde::{Deserialize, Serialize};

use super::FileError;
use crate::dsp::TimeSignal;

/// Sample encoding on disk.
///
/// `Pcm16` stores `round(x * 32768)` clamped to the 16-bit range and reads
/// back `v / 32768`, so any signal already on that grid round-trips
/// exactly. `Float32` is lossless for values representable in `f32`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WavFormat {
    #[default]
    Float32,
    Pcm16,
}

pub fn write_wav(path: &Path, signal: &TimeSignal, format: WavFormat) -> Result<(), FileError> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate(),
        bits_per_sample: match format {
            WavFormat::Float32 => 32,
            WavFormat::Pcm16 => 16,
        },
        sample_format: match format {
            WavFormat::Float32 => SampleFormat::Float,
            WavFormat::Pcm16 => SampleFormat::Int,
        },
    };
    let wrap = |e| FileError::Wav {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = WavWriter::create(path, spec).map_err(wrap)?;
    match format {
        WavFormat::Float32 => {
            for &x in signal.samples() {
                w.write_sample(x as f32).map_err(wrap)?;
            }
        }
        WavFormat::Pcm16 => {
            for &x in signal.samples() {
                let v = (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                w.write_sample(v).map_err(wrap)?;
            }
        }
    }
    w.finalize().map_err(wrap)
}

/// Reads a mono WAV (integer PCM up to 32 bits, or 32-bit float).
pub fn read_wav(path: &Path) -> Result<TimeSignal, FileError> {
    let wrap = |e| FileError::Wav {
        path: path.to_path_buf(),
        source: e,
    };
    let mut r = hound::WavReader::open(path).map_err(wrap)?;
    let spec = r.spec();
    if spec.channels != 1 {
        return Err(FileError::format(path, format!("{} channels; mono required", spec.channels)));
    }
    let samples: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => r
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(wrap)?,
        SampleFormat::Int => {
            let scale = 2f64.powi(i32::from(spec.bits_per_sample) - 1);
            r.samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) / scale))
                .collect::<Result<_, _>>()
                .map_err(wrap)?
        }
    };
    TimeSignal::new(samples, spec.sample_rate).map_err(|e| FileError::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let sig = TimeSignal::new((0..1000).map(|i| f64::from((i as f32 * 0.37).sin() * 3.0)).collect(), 16_000).unwrap();
        write_wav(&p, &sig, WavFormat::Float32).unwrap();
        assert_eq!(read_wav(&p).unwrap(), sig);
    }

    #[test]
    fn pcm16_round_trip_on_grid() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.wav");
        let sig = TimeSignal::new((-500..500).map(|i| f64::from(i * 61) / 32768.0).collect(), 8_000).unwrap();
        write_wav(&p, &sig, WavFormat::Pcm16).unwrap();
        let back = read_wav(&p).unwrap();
        assert_eq!(back, sig);
        assert_eq!(back.sample_rate(), 8_000);
    }

    #[test]
    fn pcm16_clamps_and_rounds() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.wav");
        let sig = TimeSignal::new(vec![2.0, -2.0, 0.1], 16_000).unwrap();
        write_wav(&p, &sig, WavFormat::Pcm16).unwrap();
        let back = read_wav(&p).unwrap();
        assert_eq!(back.samples()[0], 32767.0 / 32768.0);
        assert_eq!(back.samples()[1], -1.0);
        assert!((back.samples()[2] - 0.1).abs() <= 0.5 / 32768.0);
    }

    #[test]
    fn stereo_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(matches!(read_wav(&p), Err(FileError::Format { .. })));
    }
}

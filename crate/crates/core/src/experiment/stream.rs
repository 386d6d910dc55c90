use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{ScenarioMeta, META_FILE};
use super::spec::{StftProfile, SuppressorSpec};
use super::ExperimentError;
use crate::dsp::{stft, Spectrogram, TimeSignal};
use crate::io::{read_json, read_wav, write_csv, write_json, write_matrix_csv, write_tensor, write_wav, FileError, WavFormat};
use crate::metrics::MetricsReport;
use crate::room::{sample_geometry, Geometry, NonlinearityModel, RirSamplingRanges, RirSet};
use crate::sim::source::{synthetic_noise, synthetic_speech};
use crate::sim::{run_streaming, GainSchedule, ScenarioConfig, StreamResult};
use crate::suppress::{
    Cascade, GainLimiter, KalmanSuppressor, NotchBank, OracleSuppressor, Passthrough, PluginConfig,
    PluginSuppressor, Suppressor,
};

/// Audio source of a scenario file: a WAV path or a generated signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SignalSource {
    File(PathBuf),
    Synthetic { synthetic: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RirSource {
    /// Loudspeaker path `a * delta`; unit talker and noise paths.
    Scalar(f64),
    Geometry(Geometry),
    /// Random room drawn from the default ranges with this seed.
    Sample(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainSpec {
    Constant(f64),
    /// `(time_s, gain)` breakpoints, step interpolation.
    Schedule(Vec<(f64, f64)>),
}

impl GainSpec {
    pub fn schedule(&self) -> GainSchedule {
        match self {
            GainSpec::Constant(g) => GainSchedule::constant(*g),
            GainSpec::Schedule(b) => GainSchedule::steps(b.clone()),
        }
    }
}

/// Hand-written scenario description for `stream`. Relative paths resolve
/// against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub target: SignalSource,
    #[serde(default)]
    pub noise: Option<SignalSource>,
    pub rir: RirSource,
    pub gain: GainSpec,
    pub delay_s: f64,
    #[serde(default)]
    pub nonlinearity: NonlinearityModel,
    #[serde(default)]
    pub spr_db: Option<f64>,
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub target_level_dbfs: Option<f64>,
    #[serde(default)]
    pub stft: StftProfile,
    #[serde(default = "default_rate")]
    pub sample_rate: u32,
    /// Seconds; defaults to the target's length.
    #[serde(default)]
    pub duration_s: Option<f64>,
}

fn default_rate() -> u32 {
    16_000
}

impl ScenarioFile {
    pub fn to_config(&self, base: &Path) -> Result<ScenarioConfig, ExperimentError> {
        let fs = self.sample_rate;
        let seconds = self.duration_s.unwrap_or(4.0);
        let load = |src: &SignalSource, noise: bool| -> Result<TimeSignal, ExperimentError> {
            let sig = match src {
                SignalSource::File(p) => read_wav(&base.join(p))?,
                SignalSource::Synthetic { synthetic } if noise => synthetic_noise(*synthetic, seconds, fs),
                SignalSource::Synthetic { synthetic } => synthetic_speech(*synthetic, seconds, fs),
            };
            if sig.sample_rate() != fs {
                return Err(ExperimentError::Data(format!(
                    "signal sampled at {} Hz, scenario expects {fs}",
                    sig.sample_rate()
                )));
            }
            Ok(sig)
        };
        let target = load(&self.target, false)?;
        let noise = self.noise.as_ref().map(|n| load(n, true)).transpose()?;
        let rirs = match &self.rir {
            RirSource::Scalar(a) => RirSet::scalar(*a, fs),
            RirSource::Geometry(g) => RirSet::from_geometry(*g, fs)?,
            RirSource::Sample(seed) => RirSet::from_geometry(
                sample_geometry(&mut ChaCha8Rng::seed_from_u64(*seed), &RirSamplingRanges::default())?,
                fs,
            )?,
        };
        Ok(ScenarioConfig {
            duration: self.duration_s.unwrap_or(target.duration_secs()),
            target,
            noise,
            rirs,
            gain: self.gain.schedule(),
            system_delay: self.delay_s,
            nonlinearity: self.nonlinearity,
            spr_db: self.spr_db,
            snr_db: self.snr_db,
            target_level_dbfs: self.target_level_dbfs,
            stft: self.stft.config(),
        })
    }
}

/// Rebuilds the loop of a generated dataset scenario from its stored target
/// and noise (already at the microphone and scaled) and its room.
pub fn config_from_dataset_dir(dir: &Path) -> Result<ScenarioConfig, ExperimentError> {
    let meta: ScenarioMeta = read_json(&dir.join(META_FILE))?;
    let target = read_wav(&dir.join("s.wav"))?;
    let noise = read_wav(&dir.join("n.wav"))?;
    let fs = meta.sample_rate;
    let full = RirSet::from_geometry(meta.geometry, fs)?;
    Ok(ScenarioConfig {
        target,
        noise: Some(noise),
        rirs: RirSet {
            h_loudspeaker: full.h_loudspeaker,
            h_nearend: TimeSignal::impulse(1, fs),
            h_noise: TimeSignal::impulse(1, fs),
            geometry: Some(meta.geometry),
        },
        gain: GainSchedule::constant(meta.gain),
        system_delay: meta.delay_s,
        nonlinearity: meta.nonlinearity,
        spr_db: Some(meta.spr_db),
        snr_db: None,
        target_level_dbfs: None,
        stft: meta.stft,
        duration: meta.duration_s,
    })
}

/// A scenario file, or a dataset scenario directory holding `meta.json`.
pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ExperimentError> {
    if path.is_dir() {
        return config_from_dataset_dir(path);
    }
    let file: ScenarioFile = read_json(path)?;
    file.to_config(path.parent().unwrap_or(Path::new(".")))
}

/// Instantiates a suppressor. `clean` feeds the oracle.
pub fn build_suppressor(spec: &SuppressorSpec, clean: &TimeSignal) -> Result<Box<dyn Suppressor>, ExperimentError> {
    let plugin = |command: &[String], deadline_ms: u64, channels: usize| {
        let config = PluginConfig {
            deadline: Duration::from_millis(deadline_ms),
            input_channels: channels,
            ..PluginConfig::default()
        };
        PluginSuppressor::spawn(&command[0], &command[1..], config)
    };
    Ok(match spec {
        SuppressorSpec::None => Box::new(Passthrough),
        SuppressorSpec::Kalman => Box::new(KalmanSuppressor::new(None)),
        SuppressorSpec::Notch { frequencies, q } if frequencies.is_empty() => Box::new(NotchBank::adaptive(*q)),
        SuppressorSpec::Notch { frequencies, q } => Box::new(NotchBank::fixed(frequencies.clone(), *q)),
        SuppressorSpec::GainLimiter { max_gain_db } => Box::new(GainLimiter::new(*max_gain_db)),
        SuppressorSpec::Oracle => Box::new(OracleSuppressor::new(clean)),
        SuppressorSpec::External { command, .. } | SuppressorSpec::Hybrid { command, .. } if command.is_empty() => {
            return Err(ExperimentError::Usage("external suppressor needs a command".into()))
        }
        SuppressorSpec::External { command, deadline_ms } => Box::new(plugin(command, *deadline_ms, 1)),
        SuppressorSpec::Hybrid { command, deadline_ms } => Box::new(Cascade::new(
            KalmanSuppressor::new(None),
            plugin(command, *deadline_ms, 2),
        )?),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StreamReport {
    pub method: String,
    pub suppressor: String,
    pub gain_max: f64,
    pub delay_blocks: usize,
    pub latency_blocks: usize,
    pub playback_scale: f64,
    pub limiter_engaged: bool,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixFormat {
    #[default]
    Ahsf,
    Csv,
}

/// Log-magnitude in dB (floored at -120 dB), frames x bins.
pub fn log_magnitude(spec: &Spectrogram) -> Vec<f32> {
    spec.data()
        .iter()
        .map(|c| (20.0 * c.norm().max(1e-6).log10()) as f32)
        .collect()
}

/// Runs one scenario and writes its signals, diagnostics and report to
/// `out`.
pub fn cmd_stream(
    cfg: &ScenarioConfig,
    spec: &SuppressorSpec,
    out: &Path,
    matrices: MatrixFormat,
) -> Result<StreamReport, ExperimentError> {
    let prepared = cfg.prepare()?;
    let mut suppressor = build_suppressor(spec, &prepared.target)?;
    let result = run_streaming(cfg, &mut suppressor)?;
    write_stream_outputs(cfg, spec, &*suppressor, &result, out, matrices)
}

fn write_stream_outputs(
    cfg: &ScenarioConfig,
    spec: &SuppressorSpec,
    suppressor: &dyn Suppressor,
    r: &StreamResult,
    out: &Path,
    matrices: MatrixFormat,
) -> Result<StreamReport, ExperimentError> {
    fs::create_dir_all(out).map_err(|e| FileError::io(out, e))?;
    let wav = |name: &str, s: &TimeSignal| write_wav(&out.join(name), s, WavFormat::Float32);
    wav("y.wav", &r.mic)?;
    wav("s_hat.wav", &r.enhanced)?;
    wav("x.wav", &r.loudspeaker)?;
    wav("d.wav", &r.playback)?;
    wav("s.wav", &r.target)?;
    write_csv(&out.join("frames.csv"), &r.per_frame)?;
    for (name, sig) in [("spec_y", &r.mic), ("spec_s_hat", &r.enhanced)] {
        let sp = stft(sig, &cfg.stft)?;
        let data = log_magnitude(&sp);
        match matrices {
            MatrixFormat::Ahsf => write_tensor(&out.join(format!("{name}.ahsf")), &[sp.frames(), sp.bins()], &data)?,
            MatrixFormat::Csv => write_matrix_csv(&out.join(format!("{name}.csv")), sp.frames(), sp.bins(), &data)?,
        }
    }
    let latency = r.latency_blocks * cfg.hop();
    let erle_pair = suppressor.is_canceller().then_some((&r.mic, &r.enhanced));
    let metrics = MetricsReport::compute(&r.enhanced, &r.target, &cfg.stft, latency, erle_pair, r.howling)?;
    let report = StreamReport {
        method: spec.label().to_string(),
        suppressor: suppressor.name(),
        gain_max: cfg.gain.max_gain(),
        delay_blocks: r.delay_blocks,
        latency_blocks: r.latency_blocks,
        playback_scale: r.playback_scale,
        limiter_engaged: r.limiter_engaged,
        metrics,
    };
    write_json(&out.join("metrics.json"), &report)?;
    write_json(
        &out.join(META_FILE),
        &serde_json::json!({
            "method": report.method,
            "gain": report.gain_max,
            "latency_samples": latency,
        }),
    )?;
    Ok(report)
}

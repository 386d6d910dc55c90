use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsp::StftConfig;
use crate::io::WavFormat;
use crate::room::{NonlinearityModel, RirSamplingRanges};

pub const SPEC_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }

    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

impl Default for SplitCounts {
    fn default() -> Self {
        Self {
            train: 10_000,
            val: 300,
            test: 500,
        }
    }
}

/// Closed sampling intervals `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRanges {
    pub spr_db: (f64, f64),
    pub snr_db: (f64, f64),
    pub gain: (f64, f64),
    pub delay_s: (f64, f64),
    pub rt60_s: (f64, f64),
}

impl Default for ScenarioRanges {
    fn default() -> Self {
        Self {
            spr_db: (-10.0, 10.0),
            snr_db: (-10.0, 30.0),
            gain: (1.0, 3.2),
            delay_s: (0.1, 0.3),
            rt60_s: (0.0, 0.6),
        }
    }
}

/// Room size and placement constraints; reverberation comes from
/// [`ScenarioRanges::rt60_s`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomRanges {
    pub length_x: (f64, f64),
    pub length_y: (f64, f64),
    pub height: (f64, f64),
    pub wall_clearance: f64,
    pub min_source_mic_distance: f64,
}

impl Default for RoomRanges {
    fn default() -> Self {
        let r = RirSamplingRanges::default();
        Self {
            length_x: r.length_x,
            length_y: r.length_y,
            height: r.height,
            wall_clearance: r.wall_clearance,
            min_source_mic_distance: r.min_source_mic_distance,
        }
    }
}

impl RoomRanges {
    pub fn with_rt60(&self, rt60: (f64, f64)) -> RirSamplingRanges {
        RirSamplingRanges {
            length_x: self.length_x,
            length_y: self.length_y,
            height: self.height,
            rt60,
            wall_clearance: self.wall_clearance,
            min_source_mic_distance: self.min_source_mic_distance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StftProfile {
    /// 512 / 256 / 512
    #[default]
    Wideband,
    /// 128 / 64 / 128
    LowLatency,
}

impl StftProfile {
    pub fn config(self) -> StftConfig {
        match self {
            StftProfile::Wideband => StftConfig::wideband(),
            StftProfile::LowLatency => StftConfig::low_latency(),
        }
    }
}

impl FromStr for StftProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wideband" => Ok(Self::Wideband),
            "low-latency" => Ok(Self::LowLatency),
            _ => Err(format!("unknown STFT profile {s:?} (wideband, low-latency)")),
        }
    }
}

/// Loudspeaker distortion per scenario.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum NonlinearityChoice {
    /// Hard clip (threshold in [0.5, 1.0]) or sigmoid (gamma in [0.8, 1.2]),
    /// equally likely.
    #[default]
    Random,
    Fixed { model: NonlinearityModel },
}

/// How the Kalman-preprocessed signal `e` is produced for datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preprocess {
    /// Reference is the clean target delayed by the loop delay, matching the
    /// teacher-forced mixture.
    #[default]
    TeacherForced,
    /// Reference is the filter's own output delayed by the loop delay.
    Recursive,
}

/// Suppressor selection for streaming runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
#[derive(Default)]
pub enum SuppressorSpec {
    None,
    #[default]
    Kalman,
    /// Empty `frequencies` makes the bank adaptive.
    Notch { frequencies: Vec<f64>, q: f64 },
    GainLimiter { max_gain_db: f64 },
    /// Emits the known clean target.
    Oracle,
    External { command: Vec<String>, deadline_ms: u64 },
    /// Kalman front end, external two-channel back end (microphone and
    /// Kalman output).
    Hybrid { command: Vec<String>, deadline_ms: u64 },
}


impl SuppressorSpec {
    /// Short label used in file names and tables.
    pub fn label(&self) -> &'static str {
        match self {
            SuppressorSpec::None => "unprocessed",
            SuppressorSpec::Kalman => "kalman",
            SuppressorSpec::Notch { .. } => "notch",
            SuppressorSpec::GainLimiter { .. } => "gain-limiter",
            SuppressorSpec::Oracle => "oracle",
            SuppressorSpec::External { .. } => "external",
            SuppressorSpec::Hybrid { .. } => "hybrid",
        }
    }

    /// Parses `none`, `kalman`, `notch`, `notch:F1,F2`, `gain-limiter`,
    /// `gain-limiter:DB`, `oracle`, `external`, `hybrid`. The external
    /// kinds take their command separately.
    pub fn parse(s: &str, command: Option<&str>) -> Result<Self, String> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let command = || -> Result<Vec<String>, String> {
            let words: Vec<String> = command.unwrap_or("").split_whitespace().map(str::to_string).collect();
            if words.is_empty() {
                Err(format!("suppressor {name} needs --cmd"))
            } else {
                Ok(words)
            }
        };
        let no_arg = |v: Self| match arg {
            None => Ok(v),
            Some(_) => Err(format!("suppressor {name} takes no parameter")),
        };
        match name {
            "none" => no_arg(Self::None),
            "kalman" => no_arg(Self::Kalman),
            "oracle" => no_arg(Self::Oracle),
            "notch" => {
                let frequencies = match arg {
                    Some(a) => a
                        .split(',')
                        .map(|f| f.trim().parse::<f64>().map_err(|e| format!("notch frequency {f:?}: {e}")))
                        .collect::<Result<_, _>>()?,
                    None => Vec::new(),
                };
                Ok(Self::Notch { frequencies, q: 10.0 })
            }
            "gain-limiter" => {
                let max_gain_db = match arg {
                    Some(a) => a.parse().map_err(|e| format!("gain-limiter bound {a:?}: {e}"))?,
                    None => 0.0,
                };
                Ok(Self::GainLimiter { max_gain_db })
            }
            "external" => no_arg(Self::External {
                command: command()?,
                deadline_ms: 100,
            }),
            "hybrid" => no_arg(Self::Hybrid {
                command: command()?,
                deadline_ms: 100,
            }),
            _ => Err(format!(
                "unknown suppressor {s:?} (none, kalman, notch[:F,..], gain-limiter[:DB], oracle, external, hybrid)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputLayout {
    pub wav_format: WavFormat,
}

/// Everything that determines a generated dataset. Stored verbatim in the
/// run manifest; flags given on the command line override file values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSpec {
    pub version: u32,
    pub seed: u64,
    pub counts: SplitCounts,
    pub ranges: ScenarioRanges,
    pub room: RoomRanges,
    pub sample_rate: u32,
    pub stft: StftProfile,
    pub duration_s: f64,
    /// Active-frame level of the microphone-side target.
    pub target_level_dbfs: f64,
    pub nonlinearity: NonlinearityChoice,
    /// Directory of mono WAVs at `sample_rate`; `None` uses generated
    /// speech-like utterances.
    pub corpus: Option<PathBuf>,
    pub noise_corpus: Option<PathBuf>,
    pub preprocess: Preprocess,
    pub suppressor: SuppressorSpec,
    pub output: OutputLayout,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            version: SPEC_VERSION,
            seed: 0,
            counts: SplitCounts::default(),
            ranges: ScenarioRanges::default(),
            room: RoomRanges::default(),
            sample_rate: 16_000,
            stft: StftProfile::default(),
            duration_s: 4.0,
            target_level_dbfs: -25.0,
            nonlinearity: NonlinearityChoice::default(),
            corpus: None,
            noise_corpus: None,
            preprocess: Preprocess::default(),
            suppressor: SuppressorSpec::default(),
            output: OutputLayout::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.version != SPEC_VERSION {
            return Err(format!("spec version {} unsupported (expected {SPEC_VERSION})", self.version));
        }
        let r = &self.ranges;
        for (name, (lo, hi)) in [
            ("spr_db", r.spr_db),
            ("snr_db", r.snr_db),
            ("gain", r.gain),
            ("delay_s", r.delay_s),
            ("rt60_s", r.rt60_s),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(format!("range {name} = [{lo}, {hi}] is empty or not finite"));
            }
        }
        if r.gain.0 < 0.0 || r.delay_s.0 < 0.0 || r.rt60_s.0 < 0.0 {
            return Err("gain, delay and rt60 ranges must be non-negative".into());
        }
        if self.sample_rate == 0 {
            return Err("sample rate must be positive".into());
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err("duration must be positive".into());
        }
        if let NonlinearityChoice::Fixed { model } = &self.nonlinearity {
            model.validate().map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_published_setup() {
        let s = ExperimentSpec::default();
        assert_eq!((s.counts.train, s.counts.val, s.counts.test), (10_000, 300, 500));
        assert_eq!(s.ranges.spr_db, (-10.0, 10.0));
        assert_eq!(s.ranges.snr_db, (-10.0, 30.0));
        assert_eq!(s.ranges.gain, (1.0, 3.2));
        assert_eq!(s.ranges.delay_s, (0.1, 0.3));
        assert_eq!(s.ranges.rt60_s, (0.0, 0.6));
        assert!(s.validate().is_ok());
    }

    #[test]
    fn json_round_trip_and_partial_files() {
        let s = ExperimentSpec::default();
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentSpec>(&text).unwrap(), s);
        let partial: ExperimentSpec = serde_json::from_str(r#"{"seed": 7, "counts": {"train": 2, "val": 1, "test": 1}}"#).unwrap();
        assert_eq!(partial.seed, 7);
        assert_eq!(partial.counts.total(), 4);
        assert_eq!(partial.ranges, ScenarioRanges::default());
        assert!(serde_json::from_str::<ExperimentSpec>(r#"{"sed": 7}"#).is_err());
    }

    #[test]
    fn suppressor_parsing() {
        assert_eq!(SuppressorSpec::parse("kalman", None).unwrap(), SuppressorSpec::Kalman);
        assert_eq!(
            SuppressorSpec::parse("notch:1000,2500", None).unwrap(),
            SuppressorSpec::Notch {
                frequencies: vec![1000.0, 2500.0],
                q: 10.0
            }
        );
        assert!(SuppressorSpec::parse("external", None).is_err());
        assert_eq!(
            SuppressorSpec::parse("external", Some("peer --mode echo")).unwrap(),
            SuppressorSpec::External {
                command: vec!["peer".into(), "--mode".into(), "echo".into()],
                deadline_ms: 100
            }
        );
        assert!(SuppressorSpec::parse("kalman:3", None).is_err());
        assert!(SuppressorSpec::parse("dnn", None).is_err());
    }

    #[test]
    fn invalid_ranges_rejected() {
        let mut s = ExperimentSpec::default();
        s.ranges.gain = (3.0, 1.0);
        assert!(s.validate().is_err());
        let mut s = ExperimentSpec::default();
        s.version = 9;
        assert!(s.validate().is_err());
    }
}

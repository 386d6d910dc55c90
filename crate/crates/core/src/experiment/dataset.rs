use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::corpus::Corpus;
use super::spec::{ExperimentSpec, NonlinearityChoice, Preprocess, Split};
use super::ExperimentError;
use crate::dsp::{delay_truncated, StftConfig, TimeSignal};
use crate::fdkf::{process_stream, KalmanConfig};
use crate::io::{read_json, write_json, write_wav, WavFormat};
use crate::room::{sample_geometry, Geometry, NonlinearityModel, RirSet};
use crate::sim::source::synthetic_noise;
use crate::sim::{teacher_forced, GainSchedule, ScenarioConfig};
use crate::suppress::{KalmanSuppressor, StreamContext, Suppressor};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const META_FILE: &str = "meta.json";
pub const MANIFEST_VERSION: u32 = 1;

/// Files written per scenario, in order.
pub const SCENARIO_WAVS: [&str; 5] = ["s", "n", "d", "y", "e"];

/// Independent 64-bit seed for `(tag, split, index)` under `master`.
pub fn derive_seed(master: u64, tag: &str, split: Split, index: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(tag.as_bytes());
    h.update([0]);
    h.update(split.name().as_bytes());
    h.update((index as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("32-byte digest"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String, ExperimentError> {
    let bytes = fs::read(path).map_err(|e| crate::io::FileError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn spec_hash(spec: &ExperimentSpec) -> String {
    sha256_hex(&serde_json::to_vec(spec).expect("spec serializes"))
}

/// Per-scenario parameters, written as `meta.json` next to the audio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub split: Split,
    pub index: usize,
    pub seed: u64,
    pub rir_seed: u64,
    pub utterance_id: String,
    pub noise_id: String,
    pub sample_rate: u32,
    pub stft: StftConfig,
    pub duration_s: f64,
    /// Amplifier gain; the maximum for schedules.
    pub gain: f64,
    pub delay_s: f64,
    pub delay_blocks: usize,
    pub spr_db: f64,
    pub snr_db: f64,
    pub target_level_dbfs: f64,
    pub nonlinearity: NonlinearityModel,
    pub geometry: Geometry,
    pub playback_scale: f64,
    pub preprocess: Preprocess,
    pub wav_format: WavFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub split: Split,
    pub index: usize,
    pub seed: u64,
    pub rir_seed: u64,
    pub utterance_id: String,
    /// Relative to the dataset root.
    pub dir: String,
    /// File name to SHA-256.
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub code_version: String,
    pub spec_hash: String,
    pub spec: ExperimentSpec,
    pub scenarios: Vec<ScenarioRecord>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        Ok(read_json(path)?)
    }

    /// Utterance and room-seed overlap between splits; empty when the
    /// splits are disjoint.
    pub fn split_overlaps(&self) -> Vec<String> {
        let mut seen_utt: BTreeMap<&str, Split> = BTreeMap::new();
        let mut seen_rir: BTreeMap<u64, Split> = BTreeMap::new();
        let mut out = Vec::new();
        for r in &self.scenarios {
            if let Some(&s) = seen_utt.get(r.utterance_id.as_str()) {
                if s != r.split {
                    out.push(format!("utterance {} in {} and {}", r.utterance_id, s.name(), r.split.name()));
                }
            } else {
                seen_utt.insert(&r.utterance_id, r.split);
            }
            if let Some(&s) = seen_rir.get(&r.rir_seed) {
                if s != r.split {
                    out.push(format!("rir seed {} in {} and {}", r.rir_seed, s.name(), r.split.name()));
                }
            } else {
                seen_rir.insert(r.rir_seed, r.split);
            }
        }
        out
    }

    /// Files whose current hash differs from the manifest.
    pub fn verify(&self, root: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
        let mut bad = Vec::new();
        for r in &self.scenarios {
            for (name, want) in &r.files {
                let p = root.join(&r.dir).join(name);
                if !p.exists() || hash_file(&p)? != *want {
                    bad.push(p);
                }
            }
        }
        Ok(bad)
    }
}

pub fn scenario_dir_name(split: Split, index: usize) -> String {
    format!("{}/{}-{index:05}", split.name(), split.name())
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn crop(sig: &TimeSignal, rng: &mut ChaCha8Rng, len: usize) -> TimeSignal {
    if sig.len() <= len {
        return sig.resized(len);
    }
    let start = rng.random_range(0..=sig.len() - len);
    TimeSignal::new(sig.samples()[start..start + len].to_vec(), sig.sample_rate()).expect("slice of a valid signal")
}

/// Sources and random draws shared by every scenario of a run.
pub struct DatasetPlan {
    pub spec: ExperimentSpec,
    corpus: Corpus,
    noise: Option<Corpus>,
    pools: [Vec<usize>; 3],
}

impl DatasetPlan {
    pub fn new(spec: ExperimentSpec) -> Result<Self, ExperimentError> {
        spec.validate().map_err(ExperimentError::Usage)?;
        let corpus = match &spec.corpus {
            Some(dir) => Corpus::scan(dir)?,
            None => Corpus::synthetic_speech(spec.counts.total(), spec.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)),
        };
        let noise = spec.noise_corpus.as_deref().map(Corpus::scan).transpose()?;
        let pools = corpus.partition(&spec.counts, derive_seed(spec.seed, "partition", Split::Train, 0))?;
        Ok(Self {
            spec,
            corpus,
            noise,
            pools,
        })
    }

    fn pool(&self, split: Split) -> &[usize] {
        &self.pools[split as usize]
    }

    /// Builds scenario `index` of `split` and its metadata (playback scale
    /// still unset).
    pub fn scenario(&self, split: Split, index: usize) -> Result<(ScenarioConfig, ScenarioMeta), ExperimentError> {
        let spec = &self.spec;
        let fs = spec.sample_rate;
        let seed = derive_seed(spec.seed, "scenario", split, index);
        let rir_seed = derive_seed(spec.seed, "rir", split, index);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = (spec.duration_s * f64::from(fs)).round() as usize;

        let pool = self.pool(split);
        let utt = pool[rng.random_range(0..pool.len())];
        let target = crop(&self.corpus.load(utt, fs, spec.duration_s)?, &mut rng, len);
        let (noise, noise_id) = match &self.noise {
            Some(c) => {
                let k = rng.random_range(0..c.len());
                (crop(&c.load(k, fs, spec.duration_s)?, &mut rng, len), c.id(k).to_string())
            }
            None => {
                let ns: u64 = rng.random();
                (synthetic_noise(ns, spec.duration_s, fs), format!("synthetic-noise/{ns:016x}"))
            }
        };
        let r = &spec.ranges;
        let gain = draw(&mut rng, r.gain);
        let delay_s = draw(&mut rng, r.delay_s);
        let spr_db = draw(&mut rng, r.spr_db);
        let snr_db = draw(&mut rng, r.snr_db);
        let nonlinearity = match spec.nonlinearity {
            NonlinearityChoice::Fixed { model } => model,
            NonlinearityChoice::Random => {
                if rng.random_bool(0.5) {
                    NonlinearityModel::HardClip {
                        threshold: rng.random_range(0.5..=1.0),
                    }
                } else {
                    NonlinearityModel::Sigmoid {
                        gamma: rng.random_range(0.8..=1.2),
                        positive_slope: 4.0,
                        negative_slope: 0.5,
                    }
                }
            }
        };
        let geometry = sample_geometry(&mut ChaCha8Rng::seed_from_u64(rir_seed), &spec.room.with_rt60(r.rt60_s))?;
        let cfg = ScenarioConfig {
            target,
            noise: Some(noise),
            rirs: RirSet::from_geometry(geometry, fs)?,
            gain: GainSchedule::constant(gain),
            system_delay: delay_s,
            nonlinearity,
            spr_db: Some(spr_db),
            snr_db: Some(snr_db),
            target_level_dbfs: Some(spec.target_level_dbfs),
            stft: spec.stft.config(),
            duration: spec.duration_s,
        };
        let meta = ScenarioMeta {
            split,
            index,
            seed,
            rir_seed,
            utterance_id: self.corpus.id(utt).to_string(),
            noise_id,
            sample_rate: fs,
            stft: cfg.stft,
            duration_s: spec.duration_s,
            gain,
            delay_s,
            delay_blocks: cfg.delay_blocks(),
            spr_db,
            snr_db,
            target_level_dbfs: spec.target_level_dbfs,
            nonlinearity,
            geometry,
            playback_scale: f64::NAN,
            preprocess: spec.preprocess,
            wav_format: spec.output.wav_format,
        };
        Ok((cfg, meta))
    }

    /// Generates and writes one scenario below `root`.
    pub fn write_scenario(&self, root: &Path, split: Split, index: usize) -> Result<ScenarioRecord, ExperimentError> {
        let (cfg, mut meta) = self.scenario(split, index)?;
        let p = cfg.prepare()?;
        meta.playback_scale = p.playback_scale;
        let mix = teacher_forced(&p);
        let signals = DatasetSignals::from_mixture(&mix.target, &mix.noise, &mix.playback)?;
        let e = kalman_preprocess(&signals, &cfg.stft, p.delay_blocks, self.spec.preprocess)?;

        let rel = scenario_dir_name(split, index);
        let dir = root.join(&rel);
        fs::create_dir_all(&dir).map_err(|err| crate::io::FileError::io(&dir, err))?;
        let format = self.spec.output.wav_format;
        let mut files = BTreeMap::new();
        for (name, sig) in SCENARIO_WAVS.iter().zip([&signals.s, &signals.n, &signals.d, &signals.y, &e]) {
            let path = dir.join(format!("{name}.wav"));
            write_wav(&path, sig, format)?;
            files.insert(format!("{name}.wav"), hash_file(&path)?);
        }
        let meta_path = dir.join(META_FILE);
        write_json(&meta_path, &meta)?;
        files.insert(META_FILE.to_string(), hash_file(&meta_path)?);
        Ok(ScenarioRecord {
            split,
            index,
            seed: meta.seed,
            rir_seed: meta.rir_seed,
            utterance_id: meta.utterance_id,
            dir: rel,
            files,
        })
    }
}

/// Dataset signals on the single-precision grid of the stored files, with
/// `y = (s + n) + d` evaluated in `f32`, so the stored mixture recombines
/// exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSignals {
    pub s: TimeSignal,
    pub n: TimeSignal,
    pub d: TimeSignal,
    pub y: TimeSignal,
}

impl DatasetSignals {
    pub fn from_mixture(s: &TimeSignal, n: &TimeSignal, d: &TimeSignal) -> Result<Self, ExperimentError> {
        let fs = s.sample_rate();
        let (s32, n32, d32) = (s.to_f32(), n.to_f32(), d.to_f32());
        let y32: Vec<f32> = s32.iter().zip(&n32).zip(&d32).map(|((a, b), c)| (a + b) + c).collect();
        let sig = |v: &[f32]| TimeSignal::from_f32(v, fs);
        Ok(Self {
            s: sig(&s32)?,
            n: sig(&n32)?,
            d: sig(&d32)?,
            y: sig(&y32)?,
        })
    }
}

/// Runs the FDKF over the stored microphone signal.
pub fn kalman_preprocess(
    signals: &DatasetSignals,
    stft: &StftConfig,
    delay_blocks: usize,
    mode: Preprocess,
) -> Result<TimeSignal, ExperimentError> {
    let hop = stft.hop;
    match mode {
        Preprocess::TeacherForced => {
            let r = delay_truncated(&signals.s, (delay_blocks * hop) as i64)?;
            let (e, _) = process_stream(&KalmanConfig::from_stft(stft), &signals.y, &r)?;
            Ok(e.quantized_f32())
        }
        Preprocess::Recursive => {
            let mut k = KalmanSuppressor::new(None);
            k.init(&StreamContext::new(signals.y.sample_rate(), *stft, delay_blocks.max(1)))?;
            let y = signals.y.to_f32();
            let blocks = y.len().div_ceil(hop);
            let mut padded = y.clone();
            padded.resize(blocks * hop, 0.0);
            let mut e = vec![0.0f32; blocks * hop];
            for (yb, eb) in padded.chunks_exact(hop).zip(e.chunks_exact_mut(hop)) {
                k.process(&[yb], eb)?;
                k.feedback(eb);
            }
            e.truncate(y.len());
            Ok(TimeSignal::from_f32(&e, signals.y.sample_rate())?)
        }
    }
}

/// Generates the dataset described by `spec` under `out`. Refuses to
/// overwrite an existing manifest unless `force`; with `force` the previous
/// split directories are removed first.
pub fn gen_dataset(
    spec: &ExperimentSpec,
    out: &Path,
    jobs: Option<usize>,
    force: bool,
) -> Result<RunManifest, ExperimentError> {
    let manifest_path = out.join(MANIFEST_FILE);
    if manifest_path.exists() {
        if !force {
            return Err(ExperimentError::Data(format!(
                "{} already exists; pass --force to regenerate",
                manifest_path.display()
            )));
        }
        for split in Split::ALL {
            let d = out.join(split.name());
            if d.exists() {
                fs::remove_dir_all(&d).map_err(|e| crate::io::FileError::io(&d, e))?;
            }
        }
        fs::remove_file(&manifest_path).map_err(|e| crate::io::FileError::io(&manifest_path, e))?;
    }
    fs::create_dir_all(out).map_err(|e| crate::io::FileError::io(out, e))?;
    let plan = DatasetPlan::new(spec.clone())?;
    let work: Vec<(Split, usize)> = Split::ALL
        .iter()
        .flat_map(|&s| (0..spec.counts.get(s)).map(move |i| (s, i)))
        .collect();
    let run = || -> Result<Vec<ScenarioRecord>, ExperimentError> {
        work.par_iter()
            .map(|&(split, i)| plan.write_scenario(out, split, i))
            .collect()
    };
    let scenarios = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| ExperimentError::Usage(format!("worker pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    let manifest = RunManifest {
        manifest_version: MANIFEST_VERSION,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        spec_hash: spec_hash(spec),
        spec: spec.clone(),
        scenarios,
    };
    let overlaps = manifest.split_overlaps();
    if !overlaps.is_empty() {
        return Err(ExperimentError::Data(format!("splits overlap: {}", overlaps.join("; "))));
    }
    let seeds: BTreeSet<u64> = manifest.scenarios.iter().map(|r| r.rir_seed).collect();
    if seeds.len() != manifest.scenarios.len() {
        return Err(ExperimentError::Data("duplicate room seeds".into()));
    }
    write_json(&manifest_path, &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::read_wav;

    fn small_spec() -> ExperimentSpec {
        let mut s = ExperimentSpec::default();
        s.counts = super::super::spec::SplitCounts { train: 2, val: 1, test: 1 };
        s.duration_s = 1.0;
        s.seed = 11;
        s
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, "rir", Split::Train, 0);
        assert_ne!(a, derive_seed(1, "rir", Split::Test, 0));
        assert_ne!(a, derive_seed(1, "scenario", Split::Train, 0));
        assert_ne!(a, derive_seed(2, "rir", Split::Train, 0));
        assert_eq!(a, derive_seed(1, "rir", Split::Train, 0));
    }

    #[test]
    fn stored_mixture_recombines_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let m = gen_dataset(&small_spec(), dir.path(), Some(2), false).unwrap();
        assert_eq!(m.scenarios.len(), 4);
        assert!(m.split_overlaps().is_empty());
        for r in &m.scenarios {
            let d = dir.path().join(&r.dir);
            let w = |n: &str| read_wav(&d.join(format!("{n}.wav"))).unwrap().to_f32();
            let (s, n, p, y) = (w("s"), w("n"), w("d"), w("y"));
            for i in 0..y.len() {
                assert_eq!(y[i], (s[i] + n[i]) + p[i]);
            }
            let meta: ScenarioMeta = read_json(&d.join(META_FILE)).unwrap();
            assert!(meta.playback_scale.is_finite() && meta.playback_scale > 0.0);
            assert!((1.0..=3.2).contains(&meta.gain));
        }
        assert!(m.verify(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn refuses_existing_manifest_without_force() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = small_spec();
        spec.counts = super::super::spec::SplitCounts { train: 1, val: 0, test: 1 };
        gen_dataset(&spec, dir.path(), Some(1), false).unwrap();
        assert!(matches!(gen_dataset(&spec, dir.path(), Some(1), false), Err(ExperimentError::Data(_))));
        gen_dataset(&spec, dir.path(), Some(1), true).unwrap();
    }

    #[test]
    fn recursive_preprocessing_runs() {
        let plan = DatasetPlan::new(small_spec()).unwrap();
        let (cfg, _) = plan.scenario(Split::Val, 0).unwrap();
        let p = cfg.prepare().unwrap();
        let mix = teacher_forced(&p);
        let sig = DatasetSignals::from_mixture(&mix.target, &mix.noise, &mix.playback).unwrap();
        let e = kalman_preprocess(&sig, &cfg.stft, p.delay_blocks, Preprocess::Recursive).unwrap();
        assert_eq!(e.len(), sig.y.len());
        assert!(e.samples().iter().all(|v| v.is_finite()));
    }
}

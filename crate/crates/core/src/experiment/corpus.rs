use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use walkdir::WalkDir;

use super::spec::{Split, SplitCounts};
use super::ExperimentError;
use crate::dsp::TimeSignal;
use crate::io::read_wav;
use crate::sim::source::synthetic_speech;

#[derive(Debug, Clone, PartialEq)]
enum Source {
    File(PathBuf),
    Speech(u64),
}

/// A set of utterances addressed by stable string ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    ids: Vec<String>,
    sources: Vec<Source>,
}

impl Corpus {
    /// All `*.wav` files below `dir`, ordered by relative path.
    pub fn scan(dir: &Path) -> Result<Self, ExperimentError> {
        if !dir.is_dir() {
            return Err(ExperimentError::Data(format!("corpus {} is not a directory", dir.display())));
        }
        let mut files: Vec<PathBuf> = WalkDir::new(dir)
            .sort_by_file_name()
            .into_iter()
            .filter_map(Result::ok)
            .filter(|e| e.file_type().is_file())
            .map(|e| e.into_path())
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(ExperimentError::Data(format!("corpus {} has no WAV files", dir.display())));
        }
        let ids = files
            .iter()
            .map(|p| p.strip_prefix(dir).unwrap_or(p).to_string_lossy().replace('\\', "/"))
            .collect();
        Ok(Self {
            ids,
            sources: files.into_iter().map(Source::File).collect(),
        })
    }

    /// `count` generated speech-like utterances with generator seeds
    /// `base, base + 1, ...`.
    pub fn synthetic_speech(count: usize, base: u64) -> Self {
        let seeds: Vec<u64> = (0..count as u64).map(|k| base.wrapping_add(k)).collect();
        Self {
            ids: seeds.iter().map(|s| format!("synthetic-speech/{s:016x}")).collect(),
            sources: seeds.into_iter().map(Source::Speech).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    /// Loads utterance `i`; generated ones last `seconds`.
    pub fn load(&self, i: usize, fs: u32, seconds: f64) -> Result<TimeSignal, ExperimentError> {
        let sig = match &self.sources[i] {
            Source::File(p) => read_wav(p)?,
            Source::Speech(seed) => synthetic_speech(*seed, seconds, fs),
        };
        if sig.sample_rate() != fs {
            return Err(ExperimentError::Data(format!(
                "{} is sampled at {} Hz, expected {fs}",
                self.ids[i],
                sig.sample_rate()
            )));
        }
        Ok(sig)
    }

    /// Deterministic partition of the utterances into disjoint per-split
    /// pools, sized in proportion to the scenario counts. Every split with
    /// scenarios gets at least one utterance.
    pub fn partition(&self, counts: &SplitCounts, seed: u64) -> Result<[Vec<usize>; 3], ExperimentError> {
        let wanted: Vec<usize> = Split::ALL.iter().map(|&s| counts.get(s)).collect();
        let active = wanted.iter().filter(|&&c| c > 0).count();
        if self.len() < active {
            return Err(ExperimentError::Data(format!(
                "corpus has {} utterances; {active} disjoint splits need at least one each",
                self.len()
            )));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let total: usize = wanted.iter().sum();
        let mut sizes: Vec<usize> = wanted
            .iter()
            .map(|&c| if c == 0 { 0 } else { (c * self.len() / total.max(1)).max(1) })
            .collect();
        // trim the largest pools until the sizes fit, then hand leftovers to
        // the training pool (or the first active one)
        while sizes.iter().sum::<usize>() > self.len() {
            let i = (0..3).max_by_key(|&i| sizes[i]).expect("three splits");
            sizes[i] -= 1;
        }
        let spare = self.len() - sizes.iter().sum::<usize>();
        if let Some(i) = (0..3).find(|&i| wanted[i] > 0) {
            sizes[i] += spare;
        }
        let mut pools: [Vec<usize>; 3] = Default::default();
        let mut at = 0;
        for (pool, size) in pools.iter_mut().zip(sizes) {
            *pool = order[at..at + size].to_vec();
            pool.sort_unstable();
            at += size;
        }
        Ok(pools)
    }
}

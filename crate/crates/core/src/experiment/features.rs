use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::dsp::{stft, Spectrogram, StftConfig};
use crate::io::{read_wav, write_json, write_tensor, FileError};
use crate::suppress::{extract_features, FeatureSet};

/// One exported tensor and what its axes mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub file: String,
    pub dims: Vec<usize>,
    pub axes: Vec<String>,
}

fn complex_planes(spec: &Spectrogram) -> Vec<f32> {
    spec.data().iter().flat_map(|c| [c.re as f32, c.im as f32]).collect()
}

/// Writes the features of a dataset scenario (`y.wav`, `e.wav`, `s.wav`)
/// and the clean-spectrogram training label as `AHSF` tensors, plus an
/// index `features.json`.
pub fn cmd_export_features(scenario: &Path, out: &Path, context: usize) -> Result<(FeatureSet, Vec<TensorEntry>), ExperimentError> {
    let e_path = scenario.join("e.wav");
    if !e_path.is_file() {
        return Err(ExperimentError::Data(format!(
            "{} has no Kalman output e.wav; rerun gen-dataset to preprocess it",
            scenario.display()
        )));
    }
    let stft_cfg = match std::fs::read_to_string(scenario.join("meta.json")) {
        Ok(text) => serde_json::from_str::<serde_json::Value>(&text)
            .ok()
            .and_then(|v| v.get("stft").cloned())
            .and_then(|v| serde_json::from_value::<StftConfig>(v).ok())
            .unwrap_or_default(),
        Err(_) => StftConfig::default(),
    };
    let y = stft(&read_wav(&scenario.join("y.wav"))?, &stft_cfg)?;
    let e = stft(&read_wav(&e_path)?, &stft_cfg)?;
    let s = stft(&read_wav(&scenario.join("s.wav"))?, &stft_cfg)?;
    let fs = extract_features(&y, &e, context)?;
    std::fs::create_dir_all(out).map_err(|err| FileError::io(out, err))?;

    let (frames, bins) = (y.frames(), y.bins());
    let to32 = |a: &ndarray::Array2<f64>| a.iter().map(|&v| v as f32).collect::<Vec<f32>>();
    let cov: Vec<f32> = fs.channel_cov.iter().flat_map(|c| [c.re as f32, c.im as f32]).collect();
    let ax = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let entries = vec![
        (TensorEntry { file: "lps_y.ahsf".into(), dims: vec![frames, bins], axes: ax(&["frame", "bin"]) }, to32(&fs.lps_y)),
        (TensorEntry { file: "lps_e.ahsf".into(), dims: vec![frames, bins], axes: ax(&["frame", "bin"]) }, to32(&fs.lps_e)),
        (
            TensorEntry {
                file: "temporal_corr.ahsf".into(),
                dims: vec![frames, 2 * context + 1],
                axes: ax(&["frame", "lag"]),
            },
            to32(&fs.temporal_corr),
        ),
        (
            TensorEntry {
                file: "frequency_corr.ahsf".into(),
                dims: vec![frames, bins.saturating_sub(1)],
                axes: ax(&["frame", "bin_pair"]),
            },
            to32(&fs.frequency_corr),
        ),
        (
            TensorEntry {
                file: "channel_cov.ahsf".into(),
                dims: vec![frames, 2, 2, 2],
                axes: ax(&["frame", "row", "col", "re_im"]),
            },
            cov,
        ),
        (
            TensorEntry {
                file: "target_spec.ahsf".into(),
                dims: vec![frames, bins, 2],
                axes: ax(&["frame", "bin", "re_im"]),
            },
            complex_planes(&s),
        ),
    ];
    for (entry, data) in &entries {
        write_tensor(&out.join(&entry.file), &entry.dims, data)?;
    }
    let index: Vec<TensorEntry> = entries.into_iter().map(|(e, _)| e).collect();
    write_json(
        &out.join("features.json"),
        &serde_json::json!({ "context": context, "stft": stft_cfg, "tensors": index }),
    )?;
    Ok((fs, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::dataset::{gen_dataset, scenario_dir_name};
    use crate::experiment::spec::{ExperimentSpec, Split, SplitCounts};
    use crate::io::read_tensor;

    #[test]
    fn export_round_trip_and_missing_e() {
        let root = tempfile::tempdir().unwrap();
        let mut spec = ExperimentSpec::default();
        spec.counts = SplitCounts { train: 1, val: 0, test: 0 };
        spec.duration_s = 1.0;
        gen_dataset(&spec, root.path(), Some(1), false).unwrap();
        let dir = root.path().join(scenario_dir_name(Split::Train, 0));
        let out = root.path().join("feat");
        let (fs, index) = cmd_export_features(&dir, &out, 2).unwrap();
        let lps = read_tensor(&out.join("lps_y.ahsf")).unwrap();
        assert_eq!(lps.dims, vec![fs.lps_y.nrows(), fs.lps_y.ncols()]);
        assert!(lps.data.iter().zip(fs.lps_y.iter()).all(|(a, b)| a.to_bits() == (*b as f32).to_bits()));
        for e in &index {
            assert_eq!(read_tensor(&out.join(&e.file)).unwrap().dims, e.dims);
        }
        std::fs::remove_file(dir.join("e.wav")).unwrap();
        let err = cmd_export_features(&dir, &out, 2).unwrap_err();
        assert!(err.to_string().contains("rerun gen-dataset"));
    }
}

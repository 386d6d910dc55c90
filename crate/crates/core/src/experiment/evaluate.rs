use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::ExperimentError;
use crate::dsp::StftConfig;
use crate::io::{read_wav, write_csv, write_json};
use crate::metrics::MetricsReport;

/// One estimate next to a reference.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pub dir: PathBuf,
    pub method: String,
    pub estimate: PathBuf,
    pub reference: PathBuf,
    pub gain: Option<f64>,
    pub latency: usize,
}

/// Finds evaluation pairs below `root`. A directory with a reference
/// (`ref.wav`, else `s.wav`) contributes every estimate next to it:
/// `est_<method>.wav`, `y.wav` (unprocessed), `e.wav` (kalman) and
/// `s_hat.wav` (method from `meta.json`). `meta.json` may also carry
/// `gain` and `latency_samples`.
pub fn discover_pairs(root: &Path) -> Result<Vec<EvalPair>, ExperimentError> {
    if !root.is_dir() {
        return Err(ExperimentError::Data(format!("{} is not a directory", root.display())));
    }
    let mut pairs = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| ExperimentError::Data(e.to_string()))?;
        if !entry.file_type().is_dir() {
            continue;
        }
        let dir = entry.path();
        let reference = ["ref.wav", "s.wav"].iter().map(|n| dir.join(n)).find(|p| p.is_file());
        let Some(reference) = reference else { continue };
        let meta: serde_json::Value = match std::fs::read_to_string(dir.join("meta.json")) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| ExperimentError::Data(format!("{}: {e}", dir.display())))?,
            Err(_) => serde_json::Value::Null,
        };
        let gain = meta.get("gain").and_then(|v| v.as_f64());
        let latency = meta.get("latency_samples").and_then(|v| v.as_u64()).unwrap_or(0) as usize;
        let mut names: Vec<(String, PathBuf)> = Vec::new();
        let mut files: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| crate::io::FileError::io(dir, e))?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        for p in files {
            let Some(name) = p.file_name().and_then(|n| n.to_str()) else { continue };
            let method = match name {
                "y.wav" => Some("unprocessed".to_string()),
                "e.wav" => Some("kalman".to_string()),
                "s_hat.wav" => Some(meta.get("method").and_then(|v| v.as_str()).unwrap_or("enhanced").to_string()),
                _ => name
                    .strip_prefix("est_")
                    .and_then(|n| n.strip_suffix(".wav"))
                    .map(str::to_string),
            };
            if let Some(m) = method {
                names.push((m, p));
            }
        }
        for (method, estimate) in names {
            pairs.push(EvalPair {
                dir: dir.to_path_buf(),
                method,
                // the unprocessed mixture and the Kalman output carry no
                // processing latency
                latency: if estimate.ends_with("s_hat.wav") { latency } else { 0 },
                estimate,
                reference: reference.clone(),
                gain,
            });
        }
    }
    Ok(pairs)
}

/// Nearest integer gain, the grouping used for the results table.
pub fn gain_bucket(gain: Option<f64>) -> String {
    match gain {
        Some(g) if g.is_finite() => format!("G{}", g.round().max(0.0) as i64),
        _ => "G?".into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub dir: String,
    pub method: String,
    pub gain: Option<f64>,
    pub bucket: String,
    pub ok: bool,
    pub si_sdr_db: Option<f64>,
    pub spectral_mae: Option<f64>,
    pub combined_loss: Option<f64>,
    pub howling: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub bucket: String,
    pub count: usize,
    pub failed: usize,
    pub si_sdr_mean: Option<f64>,
    pub si_sdr_median: Option<f64>,
    pub mae_mean: Option<f64>,
    pub mae_median: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationTable {
    pub pairs: Vec<PairRow>,
    pub summary: Vec<SummaryRow>,
    /// method -> bucket -> mean SI-SDR, the results-table layout.
    pub si_sdr_table: BTreeMap<String, BTreeMap<String, Option<f64>>>,
}

fn score(pair: &EvalPair, stft: &StftConfig) -> Result<MetricsReport, ExperimentError> {
    let est = read_wav(&pair.estimate)?;
    let reference = read_wav(&pair.reference)?;
    if est.len() != reference.len() {
        return Err(ExperimentError::Data(format!(
            "length mismatch: estimate {} samples, reference {}",
            est.len(),
            reference.len()
        )));
    }
    if est.sample_rate() != reference.sample_rate() {
        return Err(ExperimentError::Data("sample-rate mismatch".into()));
    }
    let howling = crate::sim::detect_howling(&est, stft);
    Ok(MetricsReport::compute(&est, &reference, stft, pair.latency, None, howling)?)
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    Some(if s.len().is_multiple_of(2) { 0.5 * (s[m - 1] + s[m]) } else { s[m] })
}

/// Scores every pair; a failing pair becomes a failed row.
pub fn evaluate_pairs(pairs: &[EvalPair], root: &Path, stft: &StftConfig) -> EvaluationTable {
    let rows: Vec<PairRow> = pairs
        .par_iter()
        .map(|p| {
            let dir = p.dir.strip_prefix(root).unwrap_or(&p.dir).to_string_lossy().into_owned();
            let base = PairRow {
                dir,
                method: p.method.clone(),
                gain: p.gain,
                bucket: gain_bucket(p.gain),
                ok: false,
                si_sdr_db: None,
                spectral_mae: None,
                combined_loss: None,
                howling: None,
                error: None,
            };
            match score(p, stft) {
                Ok(m) => PairRow {
                    ok: true,
                    si_sdr_db: Some(m.si_sdr_db),
                    spectral_mae: Some(m.spectral_mae),
                    combined_loss: Some(m.combined_loss),
                    howling: Some(m.howling.detected),
                    ..base
                },
                Err(e) => PairRow {
                    error: Some(e.to_string()),
                    ..base
                },
            }
        })
        .collect();

    let mut groups: BTreeMap<(String, String), Vec<&PairRow>> = BTreeMap::new();
    for r in &rows {
        groups.entry((r.method.clone(), r.bucket.clone())).or_default().push(r);
    }
    let mut summary = Vec::new();
    let mut table: BTreeMap<String, BTreeMap<String, Option<f64>>> = BTreeMap::new();
    for ((method, bucket), rs) in groups {
        let sdr: Vec<f64> = rs.iter().filter_map(|r| r.si_sdr_db).collect();
        let mae: Vec<f64> = rs.iter().filter_map(|r| r.spectral_mae).collect();
        let row = SummaryRow {
            method: method.clone(),
            bucket: bucket.clone(),
            count: rs.len(),
            failed: rs.iter().filter(|r| !r.ok).count(),
            si_sdr_mean: mean(&sdr),
            si_sdr_median: median(&sdr),
            mae_mean: mean(&mae),
            mae_median: median(&mae),
        };
        table.entry(method).or_default().insert(bucket, row.si_sdr_mean);
        summary.push(row);
    }
    EvaluationTable {
        pairs: rows,
        summary,
        si_sdr_table: table,
    }
}

/// Evaluates `root` and writes `pairs.csv`, `summary.csv`, `table.csv` and
/// `evaluation.json` into `out`.
pub fn cmd_evaluate(root: &Path, out: &Path, stft: &StftConfig) -> Result<EvaluationTable, ExperimentError> {
    let pairs = discover_pairs(root)?;
    if pairs.is_empty() {
        log::warn!("no (estimate, reference) pairs found under {}", root.display());
    }
    let table = evaluate_pairs(&pairs, root, stft);
    std::fs::create_dir_all(out).map_err(|e| crate::io::FileError::io(out, e))?;
    write_csv(&out.join("pairs.csv"), &table.pairs)?;
    write_csv(&out.join("summary.csv"), &table.summary)?;
    write_table_csv(&out.join("table.csv"), &table)?;
    write_json(&out.join("evaluation.json"), &table)?;
    Ok(table)
}

/// Methods as rows, gain buckets as columns, mean SI-SDR in the cells.
fn write_table_csv(path: &Path, table: &EvaluationTable) -> Result<(), ExperimentError> {
    let mut buckets: Vec<&String> = table.si_sdr_table.values().flat_map(|m| m.keys()).collect();
    buckets.sort();
    buckets.dedup();
    let wrap = |e| crate::io::FileError::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = csv::Writer::from_path(path).map_err(wrap)?;
    let header: Vec<String> = std::iter::once("method".to_string())
        .chain(buckets.iter().map(|b| format!("si_sdr_{b}")))
        .collect();
    w.write_record(&header).map_err(wrap)?;
    for (method, cells) in &table.si_sdr_table {
        let mut rec = vec![method.clone()];
        for b in &buckets {
            rec.push(cells.get(*b).copied().flatten().map(|v| format!("{v:.4}")).unwrap_or_default());
        }
        w.write_record(&rec).map_err(wrap)?;
    }
    w.flush().map_err(|e| crate::io::FileError::io(path, e))?;
    Ok(())
}

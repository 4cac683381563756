//! Learning-curve extraction from the training logs.
//!
//! Step metrics are averaged per epoch and joined with the per-epoch
//! validation divergences; the NLL and entropy series carry their by-chance
//! reference constants so plots can show the broken baseline.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::EvalError;
use crate::report::{ENTROPY_BY_CHANCE, NLL_BY_CHANCE};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub loss_c: f64,
    pub loss_g: f64,
    pub nll: f64,
    pub entropy: f64,
    pub valid_kld: Option<f64>,
    pub valid_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurves {
    pub rows: Vec<EpochRow>,
}

fn parse_metric(s: &str) -> Option<f64> {
    match s {
        "nan" => Some(f64::NAN),
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        other => other.parse().ok(),
    }
}

fn split_header(
    path: &Path,
    header: &str,
    required: &[&str],
) -> Result<Vec<usize>, EvalError> {
    let cols: Vec<&str> = header.split(',').collect();
    required
        .iter()
        .map(|want| {
            cols.iter().position(|c| c == want).ok_or_else(|| EvalError::MissingColumn {
                path: path.display().to_string(),
                column: want.to_string(),
            })
        })
        .collect()
}

/// Aggregates `metrics.csv` (per step) and optionally `valid.csv`
/// (per epoch) into per-epoch series.
pub fn learning_curves(
    metrics_path: &Path,
    valid_path: Option<&Path>,
) -> Result<LearningCurves, EvalError> {
    let text = std::fs::read_to_string(metrics_path).map_err(|e| EvalError::io(metrics_path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| EvalError::BadLogLine {
        path: metrics_path.display().to_string(),
        line: 1,
        detail: "empty file".to_string(),
    })?;
    let idx = split_header(
        metrics_path,
        header,
        &["epoch", "step", "loss_c", "loss_g", "nll_real_mean", "entropy_mean"],
    )?;

    #[derive(Default)]
    struct Acc {
        n: usize,
        loss_c: f64,
        loss_g: f64,
        nll: f64,
        entropy: f64,
    }
    let mut per_epoch: BTreeMap<usize, Acc> = BTreeMap::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |detail: String| EvalError::BadLogLine {
            path: metrics_path.display().to_string(),
            line: lineno + 1,
            detail,
        };
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(bad(format!("expected 6 columns, got {}", cols.len())));
        }
        let epoch: usize = cols[idx[0]].parse().map_err(|e| bad(format!("epoch: {e}")))?;
        let loss_c = parse_metric(cols[idx[2]]).ok_or_else(|| bad("loss_c".to_string()))?;
        let loss_g = parse_metric(cols[idx[3]]).ok_or_else(|| bad("loss_g".to_string()))?;
        let nll = parse_metric(cols[idx[4]]).ok_or_else(|| bad("nll_real_mean".to_string()))?;
        let entropy = parse_metric(cols[idx[5]]).ok_or_else(|| bad("entropy_mean".to_string()))?;
        let acc = per_epoch.entry(epoch).or_default();
        acc.n += 1;
        acc.loss_c += loss_c;
        acc.loss_g += loss_g;
        acc.nll += nll;
        acc.entropy += entropy;
    }

    let mut valid: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    if let Some(vpath) = valid_path {
        if vpath.exists() {
            let text = std::fs::read_to_string(vpath).map_err(|e| EvalError::io(vpath, e))?;
            let mut lines = text.lines().enumerate();
            if let Some((_, header)) = lines.next() {
                let vidx = split_header(vpath, header, &["epoch", "kld", "mse"])?;
                for (lineno, line) in lines {
                    if line.trim().is_empty() {
                        continue;
                    }
                    let bad = |detail: String| EvalError::BadLogLine {
                        path: vpath.display().to_string(),
                        line: lineno + 1,
                        detail,
                    };
                    let cols: Vec<&str> = line.split(',').collect();
                    if cols.len() != 3 {
                        return Err(bad(format!("expected 3 columns, got {}", cols.len())));
                    }
                    let epoch: usize =
                        cols[vidx[0]].parse().map_err(|e| bad(format!("epoch: {e}")))?;
                    let kld = parse_metric(cols[vidx[1]]).ok_or_else(|| bad("kld".to_string()))?;
                    let mse = parse_metric(cols[vidx[2]]).ok_or_else(|| bad("mse".to_string()))?;
                    valid.insert(epoch, (kld, mse));
                }
            }
        }
    }

    let rows = per_epoch
        .into_iter()
        .map(|(epoch, acc)| {
            let n = acc.n as f64;
            let v = valid.get(&epoch);
            EpochRow {
                epoch,
                loss_c: acc.loss_c / n,
                loss_g: acc.loss_g / n,
                nll: acc.nll / n,
                entropy: acc.entropy / n,
                valid_kld: v.map(|&(k, _)| k),
                valid_mse: v.map(|&(_, m)| m),
            }
        })
        .collect();
    Ok(LearningCurves { rows })
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{v}")
    }
}

impl LearningCurves {
    /// Writes one `curve_<metric>.csv` per series. The NLL and entropy
    /// files carry a constant `reference` column at the by-chance level.
    pub fn write_files(&self, dir: &Path) -> Result<(), EvalError> {
        std::fs::create_dir_all(dir).map_err(|e| EvalError::io(dir, e))?;
        let mut files: Vec<(&str, String)> = vec![
            ("loss_c", String::from("epoch,value\n")),
            ("loss_g", String::from("epoch,value\n")),
            ("nll", String::from("epoch,value,reference\n")),
            ("entropy", String::from("epoch,value,reference\n")),
            ("valid_kld", String::from("epoch,value\n")),
            ("valid_mse", String::from("epoch,value\n")),
        ];
        for row in &self.rows {
            let _ = writeln!(files[0].1, "{},{}", row.epoch, fmt(row.loss_c));
            let _ = writeln!(files[1].1, "{},{}", row.epoch, fmt(row.loss_g));
            let _ = writeln!(files[2].1, "{},{},{NLL_BY_CHANCE}", row.epoch, fmt(row.nll));
            let _ = writeln!(files[3].1, "{},{},{ENTROPY_BY_CHANCE}", row.epoch, fmt(row.entropy));
            if let (Some(k), Some(m)) = (row.valid_kld, row.valid_mse) {
                let _ = writeln!(files[4].1, "{},{}", row.epoch, fmt(k));
                let _ = writeln!(files[5].1, "{},{}", row.epoch, fmt(m));
            }
        }
        for (name, body) in files {
            let path = dir.join(format!("curve_{name}.csv"));
            std::fs::write(&path, body).map_err(|e| EvalError::io(&path, e))?;
        }
        Ok(())
    }
}

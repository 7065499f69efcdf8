use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method};
use crate::codec::write_file;
use crate::error::{Error, Result};

/// One line of a results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub trial: usize,
    pub method: Method,
    pub score_fn: String,
    pub alpha: f64,
    pub shift: String,
    pub kappa: Option<f64>,
    pub coverage: f64,
    pub mean_set_size: f64,
    pub accuracy: Option<f64>,
    /// Empty for marginal rows; `group:<g>` or `class:<y>` otherwise.
    pub partition: Option<String>,
    pub quantile: f64,
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Parse {
            path: path.to_path_buf(),
            offset: 0,
            reason: format!("{other:?}"),
        },
    }
}

pub fn encode_rows(rows: &[ResultRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record([
            "trial",
            "method",
            "score_fn",
            "alpha",
            "shift",
            "kappa",
            "coverage",
            "mean_set_size",
            "accuracy",
            "partition",
            "quantile",
        ])
        .map_err(|e| csv_error(Path::new("<memory>"), e))?;
    }
    for row in rows {
        w.serialize(row)
            .map_err(|e| csv_error(Path::new("<memory>"), e))?;
    }
    w.into_inner()
        .map_err(|e| Error::invalid(format!("csv buffer: {e}")))
}

pub fn write_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    write_file(path, &encode_rows(rows)?)
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| csv_error(path, e)))
        .collect()
}

/// Concatenate per-trial files, in the given order, into `out`.
pub fn merge_trial_files(parts: &[PathBuf], out: &Path) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for p in parts {
        rows.extend(read_rows(p)?);
    }
    write_rows(out, &rows)?;
    Ok(rows)
}

/// Mean and sample standard deviation over trials of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: String,
    pub method: Method,
    pub shift: String,
    pub kappa: Option<f64>,
    pub partition: Option<String>,
    pub trials: usize,
    pub coverage_mean: f64,
    pub coverage_sd: f64,
    pub set_size_mean: f64,
    pub set_size_sd: f64,
    pub accuracy_mean: Option<f64>,
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Group rows by (variant, method, shift, κ, partition), in first-seen order.
pub fn summarize(variant: &str, rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut order = Vec::new();
    let mut cells: BTreeMap<usize, Vec<&ResultRow>> = BTreeMap::new();
    for row in rows {
        let key = (
            row.method,
            &row.shift,
            row.kappa.map(f64::to_bits),
            &row.partition,
        );
        let idx = match order.iter().position(|k| *k == key) {
            Some(i) => i,
            None => {
                order.push(key);
                order.len() - 1
            }
        };
        cells.entry(idx).or_default().push(row);
    }
    cells
        .into_values()
        .map(|cell| {
            let cov: Vec<f64> = cell.iter().map(|r| r.coverage).collect();
            let size: Vec<f64> = cell.iter().map(|r| r.mean_set_size).collect();
            let acc: Vec<f64> = cell.iter().filter_map(|r| r.accuracy).collect();
            let (coverage_mean, coverage_sd) = mean_sd(&cov);
            let (set_size_mean, set_size_sd) = mean_sd(&size);
            SummaryRow {
                variant: variant.to_string(),
                method: cell[0].method,
                shift: cell[0].shift.clone(),
                kappa: cell[0].kappa,
                partition: cell[0].partition.clone(),
                trials: cell.len(),
                coverage_mean,
                coverage_sd,
                set_size_mean,
                set_size_sd,
                accuracy_mean: (!acc.is_empty()).then(|| mean_sd(&acc).0),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a> {
    pub study: String,
    pub library_version: &'static str,
    pub seed_derivation: &'static str,
    pub trial_seeds: Vec<u64>,
    pub config: &'a ExperimentConfig,
    pub outputs: Vec<String>,
}

pub const SEED_DERIVATION: &str = "trial t uses seed base_seed + t; data, shift and \
score streams within a trial use stream_seed(trial_seed, stream_id)";

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::invalid(format!("cannot serialise {}: {e}", path.display())))?;
    text.push(b'\n');
    write_file(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(trial: usize, coverage: f64, partition: Option<&str>) -> ResultRow {
        ResultRow {
            trial,
            method: Method::Scp,
            score_fn: "aps".into(),
            alpha: 0.1,
            shift: "none".into(),
            kappa: None,
            coverage,
            mean_set_size: 1.5,
            accuracy: Some(0.9),
            partition: partition.map(str::to_string),
            quantile: f64::INFINITY,
        }
    }

    #[test]
    fn csv_roundtrip_with_empty_and_infinite_fields() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let rows = vec![row(0, 0.9, None), row(1, 0.8, Some("group:3"))];
        write_rows(&p, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with(
            "trial,method,score_fn,alpha,shift,kappa,coverage,mean_set_size,accuracy,partition,quantile\n"
        ));
        assert!(text.contains("0,scp,aps,0.1,none,,0.9,1.5,0.9,,inf\n"));
        assert_eq!(read_rows(&p).unwrap(), rows);
        let merged = merge_trial_files(&[p.clone(), p], &dir.path().join("all.csv")).unwrap();
        assert_eq!(merged.len(), 4);
    }

    #[test]
    fn summaries_group_cells() {
        let rows = vec![
            row(0, 0.9, None),
            row(1, 0.7, None),
            row(0, 1.0, Some("class:1")),
        ];
        let s = summarize("base", &rows);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].trials, 2);
        assert!((s[0].coverage_mean - 0.8).abs() < 1e-12);
        assert!((s[0].coverage_sd - 0.02f64.sqrt()).abs() < 1e-12);
        assert_eq!(mean_sd(&[2.0]), (2.0, 0.0));
    }
}

//! Accuracy, cluster separation, empirical cross-entropy and per-epoch records.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{Mode, Network};
use crate::numcore::{cross_entropy, LogitVector};
use crate::scalar::Real;

/// One row per epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub epoch: usize,
    /// Mean total loss (CE plus any regularizer) over the epoch's batches.
    pub train_loss: f64,
    /// Mean cross-entropy component over the epoch's batches.
    pub train_ce: f64,
    pub test_accuracy: f64,
    /// Mean cached normalized entropy over the training set at epoch start.
    pub mean_norm_entropy: f64,
    /// Mean cached magnitude over the training set at epoch start.
    pub mean_magnitude: f64,
    pub epoch_wall_seconds: f64,
}

pub const RECORD_COLUMNS: [&str; 7] = [
    "epoch",
    "train_loss",
    "train_ce",
    "test_accuracy",
    "mean_norm_entropy",
    "mean_magnitude",
    "epoch_wall_seconds",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            other => Err(Error::Config(format!("unknown export format {other:?}"))),
        }
    }
}

/// Which columns a CSV export carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Columns {
    All,
    /// Everything except wall-clock timing, so equal runs give equal bytes.
    Reproducible,
}

/// Writes all fields of every record.
pub fn export(records: &[RunRecord], path: &Path, format: ExportFormat) -> Result<()> {
    export_with(records, path, format, Columns::All)
}

pub fn export_with(records: &[RunRecord], path: &Path, format: ExportFormat, columns: Columns) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    match format {
        ExportFormat::Json => {
            serde_json::to_writer_pretty(std::io::BufWriter::new(file), records)?;
        }
        ExportFormat::Csv => {
            let n = match columns {
                Columns::All => RECORD_COLUMNS.len(),
                Columns::Reproducible => RECORD_COLUMNS.len() - 1,
            };
            let mut w = csv::Writer::from_writer(file);
            w.write_record(&RECORD_COLUMNS[..n])?;
            for r in records {
                let row = [
                    r.epoch.to_string(),
                    r.train_loss.to_string(),
                    r.train_ce.to_string(),
                    r.test_accuracy.to_string(),
                    r.mean_norm_entropy.to_string(),
                    r.mean_magnitude.to_string(),
                    format!("{:.3}", r.epoch_wall_seconds),
                ];
                w.write_record(&row[..n])?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}

/// Reads records back from either format. A CSV without the timing column
/// yields `epoch_wall_seconds = 0`.
pub fn import(path: &Path, format: ExportFormat) -> Result<Vec<RunRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        ExportFormat::Json => Ok(serde_json::from_reader(std::io::BufReader::new(file))?),
        ExportFormat::Csv => {
            let mut r = csv::Reader::from_reader(file);
            let mut out = Vec::new();
            for row in r.records() {
                let row = row?;
                let num = |i: usize| -> Result<f64> {
                    row.get(i)
                        .unwrap_or("0")
                        .parse::<f64>()
                        .map_err(|e| Error::InvalidInput(format!("column {}: {e}", RECORD_COLUMNS[i])))
                };
                out.push(RunRecord {
                    epoch: num(0)? as usize,
                    train_loss: num(1)?,
                    train_ce: num(2)?,
                    test_accuracy: num(3)?,
                    mean_norm_entropy: num(4)?,
                    mean_magnitude: num(5)?,
                    epoch_wall_seconds: num(6)?,
                });
            }
            Ok(out)
        }
    }
}

fn argmax_lowest<T: Real>(row: ndarray::ArrayView1<'_, T>) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
pub fn accuracy<T: Real>(logits: ArrayView2<'_, T>, labels: &[usize]) -> Result<f64> {
    if logits.nrows() == 0 {
        return Err(Error::InvalidInput("accuracy of an empty batch".into()));
    }
    if logits.nrows() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} logit rows but {} labels",
            logits.nrows(),
            labels.len()
        )));
    }
    let correct = logits
        .outer_iter()
        .zip(labels)
        .filter(|(row, &y)| argmax_lowest(*row) == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Inter-cluster separation used by [`dunn_index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Linkage {
    /// Minimum pairwise distance between members.
    #[default]
    Single,
    /// Distance between cluster means.
    Centroid,
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Linkage::Single => "single",
            Linkage::Centroid => "centroid",
        })
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `min δ(Cᵢ, Cⱼ) / max Δⱼ`, where `Δⱼ` is the mean pairwise distance inside
/// cluster `j`. Higher means tighter, better separated clusters.
pub fn dunn_index<T: Real>(features: ArrayView2<'_, T>, labels: &[usize], linkage: Linkage) -> Result<f64> {
    if features.nrows() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} feature rows but {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    let rows: Vec<Vec<f64>> = features.outer_iter().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect();
    let mut ids: Vec<usize> = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 2 {
        return Err(Error::InvalidInput("Dunn index needs at least two clusters".into()));
    }
    let members: Vec<Vec<usize>> = ids
        .iter()
        .map(|&id| (0..labels.len()).filter(|&i| labels[i] == id).collect())
        .collect();
    if let Some(pos) = members.iter().position(|m| m.len() < 2) {
        return Err(Error::InvalidInput(format!("cluster {} has fewer than two points", ids[pos])));
    }

    let mut max_diameter = 0.0f64;
    for m in &members {
        let mut sum = 0.0;
        for (a, &i) in m.iter().enumerate() {
            for &j in &m[a + 1..] {
                sum += euclid(&rows[i], &rows[j]);
            }
        }
        let pairs = (m.len() * (m.len() - 1) / 2) as f64;
        max_diameter = max_diameter.max(sum / pairs);
    }

    let mut min_sep = f64::INFINITY;
    match linkage {
        Linkage::Single => {
            for (a, ma) in members.iter().enumerate() {
                for mb in &members[a + 1..] {
                    for &i in ma {
                        for &j in mb {
                            min_sep = min_sep.min(euclid(&rows[i], &rows[j]));
                        }
                    }
                }
            }
        }
        Linkage::Centroid => {
            let d = rows[0].len();
            let centroids: Vec<Vec<f64>> = members
                .iter()
                .map(|m| {
                    let mut c = vec![0.0; d];
                    for &i in m {
                        for (acc, v) in c.iter_mut().zip(&rows[i]) {
                            *acc += v;
                        }
                    }
                    c.iter().map(|v| v / m.len() as f64).collect()
                })
                .collect();
            for (a, ca) in centroids.iter().enumerate() {
                for cb in &centroids[a + 1..] {
                    min_sep = min_sep.min(euclid(ca, cb));
                }
            }
        }
    }

    if max_diameter == 0.0 {
        if min_sep == 0.0 {
            return Err(Error::Undefined("Dunn index is 0/0: clusters collapse to one point".into()));
        }
        return Ok(f64::INFINITY);
    }
    Ok(min_sep / max_diameter)
}

/// Eval-mode outputs over a whole dataset.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub logits: Array2<f64>,
    pub penultimate: Array2<f64>,
}

pub fn evaluate<T: Real>(net: &Network<T>, ds: &Dataset, batch_size: usize) -> Result<Evaluation> {
    let n = ds.len();
    let k = net.num_classes();
    let mut logits = Array2::zeros((n, k));
    let mut penultimate = None;
    let indices: Vec<usize> = (0..n).collect();
    for (b, chunk) in indices.chunks(batch_size.max(1)).enumerate() {
        let x = ds.normalized_batch::<T>(chunk)?;
        let trace = net.forward(&x, Mode::Eval)?;
        let start = b * batch_size.max(1);
        let pen = penultimate.get_or_insert_with(|| Array2::zeros((n, trace.penultimate.ncols())));
        for (r, (lrow, prow)) in trace.logits.outer_iter().zip(trace.penultimate.outer_iter()).enumerate() {
            logits.row_mut(start + r).assign(&lrow.mapv(|v| v.as_f64()));
            pen.row_mut(start + r).assign(&prow.mapv(|v| v.as_f64()));
        }
    }
    Ok(Evaluation {
        logits,
        penultimate: penultimate.unwrap_or_else(|| Array2::zeros((0, 0))),
    })
}

/// Mean per-sample cross-entropy of `logits` against `labels`.
pub fn mean_cross_entropy(logits: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
    if logits.nrows() != labels.len() || labels.is_empty() {
        return Err(Error::InvalidInput("need one non-empty label per logit row".into()));
    }
    let mut total = 0.0;
    for (row, &y) in logits.outer_iter().zip(labels) {
        total += cross_entropy(&LogitVector::new(row.to_vec())?, y)?;
    }
    Ok(total / labels.len() as f64)
}

/// Mean cross-entropy of the network over the (unaugmented) dataset.
pub fn empirical_ce<T: Real>(net: &Network<T>, ds: &Dataset, batch_size: usize) -> Result<f64> {
    let eval = evaluate(net, ds, batch_size)?;
    mean_cross_entropy(eval.logits.view(), &ds.labels)
}

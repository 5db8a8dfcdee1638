//! Labeled tabular datasets: CSV loading, min-max normalization,
//! deduplication and the seeded train/validation/test protocol.
//!
//! Normalization statistics are taken over the full dataset, before any
//! split is drawn. This leaks the range of validation and test instances
//! into preprocessing; it is kept because it is the preprocessing order the
//! benchmark protocol uses. Unseen instances scored later are mapped with
//! the stored [`NormStats`] and clamped to `[0, 1]`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttributeKind {
    Continuous,
    Binary,
}

/// Attribute matrix (row-major, `n x d`) with binary anomaly labels
/// (`1` = anomalous).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    labels: Vec<u8>,
    names: Vec<String>,
    kinds: Vec<AttributeKind>,
}

impl Dataset {
    /// Builds a dataset from rows, inferring the binary/continuous flag of
    /// every column from the observed values.
    pub fn from_rows(names: Vec<String>, rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        let d = names.len();
        if d == 0 {
            return Err(Error::InvalidDimension("dataset needs at least one attribute".into()));
        }
        if rows.is_empty() {
            return Err(Error::ZeroDataRows);
        }
        if rows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                got: labels.len(),
            });
        }
        if let Some((row, &value)) = labels.iter().enumerate().find(|(_, &l)| l > 1) {
            return Err(Error::UnparseableLabel {
                row,
                value: value.to_string(),
            });
        }
        let mut values = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::RaggedRows {
                    row: i,
                    got: row.len(),
                    expected: d,
                });
            }
            values.extend_from_slice(row);
        }
        let kinds = (0..d)
            .map(|j| {
                let binary = rows.iter().all(|r| r[j] == 0.0 || r[j] == 1.0);
                if binary {
                    AttributeKind::Binary
                } else {
                    AttributeKind::Continuous
                }
            })
            .collect();
        Ok(Self {
            values,
            labels,
            names,
            kinds,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim())
    }

    /// Copies the selected rows out of the matrix.
    pub fn select(&self, indices: &[usize]) -> Vec<Vec<f64>> {
        indices.iter().map(|&i| self.row(i).to_vec()).collect()
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.names
    }

    pub fn attribute_kinds(&self) -> &[AttributeKind] {
        &self.kinds
    }

    pub fn all_binary(&self) -> bool {
        self.kinds.iter().all(|k| *k == AttributeKind::Binary)
    }

    /// Indexes with label 1.
    pub fn anomaly_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == 1).collect()
    }

    /// Indexes with label 0.
    pub fn normal_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == 0).collect()
    }

    pub fn n_anomalies(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn n_normals(&self) -> usize {
        self.len() - self.n_anomalies()
    }

    /// Column values of attribute `j`.
    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[j])
    }
}

/// How the label column of a CSV file is selected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

impl FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    /// Purely numeric strings select by index; anything else by name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.trim().parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.trim().to_string()),
        })
    }
}

fn parse_label(raw: &str) -> Option<u8> {
    let t = raw.trim();
    match t.to_ascii_lowercase().as_str() {
        "normal" => return Some(0),
        "anomaly" => return Some(1),
        _ => {}
    }
    let v = t.parse::<f64>().ok()?;
    if v == 0.0 {
        Some(0)
    } else if v == 1.0 {
        Some(1)
    } else {
        None
    }
}

/// Reads a comma-separated file with a header row. The label column may be
/// given by header name or by zero-based index; when a header cell is itself
/// numeric and matches, the name wins.
pub fn load_csv(path: impl AsRef<Path>, label: &LabelColumn) -> Result<Dataset> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let label_idx = match label {
        LabelColumn::Name(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::UnknownLabelColumn(name.clone()))?,
        LabelColumn::Index(i) => header.iter().position(|h| h == &i.to_string()).unwrap_or(*i),
    };
    if label_idx >= header.len() {
        return Err(Error::UnknownLabelColumn(format!("{label:?}")));
    }
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != label_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::RaggedRows {
                row: i,
                got: record.len(),
                expected: header.len(),
            });
        }
        let raw_label = &record[label_idx];
        let y = parse_label(raw_label).ok_or_else(|| Error::UnparseableLabel {
            row: i,
            value: raw_label.to_string(),
        })?;
        let mut row = Vec::with_capacity(names.len());
        for (j, field) in record.iter().enumerate() {
            if j == label_idx {
                continue;
            }
            let v: f64 = field.trim().parse().map_err(|_| Error::UnparseableValue {
                row: i,
                column: header[j].clone(),
                value: field.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite);
            }
            row.push(v);
        }
        rows.push(row);
        labels.push(y);
    }
    if rows.is_empty() {
        return Err(Error::ZeroDataRows);
    }
    Dataset::from_rows(names, rows, labels)
}

/// Per-attribute range used for the linear map onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub names: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormStats {
    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Maps one raw instance onto the training support, clamping to `[0, 1]`.
    pub fn apply(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: raw.len(),
            });
        }
        Ok(raw
            .iter()
            .enumerate()
            .map(|(j, &v)| scale(v, self.min[j], self.max[j]).clamp(0.0, 1.0))
            .collect())
    }

    /// Applies the stored ranges to every row of an unseen dataset.
    pub fn apply_dataset(&self, ds: &Dataset) -> Result<Dataset> {
        let rows = ds.rows().map(|r| self.apply(r)).collect::<Result<Vec<_>>>()?;
        let mut out = Dataset::from_rows(ds.names.clone(), rows, ds.labels.clone())?;
        out.kinds = ds.kinds.clone();
        Ok(out)
    }

    /// Key-value text form: one `name=min,max` line per attribute.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# supmade norm-stats v1\n");
        for j in 0..self.dim() {
            let _ = writeln!(s, "{}={},{}", self.names[j], self.min[j], self.max[j]);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut stats = NormStats {
            names: Vec::new(),
            min: Vec::new(),
            max: Vec::new(),
        };
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, range) = line
                .rsplit_once('=')
                .ok_or_else(|| Error::MalformedStats(line.to_string()))?;
            let (lo, hi) = range
                .split_once(',')
                .ok_or_else(|| Error::MalformedStats(line.to_string()))?;
            let lo: f64 = lo.trim().parse().map_err(|_| Error::MalformedStats(line.to_string()))?;
            let hi: f64 = hi.trim().parse().map_err(|_| Error::MalformedStats(line.to_string()))?;
            if !(lo <= hi) {
                return Err(Error::MalformedStats(format!("min > max in {line:?}")));
            }
            stats.names.push(name.to_string());
            stats.min.push(lo);
            stats.max.push(hi);
        }
        Ok(stats)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        Self::from_text(&fs::read_to_string(path)?)
    }
}

fn scale(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        0.0
    }
}

/// Linearly maps every continuous column onto `[0, 1]` using its range over
/// the whole dataset. Binary columns are left as they are and recorded with
/// the range `[0, 1]` so that re-applying the stats is the identity on them.
/// Constant columns become all zeros.
pub fn normalize_minmax(ds: &Dataset) -> (Dataset, NormStats) {
    let d = ds.dim();
    let mut min = vec![0.0; d];
    let mut max = vec![1.0; d];
    for j in 0..d {
        if ds.kinds[j] == AttributeKind::Continuous {
            min[j] = ds.column(j).fold(f64::INFINITY, f64::min);
            max[j] = ds.column(j).fold(f64::NEG_INFINITY, f64::max);
        }
    }
    let mut out = ds.clone();
    for row in out.values.chunks_exact_mut(d) {
        for j in 0..d {
            if ds.kinds[j] == AttributeKind::Continuous {
                row[j] = scale(row[j], min[j], max[j]);
            }
        }
    }
    let stats = NormStats {
        names: ds.names.clone(),
        min,
        max,
    };
    (out, stats)
}

/// Drops repeated `(attribute vector, label)` pairs, keeping the first
/// occurrence and the original order.
pub fn dedup(ds: &Dataset) -> Dataset {
    let mut seen = HashSet::with_capacity(ds.len());
    let mut keep = Vec::with_capacity(ds.len());
    for (i, row) in ds.rows().enumerate() {
        // +0.0 folds -0.0 onto 0.0 so numerically equal rows share a key.
        let key: Vec<u64> = row.iter().map(|v| (v + 0.0).to_bits()).collect();
        if seen.insert((key, ds.labels[i])) {
            keep.push(i);
        }
    }
    let d = ds.dim();
    let mut values = Vec::with_capacity(keep.len() * d);
    for &i in &keep {
        values.extend_from_slice(ds.row(i));
    }
    Dataset {
        values,
        labels: keep.iter().map(|&i| ds.labels[i]).collect(),
        names: ds.names.clone(),
        kinds: ds.kinds.clone(),
    }
}

/// Disjoint train/validation/test index sets, each holding normal and
/// anomalous instances separately.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBundle {
    pub train_normal: Vec<usize>,
    pub val_normal: Vec<usize>,
    pub test_normal: Vec<usize>,
    pub train_anom: Vec<usize>,
    pub val_anom: Vec<usize>,
    pub test_anom: Vec<usize>,
    pub seed: u64,
}

impl SplitBundle {
    pub fn test_indices(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.test_normal.iter().chain(&self.test_anom).copied().collect();
        all.sort_unstable();
        all
    }
}

/// Smallest number of normal instances accepted by [`split`].
pub const MIN_NORMALS: usize = 10;

/// Seeded split: normals are shuffled and cut 80% / 10% / rest (floor
/// rounding), anomalies are shuffled and cut `n_train_anom` / `n_val_anom` /
/// rest. The shuffle uses ChaCha8 seeded with `seed`, normals first.
pub fn split(ds: &Dataset, seed: u64, n_train_anom: usize, n_val_anom: usize) -> Result<SplitBundle> {
    let mut normals = ds.normal_indices();
    let mut anomalies = ds.anomaly_indices();
    let need = n_train_anom + n_val_anom + 1;
    if anomalies.len() < need {
        return Err(Error::InsufficientAnomalies {
            have: anomalies.len(),
            need,
        });
    }
    if normals.len() < MIN_NORMALS {
        return Err(Error::InsufficientNormals {
            have: normals.len(),
            need: MIN_NORMALS,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    normals.shuffle(&mut rng);
    anomalies.shuffle(&mut rng);

    let n_train = normals.len() * 8 / 10;
    let n_val = normals.len() / 10;
    let sorted = |s: &[usize]| {
        let mut v = s.to_vec();
        v.sort_unstable();
        v
    };
    Ok(SplitBundle {
        train_normal: sorted(&normals[..n_train]),
        val_normal: sorted(&normals[n_train..n_train + n_val]),
        test_normal: sorted(&normals[n_train + n_val..]),
        train_anom: sorted(&anomalies[..n_train_anom]),
        val_anom: sorted(&anomalies[n_train_anom..n_train_anom + n_val_anom]),
        test_anom: sorted(&anomalies[n_train_anom + n_val_anom..]),
        seed,
    })
}

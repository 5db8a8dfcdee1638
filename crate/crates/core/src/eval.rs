//! AUC and per-instance score reports.
//!
//! AUC is the probability that a random anomaly outscores a random normal
//! instance, with half credit for ties (Mann-Whitney convention). It is
//! computed from midranks in `O(n log n)`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

fn check_scores(scores: &[f64], what: &'static str) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::EmptySet(what));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

/// Rank-based AUC of anomaly scores against normal scores.
pub fn auc(anomaly_scores: &[f64], normal_scores: &[f64]) -> Result<f64> {
    check_scores(anomaly_scores, "anomaly scores")?;
    check_scores(normal_scores, "normal scores")?;
    let n_a = anomaly_scores.len();
    let n_n = normal_scores.len();
    let mut all: Vec<(f64, bool)> = anomaly_scores
        .iter()
        .map(|&s| (s, true))
        .chain(normal_scores.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    // sum of 1-based midranks held by anomalies
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let midrank = (i + j + 2) as f64 / 2.0;
        let anomalies_in_tie = all[i..=j].iter().filter(|e| e.1).count();
        rank_sum += midrank * anomalies_in_tie as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_a * (n_a + 1)) as f64 / 2.0;
    Ok(u / (n_a * n_n) as f64)
}

/// ROC curve points `(false positive rate, true positive rate)` obtained by
/// sweeping the threshold from high to low scores; tied scores move both
/// rates in a single step.
pub fn roc_points(anomaly_scores: &[f64], normal_scores: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_scores(anomaly_scores, "anomaly scores")?;
    check_scores(normal_scores, "normal scores")?;
    let mut all: Vec<(f64, bool)> = anomaly_scores
        .iter()
        .map(|&s| (s, true))
        .chain(normal_scores.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (n_a, n_n) = (anomaly_scores.len() as f64, normal_scores.len() as f64);
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            if all[j].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        points.push((fp as f64 / n_n, tp as f64 / n_a));
        i = j;
    }
    Ok(points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredInstance {
    pub index: usize,
    pub label: u8,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub instances: Vec<ScoredInstance>,
    pub auc: f64,
    pub n_anomalies: usize,
    pub n_normals: usize,
}

/// JSON summary written next to a score CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub auc: f64,
    pub n_anomalies: usize,
    pub n_normals: usize,
    pub seed: Option<u64>,
    pub lambda: Option<f64>,
}

impl ScoreReport {
    pub fn anomaly_scores(&self) -> Vec<f64> {
        self.instances
            .iter()
            .filter(|s| s.label == 1)
            .map(|s| s.score)
            .collect()
    }

    pub fn normal_scores(&self) -> Vec<f64> {
        self.instances
            .iter()
            .filter(|s| s.label == 0)
            .map(|s| s.score)
            .collect()
    }

    pub fn summary(&self, seed: Option<u64>, lambda: Option<f64>) -> ScoreSummary {
        ScoreSummary {
            auc: self.auc,
            n_anomalies: self.n_anomalies,
            n_normals: self.n_normals,
            seed,
            lambda,
        }
    }

    /// `index,label,score` with full-precision scores.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,label,score\n");
        for inst in &self.instances {
            let _ = writeln!(s, "{},{},{}", inst.index, inst.label, inst.score);
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Tab-separated `fpr\ttpr` points for plotting.
    pub fn roc_tsv(&self) -> Result<String> {
        let mut s = String::from("fpr\ttpr\n");
        for (f, t) in roc_points(&self.anomaly_scores(), &self.normal_scores())? {
            let _ = writeln!(s, "{f}\t{t}");
        }
        Ok(s)
    }
}

/// Scores `indices` of `ds` with an arbitrary scorer and reports the AUC of
/// anomalies against normals among them.
pub fn evaluate_with(
    mut scorer: impl FnMut(&[f64]) -> Result<f64>,
    ds: &Dataset,
    indices: &[usize],
) -> Result<ScoreReport> {
    let mut instances = Vec::with_capacity(indices.len());
    for &index in indices {
        let score = scorer(ds.row(index))?;
        instances.push(ScoredInstance {
            index,
            label: ds.label(index),
            score,
        });
    }
    let n_anomalies = instances.iter().filter(|s| s.label == 1).count();
    let n_normals = instances.len() - n_anomalies;
    if n_anomalies == 0 {
        return Err(Error::EmptySet("test anomalies"));
    }
    if n_normals == 0 {
        return Err(Error::EmptySet("test normals"));
    }
    let mut report = ScoreReport {
        instances,
        auc: 0.0,
        n_anomalies,
        n_normals,
    };
    report.auc = auc(&report.anomaly_scores(), &report.normal_scores())?;
    Ok(report)
}

/// Scores `indices` with the model's anomaly score.
pub fn evaluate(params: &crate::made::MadeParams, ds: &Dataset, indices: &[usize]) -> Result<ScoreReport> {
    let mut ws = crate::made::Workspace::default();
    evaluate_with(
        |x| {
            if x.len() != params.dim() {
                return Err(Error::DimensionMismatch {
                    expected: params.dim(),
                    got: x.len(),
                });
            }
            Ok(-params.log_density_with(x, &mut ws))
        },
        ds,
        indices,
    )
}

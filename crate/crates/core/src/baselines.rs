//! Reference scorers for sanity comparisons: an independent-Gaussian density
//! and a k-th nearest neighbor distance, both fitted on training normals.

use crate::error::{Error, Result};
use crate::made::normal_log_pdf;

pub const VARIANCE_FLOOR: f64 = 1e-6;

fn check_fit_rows(rows: &[&[f64]]) -> Result<usize> {
    let first = rows.first().ok_or(Error::EmptySet("training normals"))?;
    let d = first.len();
    if let Some(bad) = rows.iter().find(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    Ok(d)
}

fn check_query(x: &[f64], d: usize) -> Result<()> {
    if x.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    Ok(())
}

/// Per-attribute mean and (floored, maximum-likelihood) variance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBaseline {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl GaussianBaseline {
    pub fn fit(normals: &[&[f64]]) -> Result<Self> {
        let d = check_fit_rows(normals)?;
        let n = normals.len() as f64;
        let mut mean = vec![0.0; d];
        for r in normals {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in normals {
            for j in 0..d {
                var[j] += (r[j] - mean[j]).powi(2);
            }
        }
        var.iter_mut().for_each(|v| *v = (*v / n).max(VARIANCE_FLOOR));
        Ok(Self { mean, var })
    }

    /// `-sum_d log N(x_d | mean_d, var_d)`.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        check_query(x, self.mean.len())?;
        Ok(-x
            .iter()
            .zip(self.mean.iter().zip(&self.var))
            .map(|(&v, (&m, &s2))| normal_log_pdf(v, m, s2))
            .sum::<f64>())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnBaseline {
    points: Vec<Vec<f64>>,
    k: usize,
}

impl KnnBaseline {
    pub fn fit(normals: &[&[f64]], k: usize) -> Result<Self> {
        check_fit_rows(normals)?;
        if k == 0 || k > normals.len() {
            return Err(Error::InvalidConfig(format!(
                "k = {k} must be in 1..={} (stored normals)",
                normals.len()
            )));
        }
        Ok(Self {
            points: normals.iter().map(|r| r.to_vec()).collect(),
            k,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Euclidean distance to the k-th nearest stored normal.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        check_query(x, self.points[0].len())?;
        let mut dist: Vec<f64> = self
            .points
            .iter()
            .map(|p| p.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
            .collect();
        let (_, kth, _) = dist.select_nth_unstable_by(self.k - 1, f64::total_cmp);
        Ok(kth.sqrt())
    }
}

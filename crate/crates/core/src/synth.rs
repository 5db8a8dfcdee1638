//! One-dimensional labeled toy data: a Gaussian cluster of normal instances
//! with anomalies planted inside it, outside it, or both.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Anomalies at the center of the normal cluster.
    InsideCluster,
    /// Anomalies in the empty tails on both sides.
    OutsideCluster,
    /// Half inside, half outside (alternating).
    Both,
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inside_cluster" => Ok(Scenario::InsideCluster),
            "outside_cluster" => Ok(Scenario::OutsideCluster),
            "both" => Ok(Scenario::Both),
            other => Err(Error::UnknownScenario(other.to_string())),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::InsideCluster => "inside_cluster",
            Scenario::OutsideCluster => "outside_cluster",
            Scenario::Both => "both",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub n_normals: usize,
    pub n_anomalies: usize,
    /// Standard deviation of the normal cluster (centered at 0).
    pub cluster_sd: f64,
    /// Spread of anomalies planted inside the cluster.
    pub inside_sd: f64,
    /// Anomalies planted outside lie at `±[outside_min, outside_max]`.
    pub outside_min: f64,
    pub outside_max: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_normals: 1000,
            n_anomalies: 12,
            cluster_sd: 1.0,
            inside_sd: 0.05,
            outside_min: 3.5,
            outside_max: 4.5,
        }
    }
}

/// Raw (unnormalized) single-attribute dataset; normals come first.
pub fn generate(scenario: Scenario, cfg: &SynthConfig, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cluster = Normal::new(0.0, cfg.cluster_sd).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let inside = Normal::new(0.0, cfg.inside_sd).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut rows = Vec::with_capacity(cfg.n_normals + cfg.n_anomalies);
    for _ in 0..cfg.n_normals {
        rows.push(vec![cluster.sample(&mut rng)]);
    }
    for i in 0..cfg.n_anomalies {
        let planted_inside = match scenario {
            Scenario::InsideCluster => true,
            Scenario::OutsideCluster => false,
            Scenario::Both => i % 2 == 0,
        };
        let x = if planted_inside {
            inside.sample(&mut rng)
        } else {
            let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
            side * rng.random_range(cfg.outside_min..cfg.outside_max)
        };
        rows.push(vec![x]);
    }
    let labels = (0..rows.len()).map(|i| u8::from(i >= cfg.n_normals)).collect();
    Dataset::from_rows(vec!["x".into()], rows, labels)
}

/// `n` evenly spaced points covering `[lo, hi]`.
pub fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

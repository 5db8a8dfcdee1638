//! Training objective: mean log-likelihood of normal instances plus a
//! `lambda`-weighted pairwise sigmoid term that rewards every normal
//! instance for being more likely than every labeled anomaly.
//!
//! ```text
//! L(theta) = mean_{n in normals} log p(x_n)
//!          + lambda / (|A| |N|) * sum_{a, n} sigmoid(log p(x_n) - log p(x_a))
//! ```
//!
//! The pairwise term is a smoothed version of the AUC computed on anomaly
//! scores: replacing the sigmoid by the step function `I(s > 0)` gives
//! exactly [`crate::eval::auc`] on tie-free scores.

use crate::error::{Error, Result};
use crate::made::{MadeParams, Workspace};

pub use crate::math::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig {
    pub lambda: f64,
}

impl ObjectiveConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        Ok(Self { lambda })
    }

    /// True when the objective reduces to plain maximum likelihood.
    fn likelihood_only(&self, batch: &LabeledBatch<'_>) -> bool {
        self.lambda == 0.0 || batch.anomalies.is_empty()
    }
}

/// Borrowed rows of one optimization step.
#[derive(Debug, Clone, Default)]
pub struct LabeledBatch<'a> {
    pub normals: Vec<&'a [f64]>,
    pub anomalies: Vec<&'a [f64]>,
}

impl<'a> LabeledBatch<'a> {
    pub fn new(normals: Vec<&'a [f64]>, anomalies: Vec<&'a [f64]>) -> Result<Self> {
        let batch = Self { normals, anomalies };
        batch.validate()?;
        Ok(batch)
    }

    fn validate(&self) -> Result<()> {
        let Some(first) = self.normals.first() else {
            return Err(Error::EmptySet("normals"));
        };
        let d = first.len();
        if let Some(bad) = self.normals.iter().chain(&self.anomalies).find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        Ok(())
    }
}

fn check_rows(params: &MadeParams, rows: &[&[f64]], what: &'static str) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::EmptySet(what));
    }
    for r in rows {
        if r.len() != params.dim() {
            return Err(Error::DimensionMismatch {
                expected: params.dim(),
                got: r.len(),
            });
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
    }
    Ok(())
}

fn log_densities(params: &MadeParams, rows: &[&[f64]], ws: &mut Workspace) -> Vec<f64> {
    rows.iter().map(|x| params.log_density_with(x, ws)).collect()
}

/// Mean ensemble log-density of the normal instances.
pub fn normal_loglik(params: &MadeParams, normals: &[&[f64]]) -> Result<f64> {
    check_rows(params, normals, "normals")?;
    let mut ws = Workspace::default();
    let lp = log_densities(params, normals, &mut ws);
    Ok(lp.iter().sum::<f64>() / lp.len() as f64)
}

/// Mean of `link(log p(normal) - log p(anomaly))` over all pairs, given the
/// per-instance log-densities.
pub fn pairwise_mean(anomaly_lp: &[f64], normal_lp: &[f64], link: impl Fn(f64) -> f64) -> f64 {
    let mut total = 0.0;
    for &a in anomaly_lp {
        for &n in normal_lp {
            total += link(n - a);
        }
    }
    total / (anomaly_lp.len() * normal_lp.len()) as f64
}

/// Sigmoid pairwise term from precomputed log-densities; zero when either
/// side is empty.
pub fn regularizer_from_log_densities(anomaly_lp: &[f64], normal_lp: &[f64]) -> f64 {
    if anomaly_lp.is_empty() || normal_lp.is_empty() {
        return 0.0;
    }
    pairwise_mean(anomaly_lp, normal_lp, sigmoid)
}

/// The pairwise sigmoid term in `[0, 1]`.
pub fn auc_regularizer(params: &MadeParams, anomalies: &[&[f64]], normals: &[&[f64]]) -> Result<f64> {
    check_rows(params, anomalies, "anomalies")?;
    check_rows(params, normals, "normals")?;
    let mut ws = Workspace::default();
    let a = log_densities(params, anomalies, &mut ws);
    let n = log_densities(params, normals, &mut ws);
    Ok(regularizer_from_log_densities(&a, &n))
}

/// `L = normal_loglik + lambda * auc_regularizer`; exactly the log-likelihood
/// when `lambda == 0` or there are no anomalies.
pub fn objective_value(params: &MadeParams, batch: &LabeledBatch<'_>, cfg: &ObjectiveConfig) -> Result<f64> {
    batch.validate()?;
    let loglik = normal_loglik(params, &batch.normals)?;
    if cfg.likelihood_only(batch) {
        return Ok(loglik);
    }
    Ok(loglik + cfg.lambda * auc_regularizer(params, &batch.anomalies, &batch.normals)?)
}

/// Objective value and its gradient with respect to every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Gradient of the mean normal log-likelihood alone (the unsupervised path).
pub fn loglik_gradient(params: &MadeParams, normals: &[&[f64]]) -> Result<Gradient> {
    check_rows(params, normals, "normals")?;
    let mut ws = Workspace::default();
    let mut grad = vec![0.0; params.n_params()];
    let coef = 1.0 / normals.len() as f64;
    let mut total = 0.0;
    for x in normals {
        total += params.accumulate_log_density_grad(x, coef, &mut grad, &mut ws);
    }
    Ok(Gradient {
        value: total / normals.len() as f64,
        grad,
    })
}

/// Reverse-mode gradient of [`objective_value`].
///
/// With `lambda > 0`, a forward pass first collects every log-density; the
/// chain rule through the pairwise term then gives one scalar coefficient
/// per instance, and a second pass back-propagates each instance with its
/// coefficient. Summation order is fixed, so results are reproducible.
pub fn gradient(params: &MadeParams, batch: &LabeledBatch<'_>, cfg: &ObjectiveConfig) -> Result<Gradient> {
    batch.validate()?;
    if cfg.likelihood_only(batch) {
        return loglik_gradient(params, &batch.normals);
    }
    check_rows(params, &batch.normals, "normals")?;
    check_rows(params, &batch.anomalies, "anomalies")?;

    let mut ws = Workspace::default();
    let normal_lp = log_densities(params, &batch.normals, &mut ws);
    let anomaly_lp = log_densities(params, &batch.anomalies, &mut ws);
    let n_norm = normal_lp.len() as f64;
    let pair_scale = cfg.lambda / (anomaly_lp.len() as f64 * n_norm);

    let mut normal_coef = vec![1.0 / n_norm; normal_lp.len()];
    let mut anomaly_coef = vec![0.0; anomaly_lp.len()];
    for (ia, &a) in anomaly_lp.iter().enumerate() {
        for (inn, &n) in normal_lp.iter().enumerate() {
            let diff = n - a;
            let slope = pair_scale * sigmoid(diff) * sigmoid(-diff);
            normal_coef[inn] += slope;
            anomaly_coef[ia] -= slope;
        }
    }

    let mut grad = vec![0.0; params.n_params()];
    for (x, &c) in batch.normals.iter().zip(&normal_coef) {
        params.accumulate_log_density_grad(x, c, &mut grad, &mut ws);
    }
    for (x, &c) in batch.anomalies.iter().zip(&anomaly_coef) {
        params.accumulate_log_density_grad(x, c, &mut grad, &mut ws);
    }
    let loglik = normal_lp.iter().sum::<f64>() / n_norm;
    let value = loglik + cfg.lambda * regularizer_from_log_densities(&anomaly_lp, &normal_lp);
    Ok(Gradient { value, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::made::{build_masks, Head};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(seed: u64) -> MadeParams {
        let masks = build_masks(3, 6, 2, 2, seed).unwrap();
        MadeParams::init(masks, Head::GaussianMixture { components: 2 }, seed).unwrap()
    }

    fn rows(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect()
    }

    fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(|r| r.as_slice()).collect()
    }

    #[test]
    fn loglik_is_mean_of_log_densities() {
        let p = model(1);
        let data = rows(16, 2);
        let one = normal_loglik(&p, &refs(&data[..1])).unwrap();
        assert_eq!(one, p.log_density(&data[0]).unwrap());
        let mut sum = 0.0;
        for r in &data {
            sum += p.log_density(r).unwrap();
        }
        let mean = normal_loglik(&p, &refs(&data)).unwrap();
        assert!((mean - sum / 16.0).abs() < 1e-12);
        let five: f64 = data[..5].iter().map(|r| p.log_density(r).unwrap()).sum::<f64>() / 5.0;
        assert!((normal_loglik(&p, &refs(&data[..5])).unwrap() - five).abs() < 1e-12);
        assert!(matches!(normal_loglik(&p, &[]), Err(Error::EmptySet(_))));
    }

    #[test]
    fn regularizer_examples() {
        assert_eq!(regularizer_from_log_densities(&[-1.0, -1.0], &[-1.0; 3]), 0.5);
        let r = regularizer_from_log_densities(&[-100.0, -90.0], &[-10.0, -50.0]);
        assert!((r - 1.0).abs() <= 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..0.0)).collect();
        let n: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..0.0)).collect();
        let mut terms = Vec::new();
        for ai in &a {
            for ni in &n {
                terms.push(1.0 / (1.0 + (-(ni - ai)).exp()));
            }
        }
        assert_eq!(terms.len(), 12);
        let oracle = terms.iter().sum::<f64>() / 12.0;
        assert!((regularizer_from_log_densities(&a, &n) - oracle).abs() < 1e-12);

        let p = model(4);
        let data = rows(7, 5);
        let direct = auc_regularizer(&p, &refs(&data[..3]), &refs(&data[3..])).unwrap();
        assert!((0.0..=1.0).contains(&direct));
        assert!(auc_regularizer(&p, &[], &refs(&data)).is_err());
    }

    #[test]
    fn objective_composition() {
        let p = model(6);
        let data = rows(10, 7);
        let batch = LabeledBatch::new(refs(&data[..7]), refs(&data[7..])).unwrap();
        let ll = normal_loglik(&p, &batch.normals).unwrap();
        let zero = objective_value(&p, &batch, &ObjectiveConfig::new(0.0).unwrap()).unwrap();
        assert_eq!(zero.to_bits(), ll.to_bits());

        let no_anom = LabeledBatch::new(refs(&data[..7]), vec![]).unwrap();
        let ten = ObjectiveConfig::new(10.0).unwrap();
        assert_eq!(objective_value(&p, &no_anom, &ten).unwrap().to_bits(), ll.to_bits());

        let reg = auc_regularizer(&p, &batch.anomalies, &batch.normals).unwrap();
        let l = objective_value(&p, &batch, &ten).unwrap();
        assert!((l - (ll + 10.0 * reg)).abs() < 1e-12);

        assert!(ObjectiveConfig::new(-1.0).is_err());
        assert!(ObjectiveConfig::new(f64::NAN).is_err());
        assert!(LabeledBatch::new(vec![], refs(&data)).is_err());
    }

    #[test]
    fn gradient_value_matches_objective() {
        let p = model(8);
        let data = rows(9, 9);
        let batch = LabeledBatch::new(refs(&data[..6]), refs(&data[6..])).unwrap();
        for lambda in [0.0, 1.0, 1e3] {
            let cfg = ObjectiveConfig::new(lambda).unwrap();
            let g = gradient(&p, &batch, &cfg).unwrap();
            let v = objective_value(&p, &batch, &cfg).unwrap();
            assert!((g.value - v).abs() < 1e-12 * v.abs().max(1.0));
        }
    }

    #[test]
    fn zero_lambda_gradient_is_likelihood_gradient() {
        let p = model(10);
        let data = rows(9, 11);
        let batch = LabeledBatch::new(refs(&data[..6]), refs(&data[6..])).unwrap();
        let g0 = gradient(&p, &batch, &ObjectiveConfig::new(0.0).unwrap()).unwrap();
        let ml = loglik_gradient(&p, &batch.normals).unwrap();
        assert_eq!(g0, ml);

        let g1 = gradient(&p, &batch, &ObjectiveConfig::new(1.5).unwrap()).unwrap();
        let g2 = gradient(&p, &batch, &ObjectiveConfig::new(3.0).unwrap()).unwrap();
        for i in 0..ml.grad.len() {
            let d1 = g1.grad[i] - ml.grad[i];
            let d2 = g2.grad[i] - ml.grad[i];
            assert!((d2 - 2.0 * d1).abs() < 1e-12, "coordinate {i}: {d1} vs {d2}");
        }
    }
}

//! ADAM ascent on the objective, early stopping on validation AUC, and
//! model selection over a grid of regularization weights.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SplitBundle};
use crate::error::{Error, Result};
use crate::eval::auc;
use crate::made::{MadeParams, Workspace};
use crate::objective::{gradient, LabeledBatch, ObjectiveConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Seeds the per-epoch shuffle of training normals.
    pub seed: u64,
    pub lambda_grid: Vec<f64>,
}

pub const DEFAULT_LAMBDA_GRID: [f64; 7] = [0.0, 0.1, 1.0, 10.0, 1e2, 1e3, 1e4];

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            max_epochs: 100,
            batch_size: 64,
            patience: 10,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.patience == 0 {
            return bad("patience must be >= 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be > 0");
        }
        if self.lambda_grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return bad("lambda grid values must be finite and >= 0");
        }
        Ok(())
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected ADAM update. `grads` is the gradient of a function
/// being maximized, so the step moves along it.
pub fn adam_step(params: &mut [f64], state: &mut AdamState, grads: &[f64], cfg: &TrainConfig) -> Result<()> {
    if params.len() != state.m.len() || grads.len() != params.len() {
        return Err(Error::ShapeMismatch {
            expected: state.m.len(),
            got: params.len().max(grads.len()),
        });
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] += cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}

/// Read access to the instances the trainer may use. With `lambda == 0` the
/// trainer never calls [`train_anomalies`](TrainingSource::train_anomalies).
pub trait TrainingSource {
    fn train_normals(&self) -> Vec<&[f64]>;
    fn train_anomalies(&self) -> Vec<&[f64]>;
    fn val_normals(&self) -> Vec<&[f64]>;
    fn val_anomalies(&self) -> Vec<&[f64]>;
}

/// A dataset seen through one split.
#[derive(Debug, Clone, Copy)]
pub struct SplitView<'a> {
    pub data: &'a Dataset,
    pub split: &'a SplitBundle,
}

impl<'a> SplitView<'a> {
    pub fn new(data: &'a Dataset, split: &'a SplitBundle) -> Self {
        Self { data, split }
    }

    fn rows(&self, idx: &[usize]) -> Vec<&'a [f64]> {
        idx.iter().map(|&i| self.data.row(i)).collect()
    }
}

impl TrainingSource for SplitView<'_> {
    fn train_normals(&self) -> Vec<&[f64]> {
        self.rows(&self.split.train_normal)
    }

    fn train_anomalies(&self) -> Vec<&[f64]> {
        self.rows(&self.split.train_anom)
    }

    fn val_normals(&self) -> Vec<&[f64]> {
        self.rows(&self.split.val_normal)
    }

    fn val_anomalies(&self) -> Vec<&[f64]> {
        self.rows(&self.split.val_anom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the minibatch objective values seen during the epoch.
    pub objective: f64,
    pub val_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub lambda: f64,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_auc: f64,
    /// Excluded from equality-sensitive outputs; the only non-deterministic field.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl TrainReport {
    /// Everything except wall time, for reproducibility checks.
    pub fn same_trajectory(&self, other: &TrainReport) -> bool {
        self.lambda.to_bits() == other.lambda.to_bits()
            && self.epochs == other.epochs
            && self.best_epoch == other.best_epoch
            && self.best_val_auc.to_bits() == other.best_val_auc.to_bits()
    }

    /// `epoch,objective,val_auc` rows followed by a `#` summary line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,objective,val_auc\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{},{}\n", e.epoch, e.objective, e.val_auc));
        }
        s.push_str(&format!(
            "# lambda={} best_epoch={} best_val_auc={}\n",
            self.lambda, self.best_epoch, self.best_val_auc
        ));
        s
    }
}

/// Patience bookkeeping: improvement means a strictly larger AUC, so ties
/// keep the earliest epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    /// New best; the caller should snapshot parameters.
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::NEG_INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val_auc: f64) -> StopDecision {
        if val_auc > self.best {
            self.best = val_auc;
            self.best_epoch = epoch;
            self.stale = 0;
            return StopDecision::Improved;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best(&self) -> (usize, f64) {
        (self.best_epoch, self.best)
    }
}

/// AUC of the model's anomaly scores on the given validation rows.
pub fn validation_auc(params: &MadeParams, normals: &[&[f64]], anomalies: &[&[f64]]) -> Result<f64> {
    let mut ws = Workspace::default();
    let score = |rows: &[&[f64]], ws: &mut Workspace| -> Vec<f64> {
        rows.iter().map(|x| -params.log_density_with(x, ws)).collect()
    };
    let n = score(normals, &mut ws);
    let a = score(anomalies, &mut ws);
    auc(&a, &n)
}

/// Trains a copy of `init` with weight `lambda` and returns the parameters
/// of the epoch with the best validation AUC.
pub fn train<S: TrainingSource + ?Sized>(
    init: &MadeParams,
    data: &S,
    cfg: &TrainConfig,
    lambda: f64,
) -> Result<(MadeParams, TrainReport)> {
    cfg.validate()?;
    let obj = ObjectiveConfig::new(lambda)?;
    let start = Instant::now();
    let normals = data.train_normals();
    if normals.is_empty() {
        return Err(Error::EmptySet("training normals"));
    }
    let anomalies = if lambda > 0.0 {
        data.train_anomalies()
    } else {
        Vec::new()
    };
    let val_normals = data.val_normals();
    let val_anomalies = data.val_anomalies();
    if val_normals.is_empty() {
        return Err(Error::EmptySet("validation normals"));
    }
    if val_anomalies.is_empty() {
        return Err(Error::EmptySet("validation anomalies"));
    }

    let mut params = init.clone();
    let mut adam = AdamState::new(params.n_params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..normals.len()).collect();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_params = params.clone();
    let mut epochs = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut objective_sum = 0.0;
        let mut n_steps = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = LabeledBatch::new(chunk.iter().map(|&i| normals[i]).collect(), anomalies.clone())?;
            let g = gradient(&params, &batch, &obj)?;
            adam_step(params.theta_mut(), &mut adam, &g.grad, cfg)?;
            objective_sum += g.value;
            n_steps += 1;
        }
        let val_auc = validation_auc(&params, &val_normals, &val_anomalies)?;
        epochs.push(EpochRecord {
            epoch,
            objective: objective_sum / n_steps as f64,
            val_auc,
        });
        match stopper.observe(epoch, val_auc) {
            StopDecision::Improved => best_params = params.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }
    let (best_epoch, best_val_auc) = stopper.best();
    let report = TrainReport {
        lambda,
        epochs,
        best_epoch,
        best_val_auc,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok((best_params, report))
}

/// One trained grid point.
#[derive(Debug, Clone)]
pub struct LambdaRun {
    pub lambda: f64,
    pub params: MadeParams,
    pub report: TrainReport,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub runs: Vec<LambdaRun>,
    /// Index into `runs` of the selected model.
    pub chosen: usize,
}

impl SweepResult {
    pub fn best(&self) -> &LambdaRun {
        &self.runs[self.chosen]
    }

    pub fn chosen_lambda(&self) -> f64 {
        self.runs[self.chosen].lambda
    }

    /// The run trained with `lambda`, if it was on the grid.
    pub fn run_for(&self, lambda: f64) -> Option<&LambdaRun> {
        self.runs.iter().find(|r| r.lambda == lambda)
    }
}

/// Index of the best `(lambda, validation AUC)` pair; ties go to the smaller
/// lambda.
pub fn select_lambda(candidates: &[(f64, f64)]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &(lambda, score)) in candidates.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(b) => {
                let (bl, bs) = candidates[b];
                if score > bs || (score == bs && lambda < bl) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}

/// Trains one model per grid value from the same initialization and keeps
/// the one with the highest validation AUC.
pub fn sweep_lambda<S: TrainingSource + ?Sized>(init: &MadeParams, data: &S, cfg: &TrainConfig) -> Result<SweepResult> {
    if cfg.lambda_grid.is_empty() {
        return Err(Error::InvalidConfig("lambda grid is empty".into()));
    }
    let mut runs = Vec::with_capacity(cfg.lambda_grid.len());
    for &lambda in &cfg.lambda_grid {
        let (params, report) = train(init, data, cfg, lambda)?;
        runs.push(LambdaRun { lambda, params, report });
    }
    let candidates: Vec<(f64, f64)> = runs.iter().map(|r| (r.lambda, r.report.best_val_auc)).collect();
    let chosen = select_lambda(&candidates).expect("non-empty grid");
    Ok(SweepResult { runs, chosen })
}

//! Per-seed benchmark protocol: split, sweep lambda, evaluate the selected
//! model and the reference scorers on the test split, then aggregate.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::baselines::{GaussianBaseline, KnnBaseline};
use crate::data::{split, Dataset, SplitBundle};
use crate::error::Result;
use crate::eval::{evaluate, evaluate_with, ScoreReport};
use crate::made::ModelSpec;
use crate::train::{
    select_lambda, sweep_lambda, train, LambdaRun, SplitView, SweepResult, TrainConfig, TrainingSource,
};

/// Neighbor counts tried by the KNN reference scorer.
pub const KNN_GRID: [usize; 4] = [1, 3, 5, 15];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub n_train_anom: usize,
    pub n_val_anom: usize,
    pub model: ModelSpec,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodAucs {
    pub proposed: f64,
    pub made: f64,
    pub gaussian: f64,
    pub knn: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSummary {
    pub lambda: f64,
    pub best_epoch: usize,
    pub val_auc: f64,
    pub test_auc: f64,
}

/// Everything recorded for one seed; serialized as `report_<seed>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub chosen_lambda: f64,
    pub knn_k: usize,
    pub n_test_anomalies: usize,
    pub n_test_normals: usize,
    pub auc: MethodAucs,
    pub lambdas: Vec<LambdaSummary>,
}

#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub report: SeedReport,
    pub split: SplitBundle,
    pub sweep: SweepResult,
    /// Test scores of the selected model.
    pub scores: ScoreReport,
}

fn knn_select(view: &SplitView<'_>) -> Result<KnnBaseline> {
    let normals = view.train_normals();
    let (vn, va) = (view.val_normals(), view.val_anomalies());
    let mut fitted = Vec::new();
    let mut candidates = Vec::new();
    for &k in KNN_GRID.iter().filter(|&&k| k <= normals.len()) {
        let model = KnnBaseline::fit(&normals, k)?;
        let sn = vn.iter().map(|x| model.score(x)).collect::<Result<Vec<_>>>()?;
        let sa = va.iter().map(|x| model.score(x)).collect::<Result<Vec<_>>>()?;
        // select_lambda's tie rule (smaller key) prefers fewer neighbors
        candidates.push((k as f64, crate::eval::auc(&sa, &sn)?));
        fitted.push(model);
    }
    let i = select_lambda(&candidates).expect("k = 1 always fits");
    Ok(fitted.swap_remove(i))
}

/// Runs the full protocol for one seed on an already normalized dataset.
pub fn run_seed(ds: &Dataset, cfg: &ProtocolConfig, seed: u64) -> Result<SeedOutcome> {
    let bundle = split(ds, seed, cfg.n_train_anom, cfg.n_val_anom)?;
    let view = SplitView::new(ds, &bundle);
    let spec = ModelSpec { seed, ..cfg.model };
    let init = spec.build(ds.dim(), ds.all_binary())?;
    let train_cfg = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let mut sweep = sweep_lambda(&init, &view, &train_cfg)?;
    if sweep.run_for(0.0).is_none() {
        let (params, report) = train(&init, &view, &train_cfg, 0.0)?;
        sweep.runs.push(LambdaRun {
            lambda: 0.0,
            params,
            report,
        });
    }
    let test = bundle.test_indices();
    let mut lambdas = Vec::with_capacity(sweep.runs.len());
    for run in &sweep.runs {
        lambdas.push(LambdaSummary {
            lambda: run.lambda,
            best_epoch: run.report.best_epoch,
            val_auc: run.report.best_val_auc,
            test_auc: evaluate(&run.params, ds, &test)?.auc,
        });
    }
    let scores = evaluate(&sweep.best().params, ds, &test)?;
    let made_auc = lambdas
        .iter()
        .find(|l| l.lambda == 0.0)
        .expect("lambda 0 trained")
        .test_auc;

    let gaussian = GaussianBaseline::fit(&view.train_normals())?;
    let gaussian_auc = evaluate_with(|x| gaussian.score(x), ds, &test)?.auc;
    let knn = knn_select(&view)?;
    let knn_auc = evaluate_with(|x| knn.score(x), ds, &test)?.auc;

    let report = SeedReport {
        seed,
        chosen_lambda: sweep.chosen_lambda(),
        knn_k: knn.k(),
        n_test_anomalies: scores.n_anomalies,
        n_test_normals: scores.n_normals,
        auc: MethodAucs {
            proposed: scores.auc,
            made: made_auc,
            gaussian: gaussian_auc,
            knn: knn_auc,
        },
        lambdas,
    };
    Ok(SeedOutcome {
        report,
        split: bundle,
        sweep,
        scores,
    })
}

/// Mean and standard error (sample standard deviation over `sqrt(n)`).
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Formats with six significant digits.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&magnitude) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

/// `method,mean_auc,std_err,n_seeds` for the four scorers.
pub fn aggregate_csv(reports: &[SeedReport]) -> String {
    let mut s = String::from("method,mean_auc,std_err,n_seeds\n");
    type Column = (&'static str, fn(&MethodAucs) -> f64);
    let columns: [Column; 4] = [
        ("proposed", |a| a.proposed),
        ("made", |a| a.made),
        ("gaussian", |a| a.gaussian),
        ("knn", |a| a.knn),
    ];
    for (name, get) in columns {
        let values: Vec<f64> = reports.iter().map(|r| get(&r.auc)).collect();
        let (mean, se) = mean_and_stderr(&values);
        let _ = writeln!(s, "{name},{},{},{}", sig6(mean), sig6(se), values.len());
    }
    s
}

//! Checks shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use std::cell::Cell;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use supmade::data::{dedup, load_csv, normalize_minmax, split, Dataset, LabelColumn, SplitBundle};
use supmade::eval::evaluate;
use supmade::experiment::ProtocolConfig;
use supmade::made::{build_masks, Conditional, Head, MadeParams, ModelSpec};
use supmade::objective::{loglik_gradient, objective_value, LabeledBatch, ObjectiveConfig};
use supmade::synth::{generate, Scenario, SynthConfig};
use supmade::train::{
    adam_step, sweep_lambda, validation_auc, AdamState, EarlyStopping, SplitView, StopDecision, TrainConfig,
    TrainingSource,
};

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Denominator floor of the relative error, as a fraction of
/// `max(1, |objective|)`. Central differences cannot resolve gradients much
/// below `eps * |f| / h`, so tiny coordinates are judged against the
/// objective's scale instead of their own.
pub const FD_REL_FLOOR: f64 = 1e-6;
pub const FD_TOLERANCE: f64 = 1e-4;

pub fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
    v.iter().map(|r| r.as_slice()).collect()
}

/// Smallest distance from zero of any hidden pre-activation, over every
/// member and row. Reads the first layer straight out of the flat layout
/// `[w1 (H x D), b1 (H), ...]`.
pub fn min_abs_preactivation(p: &MadeParams, rows: &[Vec<f64>]) -> f64 {
    let (d, h) = (p.dim(), p.hidden());
    let theta = p.theta();
    let mut closest = f64::INFINITY;
    for m in 0..p.n_members() {
        let order = p.masks().ordering_of(m);
        let degrees = &p.masks().member(m).degrees;
        for x in rows {
            for (u, &deg) in degrees.iter().enumerate().take(h) {
                let mut a = theta[h * d + u];
                for &j in &order[..deg.min(d)] {
                    a += theta[u * d + j] * x[j];
                }
                closest = closest.min(a.abs());
            }
        }
    }
    closest
}

/// Keeps every ReLU at least this far from its kink on the check batch, so
/// `±FD_STEP` probes never straddle a non-differentiable point.
pub const KINK_MARGIN: f64 = 1e-3;

/// D = 3, H = 5, K = 2 (or Bernoulli) with 2 x 2 members and parameters
/// jittered away from their structured initialization. The jitter is
/// redrawn until no pre-activation on `rows` lies within [`KINK_MARGIN`].
pub fn tiny_model(binary: bool, seed: u64, rows: &[Vec<f64>]) -> MadeParams {
    let masks = build_masks(3, 5, 2, 2, seed).unwrap();
    let head = if binary {
        Head::Bernoulli
    } else {
        Head::GaussianMixture { components: 2 }
    };
    let base = MadeParams::init(masks, head, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    loop {
        let mut p = base.clone();
        for w in p.theta_mut() {
            *w += rng.random_range(-0.5..0.5);
        }
        if min_abs_preactivation(&p, rows) >= KINK_MARGIN {
            return p;
        }
    }
}

pub fn random_rows(n: usize, d: usize, binary: bool, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..d)
                .map(|_| {
                    if binary {
                        f64::from(u8::from(rng.random::<bool>()))
                    } else {
                        rng.random::<f64>()
                    }
                })
                .collect()
        })
        .collect()
}

/// Max relative error between the analytic gradient of the objective and
/// central differences, over every parameter.
pub fn fd_max_rel_error(binary: bool, lambda: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(7));
    let normals = random_rows(6, 3, binary, &mut rng);
    let anomalies = random_rows(3, 3, binary, &mut rng);
    let all: Vec<Vec<f64>> = normals.iter().chain(&anomalies).cloned().collect();
    let params = tiny_model(binary, seed, &all);
    let batch = LabeledBatch::new(refs(&normals), refs(&anomalies)).unwrap();
    let cfg = ObjectiveConfig::new(lambda).unwrap();
    let g = supmade::objective::gradient(&params, &batch, &cfg).unwrap();
    let floor = FD_REL_FLOOR * g.value.abs().max(1.0);
    let analytic = g.grad;

    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let w = params.theta()[i];
        probe.theta_mut()[i] = w + FD_STEP;
        let up = objective_value(&probe, &batch, &cfg).unwrap();
        probe.theta_mut()[i] = w - FD_STEP;
        let down = objective_value(&probe, &batch, &cfg).unwrap();
        probe.theta_mut()[i] = w;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        worst = worst.max(rel);
    }
    worst
}

fn same_bits(a: &Conditional, b: &Conditional) -> bool {
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    match (a, b) {
        (
            Conditional::Mixture {
                weights: w1,
                means: m1,
                variances: v1,
            },
            Conditional::Mixture {
                weights: w2,
                means: m2,
                variances: v2,
            },
        ) => bits(w1) == bits(w2) && bits(m1) == bits(m2) && bits(v1) == bits(v2),
        (Conditional::Bernoulli { prob: p1 }, Conditional::Bernoulli { prob: p2 }) => p1.to_bits() == p2.to_bits(),
        _ => false,
    }
}

/// Counts (member, attribute, perturbed coordinate) triples where changing a
/// coordinate at or after the attribute in the member's ordering changed the
/// attribute's conditional in any bit. Also returns the number of triples
/// checked.
pub fn autoregressive_violations(dim: usize, hidden: usize, seed: u64) -> (usize, usize) {
    let masks = build_masks(dim, hidden, 10, 10, seed).unwrap();
    let params = MadeParams::init(masks, Head::GaussianMixture { components: 3 }, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
    let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    let (mut bad, mut checked) = (0, 0);
    for m in 0..params.n_members() {
        let base = params.forward_conditionals(&x, m).unwrap();
        let order = params.masks().ordering_of(m).to_vec();
        for (pos, &j) in order.iter().enumerate() {
            let mut y = x.clone();
            y[j] += rng.random_range(0.5..5.0);
            let moved = params.forward_conditionals(&y, m).unwrap();
            // j is at or after every attribute up to its own position
            for &d in &order[..=pos] {
                checked += 1;
                if !same_bits(&base.attributes[d], &moved.attributes[d]) {
                    bad += 1;
                }
            }
        }
    }
    (bad, checked)
}

pub const QUAD_POINTS: usize = 10_001;

/// Trapezoid integral of one mixture conditional over
/// `[min mean - 8 max sd, max mean + 8 max sd]`.
pub fn integrate_mixture(c: &Conditional) -> f64 {
    let Conditional::Mixture { means, variances, .. } = c else {
        panic!("not a mixture");
    };
    let sd = variances.iter().cloned().fold(0.0, f64::max).sqrt();
    let lo = means.iter().cloned().fold(f64::INFINITY, f64::min) - 8.0 * sd;
    let hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 8.0 * sd;
    let step = (hi - lo) / (QUAD_POINTS - 1) as f64;
    let mut total = 0.0;
    for i in 0..QUAD_POINTS {
        let w = if i == 0 || i == QUAD_POINTS - 1 { 0.5 } else { 1.0 };
        total += w * c.log_prob(lo + step * i as f64).exp();
    }
    total * step
}

/// Random-parameter conditionals: worst `|integral - 1|` over every
/// attribute of every member for one model and prefix draw.
pub fn mixture_normalization_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.random_range(1..6);
    let k = rng.random_range(1..5);
    let masks = build_masks(dim, 8, 2, 2, seed).unwrap();
    let mut p = MadeParams::init(masks, Head::GaussianMixture { components: k }, seed).unwrap();
    for w in p.theta_mut() {
        *w += rng.random_range(-1.0..1.0);
    }
    let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    let mut worst: f64 = 0.0;
    for m in 0..p.n_members() {
        for c in &p.forward_conditionals(&x, m).unwrap().attributes {
            worst = worst.max((integrate_mixture(c) - 1.0).abs());
        }
    }
    worst
}

/// Whether `p(0) + p(1) == 1` exactly for every Bernoulli conditional.
pub fn bernoulli_masses_exact(seed: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.random_range(1..6);
    let masks = build_masks(dim, 8, 2, 2, seed).unwrap();
    let mut p = MadeParams::init(masks, Head::Bernoulli, seed).unwrap();
    for w in p.theta_mut() {
        *w += rng.random_range(-3.0..3.0);
    }
    let x: Vec<f64> = (0..dim).map(|_| f64::from(u8::from(rng.random::<bool>()))).collect();
    (0..p.n_members()).all(|m| {
        p.forward_conditionals(&x, m)
            .unwrap()
            .attributes
            .iter()
            .all(|c| match c {
                Conditional::Bernoulli { prob } => *prob + (1.0 - *prob) == 1.0,
                _ => false,
            })
    })
}

/// Indicator double loop with half credit for ties.
pub fn double_loop_auc(a: &[f64], n: &[f64]) -> f64 {
    let mut total = 0.0;
    for &x in a {
        for &y in n {
            total += if x > y {
                1.0
            } else if x == y {
                0.5
            } else {
                0.0
            };
        }
    }
    total / (a.len() * n.len()) as f64
}

/// Tie-free scores on a 0.01 grid, so every pairwise gap is at least 0.01.
pub fn tie_free(n_a: usize, n_n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut levels: Vec<i32> = (0..10_000).collect();
    levels.shuffle(&mut rng);
    let v: Vec<f64> = levels[..n_a + n_n].iter().map(|&k| k as f64 / 100.0 - 50.0).collect();
    (v[..n_a].to_vec(), v[n_a..].to_vec())
}

/// Wraps a source and counts reads of the training anomalies.
pub struct CountingSource<'a> {
    pub inner: SplitView<'a>,
    pub anomaly_reads: Cell<usize>,
}

impl<'a> CountingSource<'a> {
    pub fn new(inner: SplitView<'a>) -> Self {
        Self {
            inner,
            anomaly_reads: Cell::new(0),
        }
    }
}

impl TrainingSource for CountingSource<'_> {
    fn train_normals(&self) -> Vec<&[f64]> {
        self.inner.train_normals()
    }

    fn train_anomalies(&self) -> Vec<&[f64]> {
        self.anomaly_reads.set(self.anomaly_reads.get() + 1);
        self.inner.train_anomalies()
    }

    fn val_normals(&self) -> Vec<&[f64]> {
        self.inner.val_normals()
    }

    fn val_anomalies(&self) -> Vec<&[f64]> {
        self.inner.val_anomalies()
    }
}

/// Plain maximum-likelihood training loop written against the public
/// building blocks only: it never touches the pairwise term. Returns the
/// best-epoch parameters and the validation AUC trajectory.
pub fn reference_mle(init: &MadeParams, data: &impl TrainingSource, cfg: &TrainConfig) -> (MadeParams, Vec<f64>) {
    let normals = data.train_normals();
    let (vn, va) = (data.val_normals(), data.val_anomalies());
    let mut params = init.clone();
    let mut adam = AdamState::new(params.n_params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..normals.len()).collect();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = params.clone();
    let mut trajectory = Vec::new();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let rows: Vec<&[f64]> = chunk.iter().map(|&i| normals[i]).collect();
            let g = loglik_gradient(&params, &rows).unwrap();
            adam_step(params.theta_mut(), &mut adam, &g.grad, cfg).unwrap();
        }
        let auc = validation_auc(&params, &vn, &va).unwrap();
        trajectory.push(auc);
        match stopper.observe(epoch, auc) {
            StopDecision::Improved => best = params.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }
    (best, trajectory)
}

pub fn pima_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/pima.csv")
}

/// Deduplicated, min-max normalized Pima diabetes data.
pub fn pima() -> Dataset {
    let raw = load_csv(pima_path(), &LabelColumn::Name("class".into())).unwrap();
    normalize_minmax(&dedup(&raw)).0
}

/// Normalized inside-cluster toy data for one seed.
pub fn inside_cluster(seed: u64) -> Dataset {
    let raw = generate(Scenario::InsideCluster, &SynthConfig::default(), seed).unwrap();
    normalize_minmax(&raw).0
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, Copy)]
pub struct InsideClusterSeed {
    pub chosen_lambda: f64,
    /// All held-out anomalies score above the median held-out normal.
    pub supervised_detects: bool,
    pub unsupervised_detects: bool,
}

fn detects_all(params: &MadeParams, ds: &Dataset, split: &SplitBundle) -> bool {
    let r = evaluate(params, ds, &split.test_indices()).unwrap();
    let med = median(&r.normal_scores());
    r.anomaly_scores().iter().all(|&a| a > med)
}

/// One seed of the inside-cluster experiment: 3 training and 3 validation
/// anomalies, grid `{0, 1e3}`, default model and training settings.
pub fn inside_cluster_seed(seed: u64) -> InsideClusterSeed {
    let ds = inside_cluster(seed);
    let bundle = split(&ds, seed, 3, 3).unwrap();
    let view = SplitView::new(&ds, &bundle);
    let init = ModelSpec {
        seed,
        ..ModelSpec::default()
    }
    .build(1, false)
    .unwrap();
    let cfg = TrainConfig {
        seed,
        lambda_grid: vec![0.0, 1e3],
        ..TrainConfig::default()
    };
    let sweep = sweep_lambda(&init, &view, &cfg).unwrap();
    InsideClusterSeed {
        chosen_lambda: sweep.chosen_lambda(),
        supervised_detects: detects_all(&sweep.best().params, &ds, &bundle),
        unsupervised_detects: detects_all(&sweep.run_for(0.0).unwrap().params, &ds, &bundle),
    }
}

/// Protocol used for the real-data direction check. The network is smaller
/// than the default (H = 200, 5 x 5 members instead of 500 and 10 x 10) so
/// ten seeds fit the time budget on a single core.
pub fn pima_protocol() -> ProtocolConfig {
    ProtocolConfig {
        n_train_anom: 3,
        n_val_anom: 3,
        model: ModelSpec {
            hidden: 200,
            n_orderings: 5,
            n_masks: 5,
            ..ModelSpec::default()
        },
        train: TrainConfig::default(),
    }
}

//! Run settings merged from an optional `key=value` file and command-line
//! flags. Flags win. Keys are the long flag names; `_` and `-` are
//! interchangeable.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;

use supmade::made::ModelSpec;
use supmade::train::{TrainConfig, DEFAULT_LAMBDA_GRID};
use supmade::{Error, Result};

/// Every setting, as a flag. Values are parsed after merging with the
/// config file so both sources share one set of error messages.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// key=value file supplying defaults for any of the flags below
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// input CSV with a header row
    #[arg(long, global = true)]
    pub data: Option<String>,
    /// label column name or 0-based index (default: label)
    #[arg(long, global = true)]
    pub label: Option<String>,
    /// seed list: `0..9` (inclusive) or `1,4,7` (default: 0..9)
    #[arg(long, global = true)]
    pub seeds: Option<String>,
    /// single seed for train, sweep and synth (default: 0)
    #[arg(long, global = true)]
    pub seed: Option<String>,
    /// regularization weight for train (default 0) and synth (default 1000)
    #[arg(long, global = true)]
    pub lambda: Option<String>,
    /// comma-separated weights tried by sweep and experiment
    #[arg(long = "lambda-grid", global = true)]
    pub lambda_grid: Option<String>,
    /// labeled anomalies used for training (default: 3)
    #[arg(long = "train-anoms", global = true)]
    pub train_anoms: Option<String>,
    /// labeled anomalies used for validation (default: 3)
    #[arg(long = "val-anoms", global = true)]
    pub val_anoms: Option<String>,
    /// output directory (default: out)
    #[arg(long, global = true)]
    pub out: Option<String>,
    /// maximum training epochs (default: 100)
    #[arg(long, global = true)]
    pub epochs: Option<String>,
    /// ADAM learning rate (default: 1e-3)
    #[arg(long, global = true)]
    pub lr: Option<String>,
    /// minibatch size (default: 64)
    #[arg(long = "batch-size", global = true)]
    pub batch_size: Option<String>,
    /// early-stopping patience in epochs (default: 10)
    #[arg(long, global = true)]
    pub patience: Option<String>,
    /// hidden units (default: 500)
    #[arg(long, global = true)]
    pub hidden: Option<String>,
    /// mixture components per attribute (default: 3)
    #[arg(long, global = true)]
    pub components: Option<String>,
    /// masks per ordering (default: 10)
    #[arg(long, global = true)]
    pub masks: Option<String>,
    /// attribute orderings (default: 10)
    #[arg(long, global = true)]
    pub orderings: Option<String>,
    /// model file read by score (default: <out>/model.bin)
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// norm-stats file read by score (default: the one named in the model)
    #[arg(long, global = true)]
    pub stats: Option<String>,
    /// synthetic geometry: inside_cluster, outside_cluster or both
    #[arg(long, global = true)]
    pub scenario: Option<String>,
}

const KEYS: [&str; 21] = [
    "data",
    "label",
    "seeds",
    "seed",
    "lambda",
    "lambda-grid",
    "train-anoms",
    "val-anoms",
    "out",
    "epochs",
    "lr",
    "batch-size",
    "patience",
    "hidden",
    "components",
    "masks",
    "orderings",
    "model",
    "stats",
    "scenario",
    "config",
];

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| invalid(format!("config line {}: expected key=value", n + 1)))?;
        let key = k.trim().replace('_', "-");
        if !KEYS.contains(&key.as_str()) || key == "config" {
            return Err(invalid(format!("config line {}: unknown key {key:?}", n + 1)));
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

/// `a..b` (inclusive) or a comma list; must be non-empty.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || invalid(format!("seeds: cannot parse {s:?}"));
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        (a..=b).collect()
    } else {
        s.split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| t.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        return Err(invalid("seed list is empty"));
    }
    Ok(seeds)
}

pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let grid: Vec<f64> = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| invalid(format!("lambda-grid: cannot parse {t:?}")))
        })
        .collect::<Result<_>>()?;
    if grid.is_empty() {
        return Err(invalid("lambda grid is empty"));
    }
    Ok(grid)
}

/// Fully resolved settings.
#[derive(Debug, Clone)]
pub struct Settings {
    pub data: Option<PathBuf>,
    pub label: String,
    pub seeds: Vec<u64>,
    pub seed: u64,
    pub lambda: Option<f64>,
    pub n_train_anom: usize,
    pub n_val_anom: usize,
    pub out: PathBuf,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub model_path: Option<PathBuf>,
    pub stats_path: Option<PathBuf>,
    pub scenario: String,
}

struct Values(BTreeMap<String, String>);

impl Values {
    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| invalid(format!("{key}: cannot parse {v:?}"))),
        }
    }

    fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.0
            .get(key)
            .map(|v| v.parse().map_err(|_| invalid(format!("{key}: cannot parse {v:?}"))))
            .transpose()
    }
}

impl Settings {
    pub fn resolve(flags: &Overrides) -> Result<Self> {
        let mut map = match &flags.config {
            Some(path) => {
                if !path.exists() {
                    return Err(Error::MissingFile(path.clone()));
                }
                parse_config(&fs::read_to_string(path)?)?
            }
            None => BTreeMap::new(),
        };
        let given = [
            ("data", &flags.data),
            ("label", &flags.label),
            ("seeds", &flags.seeds),
            ("seed", &flags.seed),
            ("lambda", &flags.lambda),
            ("lambda-grid", &flags.lambda_grid),
            ("train-anoms", &flags.train_anoms),
            ("val-anoms", &flags.val_anoms),
            ("out", &flags.out),
            ("epochs", &flags.epochs),
            ("lr", &flags.lr),
            ("batch-size", &flags.batch_size),
            ("patience", &flags.patience),
            ("hidden", &flags.hidden),
            ("components", &flags.components),
            ("masks", &flags.masks),
            ("orderings", &flags.orderings),
            ("model", &flags.model),
            ("stats", &flags.stats),
            ("scenario", &flags.scenario),
        ];
        for (key, value) in given {
            if let Some(v) = value {
                map.insert(key.to_string(), v.clone());
            }
        }
        let v = Values(map);

        let defaults = ModelSpec::default();
        let seed = v.get("seed", 0u64)?;
        let model = ModelSpec {
            hidden: v.get("hidden", defaults.hidden)?,
            components: v.get("components", defaults.components)?,
            n_orderings: v.get("orderings", defaults.n_orderings)?,
            n_masks: v.get("masks", defaults.n_masks)?,
            seed,
        };
        let td = TrainConfig::default();
        let train = TrainConfig {
            learning_rate: v.get("lr", td.learning_rate)?,
            max_epochs: v.get("epochs", td.max_epochs)?,
            batch_size: v.get("batch-size", td.batch_size)?,
            patience: v.get("patience", td.patience)?,
            seed,
            lambda_grid: match v.0.get("lambda-grid") {
                Some(g) => parse_grid(g)?,
                None => DEFAULT_LAMBDA_GRID.to_vec(),
            },
            ..td
        };
        train.validate()?;
        Ok(Settings {
            data: v.opt::<String>("data")?.map(PathBuf::from),
            label: v.get("label", "label".to_string())?,
            seeds: parse_seeds(v.0.get("seeds").map(String::as_str).unwrap_or("0..9"))?,
            seed,
            lambda: v.opt("lambda")?,
            n_train_anom: v.get("train-anoms", 3usize)?,
            n_val_anom: v.get("val-anoms", 3usize)?,
            out: PathBuf::from(v.get("out", "out".to_string())?),
            model,
            train,
            model_path: v.opt::<String>("model")?.map(PathBuf::from),
            stats_path: v.opt::<String>("stats")?.map(PathBuf::from),
            scenario: v.get("scenario", "inside_cluster".to_string())?,
        })
    }

    pub fn data_path(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| invalid("missing required setting: data"))
    }
}

mod settings;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use supmade::data::{dedup, load_csv, normalize_minmax, split, Dataset, LabelColumn, NormStats};
use supmade::eval::{evaluate, evaluate_with};
use supmade::experiment::{aggregate_csv, run_seed, sig6, ProtocolConfig};
use supmade::made::persist::ModelFile;
use supmade::made::{MadeParams, ModelSpec};
use supmade::synth::{generate, grid, Scenario, SynthConfig};
use supmade::train::{sweep_lambda, train, SplitView};

use settings::{Overrides, Settings};

const MODEL_FILE: &str = "model.bin";
const STATS_FILE: &str = "norm_stats.txt";
const PROFILE_POINTS: usize = 501;

#[derive(Debug, Parser)]
#[command(
    name = "supmade",
    version,
    about = "Supervised anomaly detection with masked autoregressive density models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    settings: Overrides,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one model with a fixed lambda on the split given by --seed.
    Train,
    /// Train one model per lambda in the grid and keep the best on validation.
    Sweep,
    /// Score every row of --data with a saved model.
    Score,
    /// Run the full protocol for every seed and aggregate test AUCs.
    Experiment,
    /// Write a 1-D labeled toy dataset and a score profile for plotting.
    Synth,
}

/// Loads, deduplicates and normalizes a labeled CSV.
fn prepare(s: &Settings) -> Result<(Dataset, NormStats)> {
    let path = s.data_path()?;
    let label: LabelColumn = s.label.parse()?;
    let raw = load_csv(path, &label)?;
    let unique = dedup(&raw);
    if unique.len() < raw.len() {
        eprintln!("dropped {} duplicate rows", raw.len() - unique.len());
    }
    Ok(normalize_minmax(&unique))
}

fn out_dir(s: &Settings) -> Result<&Path> {
    fs::create_dir_all(&s.out)
        .map_err(supmade::Error::from)
        .with_context(|| format!("cannot create output directory {}", s.out.display()))?;
    Ok(&s.out)
}

fn write(path: impl AsRef<Path>, contents: impl AsRef<[u8]>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, contents)
        .map_err(supmade::Error::from)
        .with_context(|| format!("cannot write {}", path.display()))
}

fn init_model(s: &Settings, ds: &Dataset, seed: u64) -> Result<MadeParams> {
    Ok(ModelSpec { seed, ..s.model }.build(ds.dim(), ds.all_binary())?)
}

fn save_model(dir: &Path, params: &MadeParams, stats: &NormStats) -> Result<()> {
    stats.save(dir.join(STATS_FILE))?;
    ModelFile {
        params: params.clone(),
        norm_stats: STATS_FILE.to_string(),
    }
    .save(dir.join(MODEL_FILE))?;
    Ok(())
}

fn cmd_train(s: &Settings) -> Result<()> {
    let (ds, stats) = prepare(s)?;
    let bundle = split(&ds, s.seed, s.n_train_anom, s.n_val_anom)?;
    let view = SplitView::new(&ds, &bundle);
    let lambda = s.lambda.unwrap_or(0.0);
    let (params, report) = train(&init_model(s, &ds, s.seed)?, &view, &s.train, lambda)?;
    let test = evaluate(&params, &ds, &bundle.test_indices())?;
    let dir = out_dir(s)?;
    save_model(dir, &params, &stats)?;
    write(dir.join("train_report.csv"), report.to_csv())?;
    write(dir.join(format!("scores_{}.csv", s.seed)), test.to_csv())?;
    println!(
        "lambda {} best_epoch {} val_auc {} test_auc {}",
        sig6(lambda),
        report.best_epoch,
        sig6(report.best_val_auc),
        sig6(test.auc)
    );
    Ok(())
}

fn cmd_sweep(s: &Settings) -> Result<()> {
    let (ds, stats) = prepare(s)?;
    let bundle = split(&ds, s.seed, s.n_train_anom, s.n_val_anom)?;
    let view = SplitView::new(&ds, &bundle);
    let sweep = sweep_lambda(&init_model(s, &ds, s.seed)?, &view, &s.train)?;
    let dir = out_dir(s)?;
    let mut table = String::from("lambda,best_epoch,val_auc\n");
    for run in &sweep.runs {
        let _ = writeln!(
            table,
            "{},{},{}",
            run.lambda, run.report.best_epoch, run.report.best_val_auc
        );
        println!(
            "lambda {} best_epoch {} val_auc {}",
            sig6(run.lambda),
            run.report.best_epoch,
            sig6(run.report.best_val_auc)
        );
    }
    write(dir.join("sweep.csv"), table)?;
    let best = sweep.best();
    save_model(dir, &best.params, &stats)?;
    write(dir.join("train_report.csv"), best.report.to_csv())?;
    let test = evaluate(&best.params, &ds, &bundle.test_indices())?;
    write(dir.join(format!("scores_{}.csv", s.seed)), test.to_csv())?;
    println!("chosen lambda {} test_auc {}", sig6(best.lambda), sig6(test.auc));
    Ok(())
}

fn cmd_score(s: &Settings) -> Result<()> {
    let model_path = s.model_path.clone().unwrap_or_else(|| s.out.join(MODEL_FILE));
    let model = ModelFile::load(&model_path)?;
    let stats_path = s.stats_path.clone().unwrap_or_else(|| {
        model_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&model.norm_stats)
    });
    let stats = NormStats::load(&stats_path)?;
    let label: LabelColumn = s.label.parse()?;
    let ds = stats.apply_dataset(&load_csv(s.data_path()?, &label)?)?;
    let all: Vec<usize> = (0..ds.len()).collect();
    let dir = out_dir(s)?;
    if ds.n_anomalies() > 0 && ds.n_normals() > 0 {
        let report = evaluate(&model.params, &ds, &all)?;
        write(dir.join("scores.csv"), report.to_csv())?;
        write(
            dir.join("scores_summary.json"),
            serde_json::to_string_pretty(&report.summary(None, None))?,
        )?;
        println!("scored {} rows auc {}", ds.len(), sig6(report.auc));
    } else {
        // single-class input: scores only, no AUC
        let mut csv = String::from("index,label,score\n");
        for i in all {
            let score = model.params.anomaly_score(ds.row(i))?;
            let _ = writeln!(csv, "{i},{},{score}", ds.label(i));
        }
        write(dir.join("scores.csv"), csv)?;
        println!("scored {} rows", ds.len());
    }
    Ok(())
}

fn cmd_experiment(s: &Settings) -> Result<()> {
    let (ds, _) = prepare(s)?;
    let cfg = ProtocolConfig {
        n_train_anom: s.n_train_anom,
        n_val_anom: s.n_val_anom,
        model: s.model,
        train: s.train.clone(),
    };
    let dir = out_dir(s)?;
    let mut reports = Vec::with_capacity(s.seeds.len());
    for &seed in &s.seeds {
        let outcome = run_seed(&ds, &cfg, seed)?;
        let r = &outcome.report;
        println!(
            "seed {seed} lambda {} proposed {} made {} gaussian {} knn {}",
            sig6(r.chosen_lambda),
            sig6(r.auc.proposed),
            sig6(r.auc.made),
            sig6(r.auc.gaussian),
            sig6(r.auc.knn)
        );
        write(
            dir.join(format!("report_{seed}.json")),
            serde_json::to_string_pretty(r)?,
        )?;
        write(dir.join(format!("scores_{seed}.csv")), outcome.scores.to_csv())?;
        reports.push(outcome.report);
    }
    let aggregate = aggregate_csv(&reports);
    write(dir.join("aggregate.csv"), &aggregate)?;
    print!("{aggregate}");
    Ok(())
}

fn cmd_synth(s: &Settings) -> Result<()> {
    let scenario: Scenario = s.scenario.parse()?;
    let raw = generate(scenario, &SynthConfig::default(), s.seed)?;
    let dir = out_dir(s)?;
    let mut csv = String::from("x,label\n");
    for i in 0..raw.len() {
        let _ = writeln!(csv, "{},{}", raw.row(i)[0], raw.label(i));
    }
    write(dir.join(format!("synth_{scenario}_{}.csv", s.seed)), csv)?;

    let (ds, stats) = normalize_minmax(&raw);
    let bundle = split(&ds, s.seed, s.n_train_anom, s.n_val_anom)?;
    let view = SplitView::new(&ds, &bundle);
    let init = init_model(s, &ds, s.seed)?;
    let supervised_lambda = s.lambda.unwrap_or(1e3);
    let (unsup, _) = train(&init, &view, &s.train, 0.0)?;
    let (sup, _) = train(&init, &view, &s.train, supervised_lambda)?;

    let (lo, hi) = (stats.min[0], stats.max[0]);
    let mut tsv = String::from("x\tscore_unsup\tscore_sup\n");
    for x in grid(lo, hi, PROFILE_POINTS) {
        let z = stats.apply(&[x])?;
        let _ = writeln!(tsv, "{x}\t{}\t{}", unsup.anomaly_score(&z)?, sup.anomaly_score(&z)?);
    }
    write(dir.join("profile.tsv"), tsv)?;
    let test = bundle.test_indices();
    let auc_unsup = evaluate_with(|x| unsup.anomaly_score(x), &ds, &test)?.auc;
    let auc_sup = evaluate_with(|x| sup.anomaly_score(x), &ds, &test)?.auc;
    println!(
        "scenario {scenario} seed {} test_auc lambda=0 {} lambda={} {}",
        s.seed,
        sig6(auc_unsup),
        sig6(supervised_lambda),
        sig6(auc_sup)
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let s = Settings::resolve(&cli.settings)?;
    match cli.command {
        Command::Train => cmd_train(&s),
        Command::Sweep => cmd_sweep(&s),
        Command::Score => cmd_score(&s),
        Command::Experiment => cmd_experiment(&s),
        Command::Synth => cmd_synth(&s),
    }
}

/// `error: <code>: <message>` on one line.
fn error_line(err: &anyhow::Error) -> String {
    let code = err
        .chain()
        .find_map(|e| e.downcast_ref::<supmade::Error>())
        .map_or("error", supmade::Error::code);
    let message = format!("{err:#}").replace('\n', " ");
    format!("error: {code}: {message}")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let first = e.to_string();
            let first = first.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: usage: {first}");
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", error_line(&err));
            ExitCode::FAILURE
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use radsentry::baselines::Classifier;
use radsentry::config::PipelineConfig;
use radsentry::dataset::LabeledDataset;
use radsentry::evaluation::{bench_latency, compute_metrics, evaluate, format_table, write_report_csv};
use radsentry::gbdt::{GbdtParams, GradientBoostedEnsemble};
use radsentry::ingest::{read_readings, write_readings};
use radsentry::matrix::FeatureMatrix;
use radsentry::model_store::{export_compact, load_blob, save_blob};
use radsentry::pipeline::{self, Preprocessor};
use radsentry::tuning::write_trials_csv;
use radsentry::{parallel, Error};

/// Radiation sensor attack detection: data preparation, training, tuning,
/// compaction and benchmarking.
#[derive(Parser)]
#[command(name = "radsentry", version)]
struct Cli {
    /// JSON pipeline config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (1 = sequential).
    #[arg(long, global = true, env = "RADSENTRY_THREADS")]
    threads: Option<usize>,

    /// Root seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse an export CSV and keep µSv/h readings.
    Ingest {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scale and one-hot encode readings into a feature matrix.
    Preprocess {
        #[arg(long)]
        readings: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster readings and label anomalous clusters.
    Label {
        #[arg(long)]
        readings: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Add SMOTE attack rows and noise to a labeled dataset.
    Synth {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n_synthetic: Option<usize>,
    },
    /// Train one model on the training split and score it on the test split.
    Train {
        #[command(flatten)]
        split: SplitArgs,
        #[arg(long, value_enum, default_value_t = ModelKind::Gbdt)]
        model: ModelKind,
        /// GBDT parameters as JSON (for example best_params.json from `tune`).
        #[arg(long)]
        params: Option<PathBuf>,
        /// Model blob to write; GBDT only.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Random search over GBDT hyperparameters.
    Tune {
        #[command(flatten)]
        split: SplitArgs,
        #[arg(long)]
        trials: Option<usize>,
        /// Directory for trials.csv and best_params.json.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Select the columns carrying most gain and retrain on them.
    Compact {
        #[command(flatten)]
        split: SplitArgs,
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a model blob on a labeled dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Measure per-sample latency of one blob, or fit and time all models.
    Bench {
        #[command(flatten)]
        split: SplitArgs,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Report CSV for the all-model comparison.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print `label,probability` for every row of a feature matrix.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Validate a model blob and write its canonical encoding.
    Export {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every stage and write all artifacts.
    Pipeline {
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SplitArgs {
    /// Labeled dataset (matrix file with a `.labels.csv` sidecar).
    #[arg(long)]
    data: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Gbdt,
    Rf,
    Logreg,
    Svm,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn load_split(args: &SplitArgs, cfg: &PipelineConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    let data = LabeledDataset::load(&args.data)?;
    Ok(pipeline::split(&data, cfg)?)
}

fn gbdt_params(path: Option<&Path>, cfg: &PipelineConfig) -> Result<GbdtParams> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io { path: p.into(), source: e })?;
            let params: GbdtParams = serde_json::from_str(&text)?;
            params.validate()?;
            Ok(params)
        }
        None => Ok(pipeline::untuned_params(cfg)),
    }
}

fn metrics_json(m: &radsentry::evaluation::Metrics) -> Value {
    json!({ "accuracy": m.accuracy, "precision": m.precision, "recall": m.recall, "f1": m.f1 })
}

fn run(cli: &Cli) -> Result<Value> {
    let cfg = load_config(cli)?;
    Ok(match &cli.command {
        Command::Ingest { input, out } => {
            let cfg = PipelineConfig { input: input.clone().unwrap_or(cfg.input.clone()), ..cfg };
            let (readings, report) = pipeline::ingest(&cfg)?;
            let f = std::fs::File::create(out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            write_readings(std::io::BufWriter::new(f), &readings)?;
            json!({ "command": "ingest", "report": report, "out": out })
        }
        Command::Preprocess { readings, out } => {
            let readings = read_file_readings(readings)?;
            let pre = Preprocessor::fit(&readings)?;
            let m = pre.features(&readings)?;
            m.save(out)?;
            let state = out.with_extension("preprocess.json");
            pipeline::write_json(&state, &pre)?;
            json!({ "command": "preprocess", "rows": m.n_rows(), "cols": m.n_cols(), "out": out, "state": state })
        }
        Command::Label { readings, out } => {
            let readings = read_file_readings(readings)?;
            let pre = Preprocessor::fit(&readings)?;
            let labeled = pipeline::label(&readings, &pre, &cfg)?;
            labeled.dataset.save(out)?;
            json!({
                "command": "label",
                "k": labeled.search.k,
                "isolation_score": labeled.search.score,
                "flagged_rows": labeled.anomalies.n_flagged_rows(),
                "rows": labeled.dataset.len(),
                "out": out,
            })
        }
        Command::Synth { data, out, n_synthetic } => {
            let mut cfg = cfg;
            if let Some(n) = n_synthetic {
                cfg.smote.n_synthetic = *n;
            }
            let labeled = LabeledDataset::load(data)?;
            let attack = pipeline::synthesize(&labeled, &cfg)?;
            attack.save(out)?;
            json!({ "command": "synth", "rows": attack.len(), "positives": attack.n_positive(), "out": out })
        }
        Command::Train { split, model: ModelKind::Gbdt, params, out } => {
            let (train, test) = load_split(split, &cfg)?;
            let params = gbdt_params(params.as_deref(), &cfg)?;
            let model = GradientBoostedEnsemble::fit(&train.matrix, &train.labels, &params)?;
            let m = compute_metrics(&test.labels, &model.predict(&test.matrix)?)?;
            let mut summary = json!({ "command": "train", "model": "gbdt", "trees": model.trees.len(), "test": metrics_json(&m) });
            if let Some(out) = out {
                let blob = export_compact(&model)?;
                save_blob(out, &blob)?;
                summary["out"] = json!(out);
                summary["bytes"] = json!(blob.len());
            }
            summary
        }
        Command::Train { split, model, params, out } => {
            if params.is_some() || out.is_some() {
                anyhow::bail!("--params and --out apply to gbdt only; baselines are not serialized");
            }
            let name = match model {
                ModelKind::Rf => "random_forest",
                ModelKind::Logreg => "logistic_regression",
                _ => "svm",
            };
            let (train, test) = load_split(split, &cfg)?;
            let (_, spec) = pipeline::baseline_specs(&cfg).into_iter().find(|(n, _)| n == name).expect("known baseline");
            let fitted = spec.fit(&train.matrix, &train.labels)?;
            let r = evaluate(name, fitted.as_ref(), (&test.matrix, &test.labels), false)?;
            json!({ "command": "train", "model": name, "test": metrics_json(&r.metrics) })
        }
        Command::Tune { split, trials, out_dir } => {
            let mut cfg = cfg;
            if let Some(n) = trials {
                cfg.tuning.n_trials = *n;
            }
            cfg.validate()?;
            let (train, _) = load_split(split, &cfg)?;
            let result = pipeline::tune(&train, &cfg)?;
            std::fs::create_dir_all(out_dir).map_err(|e| Error::Io { path: out_dir.clone(), source: e })?;
            let trials_path = out_dir.join("trials.csv");
            let f = std::fs::File::create(&trials_path).map_err(|e| Error::Io { path: trials_path.clone(), source: e })?;
            write_trials_csv(&result.trials, f)?;
            pipeline::write_json(&out_dir.join("best_params.json"), &result.best_params)?;
            let best = &result.trials[result.best];
            json!({
                "command": "tune",
                "trials": result.trials.len(),
                "best": { "n_estimators": best.n_estimators, "max_depth": best.max_depth, "num_leaves": best.num_leaves },
                "validation_f1": best.metrics.f1,
                "untuned_validation_f1": result.untuned.f1,
                "out_dir": out_dir,
            })
        }
        Command::Compact { split, params, threshold, out } => {
            let mut cfg = cfg;
            if let Some(t) = threshold {
                cfg.compaction.gain_threshold = *t;
            }
            cfg.validate()?;
            let (train, test) = load_split(split, &cfg)?;
            let params = gbdt_params(params.as_deref(), &cfg)?;
            let full = GradientBoostedEnsemble::fit(&train.matrix, &train.labels, &params)?;
            let c = pipeline::compact(&train, &full, &params, &cfg)?;
            save_blob(out, &c.blob)?;
            let m = compute_metrics(&test.labels, &c.loaded.predict(&test.matrix)?)?;
            let names = train.matrix.column_names();
            let kept: Vec<&str> = c.selection.ranked.iter().map(|&j| names[j]).collect();
            json!({
                "command": "compact",
                "retained": kept,
                "retained_gain_share": c.selection.retained_share,
                "bytes": c.blob.len(),
                "test": metrics_json(&m),
                "out": out,
            })
        }
        Command::Eval { model, data } => {
            let m = load_blob(model)?;
            let data = LabeledDataset::load(data)?;
            let r = evaluate("model", &m, (&data.matrix, &data.labels), false)?;
            json!({ "command": "eval", "rows": data.len(), "metrics": metrics_json(&r.metrics), "degenerate": r.metrics.degenerate })
        }
        Command::Bench { split, model: Some(model), .. } => {
            let m = load_blob(model)?;
            let data = LabeledDataset::load(&split.data)?;
            let lat = bench_latency(&m, &data.matrix, 3, 10)?;
            json!({ "command": "bench", "rows": data.len(), "us_per_sample": lat.us_per_sample })
        }
        Command::Bench { split, model: None, out } => {
            let (train, test) = load_split(split, &cfg)?;
            let xy = (&test.matrix, test.labels.as_slice());
            let gbdt = GradientBoostedEnsemble::fit(&train.matrix, &train.labels, &pipeline::untuned_params(&cfg))?;
            let mut reports = vec![evaluate("gbdt", &gbdt, xy, true)?];
            for (name, spec) in pipeline::baseline_specs(&cfg) {
                let model: Box<dyn Classifier> = spec.fit(&train.matrix, &train.labels)?;
                reports.push(evaluate(&name, model.as_ref(), xy, true)?);
            }
            eprint!("{}", format_table(&reports));
            if let Some(out) = out {
                let f = std::fs::File::create(out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
                write_report_csv(&reports, f)?;
            }
            let rows: Vec<Value> = reports
                .iter()
                .map(|r| json!({ "model": r.model, "f1": r.metrics.f1, "us_per_sample": r.latency.map(|l| l.us_per_sample) }))
                .collect();
            json!({ "command": "bench", "models": rows })
        }
        Command::Predict { model, input } => {
            let m = load_blob(model)?;
            let x = FeatureMatrix::load(input)?;
            let proba = m.predict_proba(&x)?;
            let mut out = String::with_capacity(proba.len() * 12);
            for p in &proba {
                out.push_str(&format!("{},{p:.6}\n", u8::from(*p >= 0.5)));
            }
            print!("{out}");
            json!({ "command": "predict", "rows": proba.len(), "positives": proba.iter().filter(|&&p| p >= 0.5).count() })
        }
        Command::Export { model, out } => {
            let m = load_blob(model)?;
            let bytes = m.encode();
            save_blob(out, &bytes)?;
            json!({ "command": "export", "trees": m.n_trees(), "nodes": m.n_nodes(), "columns": m.columns(), "bytes": bytes.len(), "out": out })
        }
        Command::Pipeline { out_dir } => {
            let dir = out_dir.clone().unwrap_or_else(|| cfg.out_dir.clone());
            let out = pipeline::run(&cfg)?;
            pipeline::write_artifacts(&out, &dir)?;
            let gbdt = &out.reports[0].metrics;
            json!({
                "command": "pipeline",
                "out_dir": dir,
                "k": out.summary.clusters.k,
                "rows": out.attack.len(),
                "gbdt_test": metrics_json(gbdt),
                "tuned": out.summary.tuned_params,
                "retained": out.summary.retained_columns,
                "model_bytes": out.summary.compact_blob_bytes,
            })
        }
    })
}

fn read_file_readings(path: &Path) -> Result<Vec<radsentry::ingest::RadiationReading>> {
    let f = std::fs::File::open(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    Ok(read_readings(std::io::BufReader::new(f))?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.threads {
        Some(n) => parallel::with_threads(n, || run(&cli)),
        None => run(&cli),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            println!("{}", json!({ "status": "error", "message": format!("{err:#}") }));
            ExitCode::from(1)
        }
    }
}

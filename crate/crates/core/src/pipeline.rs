//! End-to-end orchestration: ingest, label, synthesize, split, train, tune,
//! compact, compare. Each stage is callable on its own for the CLI.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{Classifier, ModelSpec};
use crate::cluster_synth::{
    build_attack_dataset, label_anomalies, search_cluster_count, AnomalyKind, AnomalyLabels, ClusterSearch,
    KTrial, SmoteConfig,
};
use crate::config::{PipelineConfig, Stage};
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, format_table, split_train_test, write_report_csv, ModelReport};
use crate::gbdt::{GbdtParams, GradientBoostedEnsemble};
use crate::ingest::{filter_radiation, parse_export, write_readings, IngestReport, RadiationReading};
use crate::matrix::FeatureMatrix;
use crate::model_store::{export_compact, load_compact, CompactModel};
use crate::preprocess::{
    apply_minmax, continuous_features, fit_minmax, one_hot_encode, EncoderMap, NoiseConfig, ScalerParams,
    VALUE_COLUMN,
};
use crate::tuning::{random_search, retrain_compact, select_features, write_trials_csv, FeatureSelection, TuningResult};

pub fn ingest(cfg: &PipelineConfig) -> Result<(Vec<RadiationReading>, IngestReport)> {
    let file = File::open(&cfg.input).map_err(|e| Error::io(&cfg.input, e))?;
    let (records, mut report) = parse_export(std::io::BufReader::new(file), &cfg.schema)?;
    let readings = filter_radiation(&records, &cfg.units, &mut report);
    if readings.is_empty() {
        return Err(Error::Empty("no µSv/h readings after filtering"));
    }
    log::info!(
        "ingest: {} read, {} kept, {} malformed, {} other units",
        report.rows_read,
        report.rows_kept,
        report.rows_dropped_malformed,
        report.rows_dropped_unit
    );
    Ok((readings, report))
}

/// Fitted preprocessing state, saved alongside the model so new readings
/// can be projected the same way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub scaler: ScalerParams,
    pub encoder: EncoderMap,
}

impl Preprocessor {
    pub fn fit(readings: &[RadiationReading]) -> Result<Self> {
        Ok(Preprocessor {
            scaler: fit_minmax(&continuous_features(readings))?,
            encoder: EncoderMap::from_readings(readings),
        })
    }

    /// Scaled continuous columns only.
    pub fn continuous(&self, readings: &[RadiationReading]) -> Result<FeatureMatrix> {
        apply_minmax(&continuous_features(readings), &self.scaler)
    }

    /// Scaled continuous columns followed by the device one-hot block.
    pub fn features(&self, readings: &[RadiationReading]) -> Result<FeatureMatrix> {
        self.continuous(readings)?.hstack(&one_hot_encode(readings, &self.encoder))
    }
}

pub struct Labeled {
    pub dataset: LabeledDataset,
    pub search: ClusterSearch,
    pub anomalies: AnomalyLabels,
}

/// Clusters the scaled continuous features, labels anomalous clusters and
/// returns the full feature matrix with those labels.
pub fn label(readings: &[RadiationReading], pre: &Preprocessor, cfg: &PipelineConfig) -> Result<Labeled> {
    let continuous = pre.continuous(readings)?;
    let raw: Vec<f64> = readings.iter().map(|r| r.value_usv_h).collect();
    debug_assert_eq!(continuous.columns()[VALUE_COLUMN].name, "value_usv_h");
    let search = search_cluster_count(
        &continuous,
        &raw,
        &cfg.cluster_search,
        &cfg.kmeans,
        &cfg.anomaly,
        cfg.stage_seed(Stage::Cluster),
    )?;
    let anomalies = label_anomalies(&raw, &search.model, &cfg.anomaly)?;
    log::info!(
        "label: k = {} (isolation {:.4}), {} of {} rows flagged",
        search.k,
        search.score,
        anomalies.n_flagged_rows(),
        readings.len()
    );
    let dataset = LabeledDataset::original(pre.features(readings)?, anomalies.labels.clone())?;
    Ok(Labeled { dataset, search, anomalies })
}

pub fn synthesize(labeled: &LabeledDataset, cfg: &PipelineConfig) -> Result<LabeledDataset> {
    let smote = SmoteConfig { seed: cfg.stage_seed(Stage::Smote), ..cfg.smote.clone() };
    let noise = NoiseConfig { seed: cfg.stage_seed(Stage::Noise), ..cfg.noise.clone() };
    build_attack_dataset(labeled, &smote, &noise, cfg.stage_seed(Stage::Shuffle))
}

pub fn split(data: &LabeledDataset, cfg: &PipelineConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    let s = split_train_test(&data.labels, cfg.split.test_frac, cfg.stage_seed(Stage::Split))?;
    Ok((data.select_rows(&s.train), data.select_rows(&s.test)))
}

pub fn untuned_params(cfg: &PipelineConfig) -> GbdtParams {
    GbdtParams { seed: cfg.stage_seed(Stage::Gbdt), ..cfg.gbdt.clone() }
}

pub fn tune(train: &LabeledDataset, cfg: &PipelineConfig) -> Result<TuningResult> {
    random_search(&train.matrix, &train.labels, &untuned_params(cfg), &cfg.tuning, cfg.stage_seed(Stage::Tuning))
}

pub struct Compacted {
    pub selection: FeatureSelection,
    pub model: GradientBoostedEnsemble,
    pub blob: Vec<u8>,
    pub loaded: CompactModel,
}

/// Ranks columns by the gain of `full`, refits on the retained ones and
/// encodes the result.
pub fn compact(
    train: &LabeledDataset,
    full: &GradientBoostedEnsemble,
    params: &GbdtParams,
    cfg: &PipelineConfig,
) -> Result<Compacted> {
    let selection = select_features(&full.feature_importances, cfg.compaction.gain_threshold)?;
    let model = retrain_compact(&train.matrix, &train.labels, params, &selection)?;
    let blob = export_compact(&model)?;
    let loaded = load_compact(&blob)?;
    Ok(Compacted { selection, model, blob, loaded })
}

pub fn baseline_specs(cfg: &PipelineConfig) -> Vec<(String, ModelSpec)> {
    let b = &cfg.baselines;
    vec![
        (
            "random_forest".into(),
            ModelSpec::RandomForest(crate::baselines::ForestParams {
                seed: cfg.stage_seed(Stage::Forest),
                ..b.random_forest.clone()
            }),
        ),
        ("logistic_regression".into(), ModelSpec::LogisticRegression(b.logistic_regression.clone())),
        ("svm".into(), ModelSpec::Svm(b.svm.clone())),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSummary {
    pub k: usize,
    pub isolation_score: f64,
    pub criterion_met: bool,
    pub trials: Vec<KTrial>,
    pub flagged_rows: usize,
    pub flat_zero_clusters: usize,
    pub near_zero_clusters: usize,
    pub high_clusters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineSummary {
    pub ingest: IngestReport,
    pub clusters: ClusterSummary,
    pub original_rows: usize,
    pub synthetic_rows: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub tuned_params: (usize, usize, usize),
    pub untuned_validation_f1: f64,
    pub tuned_validation_f1: f64,
    pub retained_columns: Vec<String>,
    pub retained_gain_share: f64,
    pub compact_blob_bytes: usize,
    pub models: Vec<ModelReport>,
}

pub struct PipelineOutput {
    pub readings: Vec<RadiationReading>,
    pub preprocessor: Preprocessor,
    pub labeled: Labeled,
    pub attack: LabeledDataset,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub untuned: GradientBoostedEnsemble,
    pub tuning: TuningResult,
    pub tuned: GradientBoostedEnsemble,
    pub compacted: Compacted,
    /// Fitted comparison models, in report order after the three GBDT rows.
    pub baselines: Vec<(String, Box<dyn Classifier>)>,
    pub reports: Vec<ModelReport>,
    pub summary: PipelineSummary,
}

/// Runs every stage in memory. Nothing is written to disk.
pub fn run(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let (readings, ingest_report) = ingest(cfg)?;
    let preprocessor = Preprocessor::fit(&readings)?;
    let labeled = label(&readings, &preprocessor, cfg)?;
    let attack = synthesize(&labeled.dataset, cfg)?;
    let (train, test) = split(&attack, cfg)?;
    let test_xy = (&test.matrix, test.labels.as_slice());
    let timed = cfg.measure_latency;

    let untuned = GradientBoostedEnsemble::fit(&train.matrix, &train.labels, &untuned_params(cfg))?;
    let mut reports = vec![evaluate("gbdt", &untuned, test_xy, timed)?];

    let mut baselines: Vec<(String, Box<dyn Classifier>)> = Vec::new();
    for (name, spec) in baseline_specs(cfg) {
        let t = std::time::Instant::now();
        let model = spec.fit(&train.matrix, &train.labels)?;
        log::info!("{name}: trained in {:.1}s", t.elapsed().as_secs_f64());
        reports.push(evaluate(&name, model.as_ref(), test_xy, timed)?);
        baselines.push((name, model));
    }

    let tuning = tune(&train, cfg)?;
    let tuned = GradientBoostedEnsemble::fit(&train.matrix, &train.labels, &tuning.best_params)?;
    reports.push(evaluate("gbdt_tuned", &tuned, test_xy, timed)?);
    let compacted = compact(&train, &tuned, &tuning.best_params, cfg)?;
    reports.push(evaluate("gbdt_compact", &compacted.loaded, test_xy, timed)?);
    log::info!("\n{}", format_table(&reports));

    let kinds = &labeled.anomalies.cluster_kinds;
    let count = |k: AnomalyKind| kinds.iter().filter(|&&x| x == k).count();
    let names = attack.matrix.column_names();
    let best = &tuning.trials[tuning.best];
    let summary = PipelineSummary {
        ingest: ingest_report,
        clusters: ClusterSummary {
            k: labeled.search.k,
            isolation_score: labeled.search.score,
            criterion_met: labeled.search.criterion_met,
            trials: labeled.search.trials.clone(),
            flagged_rows: labeled.anomalies.n_flagged_rows(),
            flat_zero_clusters: count(AnomalyKind::FlatZero),
            near_zero_clusters: count(AnomalyKind::NearZero),
            high_clusters: count(AnomalyKind::High),
        },
        original_rows: labeled.dataset.len(),
        synthetic_rows: attack.len() - labeled.dataset.len(),
        train_rows: train.len(),
        test_rows: test.len(),
        tuned_params: (best.n_estimators, best.max_depth, best.num_leaves),
        untuned_validation_f1: tuning.untuned.f1,
        tuned_validation_f1: best.metrics.f1,
        retained_columns: compacted.selection.ranked.iter().map(|&j| names[j].to_string()).collect(),
        retained_gain_share: compacted.selection.retained_share,
        compact_blob_bytes: compacted.blob.len(),
        models: reports.clone(),
    };
    Ok(PipelineOutput {
        readings,
        preprocessor,
        labeled,
        attack,
        train,
        test,
        untuned,
        tuning,
        tuned,
        compacted,
        baselines,
        reports,
        summary,
    })
}

pub const MODEL_FILE: &str = "model.rds1";
pub const FULL_MODEL_FILE: &str = "model_full.rds1";
pub const REPORT_FILE: &str = "report.csv";

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes every artifact of `out` into `dir`.
pub fn write_artifacts(out: &PipelineOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_readings(create(&dir.join("readings.csv"))?, &out.readings)?;
    write_json(&dir.join("preprocess.json"), &out.preprocessor)?;
    out.labeled.dataset.save(&dir.join("labeled.csv"))?;
    out.attack.save(&dir.join("attack.csv"))?;
    out.train.save(&dir.join("train.csv"))?;
    out.test.save(&dir.join("test.csv"))?;
    write_trials_csv(&out.tuning.trials, create(&dir.join("trials.csv"))?)?;
    write_json(&dir.join("best_params.json"), &out.tuning.best_params)?;
    crate::model_store::save_blob(&dir.join(FULL_MODEL_FILE), &export_compact(&out.tuned)?)?;
    crate::model_store::save_blob(&dir.join(MODEL_FILE), &out.compacted.blob)?;
    write_report_csv(&out.reports, create(&dir.join(REPORT_FILE))?)?;
    write_json(&dir.join("summary.json"), &out.summary)?;
    Ok(())
}

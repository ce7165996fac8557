//! JSON pipeline configuration.
//!
//! Every key is optional. Relative paths resolve against the directory of
//! the config file. Stage seeds are derived from the single root `seed`;
//! `seed` fields inside stage sections are ignored.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{ForestParams, LogRegParams, SvmParams};
use crate::cluster_synth::{AnomalyRules, ClusterSearchConfig, KMeansConfig, SmoteConfig};
use crate::error::{Error, Result};
use crate::gbdt::GbdtParams;
use crate::ingest::{SchemaMapping, UnitFilter};
use crate::preprocess::NoiseConfig;
use crate::tuning::TuningConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Cluster,
    Smote,
    Noise,
    Shuffle,
    Split,
    Gbdt,
    Tuning,
    Forest,
    Svm,
}

impl Stage {
    fn offset(self) -> u64 {
        match self {
            Stage::Cluster => 1,
            Stage::Smote => 2,
            Stage::Noise => 3,
            Stage::Shuffle => 4,
            Stage::Split => 5,
            Stage::Gbdt => 6,
            Stage::Tuning => 7,
            Stage::Forest => 8,
            Stage::Svm => 9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub test_frac: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { test_frac: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompactionConfig {
    pub gain_threshold: f64,
}

impl Default for CompactionConfig {
    fn default() -> Self {
        CompactionConfig { gain_threshold: 0.9 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub random_forest: ForestParams,
    pub logistic_regression: LogRegParams,
    pub svm: SvmParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub schema: SchemaMapping,
    pub units: UnitFilter,
    pub anomaly: AnomalyRules,
    pub cluster_search: ClusterSearchConfig,
    pub kmeans: KMeansConfig,
    pub smote: SmoteConfig,
    pub noise: NoiseConfig,
    pub split: SplitConfig,
    /// Parameters of the untuned reference model; the tuned model takes the
    /// searched values over these.
    pub gbdt: GbdtParams,
    pub tuning: TuningConfig,
    pub compaction: CompactionConfig,
    pub baselines: BaselineConfig,
    /// Fill `pred_time_us` in the pipeline report. Off by default so the
    /// report is reproducible byte for byte.
    pub measure_latency: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: PathBuf::from("desk_export.csv"),
            out_dir: PathBuf::from("out"),
            seed: 42,
            schema: SchemaMapping::default(),
            units: UnitFilter::default(),
            anomaly: AnomalyRules::default(),
            cluster_search: ClusterSearchConfig::default(),
            kmeans: KMeansConfig::default(),
            smote: SmoteConfig::default(),
            noise: NoiseConfig::default(),
            split: SplitConfig::default(),
            gbdt: GbdtParams::default(),
            tuning: TuningConfig::default(),
            compaction: CompactionConfig::default(),
            baselines: BaselineConfig::default(),
            measure_latency: false,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.input = base.join(&cfg.input);
        cfg.out_dir = base.join(&cfg.out_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn stage_seed(&self, stage: Stage) -> u64 {
        self.seed.wrapping_add(stage.offset())
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == self.out_dir {
            return Err(Error::param("input and out_dir must differ"));
        }
        self.anomaly.validate()?;
        self.noise.validate()?;
        self.gbdt.validate()?;
        self.tuning.space.validate()?;
        if self.tuning.n_trials == 0 {
            return Err(Error::param("tuning.n_trials must be at least 1"));
        }
        for (name, f) in [("split.test_frac", self.split.test_frac), ("tuning.validation_frac", self.tuning.validation_frac)] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::param(format!("{name} {f} outside (0, 1)")));
            }
        }
        let g = self.compaction.gain_threshold;
        if !(g > 0.0 && g <= 1.0) {
            return Err(Error::param(format!("compaction.gain_threshold {g} outside (0, 1]")));
        }
        let cs = &self.cluster_search;
        if cs.k_min == 0 || cs.k_min > cs.k_max {
            return Err(Error::param(format!("cluster_search k range [{}, {}] is empty", cs.k_min, cs.k_max)));
        }
        if self.smote.k_neighbors == 0 {
            return Err(Error::param("smote.k_neighbors must be at least 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_fills_defaults_and_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cfg.json");
        std::fs::write(&p, r#"{"input": "x.csv", "seed": 7, "smote": {"n_synthetic": 10}}"#).unwrap();
        let cfg = PipelineConfig::load(&p).unwrap();
        assert_eq!(cfg.input, dir.path().join("x.csv"));
        assert_eq!(cfg.out_dir, dir.path().join("out"));
        assert_eq!(cfg.smote.n_synthetic, 10);
        assert_eq!(cfg.smote.k_neighbors, 5);
        assert_eq!(cfg.stage_seed(Stage::Smote), 9);
    }

    #[test]
    fn unknown_keys_and_bad_values_fail() {
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"sed": 1}"#).is_err());
        let cfg = PipelineConfig { split: SplitConfig { test_frac: 1.5 }, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn missing_file_names_path() {
        let err = PipelineConfig::load(Path::new("/nonexistent/cfg.json")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/cfg.json"));
    }
}

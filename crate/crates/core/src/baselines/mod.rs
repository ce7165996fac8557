//! Comparison classifiers and a common prediction interface.

mod forest;
mod logistic;
mod svm;

use serde::{Deserialize, Serialize};

pub use forest::{ForestParams, RandomForest};
pub use logistic::{logistic_loss_grad, LogRegParams, LogisticRegression};
pub use svm::{gamma_scale, hinge_objective_grad, Kernel, LinearSvm, RbfSvm, SvmParams};

use crate::error::Result;
use crate::gbdt::{GbdtParams, GradientBoostedEnsemble};
use crate::matrix::FeatureMatrix;
use crate::model_store::CompactModel;

pub trait Classifier: Send + Sync {
    fn predict(&self, matrix: &FeatureMatrix) -> Result<Vec<u8>>;
}

impl Classifier for GradientBoostedEnsemble {
    fn predict(&self, matrix: &FeatureMatrix) -> Result<Vec<u8>> {
        GradientBoostedEnsemble::predict(self, matrix)
    }
}

impl Classifier for CompactModel {
    fn predict(&self, matrix: &FeatureMatrix) -> Result<Vec<u8>> {
        CompactModel::predict(self, matrix)
    }
}

impl Classifier for RandomForest {
    fn predict(&self, matrix: &FeatureMatrix) -> Result<Vec<u8>> {
        RandomForest::predict(self, matrix)
    }
}

impl Classifier for LogisticRegression {
    fn predict(&self, matrix: &FeatureMatrix) -> Result<Vec<u8>> {
        LogisticRegression::predict(self, matrix)
    }
}

impl Classifier for LinearSvm {
    fn predict(&self, matrix: &FeatureMatrix) -> Result<Vec<u8>> {
        LinearSvm::predict(self, matrix)
    }
}

impl Classifier for RbfSvm {
    fn predict(&self, matrix: &FeatureMatrix) -> Result<Vec<u8>> {
        RbfSvm::predict(self, matrix)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    Gbdt(GbdtParams),
    RandomForest(ForestParams),
    LogisticRegression(LogRegParams),
    Svm(SvmParams),
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Gbdt(_) => "gbdt",
            ModelSpec::RandomForest(_) => "random_forest",
            ModelSpec::LogisticRegression(_) => "logistic_regression",
            ModelSpec::Svm(_) => "svm",
        }
    }

    pub fn fit(&self, matrix: &FeatureMatrix, labels: &[u8]) -> Result<Box<dyn Classifier>> {
        Ok(match self {
            ModelSpec::Gbdt(p) => Box::new(GradientBoostedEnsemble::fit(matrix, labels, p)?),
            ModelSpec::RandomForest(p) => Box::new(RandomForest::fit(matrix, labels, p)?),
            ModelSpec::LogisticRegression(p) => Box::new(LogisticRegression::fit(matrix, labels, p)?),
            ModelSpec::Svm(p) => match p.kernel {
                Kernel::Rbf => Box::new(RbfSvm::fit(matrix, labels, p)?),
                Kernel::Linear => Box::new(LinearSvm::fit(matrix, labels, p)?),
            },
        })
    }
}

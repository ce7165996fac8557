//! Cluster-level anomaly rules: flat-zero, near-zero and extreme-high
//! clusters, judged on the raw µSv/h values of their members.

use serde::{Deserialize, Serialize};

use super::ClusterModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnomalyRules {
    /// Cluster means at or below this value are flat-zero anomalies.
    pub near_zero_absolute: f64,
    /// A low cluster is flagged when its mean is below this fraction of the
    /// next-smallest cluster mean.
    pub near_zero_ratio: f64,
    /// A high cluster is flagged when its mean exceeds this multiple of the
    /// next-highest unflagged cluster mean.
    pub high_outlier_ratio: f64,
}

impl Default for AnomalyRules {
    fn default() -> Self {
        AnomalyRules { near_zero_absolute: 0.0, near_zero_ratio: 0.5, high_outlier_ratio: 10.0 }
    }
}

impl AnomalyRules {
    pub fn validate(&self) -> Result<()> {
        if !(self.near_zero_ratio > 0.0 && self.near_zero_ratio < 1.0) {
            return Err(Error::param("near_zero_ratio must lie in (0, 1)"));
        }
        if !(self.high_outlier_ratio > 1.0) {
            return Err(Error::param("high_outlier_ratio must exceed 1"));
        }
        if !(self.near_zero_absolute >= 0.0) {
            return Err(Error::param("near_zero_absolute must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnomalyKind {
    Normal,
    FlatZero,
    NearZero,
    High,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyLabels {
    /// Per row: 1 when the row's cluster is flagged.
    pub labels: Vec<u8>,
    pub cluster_kinds: Vec<AnomalyKind>,
    pub cluster_means: Vec<f64>,
    pub cluster_sizes: Vec<usize>,
}

impl AnomalyLabels {
    pub fn n_flagged_rows(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }
}

/// Classifies clusters from their mean values and sizes.
///
/// The largest cluster anchors "normal". Clusters below it are scanned
/// upward from the smallest mean and flagged while each mean stays under
/// `near_zero_ratio` times the next one; clusters above it are flagged from
/// the first gap wider than `high_outlier_ratio` upward.
pub fn classify_clusters(means: &[f64], sizes: &[usize], rules: &AnomalyRules) -> Result<Vec<AnomalyKind>> {
    rules.validate()?;
    if means.len() != sizes.len() {
        return Err(Error::shape("cluster means and sizes differ in length"));
    }
    let mut kinds = vec![AnomalyKind::Normal; means.len()];
    let live: Vec<usize> = (0..means.len()).filter(|&c| sizes[c] > 0).collect();
    let Some(&anchor) = live.iter().max_by(|&&a, &&b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a))) else {
        return Err(Error::Empty("no populated clusters"));
    };

    for &c in &live {
        if means[c] <= rules.near_zero_absolute {
            kinds[c] = AnomalyKind::FlatZero;
        }
    }
    let by_mean = |a: &usize, b: &usize| means[*a].total_cmp(&means[*b]).then(a.cmp(b));

    let mut low: Vec<usize> = live
        .iter()
        .copied()
        .filter(|&c| c != anchor && kinds[c] == AnomalyKind::Normal && means[c] < means[anchor])
        .collect();
    low.sort_by(by_mean);
    low.push(anchor);
    for w in low.windows(2) {
        if means[w[0]] < rules.near_zero_ratio * means[w[1]] {
            kinds[w[0]] = AnomalyKind::NearZero;
        } else {
            break;
        }
    }

    let mut high: Vec<usize> = live
        .iter()
        .copied()
        .filter(|&c| c != anchor && kinds[c] == AnomalyKind::Normal && means[c] > means[anchor])
        .collect();
    high.sort_by(by_mean);
    high.insert(0, anchor);
    if let Some(gap) = high
        .windows(2)
        .position(|w| means[w[1]] > rules.high_outlier_ratio * means[w[0]])
    {
        for &c in &high[gap + 1..] {
            kinds[c] = AnomalyKind::High;
        }
    }

    if live.iter().all(|&c| kinds[c] != AnomalyKind::Normal) {
        return Err(Error::Degenerate("anomaly rules flagged every cluster".into()));
    }
    Ok(kinds)
}

/// Labels every row of a flagged cluster as anomalous. `raw_values` are the
/// unscaled µSv/h readings aligned with the clustered rows.
pub fn label_anomalies(raw_values: &[f64], clusters: &ClusterModel, rules: &AnomalyRules) -> Result<AnomalyLabels> {
    if raw_values.len() != clusters.assignments.len() {
        return Err(Error::shape(format!(
            "{} raw values for {} clustered rows",
            raw_values.len(),
            clusters.assignments.len()
        )));
    }
    let mut sums = vec![0.0; clusters.k];
    let mut sizes = vec![0usize; clusters.k];
    for (&a, &v) in clusters.assignments.iter().zip(raw_values) {
        sums[a] += v;
        sizes[a] += 1;
    }
    let means: Vec<f64> = sums.iter().zip(&sizes).map(|(s, &n)| if n > 0 { s / n as f64 } else { 0.0 }).collect();
    let kinds = classify_clusters(&means, &sizes, rules)?;
    let labels = clusters
        .assignments
        .iter()
        .map(|&a| u8::from(kinds[a] != AnomalyKind::Normal))
        .collect();
    Ok(AnomalyLabels { labels, cluster_kinds: kinds, cluster_means: means, cluster_sizes: sizes })
}

/// Row-level version of the rules, used to score how cleanly a clustering
/// isolates anomalies. References are the 5th percentile of positive
/// values (low side) and the 95th percentile of all values (high side).
pub fn rowwise_flags(raw_values: &[f64], rules: &AnomalyRules) -> Vec<bool> {
    if raw_values.is_empty() {
        return Vec::new();
    }
    let mut all: Vec<f64> = raw_values.to_vec();
    all.sort_by(f64::total_cmp);
    let mut positive: Vec<f64> = all.iter().copied().filter(|&v| v > rules.near_zero_absolute).collect();
    positive.sort_by(f64::total_cmp);
    let low_ref = percentile(&positive, 0.05).unwrap_or(0.0);
    let high_ref = percentile(&all, 0.95).unwrap_or(f64::INFINITY);
    raw_values
        .iter()
        .map(|&v| {
            v <= rules.near_zero_absolute
                || v < rules.near_zero_ratio * low_ref
                || v > rules.high_outlier_ratio * high_ref
        })
        .collect()
}

/// Nearest-rank percentile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Some(sorted[rank - 1])
}

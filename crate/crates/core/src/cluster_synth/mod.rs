//! Anomaly discovery with K-Means and DoS-attack synthesis with SMOTE.

mod anomaly;
mod kmeans;
mod search;
mod smote;

pub use anomaly::{classify_clusters, label_anomalies, rowwise_flags, AnomalyKind, AnomalyLabels, AnomalyRules};
pub use kmeans::{kmeans_fit, ClusterModel, KMeansConfig};
pub use search::{isolation_score, search_cluster_count, ClusterSearch, ClusterSearchConfig, KTrial};
pub use smote::{build_attack_dataset, nearest_neighbors, smote_oversample, SmoteConfig, SmoteOutput};

//! Confidence scoring: pooled features, the truncated safe bank, exact KNN,
//! alternative variant measures and norm fusion.

mod bank;
mod fusion;
mod knn;
mod monitor;
mod pooling;
pub mod variants;

pub use bank::{build_safe_bank, build_safe_bank_from_dataset, keep_count, truncation_survivors, SafeBank};
pub use fusion::{fuse, Fusion};
pub use knn::{
    kth_distance, kth_distances_batch, knn_score, nearest_distances, nearest_distances_batch, squared_distances,
    squared_distances_block,
};
pub use monitor::{stored_scalar, Monitor, MonitorConfig, MONITOR_FORMAT, MONITOR_VERSION};
pub use pooling::{feature_norm, pool, unit_normalize, PooledFeature};
pub use variants::{fit_variant, BankStatistics, Standardization, VariantFit, VariantKind, VariantModel, VariantSpec};

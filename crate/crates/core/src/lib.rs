//! Engine for detecting and explaining spurious cause-outcome associations
//! in observational tabular data.
//!
//! The pipeline runs from a [`Dataset`] and a [`CausalConfig`] through
//! confounder scoring, covariate-imbalance metrics, subgroup partitioning,
//! causality-space geometry, storyboard flows and a per-subgroup diagnosis
//! that flags Simpson's-paradox reversals.

pub mod analysis;
pub mod confounding;
pub mod dataset;
pub mod diagnosis;
pub mod error;
pub mod imbalance;
pub mod partition;
pub mod scope;
pub mod stats;
pub mod storyboard;
pub mod subgroup_views;

pub use analysis::{
    run_report, Analysis, CliReport, DatasetSummary, ReportOptions, ENGINE_VERSION,
};
pub use dataset::{load_table, CausalConfig, Column, ColumnType, Dataset, LoadOptions, RowMask};
pub use error::{Error, ErrorBody, ErrorClass, Failure, Result};
pub use partition::{PartitionRequest, PartitionRule, TreeConfig};

//! Neural-collapse diagnostics and collapse-based fairness regularization.
//!
//! The crate is organised around a file-mediated pipeline:
//!
//! * [`array_io`] reads and writes the NPY arrays, subset files and exporter
//!   manifests every other module consumes.
//! * [`class_stats`] streams token representations into mergeable per-class
//!   statistics (counts, means, within-class scatter).
//! * [`nc_metrics`] turns those statistics plus a classifier weight matrix into
//!   the six collapse metrics of an [`NcReport`].
//! * [`train`] is a small tied-embedding masked language model with
//!   hand-written gradients that optimizes `L_mlm + alpha * L_nc3`.
//! * [`fairness`] aggregates per-example record files into StereoSet, BEC-Pro,
//!   WinoBias, Bias-in-Bios and Bias-NLI scores.

pub mod array_io;
pub mod class_stats;
pub mod fairness;
pub mod json;
pub mod nc_metrics;
pub mod train;
pub mod wordlists;

pub use array_io::{
    read_array, read_subset, write_array, ArrayData, ArrayError, DenseArray, Dtype, ExportManifest,
    SubsetSpec,
};
pub use class_stats::{ClassStatsAccumulator, GlobalMean, StatsError};
pub use nc_metrics::{nc_report, MetricError, NcReport, WeightMatrix};
pub use train::{
    ModelParams, RunArtifacts, RunningClassMeans, SyntheticCorpusSpec, TrainConfig, TrainError,
};

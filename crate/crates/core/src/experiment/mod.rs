//! Metrics and the experiment harness.

mod datasets;
mod harness;
mod metrics;
mod synthetic;

pub use datasets::{CorpusSpec, DatasetSpec, LoadedDataset, ReadingTimeSpec};
pub use harness::{
    run_grid, run_grid_on, run_sparsity_sweep, run_table2, ExperimentConfig, FractionSummary,
    ResultRow, ResultTable,
};
pub use metrics::{improvement, median, rmse};
pub use synthetic::{TextDriven, TextDrivenSpec};

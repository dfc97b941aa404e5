//! Datasets, CSV ingestion, composite samples and the paired bootstrap.

mod bootstrap;
mod compose;
mod csv_io;
mod dataset;

pub use bootstrap::{
    bootstrap_analysis, BootstrapCell, BootstrapDraw, BootstrapOptions, BootstrapReport, MeanSe, PCA_RATIO_PRESET,
};
pub use compose::{compose_analysis, Arm};
pub use csv_io::{load_csv, read_csv, CsvSchema};
pub use dataset::Dataset;

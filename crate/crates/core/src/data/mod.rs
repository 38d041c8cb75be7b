//! CSV ingestion and export, and the synthetic cohort generator.

mod csv_io;
mod export;
mod synth;

pub use csv_io::{load_csv_bundle, load_records, records_from_graph, write_csv_bundle, BundleCounts};
pub use export::{export_predictions, write_imputations, write_recommendations};
pub use synth::{generate_synthetic, write_truth_files, SyntheticCohort, SyntheticSpec};

use thiserror::Error;

use crate::graph::GraphError;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{file}:{line}: {msg}")]
    Row {
        file: &'static str,
        line: u64,
        msg: String,
    },
    #[error("{file}: {msg}")]
    File { file: String, msg: String },
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

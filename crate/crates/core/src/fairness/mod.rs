//! Fairness benchmark aggregators.
//!
//! Model inference happens upstream; these evaluators only consume per-example
//! CSV records and reduce them to the benchmark scores. Every evaluator works
//! through a mergeable tally of sufficient statistics, so record streams can be
//! sharded and combined without changing the result.

mod becpro;
mod bios;
mod nli;
mod stereoset;
mod winobias;

use std::io::Read;
use std::path::Path;

use serde::de::DeserializeOwned;
use thiserror::Error;

pub use becpro::{becpro_diff, AssociationRecord, BecProScores, BecProTally, Group};
pub use bios::{bios_gaps, BiosRecord, BiosScores, BiosTally, Gender};
pub use nli::{bias_nli, NliRecord, NliScores, NliTally};
pub use stereoset::{icat, stereoset, StereoRecord, StereoScores, StereoTally};
pub use winobias::{winobias, CorefCategory, CorefRecord, WinoBiasScores, WinoBiasTally};

#[derive(Debug, Error)]
pub enum FairnessError {
    #[error("no records")]
    Empty,
    #[error("record {row}: {message}")]
    InvalidRecord { row: usize, message: String },
    #[error("{0} records are missing")]
    MissingGroup(String),
    #[error("malformed csv")]
    Csv(#[from] csv::Error),
    #[error("i/o error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Parses a headed CSV stream into records. The first malformed row aborts
/// the whole read.
pub fn parse_records<T: DeserializeOwned, R: Read>(reader: R) -> Result<Vec<T>, FairnessError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    rdr.deserialize()
        .map(|r| r.map_err(FairnessError::from))
        .collect()
}

pub fn read_records<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, FairnessError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| FairnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_records(file)
}

fn check_finite(row: usize, values: &[f64]) -> Result<(), FairnessError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(FairnessError::InvalidRecord {
            row,
            message: "non-finite score".into(),
        })
    }
}

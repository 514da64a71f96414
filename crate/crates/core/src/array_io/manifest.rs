//! The JSON manifest written by the Python exporter next to its arrays.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_array, ArrayError, DenseArray};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub name: String,
    pub shape: Vec<usize>,
    /// `float32`, `float64` or `int64`.
    pub dtype: String,
}

/// Word-list coverage of a subset file: how many words mapped to a single
/// token id, and which were skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub subset_file: String,
    pub words_found: usize,
    pub words_total: usize,
    #[serde(default)]
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub model: String,
    pub tokenizer: String,
    pub dim: usize,
    pub vocab_size: usize,
    #[serde(default)]
    pub tied: Option<bool>,
    pub files: Vec<ManifestFile>,
    #[serde(default)]
    pub coverage: Vec<Coverage>,
}

impl ExportManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self, ArrayError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ArrayError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| ArrayError::Manifest(e.to_string()))
    }

    pub fn file(&self, name: &str) -> Option<&ManifestFile> {
        self.files.iter().find(|f| f.name == name)
    }

    /// Loads `name` from `dir` and checks it against the recorded shape and dtype.
    pub fn load_checked(
        &self,
        dir: impl AsRef<Path>,
        name: &str,
    ) -> Result<DenseArray, ArrayError> {
        let entry = self
            .file(name)
            .ok_or_else(|| ArrayError::Manifest(format!("{name} is not listed")))?;
        let array = read_array(dir.as_ref().join(name))?;
        if array.shape() != entry.shape.as_slice() || array.dtype().name() != entry.dtype {
            return Err(ArrayError::Manifest(format!(
                "{name}: manifest says {:?} {}, file holds {:?} {}",
                entry.shape,
                entry.dtype,
                array.shape(),
                array.dtype()
            )));
        }
        Ok(array)
    }

    /// Checks a parsed subset against the exporter's coverage record.
    pub fn check_subset(&self, file_name: &str, ids: usize) -> Result<(), ArrayError> {
        let cov = self
            .coverage
            .iter()
            .find(|c| c.subset_file == file_name)
            .ok_or_else(|| ArrayError::Manifest(format!("no coverage entry for {file_name}")))?;
        if cov.words_found != ids {
            return Err(ArrayError::Manifest(format!(
                "{file_name}: manifest reports {} in-vocabulary words, subset holds {ids} ids",
                cov.words_found
            )));
        }
        Ok(())
    }
}

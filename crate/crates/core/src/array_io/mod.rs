//! Dense arrays, subset files and exporter manifests.
//!
//! Arrays are stored as NPY v1.0 restricted to little-endian `f4`/`f8`/`i8`,
//! C order, with one or two dimensions. Anything outside that subset is
//! rejected with a named error rather than partially decoded.

mod manifest;
mod npy;
mod subset;

use std::path::PathBuf;

use thiserror::Error;

pub use manifest::{Coverage, ExportManifest, ManifestFile};
pub use npy::{decode_npy, encode_npy, read_array, read_array_with, write_array, ReadOptions};
pub use subset::{parse_subset, read_subset, write_subset, SubsetSpec};

#[derive(Debug, Error)]
pub enum ArrayError {
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed npy: {0}")]
    Format(String),
    #[error("unsupported npy feature: {0}")]
    Unsupported(String),
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("shape {shape:?} does not describe {len} elements")]
    Shape { shape: Vec<usize>, len: usize },
    #[error("expected {expected}, found {found}")]
    Dtype {
        expected: &'static str,
        found: Dtype,
    },
    #[error("negative label {value} at index {index}")]
    NegativeLabel { index: usize, value: i64 },
    #[error("subset id {id} is out of range for a vocabulary of {vocab_size}")]
    SubsetBounds { id: usize, vocab_size: usize },
    #[error("subset is empty")]
    EmptySubset,
    #[error("subset file line {line}: {message}")]
    SubsetParse { line: usize, message: String },
    #[error("manifest: {0}")]
    Manifest(String),
}

impl ArrayError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ArrayError::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
    I64,
}

impl Dtype {
    pub fn descr(self) -> &'static str {
        match self {
            Dtype::F32 => "<f4",
            Dtype::F64 => "<f8",
            Dtype::I64 => "<i8",
        }
    }

    pub fn from_descr(descr: &str) -> Option<Self> {
        match descr {
            "<f4" => Some(Dtype::F32),
            "<f8" => Some(Dtype::F64),
            "<i8" => Some(Dtype::I64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 | Dtype::I64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "float32",
            Dtype::F64 => "float64",
            Dtype::I64 => "int64",
        }
    }
}

impl std::fmt::Display for Dtype {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    I64(Vec<i64>),
}

impl ArrayData {
    pub fn len(&self) -> usize {
        match self {
            ArrayData::F32(v) => v.len(),
            ArrayData::F64(v) => v.len(),
            ArrayData::I64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> Dtype {
        match self {
            ArrayData::F32(_) => Dtype::F32,
            ArrayData::F64(_) => Dtype::F64,
            ArrayData::I64(_) => Dtype::I64,
        }
    }
}

/// A row-major 1-D or 2-D array.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseArray {
    shape: Vec<usize>,
    data: ArrayData,
}

impl DenseArray {
    pub fn new(shape: Vec<usize>, data: ArrayData) -> Result<Self, ArrayError> {
        if shape.is_empty() || shape.len() > 2 {
            return Err(ArrayError::Unsupported(format!(
                "{}-dimensional array (only 1-D and 2-D are supported)",
                shape.len()
            )));
        }
        let expected = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| ArrayError::Format(format!("shape {shape:?} overflows")))?;
        if expected != data.len() {
            return Err(ArrayError::Shape {
                shape,
                len: data.len(),
            });
        }
        Ok(DenseArray { shape, data })
    }

    pub fn from_f64(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, ArrayError> {
        Self::new(shape, ArrayData::F64(data))
    }

    pub fn from_f32(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, ArrayError> {
        Self::new(shape, ArrayData::F32(data))
    }

    pub fn from_i64(shape: Vec<usize>, data: Vec<i64>) -> Result<Self, ArrayError> {
        Self::new(shape, ArrayData::I64(data))
    }

    /// Labels are stored as a 1-D int64 array.
    pub fn from_labels(labels: &[usize]) -> Self {
        let data = labels.iter().map(|&l| l as i64).collect::<Vec<_>>();
        DenseArray {
            shape: vec![data.len()],
            data: ArrayData::I64(data),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dtype(&self) -> Dtype {
        self.data.dtype()
    }

    pub fn data(&self) -> &ArrayData {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// Number of rows; a 1-D array counts as one row per element.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Number of columns; 1 for 1-D arrays.
    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    /// Element values widened to `f64`.
    pub fn to_f64_vec(&self) -> Vec<f64> {
        match &self.data {
            ArrayData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            ArrayData::F64(v) => v.clone(),
            ArrayData::I64(v) => v.iter().map(|&x| x as f64).collect(),
        }
    }

    /// Interprets a 1-D int64 array as class labels.
    pub fn to_labels(&self) -> Result<Vec<usize>, ArrayError> {
        let ArrayData::I64(values) = &self.data else {
            return Err(ArrayError::Dtype {
                expected: "int64 labels",
                found: self.dtype(),
            });
        };
        if self.ndim() != 1 {
            return Err(ArrayError::Shape {
                shape: self.shape.clone(),
                len: self.len(),
            });
        }
        values
            .iter()
            .enumerate()
            .map(|(index, &value)| {
                usize::try_from(value).map_err(|_| ArrayError::NegativeLabel { index, value })
            })
            .collect()
    }

    /// Index of the first NaN or infinity, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        match &self.data {
            ArrayData::F32(v) => v.iter().position(|x| !x.is_finite()),
            ArrayData::F64(v) => v.iter().position(|x| !x.is_finite()),
            ArrayData::I64(_) => None,
        }
    }
}

//! Streaming per-class representation statistics.
//!
//! Each class keeps a count, a running mean vector and the running sum of
//! squared distances to that mean (`M2`). Updates follow Welford's one-pass
//! recurrence and shards combine with Chan's parallel merge, so a corpus can be
//! accumulated in any order or split across workers and still produce the same
//! statistics up to rounding.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::array_io::{read_array, write_array, ArrayData, ArrayError, DenseArray, SubsetSpec};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("representations have width {found}, accumulator expects {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("accumulators cover {left} and {right} classes")]
    VocabMismatch { left: usize, right: usize },
    #[error("{reps} representation rows but {labels} labels")]
    RowMismatch { reps: usize, labels: usize },
    #[error("label {label} at row {row} is outside [0, {vocab_size})")]
    LabelOutOfRange {
        row: usize,
        label: usize,
        vocab_size: usize,
    },
    #[error("no class of subset {subset:?} has any data")]
    EmptySubset { subset: String },
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Array(#[from] ArrayError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassStatsAccumulator {
    dim: usize,
    counts: Vec<u64>,
    /// Row-major `vocab_size x dim`; rows of empty classes stay zero.
    means: Vec<f64>,
    scatter: Vec<f64>,
    tokens_seen: u64,
}

/// Unweighted average of the class means of a subset.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalMean {
    pub mean: Vec<f64>,
    pub class_count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotManifest {
    dim: usize,
    vocab_size: usize,
    tokens_seen: u64,
}

impl ClassStatsAccumulator {
    pub fn new(vocab_size: usize, dim: usize) -> Self {
        ClassStatsAccumulator {
            dim,
            counts: vec![0; vocab_size],
            means: vec![0.0; vocab_size * dim],
            scatter: vec![0.0; vocab_size],
            tokens_seen: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.counts.len()
    }

    pub fn tokens_seen(&self) -> u64 {
        self.tokens_seen
    }

    pub fn count(&self, class: usize) -> u64 {
        self.counts[class]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Class mean, or `None` for a class without data.
    pub fn mean(&self, class: usize) -> Option<&[f64]> {
        (self.counts[class] > 0).then(|| &self.means[class * self.dim..(class + 1) * self.dim])
    }

    /// Running sum of squared distances to the class mean.
    pub fn scatter(&self, class: usize) -> f64 {
        self.scatter[class]
    }

    /// Within-class variance `M2 / N` (trace of the class covariance).
    pub fn variance(&self, class: usize) -> Option<f64> {
        let n = self.counts[class];
        (n > 0).then(|| self.scatter[class] / n as f64)
    }

    pub fn classes_seen(&self) -> impl Iterator<Item = usize> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &n)| n > 0)
            .map(|(c, _)| c)
    }

    /// Subset classes that have at least one observation, ascending.
    pub fn populated(&self, subset: &SubsetSpec) -> Vec<usize> {
        subset
            .ids()
            .iter()
            .copied()
            .filter(|&c| c < self.vocab_size() && self.counts[c] > 0)
            .collect()
    }

    /// Grows the class table; existing statistics are untouched.
    pub fn resize_vocab(&mut self, vocab_size: usize) {
        if vocab_size > self.vocab_size() {
            self.counts.resize(vocab_size, 0);
            self.means.resize(vocab_size * self.dim, 0.0);
            self.scatter.resize(vocab_size, 0.0);
        }
    }

    /// Adds one representation to `class`.
    pub fn push(&mut self, class: usize, rep: &[f64]) {
        debug_assert_eq!(rep.len(), self.dim);
        self.counts[class] += 1;
        self.tokens_seen += 1;
        let n = self.counts[class] as f64;
        let mean = &mut self.means[class * self.dim..(class + 1) * self.dim];
        let mut m2 = 0.0;
        for (mu, &x) in mean.iter_mut().zip(rep) {
            let delta = x - *mu;
            *mu += delta / n;
            m2 += delta * (x - *mu);
        }
        self.scatter[class] += m2;
    }

    /// Accumulates flat row-major representations. Everything is validated
    /// before the first update, so a failed call leaves `self` unchanged.
    pub fn accumulate_rows(&mut self, reps: &[f64], labels: &[usize]) -> Result<(), StatsError> {
        let rows = reps.len().checked_div(self.dim).unwrap_or(labels.len());
        if self.dim > 0 && !reps.len().is_multiple_of(self.dim) {
            return Err(StatsError::DimMismatch {
                expected: self.dim,
                found: reps.len(),
            });
        }
        if rows != labels.len() {
            return Err(StatsError::RowMismatch {
                reps: rows,
                labels: labels.len(),
            });
        }
        self.check_labels(labels)?;
        for (row, &label) in labels.iter().enumerate() {
            self.push(label, &reps[row * self.dim..(row + 1) * self.dim]);
        }
        Ok(())
    }

    /// Accumulates an `N x d` representation array with `N` int64 labels.
    /// Float32 inputs are widened; arithmetic is always float64.
    pub fn accumulate(&mut self, reps: &DenseArray, labels: &DenseArray) -> Result<(), StatsError> {
        if reps.ndim() != 2 || reps.cols() != self.dim {
            return Err(StatsError::DimMismatch {
                expected: self.dim,
                found: if reps.ndim() == 2 { reps.cols() } else { 1 },
            });
        }
        let labels = labels.to_labels()?;
        if reps.rows() != labels.len() {
            return Err(StatsError::RowMismatch {
                reps: reps.rows(),
                labels: labels.len(),
            });
        }
        self.check_labels(&labels)?;
        match reps.data() {
            ArrayData::F64(v) => self.accumulate_rows(v, &labels),
            _ => self.accumulate_rows(&reps.to_f64_vec(), &labels),
        }
    }

    fn check_labels(&self, labels: &[usize]) -> Result<(), StatsError> {
        let vocab_size = self.vocab_size();
        match labels.iter().position(|&l| l >= vocab_size) {
            Some(row) => Err(StatsError::LabelOutOfRange {
                row,
                label: labels[row],
                vocab_size,
            }),
            None => Ok(()),
        }
    }

    /// Chan's pairwise combination; equivalent to accumulating both streams
    /// into one accumulator.
    pub fn merge(&self, other: &Self) -> Result<Self, StatsError> {
        let mut out = self.clone();
        out.merge_from(other)?;
        Ok(out)
    }

    pub fn merge_from(&mut self, other: &Self) -> Result<(), StatsError> {
        if self.dim != other.dim {
            return Err(StatsError::DimMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        if self.vocab_size() != other.vocab_size() {
            return Err(StatsError::VocabMismatch {
                left: self.vocab_size(),
                right: other.vocab_size(),
            });
        }
        let d = self.dim;
        for c in 0..self.vocab_size() {
            let nb = other.counts[c];
            if nb == 0 {
                continue;
            }
            let na = self.counts[c];
            let mb = &other.means[c * d..(c + 1) * d];
            if na == 0 {
                self.means[c * d..(c + 1) * d].copy_from_slice(mb);
                self.scatter[c] = other.scatter[c];
                self.counts[c] = nb;
                continue;
            }
            let n = (na + nb) as f64;
            let weight = nb as f64 / n;
            let ma = &mut self.means[c * d..(c + 1) * d];
            let mut dist2 = 0.0;
            for (a, &b) in ma.iter_mut().zip(mb) {
                let delta = b - *a;
                dist2 += delta * delta;
                *a += delta * weight;
            }
            self.scatter[c] += other.scatter[c] + dist2 * (na as f64) * (nb as f64) / n;
            self.counts[c] = na + nb;
        }
        self.tokens_seen += other.tokens_seen;
        Ok(())
    }

    /// Unweighted mean of the populated subset class means.
    pub fn global_mean(&self, subset: &SubsetSpec) -> Result<GlobalMean, StatsError> {
        self.global_mean_of(&self.populated(subset))
            .ok_or_else(|| StatsError::EmptySubset {
                subset: subset.label().to_string(),
            })
    }

    pub(crate) fn global_mean_of(&self, classes: &[usize]) -> Option<GlobalMean> {
        if classes.is_empty() {
            return None;
        }
        let mut mean = vec![0.0; self.dim];
        for &c in classes {
            let mu = self.mean(c)?;
            mean.iter_mut().zip(mu).for_each(|(m, &x)| *m += x);
        }
        let k = classes.len() as f64;
        mean.iter_mut().for_each(|m| *m /= k);
        Some(GlobalMean {
            mean,
            class_count: classes.len(),
        })
    }

    /// Writes `counts.npy`, `means.npy`, `scatter.npy` and `manifest.json`
    /// into `dir`, creating it if needed.
    pub fn save_snapshot(&self, dir: impl AsRef<Path>) -> Result<(), StatsError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| ArrayError::io(dir, e))?;
        let c = self.vocab_size();
        let counts = self.counts.iter().map(|&n| n as i64).collect();
        write_array(
            &DenseArray::from_i64(vec![c], counts)?,
            dir.join("counts.npy"),
        )?;
        write_array(
            &DenseArray::from_f64(vec![c, self.dim], self.means.clone())?,
            dir.join("means.npy"),
        )?;
        write_array(
            &DenseArray::from_f64(vec![c], self.scatter.clone())?,
            dir.join("scatter.npy"),
        )?;
        let manifest = SnapshotManifest {
            dim: self.dim,
            vocab_size: c,
            tokens_seen: self.tokens_seen,
        };
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| ArrayError::io(&path, e))?;
        Ok(())
    }

    pub fn load_snapshot(dir: impl AsRef<Path>) -> Result<Self, StatsError> {
        let dir = dir.as_ref();
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).map_err(|e| ArrayError::io(&path, e))?;
        let manifest: SnapshotManifest =
            serde_json::from_str(&text).map_err(|e| StatsError::Snapshot(e.to_string()))?;
        let (c, d) = (manifest.vocab_size, manifest.dim);

        let counts = read_array(dir.join("counts.npy"))?;
        let means = read_array(dir.join("means.npy"))?;
        let scatter = read_array(dir.join("scatter.npy"))?;
        if counts.shape() != [c] || means.shape() != [c, d] || scatter.shape() != [c] {
            return Err(StatsError::Snapshot(format!(
                "array shapes {:?}/{:?}/{:?} disagree with manifest (C={c}, d={d})",
                counts.shape(),
                means.shape(),
                scatter.shape()
            )));
        }
        let counts = match counts.data() {
            ArrayData::I64(v) => v
                .iter()
                .map(|&n| {
                    u64::try_from(n)
                        .map_err(|_| StatsError::Snapshot(format!("negative count {n}")))
                })
                .collect::<Result<Vec<_>, _>>()?,
            _ => return Err(StatsError::Snapshot("counts must be int64".into())),
        };
        let (ArrayData::F64(mut means), ArrayData::F64(mut scatter)) =
            (means.data().clone(), scatter.data().clone())
        else {
            return Err(StatsError::Snapshot(
                "means and scatter must be float64".into(),
            ));
        };
        if let Some(m2) = scatter.iter().find(|&&m2| m2 < 0.0) {
            return Err(StatsError::Snapshot(format!("negative scatter {m2}")));
        }
        for (class, &n) in counts.iter().enumerate() {
            if n == 0 {
                means[class * d..(class + 1) * d].fill(0.0);
                scatter[class] = 0.0;
            }
        }
        let total: u64 = counts.iter().sum();
        if total != manifest.tokens_seen {
            return Err(StatsError::Snapshot(format!(
                "counts sum to {total}, manifest says {} tokens",
                manifest.tokens_seen
            )));
        }
        Ok(ClassStatsAccumulator {
            dim: d,
            counts,
            means,
            scatter,
            tokens_seen: manifest.tokens_seen,
        })
    }
}

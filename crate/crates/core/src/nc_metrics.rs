//! Neural-collapse metrics over class statistics and classifier weights.
//!
//! All pairwise expectations average over unordered pairs `c < c'` of subset
//! classes that have at least one observation. Pairs are visited in ascending
//! index order so every metric is bitwise reproducible.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::array_io::{ArrayError, DenseArray, SubsetSpec};
use crate::class_stats::ClassStatsAccumulator;
use crate::json::{ser_f64, ser_opt_f64};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("need at least {needed} populated subset classes, found {found}")]
    EmptySubset { needed: usize, found: usize },
    #[error("classes {a} and {b} have coincident {what}")]
    DegeneratePair {
        a: usize,
        b: usize,
        what: &'static str,
    },
    #[error("class {class} mean equals the global mean")]
    CenteringDegenerate { class: usize },
    #[error("classes {a} and {b} give an infinite metric (identical {what})")]
    InfiniteMetric {
        a: usize,
        b: usize,
        what: &'static str,
    },
    #[error("class {class}: {reason}")]
    DegenerateClass { class: usize, reason: &'static str },
    #[error("no token has a label among the populated subset classes")]
    EmptyStream,
    #[error("class {class} is outside the {classes} rows of the weight matrix")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("{0}")]
    Shape(String),
    #[error("computing {metric}")]
    InMetric {
        metric: &'static str,
        #[source]
        source: Box<MetricError>,
    },
    #[error(transparent)]
    Array(#[from] ArrayError),
}

impl MetricError {
    fn within(self, metric: &'static str) -> Self {
        MetricError::InMetric {
            metric,
            source: Box::new(self),
        }
    }
}

/// Classifier rows `w_c` and biases `b_c`. In tied models this is the input
/// embedding table.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    classes: usize,
    dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl WeightMatrix {
    pub fn new(
        classes: usize,
        dim: usize,
        weights: Vec<f64>,
        bias: Option<Vec<f64>>,
    ) -> Result<Self, MetricError> {
        if weights.len() != classes * dim {
            return Err(MetricError::Shape(format!(
                "{} weights for {classes} x {dim}",
                weights.len()
            )));
        }
        let bias = bias.unwrap_or_else(|| vec![0.0; classes]);
        if bias.len() != classes {
            return Err(MetricError::Shape(format!(
                "bias of length {} for {classes} classes",
                bias.len()
            )));
        }
        Ok(WeightMatrix {
            classes,
            dim,
            weights,
            bias,
        })
    }

    pub fn from_arrays(
        weights: &DenseArray,
        bias: Option<&DenseArray>,
    ) -> Result<Self, MetricError> {
        if weights.ndim() != 2 {
            return Err(MetricError::Shape(format!(
                "weights must be 2-D, got shape {:?}",
                weights.shape()
            )));
        }
        if let Some(b) = bias {
            if b.ndim() != 1 {
                return Err(MetricError::Shape(format!(
                    "bias must be 1-D, got shape {:?}",
                    b.shape()
                )));
            }
        }
        Self::new(
            weights.rows(),
            weights.cols(),
            weights.to_f64_vec(),
            bias.map(DenseArray::to_f64_vec),
        )
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, class: usize) -> &[f64] {
        &self.weights[class * self.dim..(class + 1) * self.dim]
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    fn checked_row(&self, class: usize) -> Result<&[f64], MetricError> {
        if class >= self.classes {
            return Err(MetricError::ClassOutOfRange {
                class,
                classes: self.classes,
            });
        }
        Ok(self.row(class))
    }
}

/// The six collapse metrics of one evaluation, plus what they were computed on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcReport {
    #[serde(serialize_with = "ser_f64")]
    pub nc1: f64,
    #[serde(serialize_with = "ser_f64")]
    pub nc2_g: f64,
    #[serde(serialize_with = "ser_f64")]
    pub nc3_u: f64,
    /// Nearest-class-centre accuracy in percent; absent without a token stream.
    #[serde(serialize_with = "ser_opt_f64")]
    pub nc4: Option<f64>,
    #[serde(serialize_with = "ser_f64")]
    pub nc1_w: f64,
    #[serde(serialize_with = "ser_f64")]
    pub nc2_w: f64,
    pub subset_label: String,
    pub classes_with_data: usize,
    pub pairs_evaluated: usize,
    pub tokens_evaluated: usize,
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let norm = dot(v, v).sqrt();
    (norm > 0.0).then(|| v.iter().map(|x| x / norm).collect())
}

fn require_classes(classes: &[usize], needed: usize) -> Result<(), MetricError> {
    if classes.len() < needed {
        return Err(MetricError::EmptySubset {
            needed,
            found: classes.len(),
        });
    }
    Ok(())
}

/// Mean of `f(c, c')` over unordered pairs.
fn pair_mean(
    classes: &[usize],
    mut f: impl FnMut(usize, usize) -> Result<f64, MetricError>,
) -> Result<f64, MetricError> {
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for (i, &a) in classes.iter().enumerate() {
        for &b in &classes[i + 1..] {
            sum += f(a, b)?;
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

fn class_mean(acc: &ClassStatsAccumulator, c: usize) -> &[f64] {
    acc.mean(c).expect("populated class has a mean")
}

fn class_var(acc: &ClassStatsAccumulator, c: usize) -> f64 {
    acc.variance(c).expect("populated class has a variance")
}

/// Centered, unit-length class means of the given classes.
fn centered_directions(
    acc: &ClassStatsAccumulator,
    classes: &[usize],
) -> Result<Vec<Vec<f64>>, MetricError> {
    let global = acc
        .global_mean_of(classes)
        .ok_or(MetricError::EmptySubset {
            needed: 1,
            found: 0,
        })?;
    classes
        .iter()
        .map(|&c| {
            normalized(&sub(class_mean(acc, c), &global.mean))
                .ok_or(MetricError::CenteringDegenerate { class: c })
        })
        .collect()
}

fn nc1_on(acc: &ClassStatsAccumulator, classes: &[usize]) -> Result<f64, MetricError> {
    require_classes(classes, 2)?;
    pair_mean(classes, |a, b| {
        let d2 = dist2(class_mean(acc, a), class_mean(acc, b));
        if d2 == 0.0 {
            return Err(MetricError::DegeneratePair {
                a,
                b,
                what: "class means",
            });
        }
        Ok((class_var(acc, a) + class_var(acc, b)) / (2.0 * d2))
    })
}

fn nc2_g_on(acc: &ClassStatsAccumulator, classes: &[usize]) -> Result<f64, MetricError> {
    require_classes(classes, 2)?;
    let dirs = centered_directions(acc, classes)?;
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..classes.len() {
        for j in i + 1..classes.len() {
            let d = dist2(&dirs[i], &dirs[j]).sqrt();
            if d == 0.0 {
                return Err(MetricError::InfiniteMetric {
                    a: classes[i],
                    b: classes[j],
                    what: "centered mean directions",
                });
            }
            sum -= d.ln();
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

/// Cosines between each weight row and its centered class mean.
pub(crate) fn self_duality_cosines(
    acc: &ClassStatsAccumulator,
    weights: &WeightMatrix,
    classes: &[usize],
) -> Result<Vec<f64>, MetricError> {
    let dirs = centered_directions(acc, classes)?;
    classes
        .iter()
        .zip(&dirs)
        .map(|(&c, u)| {
            let w = normalized(weights.checked_row(c)?).ok_or(MetricError::DegenerateClass {
                class: c,
                reason: "zero-norm weight row",
            })?;
            Ok(dot(&w, u))
        })
        .collect()
}

/// Population standard deviation.
pub(crate) fn population_std(values: &[f64]) -> f64 {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / k).sqrt()
}

fn nc3_u_on(
    acc: &ClassStatsAccumulator,
    weights: &WeightMatrix,
    classes: &[usize],
) -> Result<f64, MetricError> {
    require_classes(classes, 2)?;
    let cosines = self_duality_cosines(acc, weights, classes)?;
    Ok(population_std(&cosines))
}

fn nc1_w_on(
    acc: &ClassStatsAccumulator,
    weights: &WeightMatrix,
    classes: &[usize],
) -> Result<f64, MetricError> {
    require_classes(classes, 2)?;
    for &c in classes {
        weights.checked_row(c)?;
    }
    pair_mean(classes, |a, b| {
        let d2 = dist2(weights.row(a), weights.row(b));
        if d2 == 0.0 {
            return Err(MetricError::DegeneratePair {
                a,
                b,
                what: "weight rows",
            });
        }
        Ok((class_var(acc, a) + class_var(acc, b)) / (2.0 * d2))
    })
}

fn nc2_w_on(weights: &WeightMatrix, classes: &[usize]) -> Result<f64, MetricError> {
    require_classes(classes, 2)?;
    for &c in classes {
        weights.checked_row(c)?;
    }
    pair_mean(classes, |a, b| {
        let d = dist2(weights.row(a), weights.row(b)).sqrt();
        if d == 0.0 {
            return Err(MetricError::InfiniteMetric {
                a,
                b,
                what: "weight rows",
            });
        }
        Ok(-d.ln())
    })
}

/// Returns the accuracy in percent and the number of tokens evaluated.
fn nc4_on(
    reps: &DenseArray,
    labels: &DenseArray,
    acc: &ClassStatsAccumulator,
    classes: &[usize],
) -> Result<(f64, usize), MetricError> {
    require_classes(classes, 1)?;
    let d = acc.dim();
    if reps.ndim() != 2 || reps.cols() != d {
        return Err(MetricError::Shape(format!(
            "representations of shape {:?} for width {d}",
            reps.shape()
        )));
    }
    let labels = labels.to_labels()?;
    if labels.len() != reps.rows() {
        return Err(MetricError::Shape(format!(
            "{} representation rows but {} labels",
            reps.rows(),
            labels.len()
        )));
    }
    let values = reps.to_f64_vec();
    let means: Vec<&[f64]> = classes.iter().map(|&c| class_mean(acc, c)).collect();

    let mut correct = 0usize;
    let mut evaluated = 0usize;
    for (row, &label) in labels.iter().enumerate() {
        if classes.binary_search(&label).is_err() {
            continue;
        }
        let h = &values[row * d..(row + 1) * d];
        let mut best = 0;
        let mut best_d2 = f64::INFINITY;
        for (k, mu) in means.iter().enumerate() {
            let d2 = dist2(h, mu);
            if d2 < best_d2 {
                best_d2 = d2;
                best = k;
            }
        }
        evaluated += 1;
        if classes[best] == label {
            correct += 1;
        }
    }
    if evaluated == 0 {
        return Err(MetricError::EmptyStream);
    }
    Ok((100.0 * correct as f64 / evaluated as f64, evaluated))
}

fn bound(acc: &ClassStatsAccumulator, subset: &SubsetSpec) -> Result<Vec<usize>, MetricError> {
    subset.bind(acc.vocab_size())?;
    Ok(acc.populated(subset))
}

/// Within-class variability over between-class distance of the means.
pub fn nc1(acc: &ClassStatsAccumulator, subset: &SubsetSpec) -> Result<f64, MetricError> {
    nc1_on(acc, &bound(acc, subset)?)
}

/// Mean negative log distance between centered, normalized class means.
pub fn nc2_g(acc: &ClassStatsAccumulator, subset: &SubsetSpec) -> Result<f64, MetricError> {
    nc2_g_on(acc, &bound(acc, subset)?)
}

/// Population std of the weight/centered-mean cosines across classes.
pub fn nc3_u(
    acc: &ClassStatsAccumulator,
    weights: &WeightMatrix,
    subset: &SubsetSpec,
) -> Result<f64, MetricError> {
    nc3_u_on(acc, weights, &bound(acc, subset)?)
}

/// Nearest-class-centre accuracy in percent. Tokens whose label is not a
/// populated subset class are skipped; ties go to the smaller class index.
pub fn nc4(
    reps: &DenseArray,
    labels: &DenseArray,
    acc: &ClassStatsAccumulator,
    subset: &SubsetSpec,
) -> Result<f64, MetricError> {
    nc4_on(reps, labels, acc, &bound(acc, subset)?).map(|(v, _)| v)
}

/// [`nc1`] with classifier rows in place of class means.
pub fn nc1_w(
    acc: &ClassStatsAccumulator,
    weights: &WeightMatrix,
    subset: &SubsetSpec,
) -> Result<f64, MetricError> {
    nc1_w_on(acc, weights, &bound(acc, subset)?)
}

/// Mean negative log distance between classifier rows, over every subset
/// class (no statistics involved).
pub fn nc2_w(weights: &WeightMatrix, subset: &SubsetSpec) -> Result<f64, MetricError> {
    subset.bind(weights.classes())?;
    nc2_w_on(weights, subset.ids())
}

/// All metrics on the populated classes of `subset`. `stream` supplies the
/// token representations and labels for NC4; without it NC4 is `None`.
pub fn nc_report(
    acc: &ClassStatsAccumulator,
    weights: &WeightMatrix,
    subset: &SubsetSpec,
    stream: Option<(&DenseArray, &DenseArray)>,
) -> Result<NcReport, MetricError> {
    if weights.dim() != acc.dim() {
        return Err(MetricError::Shape(format!(
            "weights have width {}, statistics {}",
            weights.dim(),
            acc.dim()
        )));
    }
    let classes = bound(acc, subset)?;
    let k = classes.len();

    let nc1 = nc1_on(acc, &classes).map_err(|e| e.within("nc1"))?;
    let nc2_g = nc2_g_on(acc, &classes).map_err(|e| e.within("nc2_g"))?;
    let nc3_u = nc3_u_on(acc, weights, &classes).map_err(|e| e.within("nc3_u"))?;
    let nc1_w = nc1_w_on(acc, weights, &classes).map_err(|e| e.within("nc1_w"))?;
    let nc2_w = nc2_w_on(weights, &classes).map_err(|e| e.within("nc2_w"))?;
    let (nc4, tokens_evaluated) = match stream {
        Some((reps, labels)) => {
            let (v, n) = nc4_on(reps, labels, acc, &classes).map_err(|e| e.within("nc4"))?;
            (Some(v), n)
        }
        None => (None, 0),
    };

    Ok(NcReport {
        nc1,
        nc2_g,
        nc3_u,
        nc4,
        nc1_w,
        nc2_w,
        subset_label: subset.label().to_string(),
        classes_with_data: k,
        pairs_evaluated: k * (k - 1) / 2,
        tokens_evaluated,
    })
}

use crate::array_io::SubsetSpec;

/// Cumulative per-class means of the regularized subset, carried across
/// batches. The history is a constant as far as gradients are concerned:
/// only the current batch's representations are differentiated.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningClassMeans {
    subset: SubsetSpec,
    dim: usize,
    counts: Vec<u64>,
    means: Vec<f64>,
}

impl RunningClassMeans {
    pub fn new(subset: SubsetSpec, dim: usize) -> Self {
        let k = subset.len();
        RunningClassMeans {
            subset,
            dim,
            counts: vec![0; k],
            means: vec![0.0; k * dim],
        }
    }

    pub fn subset(&self) -> &SubsetSpec {
        &self.subset
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Count for the `slot`-th subset class.
    pub fn count(&self, slot: usize) -> u64 {
        self.counts[slot]
    }

    pub fn mean(&self, slot: usize) -> &[f64] {
        &self.means[slot * self.dim..(slot + 1) * self.dim]
    }

    pub fn reset(&mut self) {
        self.counts.fill(0);
        self.means.fill(0.0);
    }

    /// Per-slot batch counts and representation sums for labels in the subset.
    pub(crate) fn batch_sums(&self, hidden: &[f64], labels: &[usize]) -> (Vec<u64>, Vec<f64>) {
        let d = self.dim;
        let mut counts = vec![0u64; self.subset.len()];
        let mut sums = vec![0.0; self.subset.len() * d];
        for (i, &label) in labels.iter().enumerate() {
            if let Some(slot) = self.subset.position(label) {
                counts[slot] += 1;
                let h = &hidden[i * d..(i + 1) * d];
                sums[slot * d..(slot + 1) * d]
                    .iter_mut()
                    .zip(h)
                    .for_each(|(s, &x)| *s += x);
            }
        }
        (counts, sums)
    }

    /// Folds a batch into the history: `mu <- (N mu + sum_h) / (N + n)`.
    pub fn update(&mut self, hidden: &[f64], labels: &[usize]) {
        let d = self.dim;
        let (counts, sums) = self.batch_sums(hidden, labels);
        for slot in 0..self.subset.len() {
            let n = counts[slot];
            if n == 0 {
                continue;
            }
            let old = self.counts[slot];
            let total = (old + n) as f64;
            let mean = &mut self.means[slot * d..(slot + 1) * d];
            for (m, &s) in mean.iter_mut().zip(&sums[slot * d..(slot + 1) * d]) {
                *m = (old as f64 * *m + s) / total;
            }
            self.counts[slot] = old + n;
        }
    }
}

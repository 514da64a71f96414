use super::running::RunningClassMeans;
use super::TrainError;

/// Mean cross-entropy of row-major `n x vocab` logits against `targets`,
/// using a max-shifted log-sum-exp.
pub fn loss_mlm(logits: &[f64], vocab: usize, targets: &[usize]) -> Result<f64, TrainError> {
    mlm_with_grad(logits, vocab, targets, false).map(|(l, _)| l)
}

/// Returns the loss and, if asked, `dL/dlogits` (already divided by `n`).
pub(crate) fn mlm_with_grad(
    logits: &[f64],
    vocab: usize,
    targets: &[usize],
    want_grad: bool,
) -> Result<(f64, Vec<f64>), TrainError> {
    let n = targets.len();
    if n == 0 {
        return Err(TrainError::EmptyBatch);
    }
    if logits.len() != n * vocab {
        return Err(TrainError::TargetMismatch {
            rows: logits.len() / vocab.max(1),
            targets: n,
        });
    }
    let mut total = 0.0;
    let mut grad = if want_grad {
        vec![0.0; n * vocab]
    } else {
        Vec::new()
    };
    for (i, &y) in targets.iter().enumerate() {
        if y >= vocab {
            return Err(TrainError::TargetOutOfRange {
                target: y,
                vocab_size: vocab,
            });
        }
        let row = &logits[i * vocab..(i + 1) * vocab];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|&z| (z - max).exp()).sum();
        let log_z = max + sum_exp.ln();
        total += log_z - row[y];
        if want_grad {
            let g = &mut grad[i * vocab..(i + 1) * vocab];
            for (gc, &z) in g.iter_mut().zip(row) {
                *gc = (z - log_z).exp() / n as f64;
            }
            g[y] -= 1.0 / n as f64;
        }
    }
    Ok((total / n as f64, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nc3Value {
    pub value: f64,
    /// Fewer than two subset classes had enough observations; `value` is 0.
    pub skipped: bool,
    /// Subset classes that entered the loss.
    pub classes: usize,
}

pub(crate) struct Nc3Grad {
    /// `dL/dh`, row-major like the batch representations.
    pub hidden: Vec<f64>,
    /// `(class id, dL/dw_c)` for every qualifying class.
    pub weights: Vec<(usize, Vec<f64>)>,
}

/// Population std of `cos(w_c, mu_c - mu_bar)` over the subset classes whose
/// running count (history plus this batch) reaches `min_class_count`.
pub fn loss_nc3(
    hidden: &[f64],
    labels: &[usize],
    running: &RunningClassMeans,
    weights: &[f64],
    min_class_count: u64,
) -> Result<Nc3Value, TrainError> {
    nc3_with_grad(hidden, labels, running, weights, min_class_count, false).map(|(v, _)| v)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn nc3_with_grad(
    hidden: &[f64],
    labels: &[usize],
    running: &RunningClassMeans,
    weights: &[f64],
    min_class_count: u64,
    want_grad: bool,
) -> Result<(Nc3Value, Option<Nc3Grad>), TrainError> {
    let d = running.dim();
    let subset = running.subset();
    let (batch_counts, batch_sums) = running.batch_sums(hidden, labels);

    // Qualifying classes with their merged means and total counts.
    let mut slots = Vec::new();
    let mut totals = Vec::new();
    let mut means = Vec::new();
    for slot in 0..subset.len() {
        let old = running.count(slot);
        let total = old + batch_counts[slot];
        if total == 0 || total < min_class_count {
            continue;
        }
        let hist = running.mean(slot);
        let sums = &batch_sums[slot * d..(slot + 1) * d];
        means.extend(
            hist.iter()
                .zip(sums)
                .map(|(&m, &s)| (old as f64 * m + s) / total as f64),
        );
        slots.push(slot);
        totals.push(total as f64);
    }
    let k = slots.len();
    let skipped = || {
        let v = Nc3Value {
            value: 0.0,
            skipped: true,
            classes: k,
        };
        let g = want_grad.then(|| Nc3Grad {
            hidden: vec![0.0; hidden.len()],
            weights: Vec::new(),
        });
        Ok((v, g))
    };
    if k < 2 {
        return skipped();
    }

    let mut global = vec![0.0; d];
    for q in 0..k {
        global
            .iter_mut()
            .zip(&means[q * d..(q + 1) * d])
            .for_each(|(g, &m)| *g += m / k as f64);
    }

    let mut cosines = Vec::with_capacity(k);
    let mut w_units = Vec::with_capacity(k);
    let mut u_units = Vec::with_capacity(k);
    let mut w_norms = Vec::with_capacity(k);
    let mut u_norms = Vec::with_capacity(k);
    for (q, &slot) in slots.iter().enumerate() {
        let class = subset.ids()[slot];
        let w = &weights[class * d..(class + 1) * d];
        let u: Vec<f64> = means[q * d..(q + 1) * d]
            .iter()
            .zip(&global)
            .map(|(m, g)| m - g)
            .collect();
        let w_norm = dot(w, w).sqrt();
        let u_norm = dot(&u, &u).sqrt();
        if w_norm == 0.0 {
            return Err(TrainError::Nc3Degenerate {
                class,
                reason: "a zero-norm classifier row",
            });
        }
        if u_norm == 0.0 {
            return Err(TrainError::Nc3Degenerate {
                class,
                reason: "a class mean equal to the global mean",
            });
        }
        let w_unit: Vec<f64> = w.iter().map(|x| x / w_norm).collect();
        let u_unit: Vec<f64> = u.iter().map(|x| x / u_norm).collect();
        cosines.push(dot(&w_unit, &u_unit));
        w_units.push(w_unit);
        u_units.push(u_unit);
        w_norms.push(w_norm);
        u_norms.push(u_norm);
    }

    let mean_cos = cosines.iter().sum::<f64>() / k as f64;
    let var = cosines
        .iter()
        .map(|c| (c - mean_cos) * (c - mean_cos))
        .sum::<f64>()
        / k as f64;
    let value = var.sqrt();
    let result = Nc3Value {
        value,
        skipped: false,
        classes: k,
    };
    if !want_grad {
        return Ok((result, None));
    }

    // d std / d cos_q = (cos_q - mean) / (k * std); zero at the kink std = 0.
    let mut grad_hidden = vec![0.0; hidden.len()];
    let mut grad_weights = Vec::with_capacity(k);
    if value == 0.0 {
        return Ok((
            result,
            Some(Nc3Grad {
                hidden: grad_hidden,
                weights: grad_weights,
            }),
        ));
    }
    let mut grad_u = vec![0.0; k * d];
    for q in 0..k {
        let g_cos = (cosines[q] - mean_cos) / (k as f64 * value);
        let cos = cosines[q];
        let class = subset.ids()[slots[q]];
        let gw: Vec<f64> = (0..d)
            .map(|j| g_cos * (u_units[q][j] - cos * w_units[q][j]) / w_norms[q])
            .collect();
        grad_weights.push((class, gw));
        for j in 0..d {
            grad_u[q * d + j] = g_cos * (w_units[q][j] - cos * u_units[q][j]) / u_norms[q];
        }
    }
    // Centering: d mu_q = d u_q - mean_r(d u_r).
    let mut mean_gu = vec![0.0; d];
    for q in 0..k {
        for j in 0..d {
            mean_gu[j] += grad_u[q * d + j] / k as f64;
        }
    }
    let mut slot_to_q = vec![usize::MAX; subset.len()];
    for (q, &slot) in slots.iter().enumerate() {
        slot_to_q[slot] = q;
    }
    for (i, &label) in labels.iter().enumerate() {
        let Some(slot) = subset.position(label) else {
            continue;
        };
        let q = slot_to_q[slot];
        if q == usize::MAX {
            continue;
        }
        for j in 0..d {
            grad_hidden[i * d + j] = (grad_u[q * d + j] - mean_gu[j]) / totals[q];
        }
    }
    Ok((
        result,
        Some(Nc3Grad {
            hidden: grad_hidden,
            weights: grad_weights,
        }),
    ))
}

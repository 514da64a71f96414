//! Straight-line reference implementations used as test oracles. Nothing in
//! this file calls into the crate's metric or statistics code.

#![allow(dead_code)]

pub mod fd;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `|a - b| <= tol * max(|a|, |b|)`, exact equality always accepted.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// One randomized metric instance: token stream, classifier and subset.
#[derive(Debug, Clone)]
pub struct Instance {
    pub classes: usize,
    pub dim: usize,
    pub reps: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub subset: Vec<usize>,
}

impl Instance {
    pub fn random(r: &mut ChaCha8Rng) -> Self {
        let classes = r.random_range(2..=10);
        let dim = r.random_range(2..=8);
        let n = r.random_range(2 * classes..=200);
        let centers: Vec<Vec<f64>> = (0..classes)
            .map(|_| (0..dim).map(|_| r.random_range(-3.0..3.0)).collect())
            .collect();
        let mut labels: Vec<usize> = (0..n).map(|_| r.random_range(0..classes)).collect();
        // Make sure at least two classes occur.
        labels[0] = 0;
        labels[1] = 1;
        let reps = labels
            .iter()
            .map(|&y| {
                centers[y]
                    .iter()
                    .map(|c| c + r.random_range(-1.0..1.0))
                    .collect()
            })
            .collect();
        let weights = (0..classes)
            .map(|_| (0..dim).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        let mut subset: Vec<usize> = (0..classes).filter(|_| r.random_bool(0.7)).collect();
        for c in [0, 1] {
            if !subset.contains(&c) {
                subset.push(c);
            }
        }
        subset.sort_unstable();
        Instance {
            classes,
            dim,
            reps,
            labels,
            weights,
            subset,
        }
    }

    pub fn flat_reps(&self) -> Vec<f64> {
        self.reps.concat()
    }

    pub fn flat_weights(&self) -> Vec<f64> {
        self.weights.concat()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Two-pass class statistics over the subset classes that occur.
pub struct NaiveStats {
    pub classes: Vec<usize>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
    pub global: Vec<f64>,
}

pub fn naive_stats(reps: &[Vec<f64>], labels: &[usize], subset: &[usize]) -> NaiveStats {
    let dim = reps[0].len();
    let mut classes = Vec::new();
    let mut means = Vec::new();
    let mut variances = Vec::new();
    for &c in subset {
        let members: Vec<&Vec<f64>> = reps
            .iter()
            .zip(labels)
            .filter(|(_, &y)| y == c)
            .map(|(h, _)| h)
            .collect();
        if members.is_empty() {
            continue;
        }
        let mut mean = vec![0.0; dim];
        for h in &members {
            for j in 0..dim {
                mean[j] += h[j];
            }
        }
        for m in &mut mean {
            *m /= members.len() as f64;
        }
        let var = members
            .iter()
            .map(|h| diff(h, &mean).iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            / members.len() as f64;
        classes.push(c);
        means.push(mean);
        variances.push(var);
    }
    let mut global = vec![0.0; dim];
    for m in &means {
        for j in 0..dim {
            global[j] += m[j] / means.len() as f64;
        }
    }
    NaiveStats {
        classes,
        means,
        variances,
        global,
    }
}

fn pair_average(k: usize, mut f: impl FnMut(usize, usize) -> f64) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0;
    for a in 0..k {
        for b in a + 1..k {
            total += f(a, b);
            pairs += 1;
        }
    }
    total / pairs as f64
}

pub fn oracle_nc1(s: &NaiveStats) -> f64 {
    pair_average(s.classes.len(), |a, b| {
        let d = norm(&diff(&s.means[a], &s.means[b]));
        (s.variances[a] + s.variances[b]) / (2.0 * d * d)
    })
}

pub fn oracle_nc2_g(s: &NaiveStats) -> f64 {
    let units: Vec<Vec<f64>> = s
        .means
        .iter()
        .map(|m| {
            let u = diff(m, &s.global);
            let n = norm(&u);
            u.iter().map(|x| x / n).collect()
        })
        .collect();
    pair_average(s.classes.len(), |a, b| {
        -norm(&diff(&units[a], &units[b])).ln()
    })
}

pub fn cosines(s: &NaiveStats, weights: &[Vec<f64>]) -> Vec<f64> {
    s.classes
        .iter()
        .zip(&s.means)
        .map(|(&c, m)| {
            let u = diff(m, &s.global);
            let w = &weights[c];
            let dot: f64 = u.iter().zip(w).map(|(x, y)| x * y).sum();
            dot / (norm(&u) * norm(w))
        })
        .collect()
}

pub fn pop_std(xs: &[f64]) -> f64 {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

pub fn oracle_nc3_u(s: &NaiveStats, weights: &[Vec<f64>]) -> f64 {
    pop_std(&cosines(s, weights))
}

pub fn oracle_nc4(s: &NaiveStats, reps: &[Vec<f64>], labels: &[usize]) -> f64 {
    let mut hits = 0;
    let mut total = 0;
    for (h, &y) in reps.iter().zip(labels) {
        if !s.classes.contains(&y) {
            continue;
        }
        total += 1;
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, m) in s.means.iter().enumerate() {
            let d = norm(&diff(h, m));
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        if s.classes[best] == y {
            hits += 1;
        }
    }
    100.0 * hits as f64 / total as f64
}

pub fn oracle_nc1_w(s: &NaiveStats, weights: &[Vec<f64>]) -> f64 {
    pair_average(s.classes.len(), |a, b| {
        let d = norm(&diff(&weights[s.classes[a]], &weights[s.classes[b]]));
        (s.variances[a] + s.variances[b]) / (2.0 * d * d)
    })
}

pub fn oracle_nc2_w(classes: &[usize], weights: &[Vec<f64>]) -> f64 {
    pair_average(classes.len(), |a, b| {
        -norm(&diff(&weights[classes[a]], &weights[classes[b]])).ln()
    })
}

pub struct OracleReport {
    pub nc1: f64,
    pub nc2_g: f64,
    pub nc3_u: f64,
    pub nc4: f64,
    pub nc1_w: f64,
    pub nc2_w: f64,
}

pub fn oracle_report(inst: &Instance) -> OracleReport {
    let s = naive_stats(&inst.reps, &inst.labels, &inst.subset);
    OracleReport {
        nc1: oracle_nc1(&s),
        nc2_g: oracle_nc2_g(&s),
        nc3_u: oracle_nc3_u(&s, &inst.weights),
        nc4: oracle_nc4(&s, &inst.reps, &inst.labels),
        nc1_w: oracle_nc1_w(&s, &inst.weights),
        nc2_w: oracle_nc2_w(&s.classes, &inst.weights),
    }
}

/// Plain softmax without max-shifting.
pub fn softmax(row: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = row.iter().map(|z| z.exp()).collect();
    let total: f64 = e.iter().sum();
    e.iter().map(|x| x / total).collect()
}

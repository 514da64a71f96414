use serde::{Deserialize, Serialize};

use super::FairnessError;
use crate::json::{ser_f64, ser_f64_map};

const SIMPLEX_TOL: f64 = 1e-6;

/// Entailment / neutral / contradiction probabilities of one sentence pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NliRecord {
    pub entail: f64,
    pub neutral: f64,
    pub contradict: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NliTally {
    taus: Vec<f64>,
    examples: u64,
    neutral_sum: f64,
    neutral_top: u64,
    above: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliScores {
    /// Net neutral: mean neutral probability.
    #[serde(serialize_with = "ser_f64")]
    pub nn: f64,
    /// Fraction neutral: share of pairs whose top label is neutral.
    #[serde(rename = "fn", serialize_with = "ser_f64")]
    pub fn_: f64,
    /// Threshold scores `T:tau`, share of pairs with neutral probability above tau.
    #[serde(serialize_with = "ser_f64_map", skip_deserializing)]
    pub t: Vec<(f64, f64)>,
    pub examples: u64,
}

impl NliTally {
    pub fn new(taus: &[f64]) -> Self {
        NliTally {
            taus: taus.to_vec(),
            examples: 0,
            neutral_sum: 0.0,
            neutral_top: 0,
            above: vec![0; taus.len()],
        }
    }

    pub fn add(&mut self, row: usize, r: &NliRecord) -> Result<(), FairnessError> {
        let probs = [r.entail, r.neutral, r.contradict];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(FairnessError::InvalidRecord {
                row,
                message: format!("probabilities {probs:?} outside [0, 1]"),
            });
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(FairnessError::InvalidRecord {
                row,
                message: format!("probabilities sum to {total}"),
            });
        }
        self.examples += 1;
        self.neutral_sum += r.neutral;
        if r.neutral >= r.entail && r.neutral >= r.contradict {
            self.neutral_top += 1;
        }
        for (count, &tau) in self.above.iter_mut().zip(&self.taus) {
            if r.neutral > tau {
                *count += 1;
            }
        }
        Ok(())
    }

    /// Combines tallies built with the same thresholds.
    pub fn merge(&mut self, other: &Self) {
        assert_eq!(
            self.taus, other.taus,
            "merging NLI tallies with different thresholds"
        );
        self.examples += other.examples;
        self.neutral_sum += other.neutral_sum;
        self.neutral_top += other.neutral_top;
        for (a, b) in self.above.iter_mut().zip(&other.above) {
            *a += b;
        }
    }

    pub fn scores(&self) -> Result<NliScores, FairnessError> {
        if self.examples == 0 {
            return Err(FairnessError::Empty);
        }
        let n = self.examples as f64;
        Ok(NliScores {
            nn: self.neutral_sum / n,
            fn_: self.neutral_top as f64 / n,
            t: self
                .taus
                .iter()
                .zip(&self.above)
                .map(|(&tau, &count)| (tau, count as f64 / n))
                .collect(),
            examples: self.examples,
        })
    }
}

pub fn bias_nli(records: &[NliRecord], taus: &[f64]) -> Result<NliScores, FairnessError> {
    let mut tally = NliTally::new(taus);
    for (row, r) in records.iter().enumerate() {
        tally.add(row + 1, r)?;
    }
    tally.scores()
}

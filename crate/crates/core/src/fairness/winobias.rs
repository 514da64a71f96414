use serde::{Deserialize, Serialize};

use super::FairnessError;
use crate::json::ser_f64;

/// WinoBias split: sentence type (1 or 2) and anti-/pro-stereotypical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorefCategory {
    #[serde(rename = "1A")]
    Type1Anti,
    #[serde(rename = "1P")]
    Type1Pro,
    #[serde(rename = "2A")]
    Type2Anti,
    #[serde(rename = "2P")]
    Type2Pro,
}

impl CorefCategory {
    pub const ALL: [CorefCategory; 4] = [
        CorefCategory::Type1Anti,
        CorefCategory::Type1Pro,
        CorefCategory::Type2Anti,
        CorefCategory::Type2Pro,
    ];

    fn index(self) -> usize {
        self as usize
    }

    pub fn code(self) -> &'static str {
        ["1A", "1P", "2A", "2P"][self.index()]
    }
}

/// One single-antecedent example: did the predicted antecedent exactly match gold?
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorefRecord {
    pub category: CorefCategory,
    pub correct: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WinoBiasTally {
    pub total: [u64; 4],
    pub correct: [u64; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WinoBiasScores {
    #[serde(rename = "f1_1A", serialize_with = "ser_f64")]
    pub f1_1a: f64,
    #[serde(rename = "f1_1P", serialize_with = "ser_f64")]
    pub f1_1p: f64,
    #[serde(rename = "f1_2A", serialize_with = "ser_f64")]
    pub f1_2a: f64,
    #[serde(rename = "f1_2P", serialize_with = "ser_f64")]
    pub f1_2p: f64,
    #[serde(serialize_with = "ser_f64")]
    pub tpr1: f64,
    #[serde(serialize_with = "ser_f64")]
    pub tpr2: f64,
}

impl WinoBiasScores {
    /// Gaps from per-category F1 scores.
    pub fn from_f1(f1_1a: f64, f1_1p: f64, f1_2a: f64, f1_2p: f64) -> Self {
        WinoBiasScores {
            f1_1a,
            f1_1p,
            f1_2a,
            f1_2p,
            tpr1: f1_1p - f1_1a,
            tpr2: f1_2p - f1_2a,
        }
    }
}

impl WinoBiasTally {
    pub fn add(&mut self, r: &CorefRecord) {
        let i = r.category.index();
        self.total[i] += 1;
        self.correct[i] += r.correct as u64;
    }

    pub fn merge(&mut self, other: &Self) {
        for i in 0..4 {
            self.total[i] += other.total[i];
            self.correct[i] += other.correct[i];
        }
    }

    /// With exactly one gold and one predicted antecedent per example, each
    /// miss is one false positive plus one false negative, so precision,
    /// recall and F1 all equal accuracy.
    pub fn scores(&self) -> Result<WinoBiasScores, FairnessError> {
        let mut f1 = [0.0; 4];
        for cat in CorefCategory::ALL {
            let i = cat.index();
            if self.total[i] == 0 {
                return Err(FairnessError::MissingGroup(format!(
                    "category {}",
                    cat.code()
                )));
            }
            f1[i] = 100.0 * self.correct[i] as f64 / self.total[i] as f64;
        }
        Ok(WinoBiasScores::from_f1(f1[0], f1[1], f1[2], f1[3]))
    }
}

pub fn winobias(records: &[CorefRecord]) -> Result<WinoBiasScores, FairnessError> {
    let mut tally = WinoBiasTally::default();
    records.iter().for_each(|r| tally.add(r));
    tally.scores()
}

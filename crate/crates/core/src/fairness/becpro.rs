use serde::{Deserialize, Serialize};

use super::{check_finite, FairnessError};
use crate::json::ser_f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Female,
    Male,
}

/// One precomputed target/attribute association score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssociationRecord {
    pub group: Group,
    pub association: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BecProTally {
    pub female_sum: f64,
    pub female_n: u64,
    pub male_sum: f64,
    pub male_n: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BecProScores {
    #[serde(serialize_with = "ser_f64")]
    pub mean_female: f64,
    #[serde(serialize_with = "ser_f64")]
    pub mean_male: f64,
    #[serde(serialize_with = "ser_f64")]
    pub diff: f64,
}

impl BecProScores {
    /// Scores from already-averaged group associations.
    pub fn from_means(mean_female: f64, mean_male: f64) -> Self {
        BecProScores {
            mean_female,
            mean_male,
            diff: (mean_female - mean_male).abs(),
        }
    }
}

impl BecProTally {
    pub fn add(&mut self, row: usize, r: &AssociationRecord) -> Result<(), FairnessError> {
        check_finite(row, &[r.association])?;
        match r.group {
            Group::Female => {
                self.female_sum += r.association;
                self.female_n += 1;
            }
            Group::Male => {
                self.male_sum += r.association;
                self.male_n += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) {
        self.female_sum += other.female_sum;
        self.female_n += other.female_n;
        self.male_sum += other.male_sum;
        self.male_n += other.male_n;
    }

    pub fn scores(&self) -> Result<BecProScores, FairnessError> {
        if self.female_n == 0 {
            return Err(FairnessError::MissingGroup("female".into()));
        }
        if self.male_n == 0 {
            return Err(FairnessError::MissingGroup("male".into()));
        }
        Ok(BecProScores::from_means(
            self.female_sum / self.female_n as f64,
            self.male_sum / self.male_n as f64,
        ))
    }
}

/// Per-group mean association and their absolute difference.
pub fn becpro_diff(records: &[AssociationRecord]) -> Result<BecProScores, FairnessError> {
    let mut tally = BecProTally::default();
    for (row, r) in records.iter().enumerate() {
        tally.add(row + 1, r)?;
    }
    tally.scores()
}

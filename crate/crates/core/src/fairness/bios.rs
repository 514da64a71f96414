use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::FairnessError;
use crate::json::ser_f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gender {
    M,
    F,
}

/// One biography: the subject's gender, gold occupation and predicted occupation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiosRecord {
    pub gender: Gender,
    pub gold: String,
    pub predicted: String,
}

/// `[total_m, correct_m, total_f, correct_f]` per gold occupation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BiosTally {
    per_occupation: BTreeMap<String, [u64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiosScores {
    #[serde(serialize_with = "ser_f64")]
    pub acc_all: f64,
    #[serde(serialize_with = "ser_f64")]
    pub acc_m: f64,
    #[serde(serialize_with = "ser_f64")]
    pub acc_f: f64,
    #[serde(serialize_with = "ser_f64")]
    pub gap_tpr: f64,
    #[serde(serialize_with = "ser_f64")]
    pub gap_rms: f64,
    /// Occupations contributing to `gap_rms`.
    pub occupations_used: usize,
    /// Occupations lacking gold examples for one gender, left out of `gap_rms`.
    pub occupations_excluded: Vec<String>,
}

impl BiosTally {
    pub fn add(&mut self, r: &BiosRecord) {
        let slot = self.per_occupation.entry(r.gold.clone()).or_default();
        let base = match r.gender {
            Gender::M => 0,
            Gender::F => 2,
        };
        slot[base] += 1;
        slot[base + 1] += (r.gold == r.predicted) as u64;
    }

    pub fn merge(&mut self, other: &Self) {
        for (occ, counts) in &other.per_occupation {
            let slot = self.per_occupation.entry(occ.clone()).or_default();
            for i in 0..4 {
                slot[i] += counts[i];
            }
        }
    }

    /// Accuracies and gaps as fractions in `[0, 1]`. A gender's TPR is the
    /// recall of the gold occupation over all of that gender's records.
    pub fn scores(&self) -> Result<BiosScores, FairnessError> {
        let mut totals = [0u64; 4];
        for counts in self.per_occupation.values() {
            for i in 0..4 {
                totals[i] += counts[i];
            }
        }
        if totals[0] == 0 {
            return Err(FairnessError::MissingGroup("male".into()));
        }
        if totals[2] == 0 {
            return Err(FairnessError::MissingGroup("female".into()));
        }
        let acc_m = totals[1] as f64 / totals[0] as f64;
        let acc_f = totals[3] as f64 / totals[2] as f64;
        let acc_all = (totals[1] + totals[3]) as f64 / (totals[0] + totals[2]) as f64;

        let mut sum_sq = 0.0;
        let mut used = 0usize;
        let mut excluded = Vec::new();
        for (occ, c) in &self.per_occupation {
            if c[0] == 0 || c[2] == 0 {
                excluded.push(occ.clone());
                continue;
            }
            let gap = c[1] as f64 / c[0] as f64 - c[3] as f64 / c[2] as f64;
            sum_sq += gap * gap;
            used += 1;
        }
        let gap_rms = if used == 0 {
            0.0
        } else {
            (sum_sq / used as f64).sqrt()
        };

        Ok(BiosScores {
            acc_all,
            acc_m,
            acc_f,
            gap_tpr: (acc_m - acc_f).abs(),
            gap_rms,
            occupations_used: used,
            occupations_excluded: excluded,
        })
    }
}

pub fn bios_gaps(records: &[BiosRecord]) -> Result<BiosScores, FairnessError> {
    let mut tally = BiosTally::default();
    records.iter().for_each(|r| tally.add(r));
    tally.scores()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn group(gender: Gender, occ: &str, correct: usize, total: usize) -> Vec<BiosRecord> {
        (0..total)
            .map(|i| BiosRecord {
                gender,
                gold: occ.into(),
                predicted: if i < correct {
                    occ.into()
                } else {
                    "other".into()
                },
            })
            .collect()
    }

    #[test]
    fn rms_of_hand_gaps() {
        let mut recs = Vec::new();
        recs.extend(group(Gender::M, "nurse", 10, 10));
        recs.extend(group(Gender::F, "nurse", 9, 10));
        recs.extend(group(Gender::M, "surgeon", 10, 10));
        recs.extend(group(Gender::F, "surgeon", 8, 10));
        recs.extend(group(Gender::M, "poet", 8, 10));
        recs.extend(group(Gender::F, "poet", 10, 10));
        let s = bios_gaps(&recs).unwrap();
        assert!((s.gap_rms - 0.03f64.sqrt()).abs() < 1e-12);
        assert_eq!(s.occupations_used, 3);
        assert!((s.acc_m - 28.0 / 30.0).abs() < 1e-15);
        assert!((s.gap_tpr - 1.0 / 30.0).abs() < 1e-15);
    }

    #[test]
    fn equal_tpr_gives_zero_gap_and_excludes_one_sided_occupations() {
        let mut recs = group(Gender::M, "dj", 1, 2);
        recs.extend(group(Gender::F, "dj", 1, 2));
        recs.extend(group(Gender::F, "model", 2, 4));
        let s = bios_gaps(&recs).unwrap();
        assert_eq!(s.gap_tpr, 0.0);
        assert_eq!(s.occupations_excluded, vec!["model".to_string()]);
    }

    #[test]
    fn gender_absent() {
        let recs = group(Gender::F, "dj", 1, 2);
        assert!(matches!(bios_gaps(&recs), Err(FairnessError::MissingGroup(g)) if g == "male"));
    }
}

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::array_io::SubsetSpec;

pub const MASK: u32 = 0;
pub const PAD: u32 = 1;

/// Probability that a context's sensitive slot is filled from its majority
/// group: one value for every context, or one per context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Skew {
    Uniform(f64),
    PerContext(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticCorpusSpec {
    pub num_group_a: usize,
    pub num_group_b: usize,
    pub num_contexts: usize,
    pub num_filler: usize,
    pub skew: Skew,
    pub sentence_len: usize,
    pub num_sentences: usize,
    pub seed: u64,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        SyntheticCorpusSpec {
            num_group_a: 8,
            num_group_b: 8,
            num_contexts: 16,
            num_filler: 32,
            skew: Skew::Uniform(0.8),
            sentence_len: 8,
            num_sentences: 5000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SensitiveGroup {
    A,
    B,
}

/// Token id layout: `[MASK]=0`, `[PAD]=1`, then group A, group B, context
/// and filler ids in contiguous blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VocabLayout {
    pub num_group_a: usize,
    pub num_group_b: usize,
    pub num_contexts: usize,
    pub num_filler: usize,
}

impl VocabLayout {
    pub fn group_a(&self) -> Range<usize> {
        2..2 + self.num_group_a
    }

    pub fn group_b(&self) -> Range<usize> {
        let start = self.group_a().end;
        start..start + self.num_group_b
    }

    pub fn contexts(&self) -> Range<usize> {
        let start = self.group_b().end;
        start..start + self.num_contexts
    }

    pub fn fillers(&self) -> Range<usize> {
        let start = self.contexts().end;
        start..start + self.num_filler
    }

    pub fn vocab_size(&self) -> usize {
        self.fillers().end
    }

    /// Both sensitive groups, the regularizer's default subset.
    pub fn sensitive(&self) -> SubsetSpec {
        SubsetSpec::new(self.group_a().chain(self.group_b()).collect(), "sensitive")
            .expect("layout has sensitive tokens")
    }

    /// Even contexts lean towards group A, odd ones towards group B.
    pub fn majority_group(&self, context: usize) -> SensitiveGroup {
        if context.is_multiple_of(2) {
            SensitiveGroup::A
        } else {
            SensitiveGroup::B
        }
    }

    pub fn group_range(&self, group: SensitiveGroup) -> Range<usize> {
        match group {
            SensitiveGroup::A => self.group_a(),
            SensitiveGroup::B => self.group_b(),
        }
    }

    pub fn group_of(&self, token: usize) -> Option<SensitiveGroup> {
        if self.group_a().contains(&token) {
            Some(SensitiveGroup::A)
        } else if self.group_b().contains(&token) {
            Some(SensitiveGroup::B)
        } else {
            None
        }
    }
}

impl SyntheticCorpusSpec {
    pub fn layout(&self) -> VocabLayout {
        VocabLayout {
            num_group_a: self.num_group_a,
            num_group_b: self.num_group_b,
            num_contexts: self.num_contexts,
            num_filler: self.num_filler,
        }
    }

    pub fn skew_for(&self, context: usize) -> f64 {
        match &self.skew {
            Skew::Uniform(p) => *p,
            Skew::PerContext(ps) => ps[context],
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::CorpusSpec(msg));
        if self.num_group_a == 0 || self.num_group_b == 0 {
            return bad("both sensitive groups need at least one token".into());
        }
        if self.num_contexts == 0 {
            return bad("need at least one context token".into());
        }
        if self.sentence_len < 2 {
            return bad(format!(
                "sentence_len {} leaves no room for context and masked slot",
                self.sentence_len
            ));
        }
        if self.sentence_len > 2 && self.num_filler == 0 {
            return bad("sentences longer than 2 need filler tokens".into());
        }
        let skews: Vec<f64> = match &self.skew {
            Skew::Uniform(p) => vec![*p],
            Skew::PerContext(ps) => {
                if ps.len() != self.num_contexts {
                    return bad(format!(
                        "{} skew values for {} contexts",
                        ps.len(),
                        self.num_contexts
                    ));
                }
                ps.clone()
            }
        };
        if let Some(p) = skews.iter().find(|p| !(0.5..=1.0).contains(*p)) {
            return bad(format!("skew {p} outside [0.5, 1]"));
        }
        let total = [
            self.num_group_a,
            self.num_group_b,
            self.num_contexts,
            self.num_filler,
        ]
        .iter()
        .try_fold(2usize, |acc, &n| acc.checked_add(n));
        match total {
            Some(c) if c <= u32::MAX as usize => Ok(()),
            _ => Err(TrainError::VocabOverflow(format!(
                "{} + {} + {} + {} tokens do not fit 32-bit ids",
                self.num_group_a, self.num_group_b, self.num_contexts, self.num_filler
            ))),
        }
    }
}

/// Sentences with exactly one masked sensitive slot and one context token.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub spec: SyntheticCorpusSpec,
    /// Row-major `num_sentences x sentence_len`, masked slot already `[MASK]`.
    pub tokens: Vec<u32>,
    pub mask_positions: Vec<usize>,
    /// Gold sensitive token of each sentence.
    pub gold: Vec<usize>,
    /// Context index (not token id) of each sentence.
    pub contexts: Vec<usize>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.gold.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gold.is_empty()
    }

    pub fn sentence_len(&self) -> usize {
        self.spec.sentence_len
    }

    pub fn layout(&self) -> VocabLayout {
        self.spec.layout()
    }

    pub fn sentence(&self, i: usize) -> &[u32] {
        let t = self.sentence_len();
        &self.tokens[i * t..(i + 1) * t]
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        let mut tokens = Vec::with_capacity(indices.len() * self.sentence_len());
        for &i in indices {
            tokens.extend_from_slice(self.sentence(i));
        }
        Batch {
            sentence_len: self.sentence_len(),
            tokens,
            targets: indices.iter().map(|&i| self.gold[i]).collect(),
        }
    }

    pub fn full_batch(&self) -> Batch {
        Batch {
            sentence_len: self.sentence_len(),
            tokens: self.tokens.clone(),
            targets: self.gold.clone(),
        }
    }
}

/// Fixed-length token rows plus the gold token of each row's masked slot.
/// `targets` may be empty for inference-only use.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub sentence_len: usize,
    pub tokens: Vec<u32>,
    pub targets: Vec<usize>,
}

impl Batch {
    pub fn rows(&self) -> usize {
        self.tokens
            .len()
            .checked_div(self.sentence_len)
            .unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.tokens[i * self.sentence_len..(i + 1) * self.sentence_len]
    }
}

pub fn generate_corpus(spec: &SyntheticCorpusSpec) -> Result<Corpus, TrainError> {
    spec.validate()?;
    let layout = spec.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let t = spec.sentence_len;
    let n = spec.num_sentences;

    let mut tokens = Vec::with_capacity(n * t);
    let mut mask_positions = Vec::with_capacity(n);
    let mut gold = Vec::with_capacity(n);
    let mut contexts = Vec::with_capacity(n);
    let mut positions: Vec<usize> = (0..t).collect();

    for _ in 0..n {
        let context = rng.random_range(0..spec.num_contexts);
        let majority = layout.majority_group(context);
        let group = if rng.random::<f64>() < spec.skew_for(context) {
            majority
        } else {
            match majority {
                SensitiveGroup::A => SensitiveGroup::B,
                SensitiveGroup::B => SensitiveGroup::A,
            }
        };
        let members = layout.group_range(group);
        let target = members.start + rng.random_range(0..members.len());

        positions.shuffle(&mut rng);
        let (mask_pos, context_pos) = (positions[0], positions[1]);
        let mut row = vec![0u32; t];
        for (pos, slot) in row.iter_mut().enumerate() {
            *slot = if pos == mask_pos {
                MASK
            } else if pos == context_pos {
                (layout.contexts().start + context) as u32
            } else {
                (layout.fillers().start + rng.random_range(0..spec.num_filler)) as u32
            };
        }
        tokens.extend_from_slice(&row);
        mask_positions.push(mask_pos);
        gold.push(target);
        contexts.push(context);
    }

    Ok(Corpus {
        spec: spec.clone(),
        tokens,
        mask_positions,
        gold,
        contexts,
    })
}

//! Gendered word lists used to build the sensitive-vocabulary subset.
//!
//! The lists are shipped verbatim, duplicates included. Mapping words to token
//! ids is tokenizer-specific and happens in the exporter; the core toolkit only
//! ever sees the resulting subset files.

const MALE: &str = include_str!("../data/male_words.txt");
const FEMALE: &str = include_str!("../data/female_words.txt");

fn entries(text: &'static str) -> Vec<&'static str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect()
}

pub fn male_words() -> Vec<&'static str> {
    entries(MALE)
}

pub fn female_words() -> Vec<&'static str> {
    entries(FEMALE)
}

/// Distinct words of both lists, in first-seen order (male list first).
pub fn gender_words() -> Vec<&'static str> {
    let mut seen = std::collections::HashSet::new();
    male_words()
        .into_iter()
        .chain(female_words())
        .filter(|w| seen.insert(*w))
        .collect()
}

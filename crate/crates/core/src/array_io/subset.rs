use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ArrayError;

/// An explicit, sorted set of class indices such as the gender-word subset or
/// a size-matched random subset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetSpec {
    ids: Vec<usize>,
    label: String,
}

impl SubsetSpec {
    /// Sorts and deduplicates `ids`; fails if nothing remains.
    pub fn new(mut ids: Vec<usize>, label: impl Into<String>) -> Result<Self, ArrayError> {
        ids.sort_unstable();
        ids.dedup();
        if ids.is_empty() {
            return Err(ArrayError::EmptySubset);
        }
        Ok(SubsetSpec {
            ids,
            label: label.into(),
        })
    }

    /// Every class of a vocabulary of size `vocab_size`.
    pub fn whole(vocab_size: usize) -> Result<Self, ArrayError> {
        Self::new((0..vocab_size).collect(), "whole")
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.ids.binary_search(&id).is_ok()
    }

    /// Position of `id` within the subset.
    pub fn position(&self, id: usize) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    /// Checks every id against a vocabulary of `vocab_size` classes.
    pub fn bind(&self, vocab_size: usize) -> Result<(), ArrayError> {
        match self.ids.last() {
            Some(&id) if id >= vocab_size => Err(ArrayError::SubsetBounds { id, vocab_size }),
            _ => Ok(()),
        }
    }
}

pub fn parse_subset(
    text: &str,
    vocab_size: usize,
    label: impl Into<String>,
) -> Result<SubsetSpec, ArrayError> {
    let mut ids = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let id: usize = line.parse().map_err(|_| ArrayError::SubsetParse {
            line: i + 1,
            message: format!("{line:?} is not a non-negative integer"),
        })?;
        if id >= vocab_size {
            return Err(ArrayError::SubsetBounds { id, vocab_size });
        }
        ids.push(id);
    }
    SubsetSpec::new(ids, label)
}

/// Reads a subset file; the label is taken from the file stem.
pub fn read_subset(path: impl AsRef<Path>, vocab_size: usize) -> Result<SubsetSpec, ArrayError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| ArrayError::io(path, e))?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_subset(&text, vocab_size, label)
}

pub fn write_subset(subset: &SubsetSpec, path: impl AsRef<Path>) -> Result<(), ArrayError> {
    let path = path.as_ref();
    let mut text = format!("# {}\n", subset.label());
    for id in subset.ids() {
        text.push_str(&id.to_string());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| ArrayError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dedups_and_sorts() {
        let s = parse_subset("5\n2\n5", 10, "t").unwrap();
        assert_eq!(s.ids(), &[2, 5]);
    }

    #[test]
    fn out_of_vocab_is_bounds_error() {
        let err = parse_subset("12", 10, "t").unwrap_err();
        assert!(matches!(
            err,
            ArrayError::SubsetBounds {
                id: 12,
                vocab_size: 10
            }
        ));
    }

    #[test]
    fn comments_and_blank_lines() {
        let s = parse_subset("# gender\n\n3\n  1  \n# trailing", 4, "t").unwrap();
        assert_eq!(s.ids(), &[1, 3]);
    }

    #[test]
    fn empty_after_comments_is_error() {
        assert!(matches!(
            parse_subset("# nothing\n", 4, "t"),
            Err(ArrayError::EmptySubset)
        ));
    }

    #[test]
    fn garbage_line_reports_line_number() {
        let err = parse_subset("1\n-2\n", 4, "t").unwrap_err();
        assert!(matches!(err, ArrayError::SubsetParse { line: 2, .. }));
    }

    #[test]
    fn bind_checks_largest_id() {
        let s = SubsetSpec::new(vec![0, 7], "x").unwrap();
        assert!(s.bind(8).is_ok());
        assert!(s.bind(7).is_err());
    }

    #[test]
    fn file_round_trip_uses_stem_as_label() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gender.txt");
        let s = SubsetSpec::new(vec![4, 9, 1], "gender").unwrap();
        write_subset(&s, &path).unwrap();
        assert_eq!(read_subset(&path, 10).unwrap(), s);
    }
}

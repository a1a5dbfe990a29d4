//! Open-vocabulary object labels used for grounding.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// The 80 MS COCO categories, one per line.
pub const COCO_LABELS: &str = include_str!("../data/coco_labels.txt");

/// Where a label came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LabelSource {
    Base,
    User,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum VocabularyError {
    /// No labels survived parsing and deduplication.
    Empty,
    /// An entry normalized to the empty string.
    EmptyLabel {
        index: usize,
        source: LabelSource,
    },
    NotFound(String),
    /// Removing the label would leave the vocabulary empty.
    WouldBeEmpty(String),
}

impl fmt::Display for VocabularyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Empty => write!(f, "vocabulary is empty"),
            Self::EmptyLabel { index, source } => {
                write!(f, "{source:?} label #{index} is empty after normalization")
            }
            Self::NotFound(label) => write!(f, "label \"{label}\" is not in the vocabulary"),
            Self::WouldBeEmpty(label) => {
                write!(f, "removing \"{label}\" would leave the vocabulary empty")
            }
        }
    }
}

impl core::error::Error for VocabularyError {}

/// Canonical label form: lowercase, trimmed, internal whitespace collapsed to
/// single spaces.
pub fn normalize_label(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for word in raw.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&word.to_lowercase());
    }
    out
}

/// Splits a vocabulary text file into raw entries. Blank lines and lines
/// starting with `#` are skipped.
pub fn parse_label_list(text: &str) -> Vec<&str> {
    text.lines()
        .map(str::trim)
        .filter(|line| !line.is_empty() && !line.starts_with('#'))
        .collect()
}

/// Ordered, deduplicated list of normalized object labels.
///
/// Base labels come first in file order, followed by user labels that are not
/// already present.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    labels: Vec<String>,
    sources: Vec<LabelSource>,
}

impl Vocabulary {
    pub fn from_lists<B, U, S, T>(base: B, user: U) -> Result<Self, VocabularyError>
    where
        B: IntoIterator<Item = S>,
        U: IntoIterator<Item = T>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        let mut vocab = Vocabulary {
            labels: Vec::new(),
            sources: Vec::new(),
        };
        for (index, raw) in base.into_iter().enumerate() {
            vocab.push(raw.as_ref(), index, LabelSource::Base)?;
        }
        for (index, raw) in user.into_iter().enumerate() {
            vocab.push(raw.as_ref(), index, LabelSource::User)?;
        }
        if vocab.labels.is_empty() {
            return Err(VocabularyError::Empty);
        }
        Ok(vocab)
    }

    /// Only base labels.
    pub fn from_labels<I, S>(labels: I) -> Result<Self, VocabularyError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self::from_lists(labels, core::iter::empty::<&str>())
    }

    /// The built-in COCO base list.
    pub fn coco() -> Self {
        Self::from_labels(parse_label_list(COCO_LABELS)).expect("bundled COCO list is valid")
    }

    /// The built-in COCO base list extended with user labels.
    pub fn coco_with<U, T>(user: U) -> Result<Self, VocabularyError>
    where
        U: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        Self::from_lists(parse_label_list(COCO_LABELS), user)
    }

    fn push(
        &mut self,
        raw: &str,
        index: usize,
        source: LabelSource,
    ) -> Result<(), VocabularyError> {
        let label = normalize_label(raw);
        if label.is_empty() {
            return Err(VocabularyError::EmptyLabel { index, source });
        }
        if !self.labels.contains(&label) {
            self.labels.push(label);
            self.sources.push(source);
        }
        Ok(())
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, LabelSource)> {
        self.labels
            .iter()
            .map(String::as_str)
            .zip(self.sources.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// Always false for a constructed vocabulary.
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Index of `label` after normalization.
    pub fn position(&self, label: &str) -> Option<usize> {
        let label = normalize_label(label);
        self.labels.iter().position(|l| *l == label)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.position(label).is_some()
    }

    pub fn source(&self, label: &str) -> Option<LabelSource> {
        self.position(label).map(|i| self.sources[i])
    }

    /// Returns a copy without `label`, preserving the order of the rest.
    pub fn without(&self, label: &str) -> Result<Self, VocabularyError> {
        let index = self
            .position(label)
            .ok_or_else(|| VocabularyError::NotFound(normalize_label(label)))?;
        if self.labels.len() == 1 {
            return Err(VocabularyError::WouldBeEmpty(self.labels[0].clone()));
        }
        let mut out = self.clone();
        out.labels.remove(index);
        out.sources.remove(index);
        Ok(out)
    }
}

/// Free-function form of [`Vocabulary::without`].
pub fn remove_label(vocab: &Vocabulary, label: &str) -> Result<Vocabulary, VocabularyError> {
    vocab.without(label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn labels(v: &Vocabulary) -> Vec<&str> {
        v.labels().iter().map(String::as_str).collect()
    }

    #[test]
    fn identity_merge() {
        let v = Vocabulary::from_labels(["chair", "cup"]).unwrap();
        assert_eq!(labels(&v), vec!["chair", "cup"]);
    }

    #[test]
    fn user_label_is_normalized_and_appended() {
        let v = Vocabulary::from_lists(["chair"], ["Living Wall Portrait"]).unwrap();
        assert_eq!(labels(&v), vec!["chair", "living wall portrait"]);
        assert_eq!(v.source("living wall portrait"), Some(LabelSource::User));
    }

    #[test]
    fn duplicates_keep_base_entry() {
        let v = Vocabulary::from_lists(["chair", "cup"], ["CUP ", "desk"]).unwrap();
        assert_eq!(labels(&v), vec!["chair", "cup", "desk"]);
        assert_eq!(v.source("cup"), Some(LabelSource::Base));
        assert_eq!(v.source("desk"), Some(LabelSource::User));
    }

    #[test]
    fn whitespace_is_collapsed() {
        assert_eq!(
            normalize_label("  Fire\t Extinguisher \n"),
            "fire extinguisher"
        );
    }

    #[test]
    fn empty_entries_are_rejected() {
        let err =
            Vocabulary::from_lists(["chair", "   "], core::iter::empty::<&str>()).unwrap_err();
        assert_eq!(
            err,
            VocabularyError::EmptyLabel {
                index: 1,
                source: LabelSource::Base
            }
        );
        assert_eq!(
            Vocabulary::from_labels(core::iter::empty::<&str>()).unwrap_err(),
            VocabularyError::Empty
        );
    }

    #[test]
    fn parse_skips_comments_and_blanks() {
        let text = "# header\nchair\n\n  # indented comment\ncup\n";
        assert_eq!(parse_label_list(text), vec!["chair", "cup"]);
    }

    #[test]
    fn remove_preserves_order() {
        let v = Vocabulary::from_labels(["a", "b", "c"]).unwrap();
        assert_eq!(labels(&remove_label(&v, "b").unwrap()), vec!["a", "c"]);
    }

    #[test]
    fn remove_normalizes_argument() {
        let v = Vocabulary::from_labels(["chair", "cup"]).unwrap();
        assert_eq!(labels(&v.without("CUP").unwrap()), vec!["chair"]);
    }

    #[test]
    fn remove_last_label_is_an_error() {
        let v = Vocabulary::from_labels(["a"]).unwrap();
        assert_eq!(
            v.without("a").unwrap_err(),
            VocabularyError::WouldBeEmpty("a".into())
        );
    }

    #[test]
    fn remove_missing_label_is_an_error() {
        let v = Vocabulary::from_labels(["a", "b"]).unwrap();
        assert_eq!(
            v.without("z").unwrap_err(),
            VocabularyError::NotFound("z".into())
        );
    }

    #[test]
    fn coco_has_eighty_labels() {
        let v = Vocabulary::coco();
        assert_eq!(v.len(), 80);
        assert_eq!(v.labels()[0], "person");
        assert!(v.contains("dining table"));
    }
}

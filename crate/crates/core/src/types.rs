//! Token-level sequence types shared across the crate.

use crate::error::{Error, Result};
use crate::vocab::{TokenId, BLANK_ID};

/// A blank-free sequence of token ids — the output space of decoding and
/// the label space of alignment/loss computations. May be empty.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenSequence {
    ids: Vec<TokenId>,
}

impl TokenSequence {
    /// Build a sequence, rejecting any blank id.
    pub fn new(ids: Vec<TokenId>) -> Result<Self> {
        if let Some(pos) = ids.iter().position(|&id| id == BLANK_ID) {
            return Err(Error::Invalid(format!(
                "token sequence contains blank at position {pos}"
            )));
        }
        Ok(TokenSequence { ids })
    }

    pub fn empty() -> Self {
        TokenSequence::default()
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.ids.iter().copied()
    }
}

impl<'a> IntoIterator for &'a TokenSequence {
    type Item = TokenId;
    type IntoIter = std::iter::Copied<std::slice::Iter<'a, TokenId>>;

    fn into_iter(self) -> Self::IntoIter {
        self.ids.iter().copied()
    }
}

/// A frame-level alignment: one label (blank allowed) per frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlignmentPath {
    labels: Vec<TokenId>,
}

impl AlignmentPath {
    pub fn new(labels: Vec<TokenId>) -> Self {
        AlignmentPath { labels }
    }

    pub fn labels(&self) -> &[TokenId] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

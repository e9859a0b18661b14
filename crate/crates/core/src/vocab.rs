//! Token vocabulary with a pinned blank and greedy tokenization.
//!
//! The blank token lives at index 0 in every file and every matrix column;
//! the wildcard used for spotting is *not* a vocabulary entry (it exists
//! only as a lattice state).

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Index into a [`Vocabulary`], also the column index of posteriorgrams.
pub type TokenId = usize;

/// The blank id, structurally pinned to the first vocabulary entry.
pub const BLANK_ID: TokenId = 0;

/// The literal spelling of the blank token in vocabulary files.
pub const BLANK_TOKEN: &str = "<blank>";

/// Ordered token inventory: `<blank>` plus the real tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Validate and build a vocabulary. The first token must be exactly
    /// `<blank>`; all tokens must be distinct and non-empty.
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Vocab("empty token list".into()));
        }
        if tokens[0] != BLANK_TOKEN {
            return Err(Error::Vocab(format!(
                "first token must be {BLANK_TOKEN:?}, found {:?}",
                tokens[0]
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if tok.is_empty() {
                return Err(Error::Vocab(format!("empty token at index {id}")));
            }
            if id > 0 && tok == BLANK_TOKEN {
                return Err(Error::Vocab(format!(
                    "token {id} duplicates the blank spelling"
                )));
            }
            if index.insert(tok.clone(), id).is_some() {
                return Err(Error::Vocab(format!("duplicate token {tok:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    /// Convenience constructor from string slices.
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Result<Self> {
        Vocabulary::new(tokens.iter().map(|s| s.as_ref().to_owned()).collect())
    }

    /// Number of entries including the blank (|V| + 1).
    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id_of(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    /// Render a token sequence as the concatenation of its token strings.
    pub fn render(&self, seq: &crate::types::TokenSequence) -> String {
        seq.iter().map(|id| self.token(id)).collect()
    }

    /// One token per line; line index is the token id, first line `<blank>`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens: Vec<String> = text
            .lines()
            .map(|l| l.strip_suffix('\r').unwrap_or(l).to_owned())
            .collect();
        Vocabulary::new(tokens).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        for tok in &self.tokens {
            out.push_str(tok);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Greedy longest-match left-to-right segmentation of `surface` into
/// vocabulary tokens (the blank never matches). Errors name the first
/// character position where no token matches.
pub fn tokenize(surface: &str, vocab: &Vocabulary) -> Result<crate::types::TokenSequence> {
    let chars: Vec<char> = surface.chars().collect();
    let mut ids = Vec::new();
    let mut pos = 0;
    while pos < chars.len() {
        let mut best: Option<(usize, TokenId)> = None;
        for (id, tok) in vocab.tokens.iter().enumerate().skip(1) {
            let tok_chars: Vec<char> = tok.chars().collect();
            let n = tok_chars.len();
            if n == 0 || pos + n > chars.len() {
                continue;
            }
            if chars[pos..pos + n] == tok_chars[..]
                && best.map_or(true, |(len, _)| n > len)
            {
                best = Some((n, id));
            }
        }
        match best {
            Some((len, id)) => {
                ids.push(id);
                pos += len;
            }
            None => {
                return Err(Error::Tokenize {
                    surface: surface.to_owned(),
                    position: pos,
                })
            }
        }
    }
    crate::types::TokenSequence::new(ids)
}

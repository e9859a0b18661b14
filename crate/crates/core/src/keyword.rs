//! Target keywords and the keyword list file format.
//!
//! Keyword files are UTF-8 text, one surface per line; blank lines and
//! lines starting with `#` are ignored. An optional tab-separated suffix
//! tag (`IV` or `OOV`) classifies the keyword for evaluation.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::TokenSequence;
use crate::vocab::{self, Vocabulary};

/// A keyword surface together with its vocabulary tokenization.
///
/// Invariant: `ids` is nonempty and concatenating its token strings
/// reproduces `surface`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Keyword {
    pub surface: String,
    pub ids: TokenSequence,
}

impl Keyword {
    /// Tokenize `surface` greedily against `vocab`.
    pub fn tokenize(surface: &str, vocab: &Vocabulary) -> Result<Self> {
        if surface.is_empty() {
            return Err(Error::Invalid("empty keyword surface".into()));
        }
        let ids = vocab::tokenize(surface, vocab)?;
        Ok(Keyword {
            surface: surface.to_owned(),
            ids,
        })
    }
}

/// In-vocabulary / out-of-vocabulary class tag used by evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeywordClass {
    InVocabulary,
    OutOfVocabulary,
}

impl KeywordClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            KeywordClass::InVocabulary => "IV",
            KeywordClass::OutOfVocabulary => "OOV",
        }
    }
}

/// One parsed line of a keyword file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KeywordEntry {
    pub surface: String,
    pub class: Option<KeywordClass>,
}

/// Parse a keyword file into surfaces plus optional IV/OOV tags.
pub fn read_keyword_file(path: impl AsRef<Path>) -> Result<Vec<KeywordEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (surface, class) = match line.split_once('\t') {
            Some((s, tag)) => {
                let class = match tag.trim() {
                    "IV" => KeywordClass::InVocabulary,
                    "OOV" => KeywordClass::OutOfVocabulary,
                    other => {
                        return Err(Error::format(
                            path,
                            format!("line {}: unknown keyword tag {other:?}", lineno + 1),
                        ))
                    }
                };
                (s, Some(class))
            }
            None => (line, None),
        };
        if surface.is_empty() {
            return Err(Error::format(
                path,
                format!("line {}: empty keyword surface", lineno + 1),
            ));
        }
        entries.push(KeywordEntry {
            surface: surface.to_owned(),
            class,
        });
    }
    Ok(entries)
}

/// Load and tokenize every keyword in a file.
pub fn load_keywords(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Vec<Keyword>> {
    read_keyword_file(path)?
        .into_iter()
        .map(|e| Keyword::tokenize(&e.surface, vocab))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenization_round_trips_surface() {
        let v = Vocabulary::from_tokens(&["<blank>", "c", "a", "t"]).unwrap();
        let kw = Keyword::tokenize("cat", &v).unwrap();
        let rebuilt: String = kw.ids.iter().map(|id| v.token(id)).collect();
        assert_eq!(rebuilt, "cat");
    }

    #[test]
    fn parses_comments_blanks_and_tags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kw.txt");
        fs::write(&path, "# comment\ncat\tOOV\n\ndog\tIV\nbird\n").unwrap();
        let entries = read_keyword_file(&path).unwrap();
        assert_eq!(entries.len(), 3);
        assert_eq!(entries[0].class, Some(KeywordClass::OutOfVocabulary));
        assert_eq!(entries[1].class, Some(KeywordClass::InVocabulary));
        assert_eq!(entries[2].class, None);
        assert_eq!(entries[2].surface, "bird");
    }

    #[test]
    fn rejects_unknown_tag() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kw.txt");
        fs::write(&path, "cat\tXX\n").unwrap();
        assert!(read_keyword_file(&path).is_err());
    }
}

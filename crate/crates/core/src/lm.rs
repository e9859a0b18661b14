//! Backoff n-gram language model over the standard ARPA text format.
//!
//! Probabilities are stored in log10 exactly as the format defines them;
//! shallow-fusion callers convert to natural log at the mixing point.
//! Unknown words score through the `<unk>` unigram when the model has
//! one, otherwise through a configurable log10 floor.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Default log10 score for words outside the model when it has no <unk>.
pub const DEFAULT_UNK_FLOOR: f64 = -99.0;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Entry {
    log10_prob: f64,
    backoff: f64,
}

/// A queryable backoff model. Tables are keyed by full token sequences;
/// `grams[n-1]` holds the n-gram table.
#[derive(Clone, Debug)]
pub struct NGramLM {
    order: usize,
    grams: Vec<BTreeMap<Vec<String>, Entry>>,
    unk_floor: f64,
}

impl NGramLM {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn set_unknown_floor(&mut self, log10: f64) {
        self.unk_floor = log10;
    }

    pub fn contains(&self, word: &str) -> bool {
        self.grams[0].contains_key(std::slice::from_ref(&word.to_owned()))
    }

    fn unigram(&self, word: &str) -> f64 {
        let key = vec![word.to_owned()];
        if let Some(e) = self.grams[0].get(&key) {
            return e.log10_prob;
        }
        let unk = vec!["<unk>".to_owned()];
        self.grams[0]
            .get(&unk)
            .map(|e| e.log10_prob)
            .unwrap_or(self.unk_floor)
    }

    fn backoff_weight(&self, context: &[&str]) -> f64 {
        let key: Vec<String> = context.iter().map(|s| s.to_string()).collect();
        self.grams
            .get(context.len() - 1)
            .and_then(|t| t.get(&key))
            .map(|e| e.backoff)
            .unwrap_or(0.0)
    }

    /// log10 p(word | context), contexts longer than order-1 truncated.
    pub fn score_log10(&self, context: &[&str], word: &str) -> f64 {
        let start = context.len().saturating_sub(self.order - 1);
        self.score_rec(&context[start..], word)
    }

    fn score_rec(&self, context: &[&str], word: &str) -> f64 {
        if context.is_empty() {
            return self.unigram(word);
        }
        let mut key: Vec<String> = context.iter().map(|s| s.to_string()).collect();
        key.push(word.to_owned());
        if let Some(table) = self.grams.get(context.len()) {
            if let Some(e) = table.get(&key) {
                return e.log10_prob;
            }
        }
        self.backoff_weight(context) + self.score_rec(&context[1..], word)
    }

    /// Natural-log score, the domain acoustic scores live in.
    pub fn score_ln(&self, context: &[&str], word: &str) -> f64 {
        self.score_log10(context, word) * std::f64::consts::LN_10
    }

    pub fn num_entries(&self, n: usize) -> usize {
        self.grams.get(n - 1).map(|t| t.len()).unwrap_or(0)
    }
}

/// Parse an ARPA file.
pub fn load_arpa(path: impl AsRef<Path>) -> Result<NGramLM> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_arpa(&text).map_err(|e| match e {
        Error::Invalid(reason) => Error::format(path, reason),
        other => other,
    })
}

/// Parse ARPA text: `\data\` with `ngram N=count` declarations, one
/// `\N-grams:` section per order, `\end\` terminator.
pub fn parse_arpa(text: &str) -> Result<NGramLM> {
    let lines: Vec<&str> = text
        .lines()
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .collect();
    let mut i = 0;
    while i < lines.len() && lines[i].trim() != "\\data\\" {
        i += 1;
    }
    if i == lines.len() {
        return Err(Error::Invalid("missing \\data\\ header".into()));
    }
    i += 1;

    let mut declared: Vec<(usize, usize)> = Vec::new();
    while i < lines.len() {
        let line = lines[i].trim();
        if line.is_empty() {
            i += 1;
            continue;
        }
        if line.starts_with('\\') {
            break;
        }
        let rest = line
            .strip_prefix("ngram ")
            .ok_or_else(|| Error::Invalid(format!("malformed data line {line:?}")))?;
        let (n, count) = rest
            .split_once('=')
            .ok_or_else(|| Error::Invalid(format!("malformed count declaration {line:?}")))?;
        let n: usize = n
            .trim()
            .parse()
            .map_err(|_| Error::Invalid(format!("bad order in {line:?}")))?;
        let count: usize = count
            .trim()
            .parse()
            .map_err(|_| Error::Invalid(format!("bad count in {line:?}")))?;
        declared.push((n, count));
        i += 1;
    }
    if declared.is_empty() {
        return Err(Error::Invalid("no ngram count declarations".into()));
    }
    let order = declared.iter().map(|&(n, _)| n).max().unwrap();
    let mut grams: Vec<BTreeMap<Vec<String>, Entry>> = vec![BTreeMap::new(); order];

    let mut saw_end = false;
    while i < lines.len() {
        let line = lines[i].trim();
        if line.is_empty() {
            i += 1;
            continue;
        }
        if line == "\\end\\" {
            saw_end = true;
            break;
        }
        let section = line
            .strip_prefix('\\')
            .and_then(|s| s.strip_suffix("-grams:"))
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::Invalid(format!("malformed section header {line:?}")))?;
        if section == 0 || section > order {
            return Err(Error::Invalid(format!(
                "section {section}-grams outside declared orders"
            )));
        }
        i += 1;
        while i < lines.len() {
            let entry_line = lines[i].trim();
            if entry_line.is_empty() {
                i += 1;
                continue;
            }
            if entry_line.starts_with('\\') {
                break;
            }
            let fields: Vec<&str> = entry_line.split_whitespace().collect();
            if fields.len() != section + 1 && fields.len() != section + 2 {
                return Err(Error::Invalid(format!(
                    "{section}-gram line has {} fields: {entry_line:?}",
                    fields.len()
                )));
            }
            let log10_prob: f64 = fields[0]
                .parse()
                .map_err(|_| Error::Invalid(format!("bad probability in {entry_line:?}")))?;
            if log10_prob > 0.0 {
                return Err(Error::Invalid(format!(
                    "positive log10 probability in {entry_line:?}"
                )));
            }
            let backoff: f64 = if fields.len() == section + 2 {
                fields[section + 1]
                    .parse()
                    .map_err(|_| Error::Invalid(format!("bad backoff in {entry_line:?}")))?
            } else {
                0.0
            };
            if !log10_prob.is_finite() || !backoff.is_finite() {
                return Err(Error::Invalid(format!(
                    "non-finite value in {entry_line:?}"
                )));
            }
            let words: Vec<String> = fields[1..=section].iter().map(|s| s.to_string()).collect();
            grams[section - 1].insert(words, Entry {
                log10_prob,
                backoff,
            });
            i += 1;
        }
    }
    if !saw_end {
        return Err(Error::Invalid("missing \\end\\ terminator".into()));
    }

    for (n, count) in &declared {
        let actual = grams[n - 1].len();
        if actual != *count {
            return Err(Error::Invalid(format!(
                "{n}-gram count mismatch: declared {count}, found {actual}"
            )));
        }
    }
    // Every word of a higher-order gram must carry a unigram entry.
    for table in &grams[1..] {
        for words in table.keys() {
            for w in words {
                if !grams[0].contains_key(std::slice::from_ref(w)) {
                    return Err(Error::Invalid(format!(
                        "word {w:?} appears in an n-gram but has no unigram entry"
                    )));
                }
            }
        }
    }

    Ok(NGramLM {
        order,
        grams,
        unk_floor: DEFAULT_UNK_FLOOR,
    })
}

/// Write the model back out. Floats use shortest-roundtrip formatting, so
/// reloading reproduces the exact stored values and a second save is
/// byte-identical.
pub fn save_arpa(lm: &NGramLM, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    out.push_str("\\data\\\n");
    for n in 1..=lm.order {
        out.push_str(&format!("ngram {n}={}\n", lm.grams[n - 1].len()));
    }
    for n in 1..=lm.order {
        if lm.grams[n - 1].is_empty() {
            continue;
        }
        out.push_str(&format!("\n\\{n}-grams:\n"));
        for (words, entry) in &lm.grams[n - 1] {
            out.push_str(&format!("{}\t{}", entry.log10_prob, words.join(" ")));
            if entry.backoff != 0.0 {
                out.push_str(&format!("\t{}", entry.backoff));
            }
            out.push('\n');
        }
    }
    out.push_str("\n\\end\\\n");
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

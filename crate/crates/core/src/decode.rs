//! CTC prefix beam search over the final posteriorgram, with optional
//! n-gram shallow fusion and keyword-boosted scoring.
//!
//! Per-prefix bookkeeping follows the classic blank/non-blank split, so
//! with a beam wide enough to hold every reachable prefix the search is
//! exact prefix marginalization. Fusion terms attach when a prefix grows
//! by one token: weighted LM log-probability (converted to natural log),
//! the additive per-token length reward, and the keyword boost. Blank and
//! repeat-merge transitions never receive fusion terms.
//!
//! Keyword boosting adds `kbbs_weight` per token while a hypothesis walks
//! down the keyword trie. Boost for an unfinished walk is provisional: it
//! influences pruning, is locked in when a keyword completes, and is
//! subtracted back out the moment the partial match dies (or when
//! decoding ends mid-match), so dead partial matches carry zero net
//! boost.

use std::collections::BTreeMap;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::keyword::Keyword;
use crate::lm::NGramLM;
use crate::math::log_add;
use crate::posteriorgram::Posteriorgram;
use crate::types::TokenSequence;
use crate::vocab::{TokenId, Vocabulary, BLANK_ID};

/// Beam width and fusion weights. Defaults mirror the tuned operating
/// point: beam 10, LM weight 0.5, length reward 0.2, boosting off
/// (enable at 3.0).
#[derive(Clone, Copy, Debug)]
pub struct DecodeConfig {
    pub beam_size: usize,
    pub lm_weight: f64,
    pub length_penalty: f64,
    pub kbbs_weight: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam_size: 10,
            lm_weight: 0.5,
            length_penalty: 0.2,
            kbbs_weight: 0.0,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::Config("beam size must be at least 1".into()));
        }
        for (name, v) in [
            ("lm_weight", self.lm_weight),
            ("length_penalty", self.length_penalty),
            ("kbbs_weight", self.kbbs_weight),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite, got {v}")));
            }
        }
        Ok(())
    }
}

const TRIE_ROOT: usize = 0;

#[derive(Debug, Default)]
struct TrieNode {
    children: BTreeMap<TokenId, usize>,
    terminal: bool,
    depth: usize,
}

/// Prefix trie over keyword token ids, tracking partial-match depth.
#[derive(Debug)]
pub struct KeywordTrie {
    nodes: Vec<TrieNode>,
}

impl KeywordTrie {
    pub fn build(keywords: &[Keyword]) -> Self {
        let mut nodes = vec![TrieNode::default()];
        for kw in keywords {
            let mut node = TRIE_ROOT;
            for id in kw.ids.iter() {
                node = match nodes[node].children.get(&id).copied() {
                    Some(next) => next,
                    None => {
                        let next = nodes.len();
                        let depth = nodes[node].depth + 1;
                        nodes.push(TrieNode {
                            children: BTreeMap::new(),
                            terminal: false,
                            depth,
                        });
                        nodes[node].children.insert(id, next);
                        next
                    }
                };
            }
            nodes[node].terminal = true;
        }
        KeywordTrie { nodes }
    }

    pub fn child(&self, node: usize, id: TokenId) -> Option<usize> {
        self.nodes[node].children.get(&id).copied()
    }

    pub fn is_terminal(&self, node: usize) -> bool {
        self.nodes[node].terminal
    }

    pub fn depth(&self, node: usize) -> usize {
        self.nodes[node].depth
    }

    fn has_children(&self, node: usize) -> bool {
        !self.nodes[node].children.is_empty()
    }

    /// Walk one token: returns the new node, the new provisional boost,
    /// and the boost locked in by completing a keyword. A failed step
    /// drops the provisional boost and restarts matching at the root.
    fn step(&self, node: usize, id: TokenId, pending: f64, weight: f64) -> (usize, f64, f64) {
        if let Some(child) = self.child(node, id) {
            return self.enter(child, pending + weight);
        }
        // Partial match dies: retract pending, then try restarting on id.
        if node != TRIE_ROOT {
            if let Some(child) = self.child(TRIE_ROOT, id) {
                return self.enter(child, weight);
            }
        }
        (TRIE_ROOT, 0.0, 0.0)
    }

    fn enter(&self, child: usize, pending: f64) -> (usize, f64, f64) {
        if self.is_terminal(child) {
            // Lock the accumulated boost; keep walking if a longer
            // keyword extends this one.
            let node = if self.has_children(child) {
                child
            } else {
                TRIE_ROOT
            };
            (node, 0.0, pending)
        } else {
            (child, pending, 0.0)
        }
    }
}

/// One decoded prefix with its score decomposition.
#[derive(Clone, Debug)]
pub struct ScoredHypothesis {
    pub tokens: TokenSequence,
    /// `acoustic + lm + boost + length_terms`.
    pub total: f64,
    pub acoustic: f64,
    pub lm: f64,
    /// Net keyword boost; dead partial matches contribute nothing.
    pub boost: f64,
    pub length_terms: f64,
}

#[derive(Clone, Debug)]
struct Hyp {
    prefix: Vec<TokenId>,
    p_blank: f64,
    p_nonblank: f64,
    lm_total: f64,
    length_total: f64,
    boost_committed: f64,
    boost_pending: f64,
    trie_node: usize,
}

impl Hyp {
    fn root() -> Self {
        Hyp {
            prefix: Vec::new(),
            p_blank: 0.0,
            p_nonblank: f64::NEG_INFINITY,
            lm_total: 0.0,
            length_total: 0.0,
            boost_committed: 0.0,
            boost_pending: 0.0,
            trie_node: TRIE_ROOT,
        }
    }

    fn acoustic(&self) -> f64 {
        log_add(self.p_blank, self.p_nonblank)
    }

    fn pruning_score(&self) -> f64 {
        self.acoustic() + self.lm_total + self.length_total + self.boost_committed
            + self.boost_pending
    }

    /// Fresh bookkeeping for `prefix + token`, acoustics start empty.
    fn extend(
        &self,
        token: TokenId,
        vocab: &Vocabulary,
        cfg: &DecodeConfig,
        lm: Option<&NGramLM>,
        trie: Option<&KeywordTrie>,
    ) -> Hyp {
        let mut prefix = self.prefix.clone();
        prefix.push(token);

        let mut lm_total = self.lm_total;
        if let Some(lm) = lm {
            let ctx_len = self.prefix.len().min(lm.order() - 1);
            let context: Vec<&str> = self.prefix[self.prefix.len() - ctx_len..]
                .iter()
                .map(|&id| vocab.token(id))
                .collect();
            lm_total += cfg.lm_weight * lm.score_ln(&context, vocab.token(token));
        }

        let (trie_node, boost_pending, committed_delta) = match trie {
            Some(trie) if cfg.kbbs_weight != 0.0 => trie.step(
                self.trie_node,
                token,
                self.boost_pending,
                cfg.kbbs_weight,
            ),
            _ => (TRIE_ROOT, 0.0, 0.0),
        };

        Hyp {
            prefix,
            p_blank: f64::NEG_INFINITY,
            p_nonblank: f64::NEG_INFINITY,
            lm_total,
            length_total: self.length_total + cfg.length_penalty,
            boost_committed: self.boost_committed + committed_delta,
            boost_pending,
            trie_node,
        }
    }
}

/// Prefix beam search. Returns up to `beam_size` hypotheses ranked by
/// total score (descending), ties broken by lexicographic prefix.
/// Provisional boost of unfinished keyword matches is retracted from the
/// returned totals.
pub fn beam_search(
    z: &Posteriorgram,
    vocab: &Vocabulary,
    cfg: &DecodeConfig,
    lm: Option<&NGramLM>,
    trie: Option<&KeywordTrie>,
) -> Result<Vec<ScoredHypothesis>> {
    cfg.validate()?;
    if z.width() != vocab.size() {
        return Err(Error::Shape(format!(
            "posteriorgram width {} does not match vocabulary size {}",
            z.width(),
            vocab.size()
        )));
    }

    let width = z.width();
    let mut beam = vec![Hyp::root()];
    for t in 0..z.frames() {
        let mut next: HashMap<Vec<TokenId>, Hyp> = HashMap::with_capacity(beam.len() * width);
        for hyp in &beam {
            let lp_blank = z.log_prob(t, BLANK_ID);
            if lp_blank != f64::NEG_INFINITY && hyp.acoustic() != f64::NEG_INFINITY {
                let entry = next
                    .entry(hyp.prefix.clone())
                    .or_insert_with(|| Hyp {
                        p_blank: f64::NEG_INFINITY,
                        p_nonblank: f64::NEG_INFINITY,
                        ..hyp.clone()
                    });
                entry.p_blank = log_add(entry.p_blank, hyp.acoustic() + lp_blank);
            }
            if let Some(&last) = hyp.prefix.last() {
                // Repeat without separating blank: same prefix.
                let lp = z.log_prob(t, last);
                if lp != f64::NEG_INFINITY && hyp.p_nonblank != f64::NEG_INFINITY {
                    let entry = next
                        .entry(hyp.prefix.clone())
                        .or_insert_with(|| Hyp {
                            p_blank: f64::NEG_INFINITY,
                            p_nonblank: f64::NEG_INFINITY,
                            ..hyp.clone()
                        });
                    entry.p_nonblank = log_add(entry.p_nonblank, hyp.p_nonblank + lp);
                }
            }
            for token in 1..width {
                let lp = z.log_prob(t, token);
                if lp == f64::NEG_INFINITY {
                    continue;
                }
                // A repeated token needs the blank-separated source; a
                // new token draws from both masses.
                let source = if Some(&token) == hyp.prefix.last() {
                    hyp.p_blank
                } else {
                    hyp.acoustic()
                };
                if source == f64::NEG_INFINITY {
                    continue;
                }
                let mut key = hyp.prefix.clone();
                key.push(token);
                let entry = next
                    .entry(key)
                    .or_insert_with(|| hyp.extend(token, vocab, cfg, lm, trie));
                entry.p_nonblank = log_add(entry.p_nonblank, source + lp);
            }
        }
        let mut candidates: Vec<Hyp> = next.into_values().collect();
        candidates.sort_by(|a, b| {
            b.pruning_score()
                .total_cmp(&a.pruning_score())
                .then_with(|| a.prefix.cmp(&b.prefix))
        });
        candidates.truncate(cfg.beam_size);
        beam = candidates;
    }

    let mut out: Vec<ScoredHypothesis> = beam
        .into_iter()
        .map(|hyp| {
            let acoustic = hyp.acoustic();
            // Unfinished partial matches are dead at end of input.
            let boost = hyp.boost_committed;
            ScoredHypothesis {
                tokens: TokenSequence::new(hyp.prefix).expect("prefixes are blank-free"),
                total: acoustic + hyp.lm_total + boost + hyp.length_total,
                acoustic,
                lm: hyp.lm_total,
                boost,
                length_terms: hyp.length_total,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.total
            .total_cmp(&a.total)
            .then_with(|| a.tokens.cmp(&b.tokens))
    });
    Ok(out)
}

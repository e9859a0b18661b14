//! Wildcard-CTC keyword spotting: lattice construction, path-sum scoring,
//! best-path decoding, and thresholded detection producing per-frame bias
//! indicators.
//!
//! The lattice for a keyword `k1 … km` is the standard CTC expansion of
//! the keyword flanked by two wildcard states:
//!
//! ```text
//! *pre  ε  k1  ε  k2  …  ε  km  ε  *post
//! ```
//!
//! Wildcard states match any symbol including blank at zero cost (emission
//! score 1), absorbing the non-keyword parts of the utterance. Transitions
//! inside the expansion are the usual CTC ones (self-loops, blank hops,
//! skips between distinct labels); `*pre` feeds the first blank and `k1`,
//! and both `km` and the final blank feed `*post`. With this topology the
//! no-wildcard special case collapses to standard CTC, which the oracle
//! tests exploit.
//!
//! Scores are path sums, so a log score may exceed 0 when several disjoint
//! placements each carry mass close to 1; detection only asks for
//! `score > θ`.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::keyword::Keyword;
use crate::math::log_sum_exp;
use crate::posteriorgram::Posteriorgram;
use crate::vocab::{TokenId, BLANK_ID};

/// One lattice state of a [`WildcardGraph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphState {
    PreStar,
    Blank,
    Token(TokenId),
    PostStar,
}

/// Detection threshold in log domain.
#[derive(Clone, Copy, Debug)]
pub struct SpotConfig {
    pub theta: f64,
}

impl SpotConfig {
    pub fn new(theta: f64) -> Result<Self> {
        if !theta.is_finite() {
            return Err(Error::Config(format!("theta must be finite, got {theta}")));
        }
        Ok(SpotConfig { theta })
    }
}

/// Spotting lattice for a single keyword.
#[derive(Clone, Debug)]
pub struct WildcardGraph {
    states: Vec<GraphState>,
    successors: Vec<Vec<usize>>,
    predecessors: Vec<Vec<usize>>,
    keyword_len: usize,
}

impl WildcardGraph {
    /// Build the lattice for `kw`. Repeated adjacent keyword tokens forbid
    /// the skip transition, forcing the intervening blank.
    pub fn build(kw: &Keyword, vocab_size: usize) -> Result<Self> {
        let ids = kw.ids.ids();
        if ids.is_empty() {
            return Err(Error::Invalid("empty keyword".into()));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id >= vocab_size) {
            return Err(Error::Shape(format!(
                "keyword token id {bad} outside vocabulary of size {vocab_size}"
            )));
        }
        let m = ids.len();
        let mut states = Vec::with_capacity(2 * m + 3);
        states.push(GraphState::PreStar);
        for &id in ids {
            states.push(GraphState::Blank);
            states.push(GraphState::Token(id));
        }
        states.push(GraphState::Blank);
        states.push(GraphState::PostStar);

        let post = 2 * m + 2;
        let mut successors: Vec<Vec<usize>> = vec![Vec::new(); states.len()];
        successors[0] = vec![0, 1, 2];
        for i in 0..=m {
            let blank = 2 * i + 1;
            successors[blank].push(blank);
            if i < m {
                successors[blank].push(blank + 1);
            } else {
                successors[blank].push(post);
            }
        }
        for i in 0..m {
            let tok = 2 * i + 2;
            successors[tok].push(tok);
            successors[tok].push(tok + 1);
            if i + 1 < m {
                if ids[i + 1] != ids[i] {
                    successors[tok].push(tok + 2);
                }
            } else {
                successors[tok].push(post);
            }
        }
        successors[post].push(post);

        let mut predecessors: Vec<Vec<usize>> = vec![Vec::new(); states.len()];
        for (from, succs) in successors.iter().enumerate() {
            for &to in succs {
                predecessors[to].push(from);
            }
        }
        Ok(WildcardGraph {
            states,
            successors,
            predecessors,
            keyword_len: m,
        })
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn state(&self, idx: usize) -> GraphState {
        self.states[idx]
    }

    pub fn successors(&self, idx: usize) -> &[usize] {
        &self.successors[idx]
    }

    fn start_states(&self) -> [usize; 3] {
        [0, 1, 2]
    }

    fn accept_states(&self) -> [usize; 3] {
        let m = self.keyword_len;
        [2 * m, 2 * m + 1, 2 * m + 2]
    }

    /// Log emission score of a state at frame `t`; wildcards cost nothing.
    #[inline]
    fn emit(&self, z: &Posteriorgram, t: usize, idx: usize) -> f64 {
        match self.states[idx] {
            GraphState::PreStar | GraphState::PostStar => 0.0,
            GraphState::Blank => z.log_prob(t, BLANK_ID),
            GraphState::Token(k) => z.log_prob(t, k),
        }
    }

    /// Log score of one state sequence under `z`.
    pub fn path_log_score(&self, z: &Posteriorgram, path: &[usize]) -> f64 {
        path.iter()
            .enumerate()
            .map(|(t, &s)| self.emit(z, t, s))
            .sum()
    }
}

/// Log of the summed score of all accepting state sequences.
pub fn wctc_forward(z: &Posteriorgram, graph: &WildcardGraph) -> f64 {
    let frames = z.frames();
    let states = graph.num_states();
    let mut alpha = vec![f64::NEG_INFINITY; states];
    for s in graph.start_states() {
        alpha[s] = graph.emit(z, 0, s);
    }
    let mut scratch = Vec::new();
    for t in 1..frames {
        let mut next = vec![f64::NEG_INFINITY; states];
        for s in 0..states {
            scratch.clear();
            for &p in &graph.predecessors[s] {
                scratch.push(alpha[p]);
            }
            let acc = log_sum_exp(&scratch);
            if acc != f64::NEG_INFINITY {
                next[s] = acc + graph.emit(z, t, s);
            }
        }
        alpha = next;
    }
    let finals: Vec<f64> = graph.accept_states().iter().map(|&s| alpha[s]).collect();
    log_sum_exp(&finals)
}

/// Tie preference for Viterbi successor choices: advance as early as
/// possible, but enter `*post` last.
#[inline]
fn preference(graph: &WildcardGraph, idx: usize) -> i64 {
    match graph.state(idx) {
        GraphState::PostStar => -1,
        _ => idx as i64,
    }
}

/// Highest-scoring accepting state sequence, one state per frame.
pub fn wctc_viterbi(z: &Posteriorgram, graph: &WildcardGraph) -> Result<Vec<usize>> {
    let frames = z.frames();
    let states = graph.num_states();

    // Suffix scores toward the accept states; forward reconstruction over
    // them realizes the stated tie rule greedily from the front.
    let mut suffix = Array2::from_elem((frames, states), f64::NEG_INFINITY);
    let mut choice = Array2::from_elem((frames, states), usize::MAX);
    for s in graph.accept_states() {
        suffix[[frames - 1, s]] = graph.emit(z, frames - 1, s);
    }
    for t in (0..frames.saturating_sub(1)).rev() {
        for s in 0..states {
            let emit = graph.emit(z, t, s);
            if emit == f64::NEG_INFINITY {
                continue;
            }
            let mut best = f64::NEG_INFINITY;
            let mut best_pref = i64::MIN;
            let mut best_succ = usize::MAX;
            for &nxt in &graph.successors[s] {
                let score = suffix[[t + 1, nxt]];
                if score == f64::NEG_INFINITY {
                    continue;
                }
                let pref = preference(graph, nxt);
                if score > best || (score == best && pref > best_pref) {
                    best = score;
                    best_pref = pref;
                    best_succ = nxt;
                }
            }
            if best_succ != usize::MAX {
                suffix[[t, s]] = emit + best;
                choice[[t, s]] = best_succ;
            }
        }
    }

    let mut start = usize::MAX;
    let mut start_score = f64::NEG_INFINITY;
    for s in graph.start_states() {
        let score = suffix[[0, s]];
        if score == f64::NEG_INFINITY {
            continue;
        }
        if score > start_score || (score == start_score && s > start) {
            start_score = score;
            start = s;
        }
    }
    if start == usize::MAX {
        return Err(Error::Infeasible(
            "no accepting wildcard path has nonzero score".into(),
        ));
    }

    let mut path = Vec::with_capacity(frames);
    let mut s = start;
    path.push(s);
    for t in 0..frames - 1 {
        s = choice[[t, s]];
        path.push(s);
    }
    Ok(path)
}

/// A keyword found above threshold, with its best path and frame span.
#[derive(Clone, Debug)]
pub struct Detection {
    pub keyword: Keyword,
    pub log_score: f64,
    /// First and last frame the best path assigns to keyword states.
    pub first_frame: usize,
    pub last_frame: usize,
    /// Graph-state index per frame of the best path.
    pub path: Vec<usize>,
}

/// T×K indicator matrix: each row is all-zero or one-hot on keyword
/// tokens (multi-hot only after aggregation across keywords).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BiasMask {
    frames: usize,
    width: usize,
    rows: Vec<Vec<TokenId>>,
}

impl BiasMask {
    pub fn zeros(frames: usize, width: usize) -> Self {
        BiasMask {
            frames,
            width,
            rows: vec![Vec::new(); frames],
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Active token indices of row `t`, sorted ascending.
    pub fn row(&self, t: usize) -> &[TokenId] {
        &self.rows[t]
    }

    pub fn set(&mut self, t: usize, k: TokenId) {
        debug_assert!(k < self.width);
        if let Err(pos) = self.rows[t].binary_search(&k) {
            self.rows[t].insert(pos, k);
        }
    }

    #[inline]
    pub fn value(&self, t: usize, k: TokenId) -> f64 {
        if self.rows[t].binary_search(&k).is_ok() {
            1.0
        } else {
            0.0
        }
    }

    pub fn is_zero(&self) -> bool {
        self.rows.iter().all(|r| r.is_empty())
    }
}

/// Detections plus one mask per input keyword (all-zero below threshold).
#[derive(Clone, Debug)]
pub struct SpotOutcome {
    pub detections: Vec<Detection>,
    pub masks: Vec<BiasMask>,
}

/// Score every keyword against `z`; those with path-sum score strictly
/// above θ are detected and yield a mask that is one-hot on the keyword
/// token occupying each frame of the best path (wildcard and blank frames
/// stay zero).
pub fn spot_keywords(
    z: &Posteriorgram,
    keywords: &[Keyword],
    cfg: &SpotConfig,
) -> Result<SpotOutcome> {
    let mut detections = Vec::new();
    let mut masks = Vec::with_capacity(keywords.len());
    for kw in keywords {
        let graph = WildcardGraph::build(kw, z.width())?;
        let score = wctc_forward(z, &graph);
        if score > cfg.theta {
            let path = wctc_viterbi(z, &graph)?;
            let mut mask = BiasMask::zeros(z.frames(), z.width());
            let mut first = None;
            let mut last = 0;
            for (t, &s) in path.iter().enumerate() {
                if let GraphState::Token(k) = graph.state(s) {
                    mask.set(t, k);
                    first.get_or_insert(t);
                    last = t;
                }
            }
            let first = first.expect("accepting path visits every keyword state");
            detections.push(Detection {
                keyword: kw.clone(),
                log_score: score,
                first_frame: first,
                last_frame: last,
                path,
            });
            masks.push(mask);
        } else {
            masks.push(BiasMask::zeros(z.frames(), z.width()));
        }
    }
    Ok(SpotOutcome { detections, masks })
}

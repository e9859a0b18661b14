//! Standard CTC machinery: the collapsing function, greedy decoding, the
//! forward-algorithm loss, and max-product (Viterbi) alignment over the
//! blank-expanded label lattice.
//!
//! Losses are forward-only (no gradients). Infeasible (sequence too long
//! for the frame count) is a score, `+inf`, not an error, because spotting
//! and biasing callers treat impossibility as just another value;
//! [`viterbi_align`] is the exception since it must return a path.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::math::{argmax, log_add};
use crate::posteriorgram::Posteriorgram;
use crate::types::{AlignmentPath, TokenSequence};
use crate::vocab::{TokenId, BLANK_ID};

/// Blank-expanded label sequence `ε y1 ε y2 … ε` (length 2L+1).
pub fn expand_labels(y: &TokenSequence) -> Vec<TokenId> {
    let mut out = Vec::with_capacity(2 * y.len() + 1);
    out.push(BLANK_ID);
    for id in y.iter() {
        out.push(id);
        out.push(BLANK_ID);
    }
    out
}

/// The forward table over the expanded labels of one (z, y) pair.
#[derive(Debug)]
pub struct CtcLattice {
    pub expanded_labels: Vec<TokenId>,
    /// T × (2L+1) log-domain forward scores.
    pub alpha: Array2<f64>,
}

impl CtcLattice {
    /// Log-probability mass of all alignment paths, `-inf` when none exist.
    pub fn total_log_prob(&self) -> f64 {
        let t = self.alpha.nrows() - 1;
        let s = self.expanded_labels.len() - 1;
        let mut total = self.alpha[[t, s]];
        if s >= 1 {
            total = log_add(total, self.alpha[[t, s - 1]]);
        }
        total
    }
}

/// Whether the lattice allows entering state `s` directly from `s-2`:
/// only between distinct non-blank labels.
#[inline]
fn skip_into(expanded: &[TokenId], s: usize) -> bool {
    s >= 2 && expanded[s] != BLANK_ID && expanded[s] != expanded[s - 2]
}

/// The collapsing function: merge adjacent repeats, then delete blanks.
pub fn collapse(path: &AlignmentPath) -> TokenSequence {
    let mut ids = Vec::new();
    let mut prev: Option<TokenId> = None;
    for &label in path.labels() {
        if Some(label) != prev && label != BLANK_ID {
            ids.push(label);
        }
        prev = Some(label);
    }
    TokenSequence::new(ids).expect("collapse removes all blanks")
}

/// Collapse of the per-frame argmax. Ties break toward the smallest
/// token index.
pub fn greedy_decode(z: &Posteriorgram) -> TokenSequence {
    let labels: Vec<TokenId> = (0..z.frames()).map(|t| argmax(&z.row(t))).collect();
    collapse(&AlignmentPath::new(labels))
}

/// Build the log-domain forward table for `y` over `z`.
pub fn forward_lattice(z: &Posteriorgram, y: &TokenSequence) -> CtcLattice {
    let expanded = expand_labels(y);
    let frames = z.frames();
    let states = expanded.len();
    let mut alpha = Array2::from_elem((frames, states), f64::NEG_INFINITY);

    alpha[[0, 0]] = z.log_prob(0, expanded[0]);
    if states > 1 {
        alpha[[0, 1]] = z.log_prob(0, expanded[1]);
    }
    for t in 1..frames {
        for s in 0..states {
            let mut acc = alpha[[t - 1, s]];
            if s >= 1 {
                acc = log_add(acc, alpha[[t - 1, s - 1]]);
            }
            if skip_into(&expanded, s) {
                acc = log_add(acc, alpha[[t - 1, s - 2]]);
            }
            if acc != f64::NEG_INFINITY {
                alpha[[t, s]] = acc + z.log_prob(t, expanded[s]);
            }
        }
    }
    CtcLattice {
        expanded_labels: expanded,
        alpha,
    }
}

/// Negative log-likelihood of `y` under `z`, summed over all alignment
/// paths. Infeasible pairs yield `+inf`.
pub fn ctc_loss(z: &Posteriorgram, y: &TokenSequence) -> f64 {
    let total = forward_lattice(z, y).total_log_prob();
    if total == f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        -total
    }
}

/// Maximum-product alignment path in `B^-1(y)`.
///
/// Ties break by advancing through the expanded label sequence as early
/// as possible, which makes the result deterministic: the path is the
/// lexicographically largest state-index sequence among the score
/// maximizers.
pub fn viterbi_align(z: &Posteriorgram, y: &TokenSequence) -> Result<AlignmentPath> {
    let expanded = expand_labels(y);
    let frames = z.frames();
    let states = expanded.len();

    // Best completion score from (t, s) to an accepting state, plus the
    // successor chosen at each cell. Working backward lets the forward
    // reconstruction pick the earliest-advancing path greedily.
    let mut suffix = Array2::from_elem((frames, states), f64::NEG_INFINITY);
    let mut choice = Array2::from_elem((frames, states), usize::MAX);

    for s in 0..states {
        let accepting = s + 1 == states || s + 2 == states;
        if accepting {
            suffix[[frames - 1, s]] = z.log_prob(frames - 1, expanded[s]);
        }
    }
    for t in (0..frames.saturating_sub(1)).rev() {
        for s in 0..states {
            let emit = z.log_prob(t, expanded[s]);
            if emit == f64::NEG_INFINITY {
                continue;
            }
            let mut successors = vec![s];
            if s + 1 < states {
                successors.push(s + 1);
            }
            if s + 2 < states && skip_into(&expanded, s + 2) {
                successors.push(s + 2);
            }
            let mut best = f64::NEG_INFINITY;
            let mut best_succ = usize::MAX;
            for &nxt in &successors {
                let score = suffix[[t + 1, nxt]];
                // `>=` with ascending successors prefers the largest
                // state index on ties: advance as early as possible.
                if score >= best && score != f64::NEG_INFINITY {
                    best = score;
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
    for s in 0..states.min(2) {
        if suffix[[0, s]] >= start_score && suffix[[0, s]] != f64::NEG_INFINITY {
            start_score = suffix[[0, s]];
            start = s;
        }
    }
    if start == usize::MAX {
        return Err(Error::Infeasible(format!(
            "no alignment of {} labels over {frames} frames",
            y.len()
        )));
    }

    let mut labels = Vec::with_capacity(frames);
    let mut s = start;
    labels.push(expanded[s]);
    for t in 0..frames - 1 {
        s = choice[[t, s]];
        labels.push(expanded[s]);
    }
    Ok(AlignmentPath::new(labels))
}

/// Mixing weight and layer set for the intermediate-loss diagnostic.
#[derive(Clone, Debug)]
pub struct LossMixConfig {
    pub lambda: f64,
    pub intermediate_layers: BTreeSet<usize>,
}

impl LossMixConfig {
    pub fn new(lambda: f64, intermediate_layers: BTreeSet<usize>) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Config(format!("lambda {lambda} outside [0, 1]")));
        }
        if lambda > 0.0 && intermediate_layers.is_empty() {
            return Err(Error::Config(
                "lambda > 0 requires a nonempty intermediate layer set".into(),
            ));
        }
        Ok(LossMixConfig {
            lambda,
            intermediate_layers,
        })
    }
}

/// `(1-λ)·L(Z,Y) + (λ/|N|)·Σ L(Z_n,Y)` — evaluated as a diagnostic.
pub fn intermediate_loss_mix(
    final_z: &Posteriorgram,
    intermediate: &BTreeMap<usize, Posteriorgram>,
    y: &TokenSequence,
    cfg: &LossMixConfig,
) -> Result<f64> {
    let provided: BTreeSet<usize> = intermediate.keys().copied().collect();
    if provided != cfg.intermediate_layers {
        return Err(Error::Config(format!(
            "intermediate posteriorgrams for layers {provided:?} do not match configured {:?}",
            cfg.intermediate_layers
        )));
    }
    let mut total = 0.0;
    if cfg.lambda < 1.0 {
        total += (1.0 - cfg.lambda) * ctc_loss(final_z, y);
    }
    if cfg.lambda > 0.0 {
        let n = cfg.intermediate_layers.len() as f64;
        for z in intermediate.values() {
            total += cfg.lambda / n * ctc_loss(z, y);
        }
    }
    Ok(total)
}

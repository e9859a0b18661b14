//! Character error rate and keyword F1 scoring.
//!
//! CER is unit-cost Levenshtein distance over the reference length;
//! corpus CER divides total edits by total reference length. Keyword
//! counting is utterance-level: occurrences are exact contiguous
//! subsequence matches (every start position counts), tp per utterance is
//! the min of reference and hypothesis counts, and F1 aggregates
//! separately over the IV- and OOV-tagged keyword sets.

use crate::error::{Error, Result};
use crate::keyword::{Keyword, KeywordClass};
use crate::types::TokenSequence;

/// Unit-cost Levenshtein distance.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (n, m) = (a.len(), b.len());
    if n == 0 {
        return m;
    }
    if m == 0 {
        return n;
    }
    let mut prev: Vec<usize> = (0..=m).collect();
    let mut cur = vec![0usize; m + 1];
    for i in 1..=n {
        cur[0] = i;
        for j in 1..=m {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            cur[j] = (prev[j] + 1).min(cur[j - 1] + 1).min(prev[j - 1] + cost);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// Edit distance divided by reference length; empty references error.
pub fn cer(reference: &TokenSequence, hypothesis: &TokenSequence) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Invalid("empty reference".into()));
    }
    Ok(edit_distance(reference.ids(), hypothesis.ids()) as f64 / reference.len() as f64)
}

/// Number of (possibly overlapping) start positions where `needle`
/// matches inside `haystack`. An empty needle never matches.
pub fn count_occurrences<T: PartialEq>(haystack: &[T], needle: &[T]) -> usize {
    if needle.is_empty() || needle.len() > haystack.len() {
        return 0;
    }
    haystack
        .windows(needle.len())
        .filter(|w| *w == needle)
        .count()
}

/// A keyword prepared for evaluation over item sequences of type `T`.
#[derive(Clone, Debug)]
pub struct EvalKeyword<T> {
    pub label: String,
    pub items: Vec<T>,
    pub class: KeywordClass,
}

/// Per-keyword occurrence counts accumulated over the corpus.
#[derive(Clone, Debug)]
pub struct KeywordTally {
    pub label: String,
    pub class: KeywordClass,
    pub tp: usize,
    pub fp: usize,
    pub fn_count: usize,
    /// Reference occurrences; equals tp + fn_count.
    pub ref_count: usize,
}

/// Corpus CER plus per-keyword tallies and class-level F1 scores.
/// F1 is `None` for a class with no occurrences anywhere.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub cer: f64,
    pub utterances: usize,
    pub tallies: Vec<KeywordTally>,
    pub f1_oov: Option<f64>,
    pub f1_iv: Option<f64>,
}

fn class_f1(tallies: &[KeywordTally], class: KeywordClass) -> Option<f64> {
    let (mut tp, mut fp, mut fn_count) = (0usize, 0usize, 0usize);
    for t in tallies.iter().filter(|t| t.class == class) {
        tp += t.tp;
        fp += t.fp;
        fn_count += t.fn_count;
    }
    if tp + fp + fn_count == 0 {
        return None;
    }
    if tp == 0 {
        return Some(0.0);
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_count) as f64;
    Some(2.0 * precision * recall / (precision + recall))
}

/// Evaluate aligned reference/hypothesis sequences against a keyword set.
pub fn evaluate<T: PartialEq>(
    refs: &[Vec<T>],
    hyps: &[Vec<T>],
    keywords: &[EvalKeyword<T>],
) -> Result<EvalReport> {
    if refs.len() != hyps.len() {
        return Err(Error::Shape(format!(
            "{} references vs {} hypotheses",
            refs.len(),
            hyps.len()
        )));
    }
    let mut total_edits = 0usize;
    let mut total_ref_len = 0usize;
    for (i, (r, h)) in refs.iter().zip(hyps).enumerate() {
        if r.is_empty() {
            return Err(Error::Invalid(format!("empty reference at utterance {i}")));
        }
        total_edits += edit_distance(r, h);
        total_ref_len += r.len();
    }

    let mut tallies: Vec<KeywordTally> = keywords
        .iter()
        .map(|kw| KeywordTally {
            label: kw.label.clone(),
            class: kw.class,
            tp: 0,
            fp: 0,
            fn_count: 0,
            ref_count: 0,
        })
        .collect();
    for (r, h) in refs.iter().zip(hyps) {
        for (kw, tally) in keywords.iter().zip(tallies.iter_mut()) {
            let in_ref = count_occurrences(r, &kw.items);
            let in_hyp = count_occurrences(h, &kw.items);
            let tp = in_ref.min(in_hyp);
            tally.tp += tp;
            tally.fp += in_hyp - tp;
            tally.fn_count += in_ref - tp;
            tally.ref_count += in_ref;
        }
    }

    let f1_oov = class_f1(&tallies, KeywordClass::OutOfVocabulary);
    let f1_iv = class_f1(&tallies, KeywordClass::InVocabulary);
    Ok(EvalReport {
        cer: total_edits as f64 / total_ref_len as f64,
        utterances: refs.len(),
        tallies,
        f1_oov,
        f1_iv,
    })
}

/// Token-sequence front-end over [`evaluate`].
pub fn keyword_f1(
    refs: &[TokenSequence],
    hyps: &[TokenSequence],
    keywords: &[(Keyword, KeywordClass)],
) -> Result<EvalReport> {
    let refs: Vec<Vec<usize>> = refs.iter().map(|s| s.ids().to_vec()).collect();
    let hyps: Vec<Vec<usize>> = hyps.iter().map(|s| s.ids().to_vec()).collect();
    let keywords: Vec<EvalKeyword<usize>> = keywords
        .iter()
        .map(|(kw, class)| EvalKeyword {
            label: kw.surface.clone(),
            items: kw.ids.ids().to_vec(),
            class: *class,
        })
        .collect();
    evaluate(&refs, &hyps, &keywords)
}

//! Turning detections into biased intermediate predictions: mask
//! aggregation, ω-interpolated re-softmax, projection back to encoder
//! features, and the trigger-substitution baseline with its ψ-mix.
//!
//! The interpolation applies `Softmax((1-ω)Z + ωZ_bias)` literally — the
//! input already being a distribution is intentional, since the tuned ω
//! and θ values assume exactly this form. The one deliberate fallback:
//! when a mask is entirely zero the input is returned unchanged, so
//! keyword-free utterances are not flattened by a softmax over scaled
//! probabilities.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::ctc;
use crate::error::{Error, Result};
use crate::keyword::Keyword;
use crate::math::softmax;
use crate::posteriorgram::Posteriorgram;
use crate::types::TokenSequence;
use crate::vocab::Vocabulary;
use crate::wctc::BiasMask;

/// Weight, layer set and spotting threshold for wildcard biasing.
#[derive(Clone, Debug)]
pub struct BiasConfig {
    pub omega: f64,
    pub bias_layers: BTreeSet<usize>,
    pub theta: f64,
}

impl BiasConfig {
    pub fn new(omega: f64, bias_layers: BTreeSet<usize>, theta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&omega) {
            return Err(Error::Config(format!("omega {omega} outside [0, 1]")));
        }
        if !theta.is_finite() {
            return Err(Error::Config(format!("theta must be finite, got {theta}")));
        }
        Ok(BiasConfig {
            omega,
            bias_layers,
            theta,
        })
    }
}

/// Trigger substitution table and ψ-mix weight for the baseline.
#[derive(Clone, Debug, Default)]
pub struct InterBiasConfig {
    pub psi: f64,
    /// Trigger token sequence → replacement keyword.
    pub triggers: Vec<(TokenSequence, Keyword)>,
    pub layers: BTreeSet<usize>,
}

impl InterBiasConfig {
    pub fn new(
        psi: f64,
        triggers: Vec<(TokenSequence, Keyword)>,
        layers: BTreeSet<usize>,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&psi) {
            return Err(Error::Config(format!("psi {psi} outside [0, 1]")));
        }
        if triggers.iter().any(|(t, _)| t.is_empty()) {
            return Err(Error::Config("empty trigger sequence".into()));
        }
        Ok(InterBiasConfig {
            psi,
            triggers,
            layers,
        })
    }
}

/// Parse a trigger map file: UTF-8 lines `trigger<TAB>keyword`, both
/// tokenized against the vocabulary.
pub fn load_trigger_map(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
) -> Result<Vec<(TokenSequence, Keyword)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut triggers = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (trigger, keyword) = line.split_once('\t').ok_or_else(|| {
            Error::format(
                path,
                format!("line {}: expected trigger<TAB>keyword", lineno + 1),
            )
        })?;
        let trigger_ids = crate::vocab::tokenize(trigger, vocab)?;
        let keyword = Keyword::tokenize(keyword, vocab)?;
        triggers.push((trigger_ids, keyword));
    }
    Ok(triggers)
}

/// Element-wise maximum across masks. An empty slice yields the all-zero
/// mask of the requested shape. Rows may become multi-hot when keywords
/// overlap.
pub fn aggregate_masks(masks: &[BiasMask], frames: usize, width: usize) -> Result<BiasMask> {
    let mut out = BiasMask::zeros(frames, width);
    for mask in masks {
        if mask.frames() != frames || mask.width() != width {
            return Err(Error::Shape(format!(
                "mask is {}x{}, expected {frames}x{width}",
                mask.frames(),
                mask.width()
            )));
        }
        for t in 0..frames {
            for &k in mask.row(t) {
                out.set(t, k);
            }
        }
    }
    Ok(out)
}

/// `Softmax((1-ω)Z + ωZ_bias)` at every frame; a fully zero mask returns
/// `z` unchanged.
pub fn bias_interpolate(z: &Posteriorgram, mask: &BiasMask, omega: f64) -> Result<Posteriorgram> {
    if mask.frames() != z.frames() || mask.width() != z.width() {
        return Err(Error::Shape(format!(
            "mask is {}x{}, posteriorgram is {}x{}",
            mask.frames(),
            mask.width(),
            z.frames(),
            z.width()
        )));
    }
    if mask.is_zero() {
        return Ok(z.clone());
    }
    let width = z.width();
    let mut rows = Vec::with_capacity(z.frames());
    for t in 0..z.frames() {
        let combined: Vec<f64> = (0..width)
            .map(|k| (1.0 - omega) * z.prob(t, k) + omega * mask.value(t, k))
            .collect();
        rows.push(softmax(&combined));
    }
    let mut out = Posteriorgram::from_rows(rows)?;
    if let Some(layer) = z.layer() {
        out = out.with_layer(layer);
    }
    Ok(out)
}

/// Per-frame affine map of a distribution sequence into feature space:
/// `out[t] = zp[t]·W + b`, with `W: K×D` and `b: D`.
pub fn project_bias(
    zp: &Posteriorgram,
    weights: &Array2<f64>,
    bias_vec: &Array1<f64>,
) -> Result<Array2<f64>> {
    if weights.nrows() != zp.width() {
        return Err(Error::Shape(format!(
            "projection expects {} input rows, posteriorgram width is {}",
            weights.nrows(),
            zp.width()
        )));
    }
    if bias_vec.len() != weights.ncols() {
        return Err(Error::Shape(format!(
            "offset length {} does not match projection width {}",
            bias_vec.len(),
            weights.ncols()
        )));
    }
    let mut out = zp.prob_matrix().dot(weights);
    for mut row in out.rows_mut() {
        row += bias_vec;
    }
    Ok(out)
}

/// Replace trigger subsequences with their keywords: leftmost-first,
/// non-overlapping, longest trigger wins at each position.
pub fn interbias_substitute(hyp: &TokenSequence, cfg: &InterBiasConfig) -> TokenSequence {
    let ids = hyp.ids();
    let mut out = Vec::with_capacity(ids.len());
    let mut pos = 0;
    while pos < ids.len() {
        let mut matched: Option<&(TokenSequence, Keyword)> = None;
        for entry in &cfg.triggers {
            let trig = entry.0.ids();
            if pos + trig.len() <= ids.len()
                && &ids[pos..pos + trig.len()] == trig
                && matched.map_or(true, |(best, _)| trig.len() > best.len())
            {
                matched = Some(entry);
            }
        }
        match matched {
            Some((trig, kw)) => {
                out.extend_from_slice(kw.ids.ids());
                pos += trig.len();
            }
            None => {
                out.push(ids[pos]);
                pos += 1;
            }
        }
    }
    TokenSequence::new(out).expect("keyword ids are blank-free")
}

/// One-hot the Viterbi alignment of `biased_y`, mix with ψ, re-softmax and
/// project. When `biased_y` is infeasible against `z`, fall back to the
/// unbiased self-conditioning feature `z·W + b`.
pub fn interbias_features(
    z: &Posteriorgram,
    biased_y: &TokenSequence,
    psi: f64,
    weights: &Array2<f64>,
    bias_vec: &Array1<f64>,
) -> Result<Array2<f64>> {
    let path = match ctc::viterbi_align(z, biased_y) {
        Ok(path) => path,
        Err(Error::Infeasible(_)) => return project_bias(z, weights, bias_vec),
        Err(e) => return Err(e),
    };
    let width = z.width();
    let mut rows = Vec::with_capacity(z.frames());
    for (t, &label) in path.labels().iter().enumerate() {
        let combined: Vec<f64> = (0..width)
            .map(|k| {
                let one_hot = if k == label { 1.0 } else { 0.0 };
                (1.0 - psi) * z.prob(t, k) + psi * one_hot
            })
            .collect();
        rows.push(softmax(&combined));
    }
    let mixed = Posteriorgram::from_rows(rows)?;
    project_bias(&mixed, weights, bias_vec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::argmax;
    use crate::vocab::TokenId;
    use ndarray::arr1;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn uniform(width: usize, frames: usize) -> Posteriorgram {
        Posteriorgram::from_rows(vec![vec![1.0 / width as f64; width]; frames]).unwrap()
    }

    fn random_posteriorgram(rng: &mut impl Rng, frames: usize, width: usize) -> Posteriorgram {
        let rows = (0..frames)
            .map(|_| {
                let raw: Vec<f64> = (0..width).map(|_| rng.random_range(0.01..1.0)).collect();
                let sum: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / sum).collect()
            })
            .collect();
        Posteriorgram::from_rows(rows).unwrap()
    }

    fn random_mask(rng: &mut impl Rng, frames: usize, width: usize) -> BiasMask {
        let mut mask = BiasMask::zeros(frames, width);
        for t in 0..frames {
            if rng.random_bool(0.5) {
                mask.set(t, rng.random_range(1..width));
            }
        }
        mask
    }

    #[test]
    fn aggregate_unions_disjoint_masks() {
        let mut a = BiasMask::zeros(3, 4);
        a.set(0, 1);
        let mut b = BiasMask::zeros(3, 4);
        b.set(2, 3);
        let out = aggregate_masks(&[a, b], 3, 4).unwrap();
        assert_eq!(out.row(0), &[1]);
        assert_eq!(out.row(1), &[] as &[TokenId]);
        assert_eq!(out.row(2), &[3]);
    }

    #[test]
    fn aggregate_empty_is_zero_of_requested_shape() {
        let out = aggregate_masks(&[], 2, 5).unwrap();
        assert_eq!((out.frames(), out.width()), (2, 5));
        assert!(out.is_zero());
    }

    #[test]
    fn aggregate_is_idempotent() {
        let mut a = BiasMask::zeros(2, 3);
        a.set(1, 2);
        let out = aggregate_masks(&[a.clone(), a.clone()], 2, 3).unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn aggregate_rejects_shape_mismatch() {
        let a = BiasMask::zeros(2, 3);
        assert!(aggregate_masks(&[a], 3, 3).is_err());
    }

    #[test]
    fn aggregate_laws() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..30 {
            let a = random_mask(&mut rng, 4, 5);
            let b = random_mask(&mut rng, 4, 5);
            let c = random_mask(&mut rng, 4, 5);
            let ab = aggregate_masks(&[a.clone(), b.clone()], 4, 5).unwrap();
            let ba = aggregate_masks(&[b.clone(), a.clone()], 4, 5).unwrap();
            assert_eq!(ab, ba);
            let ab_c = aggregate_masks(&[ab.clone(), c.clone()], 4, 5).unwrap();
            let bc = aggregate_masks(&[b.clone(), c.clone()], 4, 5).unwrap();
            let a_bc = aggregate_masks(&[a.clone(), bc], 4, 5).unwrap();
            assert_eq!(ab_c, a_bc);
            let aa = aggregate_masks(&[a.clone(), a.clone()], 4, 5).unwrap();
            assert_eq!(aa, a);
        }
    }

    #[test]
    fn interpolate_zero_mask_returns_input_unchanged() {
        let z = uniform(3, 2);
        let mask = BiasMask::zeros(2, 3);
        let out = bias_interpolate(&z, &mask, 0.7).unwrap();
        assert_eq!(out, z);
    }

    #[test]
    fn interpolate_omega_one_is_softmax_of_one_hot() {
        let k = 3usize;
        let z = uniform(k, 1);
        let mut mask = BiasMask::zeros(1, k);
        mask.set(0, 2);
        let out = bias_interpolate(&z, &mask, 1.0).unwrap();
        let e = std::f64::consts::E;
        let expect_hot = e / (e + (k as f64 - 1.0));
        assert!((out.prob(0, 2) - expect_hot).abs() < 1e-12);
        assert!((out.prob(0, 0) - 1.0 / (e + (k as f64 - 1.0))).abs() < 1e-12);
    }

    #[test]
    fn interpolate_uniform_row_captures_argmax() {
        let z = uniform(3, 1);
        let mut mask = BiasMask::zeros(1, 3);
        mask.set(0, 1);
        let out = bias_interpolate(&z, &mask, 0.7).unwrap();
        assert_eq!(argmax(&out.row(0)), 1);
    }

    #[test]
    fn interpolate_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..20 {
            let z = random_posteriorgram(&mut rng, 4, 5);
            let mask = random_mask(&mut rng, 4, 5);
            let out = bias_interpolate(&z, &mask, rng.random_range(0.0..=1.0)).unwrap();
            for t in 0..4 {
                let sum: f64 = out.row(t).iter().sum();
                assert!((sum - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn interpolate_argmax_capture_for_omega_above_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for _ in 0..50 {
            let z = random_posteriorgram(&mut rng, 1, 6);
            let k = rng.random_range(1..6);
            let mut mask = BiasMask::zeros(1, 6);
            mask.set(0, k);
            for omega in [0.51, 0.7, 0.9] {
                let out = bias_interpolate(&z, &mask, omega).unwrap();
                assert_eq!(argmax(&out.row(0)), k);
            }
        }
    }

    #[test]
    fn interpolate_masked_probability_monotone_in_omega() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for _ in 0..20 {
            let z = random_posteriorgram(&mut rng, 1, 4);
            let mut mask = BiasMask::zeros(1, 4);
            mask.set(0, 2);
            let mut prev = f64::NEG_INFINITY;
            for i in 0..=10 {
                let omega = i as f64 / 10.0;
                let out = bias_interpolate(&z, &mask, omega).unwrap();
                let p = out.prob(0, 2);
                assert!(p >= prev - 1e-12);
                prev = p;
            }
        }
    }

    #[test]
    fn project_identity_returns_distributions() {
        let z = uniform(3, 2);
        let w = Array2::eye(3);
        let b = Array1::zeros(3);
        let out = project_bias(&z, &w, &b).unwrap();
        for t in 0..2 {
            for k in 0..3 {
                assert!((out[[t, k]] - z.prob(t, k)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn project_zero_weights_gives_zero_features() {
        let z = uniform(3, 2);
        let w = Array2::zeros((3, 4));
        let b = Array1::zeros(4);
        let out = project_bias(&z, &w, &b).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn project_matches_naive_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let z = random_posteriorgram(&mut rng, 4, 3);
        let w = Array2::from_shape_fn((3, 5), |_| rng.random_range(-0.5..0.5));
        let b = Array1::from_shape_fn(5, |_| rng.random_range(-0.5..0.5));
        let out = project_bias(&z, &w, &b).unwrap();
        for t in 0..4 {
            for d in 0..5 {
                let mut acc = b[d];
                for k in 0..3 {
                    acc += z.prob(t, k) * w[[k, d]];
                }
                assert!((out[[t, d]] - acc).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn project_rejects_dimension_mismatch() {
        let z = uniform(3, 2);
        assert!(project_bias(&z, &Array2::zeros((4, 2)), &Array1::zeros(2)).is_err());
        assert!(project_bias(&z, &Array2::zeros((3, 2)), &Array1::zeros(3)).is_err());
    }

    fn seq(ids: &[TokenId]) -> TokenSequence {
        TokenSequence::new(ids.to_vec()).unwrap()
    }

    fn trigger_cfg(triggers: Vec<(Vec<TokenId>, Vec<TokenId>)>) -> InterBiasConfig {
        let triggers = triggers
            .into_iter()
            .map(|(t, k)| {
                (
                    seq(&t),
                    Keyword {
                        surface: format!("{k:?}"),
                        ids: seq(&k),
                    },
                )
            })
            .collect();
        InterBiasConfig::new(0.9, triggers, BTreeSet::new()).unwrap()
    }

    #[test]
    fn substitute_single_trigger() {
        let cfg = trigger_cfg(vec![(vec![2], vec![4, 5])]);
        let out = interbias_substitute(&seq(&[1, 2, 3]), &cfg);
        assert_eq!(out, seq(&[1, 4, 5, 3]));
    }

    #[test]
    fn substitute_no_match_is_identity() {
        let cfg = trigger_cfg(vec![(vec![9], vec![4])]);
        let hyp = seq(&[1, 2, 3]);
        assert_eq!(interbias_substitute(&hyp, &cfg), hyp);

        let empty = trigger_cfg(vec![]);
        assert_eq!(interbias_substitute(&hyp, &empty), hyp);
    }

    #[test]
    fn substitute_longest_trigger_wins() {
        let cfg = trigger_cfg(vec![(vec![2], vec![7]), (vec![2, 3], vec![8])]);
        let out = interbias_substitute(&seq(&[1, 2, 3]), &cfg);
        assert_eq!(out, seq(&[1, 8]));
    }

    #[test]
    fn substitute_changes_length_only_at_sites() {
        let cfg = trigger_cfg(vec![(vec![2], vec![4, 5])]);
        let hyp = seq(&[1, 2, 3, 2]);
        let out = interbias_substitute(&hyp, &cfg);
        // Two sites, each replacing 1 token with 2.
        assert_eq!(out.len(), hyp.len() + 2);
        assert_eq!(out, seq(&[1, 4, 5, 3, 4, 5]));
    }

    #[test]
    fn features_psi_zero_projects_softmaxed_z() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let z = random_posteriorgram(&mut rng, 3, 3);
        let w = Array2::from_shape_fn((3, 3), |_| rng.random_range(-0.5..0.5));
        let b = arr1(&[0.1, -0.2, 0.3]);
        let y = seq(&[1]);
        let out = interbias_features(&z, &y, 0.0, &w, &b).unwrap();
        let softmaxed: Vec<Vec<f64>> = (0..3).map(|t| softmax(&z.row(t))).collect();
        let zp = Posteriorgram::from_rows(softmaxed).unwrap();
        let expect = project_bias(&zp, &w, &b).unwrap();
        for (a, e) in out.iter().zip(expect.iter()) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn features_psi_one_projects_softmax_of_alignment() {
        // One-hot z consistent with y = [a]: path ε a ε.
        let z = Posteriorgram::from_rows(vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0],
        ])
        .unwrap();
        let w = Array2::eye(3);
        let b = Array1::zeros(3);
        let out = interbias_features(&z, &seq(&[1]), 1.0, &w, &b).unwrap();
        let hot: Vec<f64> = softmax(&[1.0, 0.0, 0.0]);
        assert!((out[[0, 0]] - hot[0]).abs() < 1e-12);
        assert!((out[[1, 1]] - hot[0]).abs() < 1e-12);
        assert!((out[[2, 0]] - hot[0]).abs() < 1e-12);
    }

    #[test]
    fn features_match_step_by_step_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let z = random_posteriorgram(&mut rng, 3, 3);
        let w = Array2::from_shape_fn((3, 2), |_| rng.random_range(-0.5..0.5));
        let b = Array1::from_shape_fn(2, |_| rng.random_range(-0.5..0.5));
        let y = seq(&[1]);
        let psi = 0.9;
        let out = interbias_features(&z, &y, psi, &w, &b).unwrap();

        // Oracle: compose the previously tested operations by hand.
        let path = ctc::viterbi_align(&z, &y).unwrap();
        let mut rows = Vec::new();
        for (t, &label) in path.labels().iter().enumerate() {
            let mixed: Vec<f64> = (0..3)
                .map(|k| (1.0 - psi) * z.prob(t, k) + if k == label { psi } else { 0.0 })
                .collect();
            rows.push(softmax(&mixed));
        }
        for (t, row) in rows.iter().enumerate() {
            for d in 0..2 {
                let mut acc = b[d];
                for k in 0..3 {
                    acc += row[k] * w[[k, d]];
                }
                assert!((out[[t, d]] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn features_fall_back_when_infeasible() {
        let z = uniform(3, 1); // T=1 cannot align two tokens
        let w = Array2::eye(3);
        let b = Array1::zeros(3);
        let out = interbias_features(&z, &seq(&[1, 2]), 0.9, &w, &b).unwrap();
        let expect = project_bias(&z, &w, &b).unwrap();
        assert_eq!(out, expect);
    }
}

//! Deterministic recovery-fixture generation.
//!
//! A fixture is a vocabulary, a toy model, an input feature sequence, and
//! a single target keyword arranged so that the unbiased forward pass
//! greedily decodes a corrupted form of the keyword while a biased run at
//! the bundled settings recovers the true surface.
//!
//! The corruption lives in the synthesized head weights: features use a
//! doubled space where block A carries ground-truth one-hot labels and
//! block B is the self-conditioning workspace. Every head maps block-A
//! channel `l` to the logit of `m(l)`, where `m` is the identity except
//! at the corrupted keyword token, and maps block B identically. The
//! conditioning projection writes head distributions into block B, so
//! keyword-biased probability mass accumulates there across the bias
//! layers and eventually outvotes the planted corruption; context frames
//! only ever reinforce their own label.
//!
//! Token frames are single frames separated by short blank runs. When the
//! corrupted position sits strictly inside the keyword, the surrounding
//! blank posteriors pin the best wildcard path to the corrupted frame and
//! recovery is exact; at the keyword edge the lattice prefers the
//! adjacent blank frame (it costs one factor of the blank posterior
//! less), which still recovers the surface but leaves the stray corrupted
//! token behind as a single insertion.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::encoder::{self, EncoderLayer, LayerStack};
use crate::error::{Error, Result};
use crate::keyword::Keyword;
use crate::vocab::{TokenId, Vocabulary};

/// Head logit scale; peaks one-hot rows at about 0.83 for the bundled
/// vocabulary size.
pub const HEAD_GAIN: f64 = 4.0;
/// Conditioning write scale into block B.
pub const COND_GAIN: f64 = 8.0;
/// Layers in a generated model.
pub const NUM_LAYERS: usize = 13;
/// Self-conditioning (and default bias) layers of generated models.
pub const SELFCOND_LAYERS: [usize; 4] = [3, 6, 9, 12];
/// Spotting threshold the fixtures are tuned for.
pub const THETA: f64 = -40.0;
/// Interpolation weight the fixtures are tuned for.
pub const OMEGA: f64 = 0.7;

const LETTERS: [&str; 11] = ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k"];

/// A generated recovery scenario.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub vocab: Vocabulary,
    pub model: LayerStack,
    pub features: Array2<f64>,
    pub keyword: Keyword,
    /// True utterance text.
    pub reference: String,
    /// What the unbiased forward pass greedy-decodes.
    pub corrupted: String,
    /// The keyword surface as it appears in the corrupted text.
    pub corrupted_keyword: String,
    pub bias_layers: BTreeSet<usize>,
}

/// Build the fixture for `seed`. Identical seeds produce identical
/// fixtures, bit for bit.
pub fn generate(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = {
        let mut tokens = vec!["<blank>"];
        tokens.extend_from_slice(&LETTERS);
        Vocabulary::from_tokens(&tokens).expect("fixed token list is valid")
    };
    let width = vocab.size();

    let kw_len = rng.random_range(2..=3);
    let pre_len = rng.random_range(1..=2);
    let suf_len = rng.random_range(1..=2);
    let mut letter_ids: Vec<TokenId> = (1..width).collect();
    letter_ids.shuffle(&mut rng);
    let kw_ids = letter_ids[..kw_len].to_vec();
    let pre_ids = letter_ids[kw_len..kw_len + pre_len].to_vec();
    let suf_ids = letter_ids[kw_len + pre_len..kw_len + pre_len + suf_len].to_vec();
    let corrupt_id = letter_ids[kw_len + pre_len + suf_len];
    let corrupt_pos = rng.random_range(0..kw_len);

    let keyword = {
        let surface: String = kw_ids.iter().map(|&id| vocab.token(id)).collect();
        Keyword::tokenize(&surface, &vocab).expect("single letters tokenize")
    };

    let mut utterance: Vec<TokenId> = Vec::new();
    utterance.extend(&pre_ids);
    utterance.extend(&kw_ids);
    utterance.extend(&suf_ids);
    let corrupt_index = pre_len + corrupt_pos;

    // One frame per token, blank runs of 1-2 frames around them.
    let mut true_labels: Vec<TokenId> = Vec::new();
    let blank_run = |rng: &mut ChaCha8Rng, out: &mut Vec<TokenId>| {
        for _ in 0..rng.random_range(1..=2) {
            out.push(0);
        }
    };
    blank_run(&mut rng, &mut true_labels);
    for &id in &utterance {
        true_labels.push(id);
        blank_run(&mut rng, &mut true_labels);
    }

    let dim = 2 * width;
    let frames = true_labels.len();
    let mut features = Array2::zeros((frames, dim));
    for (t, &label) in true_labels.iter().enumerate() {
        features[[t, label]] = 1.0;
    }

    // Corruption label map: identity except at the corrupted keyword token.
    let corrupt_map = |l: TokenId| -> TokenId {
        if l == kw_ids[corrupt_pos] {
            corrupt_id
        } else {
            l
        }
    };
    let mut head = Array2::zeros((dim, width));
    for l in 0..width {
        head[[l, corrupt_map(l)]] = HEAD_GAIN;
        head[[width + l, l]] = HEAD_GAIN;
    }
    let mut cond = Array2::zeros((width, dim));
    for p in 0..width {
        cond[[p, width + p]] = COND_GAIN;
    }
    let layers = (0..NUM_LAYERS)
        .map(|_| EncoderLayer {
            weight: Array2::zeros((dim, dim)),
            offset: Array1::zeros(dim),
        })
        .collect();
    let heads = vec![head; NUM_LAYERS];
    let conds = vec![cond; NUM_LAYERS];
    let bias_layers: BTreeSet<usize> = SELFCOND_LAYERS.into_iter().collect();
    let model = LayerStack::new(layers, heads, conds, bias_layers.clone())
        .expect("generated shapes are consistent");

    let reference: String = utterance.iter().map(|&id| vocab.token(id)).collect();
    let corrupted: String = utterance
        .iter()
        .enumerate()
        .map(|(i, &id)| {
            if i == corrupt_index {
                vocab.token(corrupt_id)
            } else {
                vocab.token(id)
            }
        })
        .collect();
    let corrupted_keyword: String = kw_ids
        .iter()
        .enumerate()
        .map(|(i, &id)| {
            if i == corrupt_pos {
                vocab.token(corrupt_id)
            } else {
                vocab.token(id)
            }
        })
        .collect();

    Fixture {
        vocab,
        model,
        features,
        keyword,
        reference,
        corrupted,
        corrupted_keyword,
        bias_layers,
    }
}

/// Write a fixture directory: vocab.txt, keywords.txt, model/, input.fea,
/// reference.txt, corrupted.txt and a fixture.json summary.
pub fn write_fixture(fixture: &Fixture, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    fixture.vocab.save(dir.join("vocab.txt"))?;
    std::fs::write(dir.join("keywords.txt"), format!("{}\n", fixture.keyword.surface))
        .map_err(|e| Error::io(dir.join("keywords.txt"), e))?;
    encoder::save_model(&fixture.model, dir.join("model"))?;
    encoder::save_features(&fixture.features, dir.join("input.fea"))?;
    std::fs::write(dir.join("reference.txt"), format!("{}\n", fixture.reference))
        .map_err(|e| Error::io(dir.join("reference.txt"), e))?;
    std::fs::write(dir.join("corrupted.txt"), format!("{}\n", fixture.corrupted))
        .map_err(|e| Error::io(dir.join("corrupted.txt"), e))?;
    let summary = serde_json::json!({
        "keyword": fixture.keyword.surface,
        "corrupted_keyword": fixture.corrupted_keyword,
        "reference": fixture.reference,
        "corrupted": fixture.corrupted,
        "theta": THETA,
        "omega": OMEGA,
        "bias_layers": fixture.bias_layers.iter().copied().collect::<Vec<_>>(),
    });
    std::fs::write(
        dir.join("fixture.json"),
        format!("{}\n", serde_json::to_string_pretty(&summary).expect("plain json")),
    )
    .map_err(|e| Error::io(dir.join("fixture.json"), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bias::BiasConfig;
    use crate::encoder::{forward_selfcond, forward_with_bias};

    #[test]
    fn generation_is_deterministic() {
        let a = generate(7);
        let b = generate(7);
        assert_eq!(a.reference, b.reference);
        assert_eq!(a.corrupted, b.corrupted);
        assert_eq!(a.features, b.features);
    }

    #[test]
    fn unbiased_run_decodes_the_corruption() {
        for seed in [1, 2, 3] {
            let fx = generate(seed);
            let trace = forward_selfcond(&fx.model, &fx.features).unwrap();
            let text = fx.vocab.render(&trace.final_hypothesis);
            assert_eq!(text, fx.corrupted, "seed {seed}");
            assert!(!text.contains(&fx.keyword.surface));
        }
    }

    #[test]
    fn biased_run_recovers_the_keyword() {
        for seed in [1, 2, 3] {
            let fx = generate(seed);
            let cfg = BiasConfig::new(OMEGA, fx.bias_layers.clone(), THETA).unwrap();
            let trace =
                forward_with_bias(&fx.model, &fx.features, &[fx.keyword.clone()], &cfg).unwrap();
            let text = fx.vocab.render(&trace.final_hypothesis);
            assert!(
                text.contains(&fx.keyword.surface),
                "seed {seed}: {text:?} lacks {:?}",
                fx.keyword.surface
            );
            assert!(!trace.detections.is_empty());
        }
    }

    #[test]
    fn biasing_locality_below_first_bias_layer() {
        let fx = generate(5);
        let plain = forward_selfcond(&fx.model, &fx.features).unwrap();
        let cfg = BiasConfig::new(OMEGA, fx.bias_layers.clone(), THETA).unwrap();
        let biased =
            forward_with_bias(&fx.model, &fx.features, &[fx.keyword.clone()], &cfg).unwrap();
        let first = *fx.bias_layers.iter().next().unwrap();
        assert_eq!(
            plain.posteriorgram(first).unwrap(),
            biased.posteriorgram(first).unwrap(),
            "the first biased layer sees identical head output"
        );
    }

    #[test]
    fn fixture_directory_round_trips(){
        let fx = generate(11);
        let dir = tempfile::tempdir().unwrap();
        write_fixture(&fx, dir.path()).unwrap();
        let vocab = Vocabulary::load(dir.path().join("vocab.txt")).unwrap();
        assert_eq!(vocab, fx.vocab);
        let model = encoder::load_model(dir.path().join("model/manifest.json")).unwrap();
        assert_eq!(model.num_layers(), NUM_LAYERS);
        let features = encoder::load_features(dir.path().join("input.fea")).unwrap();
        assert_eq!(features, fx.features);
        let trace = forward_selfcond(&model, &features).unwrap();
        assert_eq!(vocab.render(&trace.final_hypothesis), fx.corrupted);
    }
}

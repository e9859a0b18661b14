//! A deterministic toy encoder stack with intermediate softmax heads and
//! self-conditioning, plus bias-injection hooks at selected layers.
//!
//! Each layer applies an affine transform followed by an elementwise tanh
//! and a residual add. At self-conditioning layers the head distribution
//! is projected back to feature space and added to the layer output; at
//! bias layers that projection is computed from the keyword-biased
//! distribution instead. The layer function is intentionally simple: the
//! behavior under test is the conditioning dataflow, and a toy layer keeps
//! every oracle exact.
//!
//! Model files are a JSON manifest naming per-layer weight blobs (raw f32
//! little-endian, row-major); input features use the FEA1 container
//! (`FEA1`, u32 LE frames, u32 LE dim, f32 LE row-major).

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::bias::{self, BiasConfig, InterBiasConfig};
use crate::ctc;
use crate::error::{Error, Result};
use crate::keyword::Keyword;
use crate::math::softmax;
use crate::posteriorgram::Posteriorgram;
use crate::types::TokenSequence;
use crate::wctc::{self, Detection, SpotConfig};

/// One affine+tanh+residual layer.
#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub weight: Array2<f64>,
    pub offset: Array1<f64>,
}

/// The full stack: N layers, a softmax head and a conditioning projection
/// per layer, and the set of layers that self-condition.
#[derive(Clone, Debug)]
pub struct LayerStack {
    num_layers: usize,
    dim: usize,
    vocab_size: usize,
    layers: Vec<EncoderLayer>,
    heads: Vec<Array2<f64>>,
    conds: Vec<Array2<f64>>,
    selfcond_layers: BTreeSet<usize>,
    zero_offset: Array1<f64>,
}

impl LayerStack {
    pub fn new(
        layers: Vec<EncoderLayer>,
        heads: Vec<Array2<f64>>,
        conds: Vec<Array2<f64>>,
        selfcond_layers: BTreeSet<usize>,
    ) -> Result<Self> {
        let num_layers = layers.len();
        if num_layers == 0 {
            return Err(Error::Config("model needs at least one layer".into()));
        }
        if heads.len() != num_layers || conds.len() != num_layers {
            return Err(Error::Config(format!(
                "expected {num_layers} heads and projections, found {} and {}",
                heads.len(),
                conds.len()
            )));
        }
        let dim = layers[0].weight.nrows();
        let vocab_size = heads[0].ncols();
        if vocab_size < 2 {
            return Err(Error::Config("vocabulary must hold blank plus a token".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.weight.nrows() != dim || layer.weight.ncols() != dim {
                return Err(Error::Shape(format!(
                    "layer {} weight is {}x{}, expected {dim}x{dim}",
                    i + 1,
                    layer.weight.nrows(),
                    layer.weight.ncols()
                )));
            }
            if layer.offset.len() != dim {
                return Err(Error::Shape(format!(
                    "layer {} offset has length {}, expected {dim}",
                    i + 1,
                    layer.offset.len()
                )));
            }
        }
        for (i, head) in heads.iter().enumerate() {
            if head.nrows() != dim || head.ncols() != vocab_size {
                return Err(Error::Shape(format!(
                    "head {} is {}x{}, expected {dim}x{vocab_size}",
                    i + 1,
                    head.nrows(),
                    head.ncols()
                )));
            }
        }
        for (i, cond) in conds.iter().enumerate() {
            if cond.nrows() != vocab_size || cond.ncols() != dim {
                return Err(Error::Shape(format!(
                    "projection {} is {}x{}, expected {vocab_size}x{dim}",
                    i + 1,
                    cond.nrows(),
                    cond.ncols()
                )));
            }
        }
        let finite = layers.iter().all(|l| {
            l.weight.iter().all(|v| v.is_finite()) && l.offset.iter().all(|v| v.is_finite())
        }) && heads.iter().all(|h| h.iter().all(|v| v.is_finite()))
            && conds.iter().all(|c| c.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::Invalid("non-finite model weight".into()));
        }
        for &n in &selfcond_layers {
            if n == 0 || n >= num_layers {
                return Err(Error::Config(format!(
                    "self-conditioning layer {n} outside 1..={}",
                    num_layers - 1
                )));
            }
        }
        Ok(LayerStack {
            num_layers,
            dim,
            vocab_size,
            layers,
            heads,
            conds,
            selfcond_layers,
            zero_offset: Array1::zeros(dim),
        })
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn selfcond_layers(&self) -> &BTreeSet<usize> {
        &self.selfcond_layers
    }

    pub fn cond_weights(&self, layer: usize) -> &Array2<f64> {
        &self.conds[layer - 1]
    }
}

/// Everything one forward pass produced: head posteriorgrams for the
/// self-conditioning layers plus the final layer, detections per biased
/// layer, the layers where interpolation actually ran, and the final
/// greedy hypothesis.
#[derive(Clone, Debug)]
pub struct RunTrace {
    pub layer_posteriors: Vec<(usize, Posteriorgram)>,
    pub detections: Vec<(usize, Vec<Detection>)>,
    pub bias_applied: Vec<usize>,
    pub final_hypothesis: TokenSequence,
}

impl RunTrace {
    /// The layer-N output distribution.
    pub fn final_posteriorgram(&self) -> &Posteriorgram {
        &self
            .layer_posteriors
            .last()
            .expect("trace always holds the final layer")
            .1
    }

    pub fn posteriorgram(&self, layer: usize) -> Option<&Posteriorgram> {
        self.layer_posteriors
            .iter()
            .find(|(n, _)| *n == layer)
            .map(|(_, z)| z)
    }
}

enum Mode<'a> {
    Plain,
    Wctc {
        keywords: &'a [Keyword],
        cfg: &'a BiasConfig,
    },
    InterBias {
        cfg: &'a InterBiasConfig,
    },
}

fn all_finite(x: &Array2<f64>) -> bool {
    x.iter().all(|v| v.is_finite())
}

fn head_posteriors(
    model: &LayerStack,
    x: &Array2<f64>,
    layer: usize,
) -> Result<Posteriorgram> {
    let logits = x.dot(&model.heads[layer - 1]);
    if !all_finite(&logits) {
        return Err(Error::NonFinite { layer });
    }
    let rows: Vec<Vec<f64>> = logits
        .rows()
        .into_iter()
        .map(|row| softmax(row.as_slice().expect("contiguous row")))
        .collect();
    Ok(Posteriorgram::from_rows(rows)?.with_layer(layer))
}

fn forward(model: &LayerStack, features: &Array2<f64>, mode: Mode<'_>) -> Result<RunTrace> {
    if features.ncols() != model.dim {
        return Err(Error::Shape(format!(
            "features have dim {}, model expects {}",
            features.ncols(),
            model.dim
        )));
    }
    if features.nrows() == 0 {
        return Err(Error::Shape("empty feature sequence".into()));
    }
    if !all_finite(features) {
        return Err(Error::Invalid("non-finite input features".into()));
    }
    match &mode {
        Mode::Wctc { cfg, .. } => {
            if !cfg.bias_layers.is_subset(&model.selfcond_layers) {
                return Err(Error::Config(format!(
                    "bias layers {:?} not a subset of self-conditioning layers {:?}",
                    cfg.bias_layers, model.selfcond_layers
                )));
            }
        }
        Mode::InterBias { cfg } => {
            if !cfg.layers.is_subset(&model.selfcond_layers) {
                return Err(Error::Config(format!(
                    "trigger-bias layers {:?} not a subset of self-conditioning layers {:?}",
                    cfg.layers, model.selfcond_layers
                )));
            }
        }
        Mode::Plain => {}
    }

    let mut x = features.clone();
    let mut layer_posteriors = Vec::new();
    let mut detections = Vec::new();
    let mut bias_applied = Vec::new();

    for n in 1..=model.num_layers {
        let layer = &model.layers[n - 1];
        let mut pre = x.dot(&layer.weight);
        for mut row in pre.rows_mut() {
            row += &layer.offset;
        }
        x = &x + &pre.mapv(f64::tanh);
        if !all_finite(&x) {
            return Err(Error::NonFinite { layer: n });
        }

        if model.selfcond_layers.contains(&n) {
            let z = head_posteriors(model, &x, n)?;
            let cond = &model.conds[n - 1];
            let feature = match &mode {
                Mode::Wctc { keywords, cfg } if cfg.bias_layers.contains(&n) => {
                    let spot = wctc::spot_keywords(&z, keywords, &SpotConfig::new(cfg.theta)?)?;
                    let mask = bias::aggregate_masks(&spot.masks, z.frames(), z.width())?;
                    detections.push((n, spot.detections));
                    if !mask.is_zero() {
                        bias_applied.push(n);
                    }
                    let biased = bias::bias_interpolate(&z, &mask, cfg.omega)?;
                    bias::project_bias(&biased, cond, &model.zero_offset)?
                }
                Mode::InterBias { cfg } if cfg.layers.contains(&n) => {
                    let hyp = ctc::greedy_decode(&z);
                    let substituted = bias::interbias_substitute(&hyp, cfg);
                    if substituted != hyp {
                        bias_applied.push(n);
                        bias::interbias_features(
                            &z,
                            &substituted,
                            cfg.psi,
                            cond,
                            &model.zero_offset,
                        )?
                    } else {
                        bias::project_bias(&z, cond, &model.zero_offset)?
                    }
                }
                _ => bias::project_bias(&z, cond, &model.zero_offset)?,
            };
            x = &x + &feature;
            if !all_finite(&x) {
                return Err(Error::NonFinite { layer: n });
            }
            layer_posteriors.push((n, z));
        }
    }

    let z_final = head_posteriors(model, &x, model.num_layers)?;
    let final_hypothesis = ctc::greedy_decode(&z_final);
    layer_posteriors.push((model.num_layers, z_final));

    Ok(RunTrace {
        layer_posteriors,
        detections,
        bias_applied,
        final_hypothesis,
    })
}

/// Plain self-conditioned forward pass.
pub fn forward_selfcond(model: &LayerStack, features: &Array2<f64>) -> Result<RunTrace> {
    forward(model, features, Mode::Plain)
}

/// Self-conditioned forward pass with wildcard keyword spotting and
/// ω-interpolated biasing at the configured layers.
pub fn forward_with_bias(
    model: &LayerStack,
    features: &Array2<f64>,
    keywords: &[Keyword],
    cfg: &BiasConfig,
) -> Result<RunTrace> {
    forward(model, features, Mode::Wctc { keywords, cfg })
}

/// Self-conditioned forward pass with trigger substitution and ψ-mixed
/// alignment biasing at the configured layers.
pub fn forward_with_interbias(
    model: &LayerStack,
    features: &Array2<f64>,
    cfg: &InterBiasConfig,
) -> Result<RunTrace> {
    forward(model, features, Mode::InterBias { cfg })
}

// ---- file formats -----------------------------------------------------------

const FEATURE_MAGIC: &[u8; 4] = b"FEA1";

#[derive(Serialize, Deserialize)]
struct Manifest {
    num_layers: usize,
    dim: usize,
    vocab_size: usize,
    selfcond_layers: Vec<usize>,
    blobs: ManifestBlobs,
}

#[derive(Serialize, Deserialize)]
struct ManifestBlobs {
    layer_weight: Vec<String>,
    layer_offset: Vec<String>,
    head_weight: Vec<String>,
    cond_weight: Vec<String>,
}

fn read_blob(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 4 {
        return Err(Error::format(
            path,
            format!("blob holds {} bytes, expected {}", bytes.len(), expected * 4),
        ));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::format(path, format!("non-finite weight {bad}")));
    }
    Ok(values)
}

fn write_blob(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for &v in values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Load a model from its JSON manifest; blob paths are relative to the
/// manifest's directory.
pub fn load_model(manifest_path: impl AsRef<Path>) -> Result<LayerStack> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::format(manifest_path, format!("bad manifest: {e}")))?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let n = manifest.num_layers;
    let (d, k) = (manifest.dim, manifest.vocab_size);
    let lists = [
        (&manifest.blobs.layer_weight, "layer_weight"),
        (&manifest.blobs.layer_offset, "layer_offset"),
        (&manifest.blobs.head_weight, "head_weight"),
        (&manifest.blobs.cond_weight, "cond_weight"),
    ];
    for (list, name) in lists {
        if list.len() != n {
            return Err(Error::format(
                manifest_path,
                format!("{name} lists {} blobs, expected {n}", list.len()),
            ));
        }
    }

    let mut layers = Vec::with_capacity(n);
    let mut heads = Vec::with_capacity(n);
    let mut conds = Vec::with_capacity(n);
    for i in 0..n {
        let weight = read_blob(&dir.join(&manifest.blobs.layer_weight[i]), d * d)?;
        let offset = read_blob(&dir.join(&manifest.blobs.layer_offset[i]), d)?;
        let head = read_blob(&dir.join(&manifest.blobs.head_weight[i]), d * k)?;
        let cond = read_blob(&dir.join(&manifest.blobs.cond_weight[i]), k * d)?;
        layers.push(EncoderLayer {
            weight: Array2::from_shape_vec((d, d), weight).expect("length checked"),
            offset: Array1::from_vec(offset),
        });
        heads.push(Array2::from_shape_vec((d, k), head).expect("length checked"));
        conds.push(Array2::from_shape_vec((k, d), cond).expect("length checked"));
    }
    LayerStack::new(
        layers,
        heads,
        conds,
        manifest.selfcond_layers.into_iter().collect(),
    )
}

/// Write a model directory: `manifest.json` plus one blob per matrix.
pub fn save_model(model: &LayerStack, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut blobs = ManifestBlobs {
        layer_weight: Vec::new(),
        layer_offset: Vec::new(),
        head_weight: Vec::new(),
        cond_weight: Vec::new(),
    };
    for (i, layer) in model.layers.iter().enumerate() {
        let n = i + 1;
        let names = [
            format!("layer_{n:02}_weight.f32"),
            format!("layer_{n:02}_offset.f32"),
            format!("layer_{n:02}_head.f32"),
            format!("layer_{n:02}_cond.f32"),
        ];
        write_blob(
            &dir.join(&names[0]),
            layer.weight.as_slice().expect("row-major"),
        )?;
        write_blob(&dir.join(&names[1]), layer.offset.as_slice().expect("contiguous"))?;
        write_blob(
            &dir.join(&names[2]),
            model.heads[i].as_slice().expect("row-major"),
        )?;
        write_blob(
            &dir.join(&names[3]),
            model.conds[i].as_slice().expect("row-major"),
        )?;
        blobs.layer_weight.push(names[0].clone());
        blobs.layer_offset.push(names[1].clone());
        blobs.head_weight.push(names[2].clone());
        blobs.cond_weight.push(names[3].clone());
    }
    let manifest = Manifest {
        num_layers: model.num_layers,
        dim: model.dim,
        vocab_size: model.vocab_size,
        selfcond_layers: model.selfcond_layers.iter().copied().collect(),
        blobs,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(dir.join("manifest.json"), text).map_err(|e| Error::io(dir, e))
}

/// Load a FEA1 feature file into a T×D matrix.
pub fn load_features(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 || &bytes[0..4] != FEATURE_MAGIC {
        return Err(Error::format(path, "bad magic, expected FEA1"));
    }
    let frames = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if frames == 0 || dim == 0 {
        return Err(Error::format(path, "empty feature matrix"));
    }
    if bytes.len() != 12 + frames * dim * 4 {
        return Err(Error::format(
            path,
            format!(
                "payload holds {} bytes, expected {}",
                bytes.len() - 12,
                frames * dim * 4
            ),
        ));
    }
    let values: Vec<f64> = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::format(path, "non-finite feature value"));
    }
    Ok(Array2::from_shape_vec((frames, dim), values).expect("length checked"))
}

/// Write a T×D matrix as FEA1.
pub fn save_features(features: &Array2<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(12 + features.len() * 4);
    bytes.extend_from_slice(FEATURE_MAGIC);
    bytes.extend_from_slice(&(features.nrows() as u32).to_le_bytes());
    bytes.extend_from_slice(&(features.ncols() as u32).to_le_bytes());
    for &v in features.iter() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::Vocabulary;

    fn identity_model(n: usize, dim: usize, k: usize, selfcond: &[usize]) -> LayerStack {
        let layers = (0..n)
            .map(|_| EncoderLayer {
                weight: Array2::zeros((dim, dim)),
                offset: Array1::zeros(dim),
            })
            .collect();
        let heads = (0..n).map(|_| Array2::zeros((dim, k))).collect();
        let conds = (0..n).map(|_| Array2::zeros((k, dim))).collect();
        LayerStack::new(layers, heads, conds, selfcond.iter().copied().collect()).unwrap()
    }

    #[test]
    fn final_layer_cannot_self_condition() {
        let layers = vec![
            EncoderLayer {
                weight: Array2::zeros((2, 2)),
                offset: Array1::zeros(2),
            };
            2
        ];
        let heads = vec![Array2::zeros((2, 3)); 2];
        let conds = vec![Array2::zeros((3, 2)); 2];
        assert!(LayerStack::new(
            layers.clone(),
            heads.clone(),
            conds.clone(),
            BTreeSet::from([1])
        )
        .is_ok());
        assert!(LayerStack::new(layers, heads, conds, BTreeSet::from([2])).is_err());
    }

    #[test]
    fn zero_model_yields_uniform_rows() {
        let model = identity_model(1, 3, 4, &[]);
        let x = Array2::zeros((2, 3));
        let trace = forward_selfcond(&model, &x).unwrap();
        let z = trace.final_posteriorgram();
        for t in 0..2 {
            for k in 0..4 {
                assert!((z.prob(t, k) - 0.25).abs() < 1e-12);
            }
        }
        assert!(trace.final_hypothesis.is_empty());
    }

    #[test]
    fn no_selfcond_is_plain_composition() {
        // With an empty layer set, no head runs before the final one and
        // the trace holds exactly one posteriorgram.
        let model = identity_model(3, 3, 4, &[]);
        let x = Array2::from_shape_fn((2, 3), |(t, d)| (t + d) as f64 * 0.1);
        let trace = forward_selfcond(&model, &x).unwrap();
        assert_eq!(trace.layer_posteriors.len(), 1);
        assert_eq!(trace.layer_posteriors[0].0, 3);
    }

    #[test]
    fn forward_matches_step_by_step_oracle() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let (dim, k) = (3, 4);
        let layers: Vec<EncoderLayer> = (0..2)
            .map(|_| EncoderLayer {
                weight: Array2::from_shape_fn((dim, dim), |_| rng.random_range(-0.3..0.3)),
                offset: Array1::from_shape_fn(dim, |_| rng.random_range(-0.3..0.3)),
            })
            .collect();
        let heads: Vec<Array2<f64>> = (0..2)
            .map(|_| Array2::from_shape_fn((dim, k), |_| rng.random_range(-0.3..0.3)))
            .collect();
        let conds: Vec<Array2<f64>> = (0..2)
            .map(|_| Array2::from_shape_fn((k, dim), |_| rng.random_range(-0.3..0.3)))
            .collect();
        let model = LayerStack::new(
            layers.clone(),
            heads.clone(),
            conds.clone(),
            BTreeSet::from([1]),
        )
        .unwrap();
        let x0 = Array2::from_shape_fn((2, dim), |_| rng.random_range(-1.0..1.0));
        let trace = forward_selfcond(&model, &x0).unwrap();

        // Scripted matrix arithmetic over the same weights.
        let mut x = x0.clone();
        for (i, layer) in layers.iter().enumerate() {
            let mut pre = x.dot(&layer.weight);
            for mut row in pre.rows_mut() {
                row += &layer.offset;
            }
            x = &x + &pre.mapv(f64::tanh);
            if i == 0 {
                let logits = x.dot(&heads[0]);
                let z: Vec<Vec<f64>> = logits
                    .rows()
                    .into_iter()
                    .map(|r| softmax(r.as_slice().unwrap()))
                    .collect();
                let zmat = Array2::from_shape_fn((2, k), |(t, j)| z[t][j]);
                x = &x + &zmat.dot(&conds[0]);
            }
        }
        let logits = x.dot(&heads[1]);
        let trace_final = trace.final_posteriorgram();
        for t in 0..2 {
            let row = softmax(logits.row(t).as_slice().unwrap());
            for j in 0..k {
                assert!((trace_final.prob(t, j) - row[j]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn determinism_across_runs() {
        let model = identity_model(2, 3, 4, &[1]);
        let x = Array2::from_shape_fn((3, 3), |(t, d)| (t * 3 + d) as f64 * 0.05);
        let a = forward_selfcond(&model, &x).unwrap();
        let b = forward_selfcond(&model, &x).unwrap();
        assert_eq!(a.final_posteriorgram(), b.final_posteriorgram());
        assert_eq!(a.final_hypothesis, b.final_hypothesis);
    }

    #[test]
    fn empty_keyword_list_is_bit_identical_to_selfcond() {
        let model = identity_model(3, 3, 4, &[1, 2]);
        let x = Array2::from_shape_fn((3, 3), |(t, d)| (t + d) as f64 * 0.1);
        let plain = forward_selfcond(&model, &x).unwrap();
        let cfg = BiasConfig::new(0.7, BTreeSet::from([1]), -40.0).unwrap();
        let biased = forward_with_bias(&model, &x, &[], &cfg).unwrap();
        assert_eq!(plain.final_posteriorgram(), biased.final_posteriorgram());
        assert_eq!(plain.final_hypothesis, biased.final_hypothesis);
        assert!(biased.bias_applied.is_empty());
    }

    #[test]
    fn bias_layers_must_self_condition() {
        let model = identity_model(3, 3, 4, &[1]);
        let x = Array2::zeros((2, 3));
        let cfg = BiasConfig::new(0.7, BTreeSet::from([2]), -40.0).unwrap();
        let v = Vocabulary::from_tokens(&["<blank>", "a", "b", "c"]).unwrap();
        let kw = Keyword::tokenize("a", &v).unwrap();
        assert!(forward_with_bias(&model, &x, &[kw], &cfg).is_err());
    }

    #[test]
    fn model_round_trip_is_byte_identical() {
        let model = identity_model(2, 3, 4, &[1]);
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        save_model(&model, &a).unwrap();
        let loaded = load_model(a.join("manifest.json")).unwrap();
        assert_eq!(loaded.num_layers(), 2);
        save_model(&loaded, &b).unwrap();
        for entry in fs::read_dir(&a).unwrap() {
            let name = entry.unwrap().file_name();
            let left = fs::read(a.join(&name)).unwrap();
            let right = fs::read(b.join(&name)).unwrap();
            assert_eq!(left, right, "blob {name:?} differs");
        }
    }

    #[test]
    fn load_rejects_size_mismatch() {
        let model = identity_model(2, 4, 4, &[1]);
        let dir = tempfile::tempdir().unwrap();
        save_model(&model, dir.path()).unwrap();
        // Claim dim 5 while blobs are sized for dim 4.
        let manifest_path = dir.path().join("manifest.json");
        let text = fs::read_to_string(&manifest_path)
            .unwrap()
            .replace("\"dim\": 4", "\"dim\": 5");
        fs::write(&manifest_path, text).unwrap();
        assert!(load_model(&manifest_path).is_err());
    }

    #[test]
    fn feature_file_round_trip() {
        let x = Array2::from_shape_fn((3, 2), |(t, d)| (t * 2 + d) as f64 * 0.25);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("input.fea");
        save_features(&x, &path).unwrap();
        let back = load_features(&path).unwrap();
        assert_eq!(back, x);
    }
}

//! Dual recurrent audio/text style classifier.
//!
//! Audio branch: a GRU over MFCC frames; its final state is joined with the
//! prosody vector and passed through a ReLU dense layer. Text branch: a GRU
//! over token embeddings. Both outputs are concatenated, batch-normalized and
//! mapped to six logits. The softmax of the logits is the style embedding.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::style_embedding::StyleEmbedding;
use super::weights::ClassWeights;
use crate::corpus::{FeatureBundle, StyleLabel, EMBED_DIM, MFCC_DIM, NUM_STYLES, PROSODY_DIM};
use crate::error::{Error, Result};
use crate::nn::tape::log_sum_exp;
use crate::nn::{Checkpoint, Dense, Gru, Mat, ParamId, Params, Tape, Var};

pub const CHECKPOINT_KIND: &str = "style_classifier";
const RUNNING_MEAN: &str = "bn.running_mean";
const RUNNING_VAR: &str = "bn.running_var";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub mfcc_dim: usize,
    pub prosody_dim: usize,
    pub embed_dim: usize,
    pub audio_hidden: usize,
    pub text_hidden: usize,
    pub audio_dense: usize,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    /// Use every n-th MFCC frame.
    pub frame_stride: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            mfcc_dim: MFCC_DIM,
            prosody_dim: PROSODY_DIM,
            embed_dim: EMBED_DIM,
            audio_hidden: 128,
            text_hidden: 128,
            audio_dense: 128,
            bn_momentum: 0.9,
            bn_eps: 1e-5,
            frame_stride: 1,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn joint_dim(&self) -> usize {
        self.audio_dense + self.text_hidden
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Layers {
    audio: Gru,
    audio_dense: Dense,
    text: Gru,
    gamma: ParamId,
    beta: ParamId,
    head: Dense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StyleClassifier {
    pub config: ClassifierConfig,
    pub params: Params,
    layers: Layers,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

/// Padded, time-major inputs for a batch of utterances.
#[derive(Debug, Clone)]
pub struct Batch {
    pub size: usize,
    audio: Mat,
    audio_len: Vec<usize>,
    pub audio_steps: usize,
    prosody: Mat,
    text: Mat,
    text_len: Vec<usize>,
    pub text_steps: usize,
    pub labels: Vec<Option<StyleLabel>>,
}

impl StyleClassifier {
    pub fn new(config: ClassifierConfig) -> Result<Self> {
        if [config.audio_hidden, config.text_hidden, config.audio_dense, config.frame_stride].contains(&0) {
            return Err(Error::invalid("classifier sizes must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = Params::default();
        let audio = Gru::new(&mut params, "audio.gru", config.mfcc_dim, config.audio_hidden, &mut rng);
        let audio_dense =
            Dense::new(&mut params, "audio.dense", config.audio_hidden + config.prosody_dim, config.audio_dense, &mut rng);
        let text = Gru::new(&mut params, "text.gru", config.embed_dim, config.text_hidden, &mut rng);
        let joint = config.joint_dim();
        let gamma = params.add("bn.gamma", Mat::filled(1, joint, 1.0));
        let beta = params.add("bn.beta", Mat::zeros(1, joint));
        let head = Dense::new(&mut params, "head", joint, NUM_STYLES, &mut rng);
        Ok(Self {
            layers: Layers { audio, audio_dense, text, gamma, beta, head },
            params,
            running_mean: vec![0.0; joint],
            running_var: vec![1.0; joint],
            config,
        })
    }

    pub fn gamma(&self) -> &[f64] {
        &self.params.get(self.layers.gamma).data
    }

    pub fn beta(&self) -> &[f64] {
        &self.params.get(self.layers.beta).data
    }

    pub fn make_batch(&self, items: &[&FeatureBundle]) -> Result<Batch> {
        let cfg = &self.config;
        let b = items.len();
        if b == 0 {
            return Err(Error::invalid("empty batch"));
        }
        let stride = cfg.frame_stride;
        for it in items {
            if it.mfcc.cols != cfg.mfcc_dim || it.prosody.len() != cfg.prosody_dim {
                return Err(Error::Shape(format!(
                    "{}: features {}×{} / {} do not match classifier ({} / {})",
                    it.id,
                    it.mfcc.rows,
                    it.mfcc.cols,
                    it.prosody.len(),
                    cfg.mfcc_dim,
                    cfg.prosody_dim
                )));
            }
            if it.mfcc.rows == 0 {
                return Err(Error::Shape(format!("{}: no MFCC frames", it.id)));
            }
            if it.token_embeddings.rows > 0 && it.token_embeddings.cols != cfg.embed_dim {
                return Err(Error::Shape(format!(
                    "{}: token embedding width {} != {}",
                    it.id, it.token_embeddings.cols, cfg.embed_dim
                )));
            }
        }
        let audio_len: Vec<usize> = items.iter().map(|it| it.mfcc.rows.div_ceil(stride)).collect();
        let audio_steps = *audio_len.iter().max().unwrap();
        let mut audio = Mat::zeros(audio_steps * b, cfg.mfcc_dim);
        for (j, it) in items.iter().enumerate() {
            for t in 0..audio_len[j] {
                audio.row_mut(t * b + j).copy_from_slice(it.mfcc.row(t * stride));
            }
        }
        // Empty transcripts become a single zero token.
        let text_len: Vec<usize> = items.iter().map(|it| it.token_embeddings.rows.max(1)).collect();
        let text_steps = *text_len.iter().max().unwrap();
        let mut text = Mat::zeros(text_steps * b, cfg.embed_dim);
        for (j, it) in items.iter().enumerate() {
            for t in 0..it.token_embeddings.rows {
                text.row_mut(t * b + j).copy_from_slice(it.token_embeddings.row(t));
            }
        }
        let mut prosody = Mat::zeros(b, cfg.prosody_dim);
        for (j, it) in items.iter().enumerate() {
            prosody.row_mut(j).copy_from_slice(&it.prosody);
        }
        Ok(Batch {
            size: b,
            audio,
            audio_len,
            audio_steps,
            prosody,
            text,
            text_len,
            text_steps,
            labels: items.iter().map(|it| it.style).collect(),
        })
    }

    /// Records the encoders and returns the pre-normalization joint
    /// representation (`B×joint_dim`).
    pub fn encode(&self, tape: &mut Tape, batch: &Batch) -> Var {
        let l = &self.layers;
        let b = batch.size;
        let last = |tape: &mut Tape, stacked: Var, lens: &[usize]| {
            let idx: Vec<usize> = lens.iter().enumerate().map(|(j, &n)| (n - 1) * b + j).collect();
            tape.gather_rows(stacked, &idx)
        };
        let xa = tape.input(batch.audio.clone());
        let sa = l.audio.run(tape, xa, b);
        let ha = last(tape, sa, &batch.audio_len);
        let pr = tape.input(batch.prosody.clone());
        let joined = tape.concat_cols(&[ha, pr]);
        let a = l.audio_dense.forward(tape, joined);
        let a = tape.relu(a);
        let xt = tape.input(batch.text.clone());
        let st = l.text.run(tape, xt, b);
        let ht = last(tape, st, &batch.text_len);
        tape.concat_cols(&[a, ht])
    }

    /// Training-mode forward: batch statistics in the normalization layer.
    /// Returns logits and the batch mean/variance.
    pub fn forward_train(&self, tape: &mut Tape, batch: &Batch) -> (Var, Vec<f64>, Vec<f64>) {
        let z = self.encode(tape, batch);
        let g = tape.param(self.layers.gamma);
        let be = tape.param(self.layers.beta);
        let (y, mean, var) = tape.batch_norm(z, g, be, self.config.bn_eps);
        (self.layers.head.forward(tape, y), mean, var)
    }

    /// Pre-normalization activations for each item, in order.
    pub fn pre_bn_activations(&self, items: &[&FeatureBundle]) -> Result<Mat> {
        let mut out = Mat::zeros(items.len(), self.config.joint_dim());
        for (c, chunk) in items.chunks(64).enumerate() {
            let batch = self.make_batch(chunk)?;
            let mut tape = Tape::new(&self.params);
            let z = self.encode(&mut tape, &batch);
            let zv = tape.value(z);
            for r in 0..chunk.len() {
                out.row_mut(c * 64 + r).copy_from_slice(zv.row(r));
            }
        }
        Ok(out)
    }

    /// Inference-mode logits from pre-normalization activations.
    pub fn logits_from_pre_bn(&self, z: &Mat) -> Mat {
        let (g, b) = (self.gamma(), self.beta());
        let eps = self.config.bn_eps;
        let mut out = Mat::zeros(z.rows, NUM_STYLES);
        let mut y = vec![0.0; z.cols];
        for r in 0..z.rows {
            for (c, v) in z.row(r).iter().enumerate() {
                y[c] = g[c] * (v - self.running_mean[c]) / (self.running_var[c] + eps).sqrt() + b[c];
            }
            out.row_mut(r).copy_from_slice(&self.layers.head.apply(&self.params, &y));
        }
        out
    }

    pub fn logits(&self, items: &[&FeatureBundle]) -> Result<Mat> {
        Ok(self.logits_from_pre_bn(&self.pre_bn_activations(items)?))
    }

    pub fn predict(&self, items: &[&FeatureBundle]) -> Result<Vec<StyleEmbedding>> {
        let l = self.logits(items)?;
        Ok((0..l.rows).map(|r| StyleEmbedding::from_logits(l.row(r))).collect())
    }

    pub fn embed(&self, item: &FeatureBundle) -> Result<StyleEmbedding> {
        Ok(self.predict(&[item])?[0])
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut tensors = self.params.clone();
        tensors.add(RUNNING_MEAN, Mat::row_vector(self.running_mean.clone()));
        tensors.add(RUNNING_VAR, Mat::row_vector(self.running_var.clone()));
        Ok(Checkpoint { kind: CHECKPOINT_KIND.into(), config: serde_json::to_value(&self.config)?, tensors })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let config: ClassifierConfig = serde_json::from_value(ck.config.clone())?;
        let mut model = Self::new(config)?;
        let mut tensors = ck.tensors.clone();
        let take = |t: &mut Params, name: &str| -> Result<Vec<f64>> {
            let id = t.position(name).ok_or_else(|| Error::Checkpoint(format!("missing `{name}`")))?;
            t.names.remove(id.0);
            Ok(t.values.remove(id.0).data)
        };
        model.running_mean = take(&mut tensors, RUNNING_MEAN)?;
        model.running_var = take(&mut tensors, RUNNING_VAR)?;
        let joint = model.config.joint_dim();
        if model.running_mean.len() != joint || model.running_var.len() != joint {
            return Err(Error::Checkpoint("normalization statistics have the wrong width".into()));
        }
        Checkpoint { tensors, ..ck.clone() }.restore_into(&mut model.params)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Weighted cross-entropy of one example: `w_label · −log softmax(logits)[label]`.
pub fn weighted_loss(logits: &[f64], label: StyleLabel, weights: &ClassWeights) -> Result<f64> {
    let w = weights.get(label);
    if w <= 0.0 {
        return Err(Error::invalid(format!("label `{label}` has zero weight")));
    }
    Ok(w * (log_sum_exp(logits) - logits[label.index()]))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::corpus::Split;
    use rand::Rng;

    pub(crate) fn small_config() -> ClassifierConfig {
        ClassifierConfig { audio_hidden: 8, text_hidden: 6, audio_dense: 5, embed_dim: 7, seed: 3, ..Default::default() }
    }

    pub(crate) fn random_bundle(rng: &mut impl Rng, cfg: &ClassifierConfig, frames: usize, tokens: usize) -> FeatureBundle {
        let mut m = |r: usize, c: usize| Mat::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect());
        FeatureBundle {
            id: "x".into(),
            mfcc: m(frames, cfg.mfcc_dim),
            prosody: m(1, cfg.prosody_dim).data,
            tokens: vec!["t".into(); tokens],
            token_embeddings: m(tokens, cfg.embed_dim),
            style: Some(StyleLabel::Happy),
            corpus: "c".into(),
            split: Split::Train,
        }
    }

    #[test]
    fn embeddings_are_probabilities_and_deterministic() {
        let cfg = small_config();
        let model = StyleClassifier::new(cfg.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let items: Vec<_> = (0..5).map(|i| random_bundle(&mut rng, &cfg, 3 + i, i % 3)).collect();
        let refs: Vec<_> = items.iter().collect();
        let a = model.predict(&refs).unwrap();
        let b = model.predict(&refs).unwrap();
        assert_eq!(a, b);
        for e in &a {
            assert!(e.is_valid(1e-9));
        }
        // Batch composition does not change an item's output.
        let single = model.embed(&items[2]).unwrap();
        for (x, y) in single.0.iter().zip(a[2].0.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let cfg = small_config();
        let mut model = StyleClassifier::new(cfg).unwrap();
        model.running_mean[0] = 0.123456789;
        model.running_var[1] = 2.5;
        let bytes = model.to_checkpoint().unwrap().to_bytes().unwrap();
        let back = StyleClassifier::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let cfg = small_config();
        let model = StyleClassifier::new(cfg.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut b = random_bundle(&mut rng, &cfg, 4, 2);
        b.prosody.pop();
        assert!(model.embed(&b).is_err());
    }

    #[test]
    fn loss_values() {
        let w = ClassWeights::uniform();
        assert!((weighted_loss(&[0.0; 6], StyleLabel::Sad, &w).unwrap() - 6f64.ln()).abs() < 1e-12);
        let mut sharp = [0.0; 6];
        sharp[3] = 1e6;
        assert!(weighted_loss(&sharp, StyleLabel::Happy, &w).unwrap().abs() < 1e-12);
        let w2 = ClassWeights::from_counts(&[0, 1, 1, 1, 1, 1], 0.25).unwrap();
        assert!(weighted_loss(&[0.0; 6], StyleLabel::Rushed, &w2).is_err());
    }
}

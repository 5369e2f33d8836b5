//! Synthetic styled speech for tests and demos.
//!
//! Each style is described by an F0 level, the spread of the F0 contour
//! inside an utterance, a speaking rate (phonemes per second) and a loudness.
//! Audio is a harmonic source shaped by per-phoneme formant envelopes, with
//! filtered noise for unvoiced consonants. Transcripts are short neutral
//! carrier sentences, optionally followed by a keyword typical of the style.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::embedding::EmbeddingProvider;
use super::features::FeatureBundle;
use super::manifest::{Corpus, Split, Utterance};
use super::StyleLabel;
use crate::audio::{Waveform, DEFAULT_RATE};
use crate::error::{Error, Result};
use crate::tts_engine::frontend::{self, text_to_linguistic, Lexicon, PAU};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StyleSpec {
    /// Mean F0 in Hz.
    pub f0_mean: f64,
    /// Standard deviation of the F0 contour within an utterance, Hz.
    pub f0_std: f64,
    /// Phonemes per second.
    pub rate: f64,
    /// Peak-ish amplitude of voiced speech in `(0, 1]`.
    pub energy: f64,
}

/// Default per-style settings. F0 levels and spreads follow typical measured
/// values for these styles (happy highest, neutral narrowest).
pub fn default_spec(style: StyleLabel) -> StyleSpec {
    let (f0_mean, f0_std, rate, energy) = match style {
        StyleLabel::Rushed => (181.9, 12.8, 16.0, 0.5),
        StyleLabel::Soft => (180.5, 14.7, 10.0, 0.2),
        StyleLabel::Neutral => (183.7, 10.3, 11.0, 0.45),
        StyleLabel::Happy => (214.8, 37.3, 12.0, 0.6),
        StyleLabel::Angry => (195.5, 30.8, 13.0, 0.85),
        StyleLabel::Sad => (197.3, 30.8, 8.0, 0.3),
    };
    StyleSpec { f0_mean, f0_std, rate, energy }
}

pub const CARRIERS: [&str; 12] = [
    "the train is here",
    "we can call the office",
    "the book is in the car",
    "they went home at nine",
    "she said it was the same",
    "the road to the city is open",
    "we will look at it tomorrow",
    "there are two cats in the house",
    "the meeting is at ten",
    "i think the phone is here",
    "the weather was the same last week",
    "please open the door",
];

pub fn keywords(style: StyleLabel) -> [&'static str; 5] {
    match style {
        StyleLabel::Rushed => ["hurry", "quick", "fast", "now", "late"],
        StyleLabel::Soft => ["gently", "quiet", "calm", "whisper", "softly"],
        StyleLabel::Neutral => ["okay", "fine", "normal", "usual", "plain"],
        StyleLabel::Happy => ["great", "wonderful", "happy", "love", "fun"],
        StyleLabel::Angry => ["terrible", "angry", "hate", "awful", "mad"],
        StyleLabel::Sad => ["sorry", "sad", "miss", "lonely", "lost"],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub styles: Vec<StyleLabel>,
    /// One spec per entry of `styles`.
    pub specs: Vec<StyleSpec>,
    pub per_class: usize,
    pub dev_fraction: f64,
    pub test_fraction: f64,
    /// Probability that a transcript carries a style keyword.
    pub keyword_prob: f64,
    pub rate: u32,
    pub seed: u64,
    pub corpus_id: String,
    pub speaker: String,
}

impl SyntheticConfig {
    pub fn new(styles: &[StyleLabel], per_class: usize, seed: u64) -> Self {
        Self {
            styles: styles.to_vec(),
            specs: styles.iter().map(|&s| default_spec(s)).collect(),
            per_class,
            dev_fraction: 0.0,
            test_fraction: 0.0,
            keyword_prob: 1.0,
            rate: DEFAULT_RATE,
            seed,
            corpus_id: "synthetic".into(),
            speaker: "spk0".into(),
        }
    }

    pub fn all_styles(per_class: usize, seed: u64) -> Self {
        Self::new(&StyleLabel::ALL, per_class, seed)
    }

    pub fn with_spec(mut self, style: StyleLabel, spec: StyleSpec) -> Self {
        if let Some(i) = self.styles.iter().position(|&s| s == style) {
            self.specs[i] = spec;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    /// Audio aligned with `corpus.utterances`.
    pub waves: Vec<Waveform>,
}

impl SyntheticCorpus {
    /// Feature bundles for every utterance, straight from memory.
    pub fn features(&self, provider: &dyn EmbeddingProvider) -> Result<Vec<FeatureBundle>> {
        self.corpus
            .utterances
            .iter()
            .zip(&self.waves)
            .map(|(u, w)| {
                let mut b = FeatureBundle::from_audio(&u.id, w, &u.text, provider, None)?;
                b.style = u.style;
                b.corpus = u.corpus.clone();
                b.split = u.split;
                Ok(b)
            })
            .collect()
    }

    /// Writes `audio/<id>.wav` files and `manifest.jsonl` under `dir`, and
    /// points the utterances at the written files.
    pub fn write(&mut self, dir: &Path) -> Result<()> {
        let audio_dir = dir.join("audio");
        fs::create_dir_all(&audio_dir).map_err(|e| Error::io(&audio_dir, e))?;
        for (u, w) in self.corpus.utterances.iter_mut().zip(&self.waves) {
            let p = audio_dir.join(format!("{}.wav", u.id));
            w.write_wav(&p)?;
            u.audio = p;
        }
        self.corpus.write_manifest(&dir.join("manifest.jsonl"))
    }
}

/// Generates a labelled corpus; deterministic given the config.
pub fn generate_synthetic_corpus(cfg: &SyntheticConfig) -> Result<SyntheticCorpus> {
    if cfg.per_class == 0 {
        return Err(Error::invalid("utterances per class must be positive"));
    }
    if cfg.styles.is_empty() || cfg.specs.len() != cfg.styles.len() {
        return Err(Error::invalid("every requested style needs a spec"));
    }
    for s in &cfg.specs {
        if !(s.f0_mean > 0.0 && s.rate > 0.0 && s.energy > 0.0 && s.f0_std >= 0.0) {
            return Err(Error::invalid(format!("invalid style spec {s:?}")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_dev = (cfg.per_class as f64 * cfg.dev_fraction).round() as usize;
    let n_test = (cfg.per_class as f64 * cfg.test_fraction).round() as usize;
    let mut utterances = Vec::new();
    let mut waves = Vec::new();
    for (style, spec) in cfg.styles.iter().zip(&cfg.specs) {
        for i in 0..cfg.per_class {
            let split = if i < n_dev {
                Split::Dev
            } else if i < n_dev + n_test {
                Split::Test
            } else {
                Split::Train
            };
            let carrier = CARRIERS[rng.random_range(0..CARRIERS.len())];
            let text = if rng.random_bool(cfg.keyword_prob.clamp(0.0, 1.0)) {
                let kw = keywords(*style);
                format!("{carrier}, {}.", kw[rng.random_range(0..kw.len())])
            } else {
                format!("{carrier}.")
            };
            let id = format!("{}_{}_{:04}", cfg.corpus_id, style, i);
            waves.push(render_speech(&text, spec, cfg.rate, &mut rng)?);
            utterances.push(Utterance {
                audio: format!("{id}.wav").into(),
                id,
                text,
                speaker: cfg.speaker.clone(),
                raw_style: Some(style.name().to_string()),
                style: Some(*style),
                corpus: cfg.corpus_id.clone(),
                split,
            });
        }
    }
    Ok(SyntheticCorpus { corpus: Corpus::new(utterances)?, waves })
}

const EDGE_SILENCE_S: f64 = 0.15;
const BLOCK_S: f64 = 0.005;
const MAX_HARMONIC_HZ: f64 = 5000.0;

fn envelope(id: usize, f: f64) -> f64 {
    let fm = frontend::formants(id);
    let bw = [90.0, 120.0, 180.0];
    let gain = [1.0, 0.6, 0.3];
    let mut a = 0.02;
    for i in 0..3 {
        let x = (f - fm[i]) / bw[i];
        a += gain[i] / (1.0 + x * x);
    }
    a
}

/// Renders one utterance of `text` in the given style.
pub fn render_speech(text: &str, spec: &StyleSpec, rate: u32, rng: &mut impl Rng) -> Result<Waveform> {
    let ling = text_to_linguistic(text, Lexicon::builtin())?;
    let sr = rate as f64;
    let n_ph = ling.phones.len();

    // Phone durations in seconds.
    let lexical: Vec<bool> = ling.phones.iter().map(|p| p.id != PAU).collect();
    let weights: Vec<f64> =
        ling.phones.iter().map(|p| if frontend::is_vowel(p.id) { 1.3 } else { 0.8 }).collect();
    let n_lex = lexical.iter().filter(|&&l| l).count().max(1) as f64;
    let mean_w = weights.iter().zip(&lexical).filter(|(_, &l)| l).map(|(w, _)| w).sum::<f64>() / n_lex;
    let mut durs = Vec::with_capacity(n_ph);
    for (i, p) in ling.phones.iter().enumerate() {
        let d = if p.id == PAU {
            if i == 0 || i == n_ph - 1 {
                EDGE_SILENCE_S
            } else {
                2.0 / spec.rate
            }
        } else {
            let jitter: f64 = StandardNormal.sample(rng);
            (weights[i] / mean_w / spec.rate * (1.0 + 0.1 * jitter).clamp(0.5, 1.5)).max(0.03)
        };
        durs.push(d);
    }
    let mut bounds = vec![0.0];
    for d in &durs {
        bounds.push(bounds.last().unwrap() + d);
    }
    let total = *bounds.last().unwrap();
    let n = (total * sr).round() as usize;

    let first_lex = lexical.iter().position(|&l| l).unwrap_or(0);
    let last_lex = lexical.iter().rposition(|&l| l).unwrap_or(n_ph - 1);
    let (t0, t1) = (bounds[first_lex], bounds[last_lex + 1]);
    let span = (t1 - t0).max(1e-3);
    let jitter: f64 = StandardNormal.sample(rng);
    let level = spec.f0_mean * (1.0 + 0.01 * jitter);
    let cycles = rng.random_range(1..=2) as f64;
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let f0_at = |t: f64| -> f64 {
        let x = ((t - t0) / span).clamp(0.0, 1.0);
        (level + std::f64::consts::SQRT_2 * spec.f0_std * (std::f64::consts::TAU * cycles * x + phase).sin())
            .clamp(60.0, 450.0)
    };
    let phone_at = |t: f64| -> usize { bounds[1..].iter().position(|&b| t < b).unwrap_or(n_ph - 1) };

    let k_max = (MAX_HARMONIC_HZ / 60.0) as usize;
    let block = ((BLOCK_S * sr).round() as usize).max(1);
    let n_blocks = n.div_ceil(block) + 1;
    // Parameters at block boundaries: harmonic amplitudes, voiced gain, noise gain.
    let mut amps = vec![vec![0.0; k_max]; n_blocks];
    let mut gains = vec![(0.0, 0.0); n_blocks];
    for b in 0..n_blocks {
        let t = (b * block) as f64 / sr;
        let ph = ling.phones[phone_at(t)].id;
        let f0 = f0_at(t);
        if ph == PAU {
            continue;
        }
        if frontend::is_voiced(ph) {
            let a = &mut amps[b];
            let mut norm = 0.0;
            for (k, ak) in a.iter_mut().enumerate() {
                let f = f0 * (k + 1) as f64;
                if f < MAX_HARMONIC_HZ {
                    *ak = envelope(ph, f) / ((k + 1) as f64).powf(0.7);
                    norm += *ak * *ak;
                }
            }
            let norm = norm.sqrt().max(1e-12);
            a.iter_mut().for_each(|v| *v /= norm);
            gains[b] = (spec.energy * 0.5, spec.energy * 0.01);
        } else {
            gains[b] = (0.0, spec.energy * 0.12);
        }
    }

    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut out = vec![0.0; n];
    let mut theta = 0.0f64;
    let mut prev_noise = 0.0;
    let mut cur = vec![0.0; k_max];
    for (i, y) in out.iter_mut().enumerate() {
        let b = i / block;
        let frac = (i % block) as f64 / block as f64;
        let t = i as f64 / sr;
        theta = (theta + std::f64::consts::TAU * f0_at(t) / sr) % std::f64::consts::TAU;
        let (gv0, gn0) = gains[b];
        let (gv1, gn1) = gains[b + 1];
        let gv = gv0 + (gv1 - gv0) * frac;
        let gn = gn0 + (gn1 - gn0) * frac;
        let mut v = 0.0;
        if gv > 0.0 {
            for (k, c) in cur.iter_mut().enumerate() {
                *c = amps[b][k] + (amps[b + 1][k] - amps[b][k]) * frac;
            }
            // sin(kθ) by the Chebyshev recurrence.
            let (s1, c1) = theta.sin_cos();
            let (mut s_prev, mut s_cur) = (0.0, s1);
            for c in &cur {
                v += c * s_cur;
                let next = 2.0 * c1 * s_cur - s_prev;
                s_prev = s_cur;
                s_cur = next;
            }
            v *= gv;
        }
        let w: f64 = noise.sample(rng);
        v += gn * (w - prev_noise);
        prev_noise = w;
        *y = v + 3e-4 * noise.sample(rng);
    }
    Ok(Waveform::from_f64(&out, rate))
}

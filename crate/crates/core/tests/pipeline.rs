use std::sync::OnceLock;

use mimic_core::corpus::{generate_synthetic_corpus, StyleLabel, SyntheticConfig};
use mimic_core::pipeline::*;
use mimic_core::style_model::style_embedding::SIMPLEX_TOLERANCE;
use mimic_core::style_model::StyleEmbedding;
use mimic_core::tts_engine::VocoderKind;
use mimic_core::Waveform;

fn fixture() -> &'static Pipeline {
    static P: OnceLock<Pipeline> = OnceLock::new();
    P.get_or_init(|| {
        let mut cfg = SyntheticPipelineConfig::tiny(3);
        cfg.baseline = true;
        train_synthetic_pipeline(&cfg).unwrap().pipeline
    })
}

fn query() -> (Waveform, String) {
    let q = generate_synthetic_corpus(&SyntheticConfig::new(&[StyleLabel::Happy], 1, 42)).unwrap();
    (q.waves[0].clone(), q.corpus.utterances[0].text.clone())
}

#[test]
fn named_request_gives_audio_at_24k() {
    let r = fixture().synthesize(&SynthesisRequest::named("the cat is here", "neutral")).unwrap();
    assert_eq!(r.wave().rate(), 24_000);
    assert!(!r.wave().is_empty());
    assert_eq!(r.embedding, one_hot_embedding(StyleLabel::Neutral));
    assert_eq!(r.wave().len(), r.synthesis.track.frames() * 240);
}

#[test]
fn dsp_output_is_bit_identical_across_runs() {
    let req = SynthesisRequest::named("we can call the office", "happy");
    let a = fixture().synthesize(&req).unwrap();
    let b = fixture().synthesize(&req).unwrap();
    assert_eq!(a.wave().samples(), b.wave().samples());
}

#[test]
fn style_source_must_be_unique_and_valid() {
    let p = fixture();
    let (audio, text) = query();
    let both = SynthesisRequest { named: Some("happy".into()), ..SynthesisRequest::from_query("hello", audio, &text) };
    assert!(p.synthesize(&both).unwrap_err().to_string().contains("ambiguous"));
    let none = SynthesisRequest { text: "hello".into(), ..Default::default() };
    assert!(p.synthesize(&none).is_err());
    let short = SynthesisRequest::with_embedding("hello", StyleEmbedding([0.8, 0.0, 0.0, 0.0, 0.0, 0.0]));
    assert!(p.synthesize(&short).is_err());
    assert!(p.synthesize(&SynthesisRequest::named("   ", "happy")).is_err());
    assert!(p.synthesize(&SynthesisRequest::named("hello", "excited")).is_err());
    let edge = SynthesisRequest::with_embedding("hello", StyleEmbedding([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]));
    assert!(p.synthesize(&edge).is_ok());
}

#[test]
fn stage_is_named_in_errors() {
    let req = SynthesisRequest { speaker: Some("nobody".into()), ..SynthesisRequest::named("hello", "sad") };
    let msg = fixture().synthesize(&req).unwrap_err().to_string();
    assert!(msg.starts_with("prosody:"), "{msg}");
    let msg = fixture().synthesize(&SynthesisRequest::named("...", "sad")).unwrap_err().to_string();
    assert!(msg.starts_with("frontend:"), "{msg}");
}

#[test]
fn query_extraction_is_stable() {
    let (audio, text) = query();
    let a = fixture().extract_query_style(&audio, &text).unwrap();
    let b = fixture().extract_query_style(&audio, &text).unwrap();
    assert_eq!(a, b);
    assert!(a.is_valid(SIMPLEX_TOLERANCE));
}

#[test]
fn respond_is_extract_then_synthesize() {
    let p = fixture();
    let (audio, text) = query();
    let r = p.respond(&audio, &text, "the meeting is at ten", None).unwrap();
    let e = p.extract_query_style(&audio, &text).unwrap();
    assert_eq!(r.embedding, e);
    let direct = p.synthesize(&SynthesisRequest::with_embedding("the meeting is at ten", e)).unwrap();
    assert_eq!(r.wave().samples(), direct.wave().samples());
    let via_query = p.synthesize(&SynthesisRequest::from_query("the meeting is at ten", audio.clone(), &text)).unwrap();
    assert_eq!(via_query.wave().samples(), direct.wave().samples());
    assert!(p.respond(&audio, &text, "  ", None).is_err());
}

#[test]
fn baseline_ignores_style() {
    let p = fixture();
    let b = p.synthesize_baseline("the road is open", None).unwrap();
    let engine = p.baseline.as_ref().unwrap();
    let other = engine.synthesize("the road is open", &one_hot_embedding(StyleLabel::Angry), "spk0").unwrap();
    assert_eq!(b.wave.samples(), other.wave.samples());
}

#[test]
fn bundle_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = fixture();
    p.save(dir.path()).unwrap();
    let q = Pipeline::load(dir.path(), None).unwrap();
    assert_eq!(q.manifest(), p.manifest());
    assert_eq!(q.engine.vocoder.kind(), VocoderKind::Dsp);
    let req = SynthesisRequest::named("please open the door", "angry");
    assert_eq!(p.synthesize(&req).unwrap().wave().samples(), q.synthesize(&req).unwrap().wave().samples());
    let (audio, text) = query();
    assert_eq!(p.extract_query_style(&audio, &text).unwrap(), q.extract_query_style(&audio, &text).unwrap());
    assert!(Pipeline::load(dir.path(), Some(VocoderKind::Neural)).is_err());
}

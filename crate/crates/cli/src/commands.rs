//! One function per subcommand, each a thin wrapper over a library call.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use mimic_core::corpus::{
    extract_corpus, fit_normalizer, generate_synthetic_corpus, load_features, load_manifest, load_provider, save_features,
    Corpus, CorpusKind, FeatureBundle, NormMode, NormStats, Split, StyleLabel, SyntheticConfig,
};
use mimic_core::evalkit::report::{f0_csv, f0_text};
use mimic_core::evalkit::stimuli::{ABX_FILE, MEDIA_DIR, NEUTRAL_TEXTS};
use mimic_core::evalkit::{
    build_abx_pool, build_preference_pool, build_query_pool, f0_statistics, read_jsonl, voiced_mean, write_pool, AbxItem,
    Condition, MediaWriter, PreferencePlan, QueryInput,
};
use mimic_core::pipeline::{
    make_style_embedding, mix_style_embedding, one_hot_embedding, parse_style_weights, train_synthetic_pipeline, Pipeline,
    StyleExtractor, SyntheticPipelineConfig, SynthesisRequest,
};
use mimic_core::style_model::{
    adapt_bn, evaluate, label_bundles, label_corpus, normalize_by_corpus, read_embeddings, train_classifier, write_embeddings,
    write_history, EmbeddingRecord, LabelReport, StyleClassifier, StyleEmbedding,
};
use mimic_core::tts_engine::{
    build_examples, train_neural_vocoder, train_tts, tts_history_csv, AcousticConfig, AcousticModel, Lexicon, ProsodyConfig,
    ProsodyModel, TtsEngine, TtsExample, Vocoder, VocoderExample, VocoderKind,
};
use mimic_core::Waveform;
use mimic_service::ServiceConfig;
use serde_json::json;
use tracing::{info, warn};

use crate::config::CliConfig;
use crate::Command;

pub const CLASSIFIER_FILE: &str = "classifier.ckpt";
pub const HISTORY_FILE: &str = "history.csv";
pub const NORM_DIR: &str = "norm";

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub outputs: Vec<PathBuf>,
    pub metrics: serde_json::Value,
}

pub fn run(cmd: &Command, cfg: &CliConfig, out: &Path) -> anyhow::Result<Report> {
    match cmd {
        Command::GenSynthetic(a) => gen_synthetic(a, cfg, out),
        Command::ExtractFeatures(a) => extract_features(a, cfg, out),
        Command::TrainClassifier(a) => train_classifier_cmd(a, cfg, out),
        Command::AdaptBn(a) => adapt_bn_cmd(a, cfg, out),
        Command::LabelCorpus(a) => label_corpus_cmd(a, cfg, out),
        Command::TrainTts(a) => train_tts_cmd(a, cfg, out),
        Command::TrainSynthetic(a) => train_synthetic(a, cfg, out),
        Command::Synthesize(a) => synthesize(a, cfg, out),
        Command::Respond(a) => respond(a, cfg, out),
        Command::BuildAbx(a) => build_abx_cmd(a, cfg, out),
        Command::F0Stats(a) => f0_stats(a, out),
        Command::Serve(a) => serve(a, cfg, out),
    }
}

fn parse_styles(names: &[String]) -> anyhow::Result<Vec<StyleLabel>> {
    if names.is_empty() {
        return Ok(StyleLabel::ALL.to_vec());
    }
    names.iter().map(|n| Ok(n.parse::<StyleLabel>()?)).collect()
}

fn parse_embedding(text: &str) -> anyhow::Result<StyleEmbedding> {
    let v: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>().with_context(|| format!("embedding value `{t}` is not a number")))
        .collect::<anyhow::Result<_>>()?;
    Ok(StyleEmbedding::from_slice(&v)?)
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn warn_skipped<E: std::fmt::Display>(skipped: &[(String, E)]) -> Vec<serde_json::Value> {
    skipped
        .iter()
        .map(|(id, e)| {
            warn!(id = %id, reason = %e, "skipped");
            json!({ "id": id, "reason": e.to_string() })
        })
        .collect()
}

/// Fits statistics on the bundles of one corpus.
fn self_stats(bundles: &[FeatureBundle]) -> anyhow::Result<NormStats> {
    let Some(first) = bundles.first() else { bail!("no features to fit normalization statistics on") };
    Ok(fit_normalizer(&first.corpus, bundles)?)
}

fn safe_file_name(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn gen_synthetic(a: &crate::GenSynthetic, cfg: &CliConfig, out: &Path) -> anyhow::Result<Report> {
    let styles = parse_styles(&a.styles)?;
    let mut sc = SyntheticConfig::new(&styles, a.per_class.unwrap_or(cfg.synthetic.per_class), cfg.seed);
    sc.dev_fraction = cfg.synthetic.dev_fraction;
    sc.test_fraction = cfg.synthetic.test_fraction;
    sc.keyword_prob = cfg.synthetic.keyword_prob;
    let mut corpus = generate_synthetic_corpus(&sc)?;
    corpus.write(out)?;
    info!("utterance counts\n{}", corpus.corpus.count_report());
    let c = &corpus.corpus;
    Ok(Report {
        outputs: vec![out.join("manifest.jsonl")],
        metrics: json!({
            "utterances": c.len(),
            "train": c.class_counts(Split::Train),
            "dev": c.class_counts(Split::Dev),
            "test": c.class_counts(Split::Test),
        }),
    })
}

fn extract_features(a: &crate::ExtractFeatures, cfg: &CliConfig, out: &Path) -> anyhow::Result<Report> {
    let corpus = load_manifest(&a.manifest, a.kind.parse()?)?;
    let provider = load_provider(cfg.embeddings.as_deref())?;
    let (bundles, failed) = extract_corpus(&corpus, provider.as_ref(), cfg.feature_rate, cfg.workers);
    let skipped = warn_skipped(&failed);
    if bundles.is_empty() {
        bail!("none of the {} utterances could be analysed", corpus.len());
    }
    ensure_parent(out)?;
    save_features(out, &bundles)?;
    Ok(Report { outputs: vec![out.into()], metrics: json!({ "extracted": bundles.len(), "skipped": skipped }) })
}

fn train_classifier_cmd(a: &crate::TrainClassifier, cfg: &CliConfig, out: &Path) -> anyhow::Result<Report> {
    let mut all = Vec::new();
    for f in &a.features {
        all.extend(load_features(f)?);
    }
    let mut corpora: Vec<String> = Vec::new();
    for b in &all {
        if !corpora.contains(&b.corpus) {
            corpora.push(b.corpus.clone());
        }
    }
    let stats = corpora
        .iter()
        .map(|id| {
            let own: Vec<FeatureBundle> = all.iter().filter(|b| &b.corpus == id).cloned().collect();
            fit_normalizer(id, &own)
        })
        .collect::<mimic_core::Result<Vec<NormStats>>>()?;
    let normed = normalize_by_corpus(&all, &stats, cfg.norm)?;
    let split = |s: Split| -> Vec<FeatureBundle> { normed.iter().filter(|b| b.split == s).cloned().collect() };
    let (train, dev, test) = (split(Split::Train), split(Split::Dev), split(Split::Test));
    info!(norm = cfg.norm.name(), train = train.len(), dev = dev.len(), test = test.len(), "training classifier");

    let outcome = train_classifier(StyleClassifier::new(cfg.classifier.clone())?, &train, &dev, &cfg.train)?;
    fs::create_dir_all(out.join(NORM_DIR)).with_context(|| format!("creating {}", out.display()))?;
    let ckpt = out.join(CLASSIFIER_FILE);
    outcome.model.save(&ckpt)?;
    write_history(&out.join(HISTORY_FILE), &outcome.history)?;
    let mut outputs = vec![ckpt, out.join(HISTORY_FILE)];
    for st in &stats {
        let p = out.join(NORM_DIR).join(format!("{}.json", safe_file_name(&st.corpus_id)));
        st.save(&p)?;
        outputs.push(p);
    }

    let mut metrics = serde_json::Map::new();
    metrics.insert("norm".into(), json!(cfg.norm.name()));
    metrics.insert("best_epoch".into(), json!(outcome.best_epoch));
    metrics.insert("epochs_run".into(), json!(outcome.history.len()));
    for (name, set) in [("train", &train), ("dev", &dev), ("test", &test)] {
        if set.iter().any(|b| b.style.is_some()) {
            let m = evaluate(&outcome.model, set, &outcome.weights)?;
            info!(set = name, weighted = m.weighted_acc, unweighted = m.unweighted_acc, "accuracy");
            metrics.insert(name.into(), serde_json::to_value(&m)?);
        }
    }
    Ok(Report { outputs, metrics: metrics.into() })
}

fn adapt_bn_cmd(a: &crate::AdaptBn, cfg: &CliConfig, out: &Path) -> anyhow::Result<Report> {
    let model = StyleClassifier::load(&a.model)?;
    let target = load_features(&a.features)?;
    let target: Vec<FeatureBundle> = if cfg.norm == NormMode::None {
        target
    } else {
        let st = match &a.stats {
            Some(p) => NormStats::load(p)?,
            None => self_stats(&target)?,
        };
        target.iter().map(|b| b.normalized(&st, cfg.norm)).collect()
    };
    let adapted = adapt_bn(&model, &target)?;
    ensure_parent(out)?;
    adapted.save(out)?;
    Ok(Report { outputs: vec![out.into()], metrics: json!({ "target_utterances": target.len(), "norm": cfg.norm.name() }) })
}

fn label_corpus_cmd(a: &crate::LabelCorpus, cfg: &CliConfig, out: &Path) -> anyhow::Result<Report> {
    let model = StyleClassifier::load(&a.model)?;
    let corpus = load_manifest(&a.manifest, a.kind.parse()?)?;
    let provider = load_provider(cfg.embeddings.as_deref())?;
    let report = match (&a.stats, cfg.norm) {
        (Some(p), mode) => label_corpus(&model, &corpus, provider.as_ref(), Some(&NormStats::load(p)?), mode, cfg.feature_rate)?,
        (None, NormMode::None) => label_corpus(&model, &corpus, provider.as_ref(), None, NormMode::None, cfg.feature_rate)?,
        (None, mode) => {
            let (bundles, failed) = extract_corpus(&corpus, provider.as_ref(), cfg.feature_rate, cfg.workers);
            let st = self_stats(&bundles)?;
            let normed: Vec<FeatureBundle> = bundles.iter().map(|b| b.normalized(&st, mode)).collect();
            LabelReport {
                records: label_bundles(&model, &normed)?,
                skipped: failed.into_iter().map(|(id, e)| (id, e.to_string())).collect(),
            }
        }
    };
    let skipped = warn_skipped(&report.skipped);
    ensure_parent(out)?;
    write_embeddings(out, &report.records)?;
    let mut by_style: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &report.records {
        *by_style.entry(r.argmax_label.name()).or_default() += 1;
    }
    Ok(Report {
        outputs: vec![out.into()],
        metrics: json!({ "labelled": report.records.len(), "argmax_counts": by_style, "skipped": skipped }),
    })
}

fn corpus_speakers(corpus: &Corpus) -> Vec<String> {
    let set: BTreeSet<&str> = corpus.utterances.iter().map(|u| u.speaker.as_str()).collect();
    set.into_iter().map(str::to_owned).collect()
}

fn train_models(examples: &[TtsExample], p: &ProsodyConfig, ac: &AcousticConfig, cfg: &CliConfig) -> anyhow::Result<mimic_core::tts_engine::TtsTrainOutcome> {
    Ok(train_tts(ProsodyModel::new(p.clone())?, AcousticModel::new(ac.clone())?, examples, &cfg.tts)?)
}

fn neural_vocoder_for(waves: &[Waveform], cfg: &CliConfig) -> anyhow::Result<(Vocoder, Vec<f64>)> {
    let data = waves.iter().map(VocoderExample::from_wave).collect::<mimic_core::Result<Vec<_>>>()?;
    let (v, history) = train_neural_vocoder(&data, cfg.neural_vocoder.clone())?;
    Ok((Vocoder::Neural(Box::new(v)), history))
}

fn train_tts_cmd(a: &crate::TrainTts, cfg: &CliConfig, out: &Path) -> anyhow::Result<Report> {
    let corpus = load_manifest(&a.manifest, a.kind.parse()?)?;
    let embeddings: HashMap<String, StyleEmbedding> =
        read_embeddings(&a.embeddings)?.into_iter().map(|r: EmbeddingRecord| (r.id, r.embedding)).collect();
    let (examples, failed) = build_examples(&corpus, &embeddings, Lexicon::builtin(), cfg.workers)?;
    let skipped = warn_skipped(&failed);
    if examples.is_empty() {
        bail!("no usable training utterances");
    }
    let speakers = corpus_speakers(&corpus);
    let pc = ProsodyConfig { speakers: speakers.clone(), ..cfg.prosody.clone() };
    let ac = AcousticConfig { speakers: speakers.clone(), ..cfg.acoustic.clone() };
    info!(examples = examples.len(), speakers = speakers.len(), "training prosody and acoustic models");
    let outcome = train_models(&examples, &pc, &ac, cfg)?;
    let mut engine = TtsEngine::new(outcome.prosody, outcome.acoustic);
    let mut vocoder_loss = None;
    if cfg.vocoder == Some(VocoderKind::Neural) {
        info!("training the neural vocoder");
        let waves = corpus.utterances.iter().map(|u| Waveform::read_wav(&u.audio)).collect::<mimic_core::Result<Vec<_>>>()?;
        let (v, h) = neural_vocoder_for(&waves, cfg)?;
        engine.vocoder = v;
        vocoder_loss = h.last().copied();
    }
    let mut pipeline = Pipeline::new(engine);
    if let Some(c) = &a.classifier {
        let stats = a.stats.as_deref().map(NormStats::load).transpose()?;
        if stats.is_none() && cfg.norm != NormMode::None {
            warn!("no --stats given; queries will not be normalized");
        }
        let mut ex = StyleExtractor::new(StyleClassifier::load(c)?, stats, cfg.norm);
        ex.rate = cfg.feature_rate;
        if let Some(e) = &cfg.embeddings {
            ex = ex.with_embeddings(e)?;
        }
        pipeline.extractor = Some(ex);
    }
    if a.baseline {
        info!("training the style-free baseline");
        let b = train_models(
            &examples,
            &ProsodyConfig { zero_style: true, ..pc.clone() },
            &AcousticConfig { zero_style: true, ..ac.clone() },
            cfg,
        )?;
        pipeline.baseline = Some(TtsEngine::new(b.prosody, b.acoustic));
    }
    pipeline.save(out)?;
    fs::write(out.join(HISTORY_FILE), tts_history_csv(&outcome.history)).with_context(|| format!("writing {}", out.display()))?;
    let last = outcome.history.last();
    Ok(Report {
        outputs: vec![out.into()],
        metrics: json!({
            "examples": examples.len(),
            "skipped": skipped,
            "speakers": speakers,
            "prosody_loss": last.and_then(|r| r.prosody_loss),
            "acoustic_loss": last.and_then(|r| r.acoustic_loss),
            "vocoder_loss": vocoder_loss,
            "has_classifier": pipeline.extractor.is_some(),
            "has_baseline": pipeline.baseline.is_some(),
        }),
    })
}

fn train_synthetic(a: &crate::TrainSynthetic, cfg: &CliConfig, out: &Path) -> anyhow::Result<Report> {
    let mut sc = SyntheticPipelineConfig::standard(a.per_class.unwrap_or(cfg.synthetic.per_class), cfg.seed);
    sc.corpus.dev_fraction = cfg.synthetic.dev_fraction;
    sc.corpus.test_fraction = cfg.synthetic.test_fraction;
    sc.corpus.keyword_prob = cfg.synthetic.keyword_prob;
    sc.norm_mode = cfg.norm;
    sc.baseline = a.baseline;
    info!(per_class = sc.corpus.per_class, "training on the synthetic corpus");
    let mut trained = train_synthetic_pipeline(&sc)?;
    if cfg.vocoder == Some(VocoderKind::Neural) {
        info!("training the neural vocoder");
        let corpus = generate_synthetic_corpus(&sc.corpus)?;
        trained.pipeline.engine.vocoder = neural_vocoder_for(&corpus.waves, cfg)?.0;
    }
    trained.pipeline.save(out)?;
    fs::write(out.join(HISTORY_FILE), tts_history_csv(&trained.history)).with_context(|| format!("writing {}", out.display()))?;
    let last = trained.history.last();
    Ok(Report {
        outputs: vec![out.into()],
        metrics: json!({
            "recipe": sc,
            "prosody_loss": last.and_then(|r| r.prosody_loss),
            "acoustic_loss": last.and_then(|r| r.acoustic_loss),
        }),
    })
}

fn wave_metrics(wave: &Waveform, embedding: &StyleEmbedding) -> anyhow::Result<serde_json::Value> {
    Ok(json!({
        "embedding": embedding.as_slice(),
        "argmax_style": embedding.argmax().name(),
        "samples": wave.len(),
        "rate": wave.rate(),
        "seconds": wave.duration_secs(),
        "mean_voiced_f0": voiced_mean(wave)?,
    }))
}

fn synthesize(a: &crate::Synthesize, cfg: &CliConfig, out: &Path) -> anyhow::Result<Report> {
    let pipeline = Pipeline::load(&a.model, cfg.vocoder)?;
    let (wave, embedding) = if a.baseline {
        let s = pipeline.synthesize_baseline(&a.text, a.speaker.as_deref())?;
        (s.wave, StyleEmbedding([1.0 / 6.0; 6]))
    } else {
        let e = match (&a.style, &a.mix, &a.embedding) {
            (Some(s), _, _) => make_style_embedding(s)?,
            (_, Some(m), _) => mix_style_embedding(&parse_style_weights(m)?)?,
            (_, _, Some(e)) => parse_embedding(e)?,
            _ => bail!("one of --style, --mix, --embedding or --baseline is required"),
        };
        let req = SynthesisRequest { speaker: a.speaker.clone(), ..SynthesisRequest::with_embedding(&a.text, e) };
        let r = pipeline.synthesize(&req)?;
        (r.synthesis.wave, r.embedding)
    };
    ensure_parent(out)?;
    wave.write_wav(out)?;
    Ok(Report { outputs: vec![out.into()], metrics: wave_metrics(&wave, &embedding)? })
}

fn respond(a: &crate::Respond, cfg: &CliConfig, out: &Path) -> anyhow::Result<Report> {
    let pipeline = Pipeline::load(&a.model, cfg.vocoder)?;
    let query = Waveform::read_wav(&a.query)?;
    let r = pipeline.respond(&query, &a.query_text, &a.text, a.speaker.as_deref())?;
    ensure_parent(out)?;
    r.wave().write_wav(out)?;
    Ok(Report { outputs: vec![out.into()], metrics: wave_metrics(r.wave(), &r.embedding)? })
}

/// Alternates neutral and non-neutral styled conditions over the stock texts.
fn preference_plans(n: usize) -> Vec<PreferencePlan> {
    let others: Vec<StyleLabel> = StyleLabel::ALL.into_iter().filter(|&s| s != StyleLabel::Neutral).collect();
    (0..n)
        .map(|i| {
            let text = NEUTRAL_TEXTS[i % NEUTRAL_TEXTS.len()].to_string();
            if i % 2 == 0 {
                PreferencePlan { text, styled: Condition::MultiStyleNeutral, embedding: one_hot_embedding(StyleLabel::Neutral) }
            } else {
                let s = others[(i / 2) % others.len()];
                PreferencePlan { text, styled: Condition::MultiStyleOther, embedding: one_hot_embedding(s) }
            }
        })
        .collect()
}

fn build_abx_cmd(a: &crate::BuildAbx, cfg: &CliConfig, out: &Path) -> anyhow::Result<Report> {
    if out.join(ABX_FILE).exists() {
        bail!("{} already holds a stimulus pool", out.display());
    }
    let pipeline = Pipeline::load(&a.model, cfg.vocoder)?;
    let styles = parse_styles(&a.styles)?;
    let mut media = MediaWriter::new(out, cfg.seed)?;
    let abx = build_abx_pool(&pipeline, &mut media, &styles, &NEUTRAL_TEXTS, a.per_style, cfg.seed)?;
    let preference = if a.preference > 0 {
        build_preference_pool(&pipeline, &mut media, &preference_plans(a.preference), cfg.seed)?
    } else {
        Vec::new()
    };
    let query = match &a.queries {
        Some(m) => {
            let corpus = load_manifest(m, CorpusKind::Tts)?;
            let inputs = corpus
                .utterances
                .iter()
                .enumerate()
                .map(|(i, u)| {
                    Ok(QueryInput {
                        audio: Waveform::read_wav(&u.audio)?,
                        transcript: u.text.clone(),
                        response_text: NEUTRAL_TEXTS[i % NEUTRAL_TEXTS.len()].to_string(),
                    })
                })
                .collect::<mimic_core::Result<Vec<_>>>()?;
            build_query_pool(&pipeline, &mut media, &inputs)?
        }
        None => Vec::new(),
    };
    let summary = write_pool(out, &abx, &preference, &query)?;
    Ok(Report {
        outputs: vec![out.into()],
        metrics: json!({
            "abx": summary.abx,
            "preference": summary.preference,
            "query_match": summary.query_match,
            "media_files": summary.media_files,
        }),
    })
}

fn f0_stats(a: &crate::F0Stats, out: &Path) -> anyhow::Result<Report> {
    let mut groups: BTreeMap<StyleLabel, Vec<Waveform>> = BTreeMap::new();
    if let Some(m) = &a.manifest {
        let corpus = load_manifest(m, a.kind.parse()?)?;
        for u in &corpus.utterances {
            if let Some(s) = u.style {
                groups.entry(s).or_default().push(Waveform::read_wav(&u.audio)?);
            }
        }
    } else if let Some(pool) = &a.pool {
        let items: Vec<AbxItem> = read_jsonl(&pool.join(ABX_FILE))?;
        let mut files: BTreeMap<String, StyleLabel> = BTreeMap::new();
        for it in &items {
            files.insert(it.audio_a.clone(), it.style_a);
            files.insert(it.audio_b.clone(), it.style_b);
            files.insert(it.audio_x.clone(), it.ref_style);
        }
        for (f, s) in files {
            groups.entry(s).or_default().push(Waveform::read_wav(&pool.join(MEDIA_DIR).join(f))?);
        }
    }
    if groups.is_empty() {
        bail!("no labelled audio found");
    }
    let table = f0_statistics(&groups)?;
    println!("{}", f0_text(&table));
    ensure_parent(out)?;
    fs::write(out, f0_csv(&table)).with_context(|| format!("writing {}", out.display()))?;
    Ok(Report { outputs: vec![out.into()], metrics: serde_json::to_value(&table)? })
}

/// Service settings: config section, then `MIMIC_*` environment.
pub fn service_config(cfg: &CliConfig) -> anyhow::Result<ServiceConfig> {
    Ok(cfg.service.clone().with_env(std::env::vars())?)
}

fn serve(a: &crate::Serve, cfg: &CliConfig, out: &Path) -> anyhow::Result<Report> {
    let mut sc = service_config(cfg)?;
    if let Some(h) = &a.host {
        sc.host = h.clone();
    }
    if let Some(p) = a.port {
        sc.port = p;
    }
    if let Some(m) = &a.model_dir {
        sc.model_dir = Some(m.clone());
    }
    if let Some(p) = &a.pool_dir {
        sc.pool_dir = p.clone();
    }
    if cfg.vocoder.is_some() {
        sc.vocoder = cfg.vocoder;
    }
    sc.data_dir = out.to_path_buf();
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().context("starting the async runtime")?;
    runtime.block_on(mimic_service::serve(sc.clone()))?;
    Ok(Report { outputs: vec![sc.data_dir.join(mimic_service::store::ANSWERS_FILE)], metrics: json!({ "service": sc }) })
}

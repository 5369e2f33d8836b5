use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use mimic_core::corpus::{generate_synthetic_corpus, StyleLabel, SyntheticConfig};
use mimic_core::evalkit::stimuli::{build_abx_pool, build_preference_pool, build_query_pool, write_pool, MediaWriter, QueryInput};
use mimic_core::evalkit::{score_abx, AbxAnswer, Condition, PreferencePlan};
use mimic_core::pipeline::{make_style_embedding, train_synthetic_pipeline, SyntheticPipelineConfig};
use mimic_service::store::{AnswerRecord, Store, ANSWERS_FILE};
use mimic_service::{router, AppState, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Fixture {
    _dir: tempfile::TempDir,
    models: PathBuf,
    pool: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = SyntheticPipelineConfig::tiny(5);
        cfg.baseline = true;
        let p = train_synthetic_pipeline(&cfg).unwrap().pipeline;
        let models = dir.path().join("models");
        p.save(&models).unwrap();
        let pool = dir.path().join("pool");
        let mut media = MediaWriter::new(&pool, 1).unwrap();
        let texts = ["the meeting is at ten", "please open the door"];
        let abx = build_abx_pool(&p, &mut media, &StyleLabel::ALL, &texts, 2, 9).unwrap();
        let plans = vec![
            PreferencePlan { text: texts[0].into(), styled: Condition::MultiStyleNeutral, embedding: make_style_embedding("neutral").unwrap() },
            PreferencePlan { text: texts[1].into(), styled: Condition::MultiStyleOther, embedding: make_style_embedding("happy").unwrap() },
        ];
        let pref = build_preference_pool(&p, &mut media, &plans, 2).unwrap();
        let q = generate_synthetic_corpus(&SyntheticConfig::new(&[StyleLabel::Happy, StyleLabel::Sad], 1, 77)).unwrap();
        let queries: Vec<QueryInput> = q
            .corpus
            .utterances
            .iter()
            .zip(&q.waves)
            .map(|(u, w)| QueryInput { audio: w.clone(), transcript: u.text.clone(), response_text: "the book is in the car".into() })
            .collect();
        let qm = build_query_pool(&p, &mut media, &queries).unwrap();
        write_pool(&pool, &abx, &pref, &qm).unwrap();
        Fixture { _dir: dir, models, pool }
    })
}

struct App {
    state: Arc<AppState>,
    _data: tempfile::TempDir,
}

fn app(with_models: bool) -> App {
    let f = fixture();
    let data = tempfile::tempdir().unwrap();
    let config = ServiceConfig {
        model_dir: with_models.then(|| f.models.clone()),
        pool_dir: f.pool.clone(),
        data_dir: data.path().to_path_buf(),
        ..Default::default()
    };
    App { state: AppState::from_config(config).unwrap(), _data: data }
}

impl App {
    async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, axum::http::HeaderMap, Vec<u8>) {
        let req = Request::builder().method(method).uri(uri);
        let req = match body {
            Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())).unwrap(),
            None => req.body(Body::empty()).unwrap(),
        };
        let resp = router(self.state.clone()).oneshot(req).await.unwrap();
        let status = resp.status();
        let headers = resp.headers().clone();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, headers, bytes)
    }

    async fn json(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let (s, _, b) = self.call(method, uri, body).await;
        (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
    }

    fn log_lines(&self) -> usize {
        std::fs::read_to_string(self.state.config.data_dir.join(ANSWERS_FILE)).unwrap_or_default().lines().count()
    }
}

fn embedding_header(h: &axum::http::HeaderMap) -> Vec<f64> {
    serde_json::from_str(h.get("x-style-embedding").unwrap().to_str().unwrap()).unwrap()
}

#[tokio::test]
async fn synthesize_named_and_explicit() {
    let a = app(true);
    let (s, h, wav) = a.call("POST", "/api/synthesize", Some(json!({"text": "hello there", "style": {"named": "happy"}}))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(h["content-type"], "audio/wav");
    assert_eq!(embedding_header(&h), [0.01, 0.01, 0.01, 0.95, 0.01, 0.01]);
    let w = mimic_core::Waveform::from_wav_bytes(&wav).unwrap();
    assert_eq!(w.rate(), 24_000);
    let (_, _, again) = a.call("POST", "/api/synthesize", Some(json!({"text": "hello there", "style": {"named": "happy"}}))).await;
    assert_eq!(wav, again);

    let one_hot = json!({"text": "hello", "style": {"embedding": [1, 0, 0, 0, 0, 0]}});
    assert_eq!(a.call("POST", "/api/synthesize", Some(one_hot)).await.0, StatusCode::OK);
}

#[tokio::test]
async fn synthesize_rejections() {
    let a = app(true);
    let cases = [
        (json!({"text": "hello", "style": {"embedding": [0.8, 0, 0, 0, 0, 0]}}), StatusCode::BAD_REQUEST),
        (json!({"text": "hello", "style": {"named": "happy", "query_id": "query-000"}}), StatusCode::BAD_REQUEST),
        (json!({"text": "hello", "style": {}}), StatusCode::BAD_REQUEST),
        (json!({"text": "hello", "style": {"named": "excited"}}), StatusCode::BAD_REQUEST),
        (json!({"text": "  ", "style": {"named": "happy"}}), StatusCode::UNPROCESSABLE_ENTITY),
        (json!({"text": "hello", "style": {"named": "sad"}, "speaker": "ghost"}), StatusCode::BAD_REQUEST),
        (json!({"style": {"named": "sad"}}), StatusCode::BAD_REQUEST),
    ];
    for (body, want) in cases {
        let (got, v) = a.json("POST", "/api/synthesize", Some(body.clone())).await;
        assert_eq!(got, want, "{body} -> {v}");
    }
    let none = app(false);
    let (s, _) = none.json("POST", "/api/synthesize", Some(json!({"text": "hello", "style": {"named": "happy"}}))).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
}

#[tokio::test]
async fn synthesize_from_pool_query() {
    let a = app(true);
    let (s, h, _) = a.call("POST", "/api/synthesize", Some(json!({"text": "okay", "style": {"query_id": "query-000"}}))).await;
    assert_eq!(s, StatusCode::OK);
    let item = &a.state.pool.query_match[0];
    let got = embedding_header(&h);
    for (g, w) in got.iter().zip(item.embedding.0) {
        assert!((g - w).abs() < 1e-12);
    }
}

#[tokio::test]
async fn abx_session_serves_fifteen_blind_items_then_gone() {
    let a = app(false);
    let (s, v) = a.json("GET", "/api/test/abx/session", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["total"], 15);
    let sid = v["session_id"].as_str().unwrap().to_string();
    let mut served = Vec::new();
    for k in 0..15 {
        let (s, _, raw) = a.call("GET", &format!("/api/test/abx/{sid}/next"), None).await;
        assert_eq!(s, StatusCode::OK);
        let text = String::from_utf8(raw).unwrap();
        assert!(!text.contains("correct") && !text.contains("ref_style"));
        for st in StyleLabel::ALL {
            assert!(!text.contains(st.name()), "{text}");
        }
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["index"], k);
        let item = v["item_id"].as_str().unwrap().to_string();
        let url = v["stimuli"]["x"].as_str().unwrap().to_string();
        assert_eq!(a.call("GET", &url, None).await.0, StatusCode::OK);
        let (s, _) = a.json("POST", &format!("/api/test/abx/{sid}/answer"), Some(json!({"item_id": item, "choice": "A"}))).await;
        assert_eq!(s, StatusCode::OK);
        served.push(item);
    }
    let want: Vec<String> = a.state.pool.abx.iter().map(|i| i.id.clone()).collect();
    assert_eq!(served, want);
    assert_eq!(a.json("GET", &format!("/api/test/abx/{sid}/next"), None).await.0, StatusCode::GONE);
    let again = json!({"item_id": want[0], "choice": "B"});
    assert_eq!(a.json("POST", &format!("/api/test/abx/{sid}/answer"), Some(again)).await.0, StatusCode::GONE);
    assert_eq!(a.log_lines(), 15);
}

#[tokio::test]
async fn answer_errors_leave_log_unchanged() {
    let a = app(false);
    let (_, v) = a.json("POST", "/api/test/abx/session", None).await;
    let sid = v["session_id"].as_str().unwrap();
    let item = a.state.pool.abx[3].id.clone();
    let url = format!("/api/test/abx/{sid}/answer");
    assert_eq!(a.json("POST", &url, Some(json!({"item_id": item, "choice": "B"}))).await.0, StatusCode::OK);
    assert_eq!(a.json("POST", &url, Some(json!({"item_id": item, "choice": "A"}))).await.0, StatusCode::CONFLICT);
    assert_eq!(a.json("POST", &url, Some(json!({"item_id": "nope", "choice": "A"}))).await.0, StatusCode::NOT_FOUND);
    let other = a.state.pool.abx[0].id.clone();
    assert_eq!(a.json("POST", &url, Some(json!({"item_id": other, "choice": "C"}))).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(a.json("POST", "/api/test/abx/unknown/answer", Some(json!({"item_id": other, "choice": "A"}))).await.0, StatusCode::NOT_FOUND);
    assert_eq!(a.json("GET", "/api/test/abx/unknown/next", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(a.json("GET", &format!("/api/test/preference/{sid}/next"), None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(a.json("GET", "/api/test/mushra/session", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(a.log_lines(), 1);
}

#[tokio::test]
async fn results_match_rescoring_of_the_raw_log() {
    let a = app(false);
    for listener in 0..22 {
        let (_, v) = a.json("GET", "/api/test/abx/session", None).await;
        let sid = v["session_id"].as_str().unwrap().to_string();
        for (k, item) in a.state.pool.abx.clone().iter().enumerate() {
            let choice = if (listener + k) % 5 == 0 { "B" } else { "A" };
            let body = json!({"item_id": item.id, "choice": choice});
            assert_eq!(a.json("POST", &format!("/api/test/abx/{sid}/answer"), Some(body)).await.0, StatusCode::OK);
        }
    }
    let (s, r) = a.json("GET", "/api/results/abx", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(r["answers"], 330);
    assert_eq!(r["sessions"], 22);
    assert_eq!(r["score"]["total"], 330);
    let log: Vec<AnswerRecord> = mimic_core::evalkit::read_jsonl(&a.state.config.data_dir.join(ANSWERS_FILE)).unwrap();
    let answers: Vec<AbxAnswer> = log
        .iter()
        .map(|r| AbxAnswer { session_id: r.session_id.clone(), item_id: r.item_id.clone(), choice: r.choice.parse().unwrap(), timestamp: r.timestamp })
        .collect();
    let direct = score_abx(&answers, &a.state.pool.abx).unwrap();
    assert_eq!(r["score"], serde_json::to_value(&direct).unwrap());
    let brute = log.iter().filter(|r| a.state.pool.abx.iter().any(|i| i.id == r.item_id && format!("{:?}", i.correct) == r.choice)).count();
    assert_eq!(direct.correct, brute);
    let (_, empty) = a.json("GET", "/api/results/preference", None).await;
    assert_eq!(empty["answers"], 0);
    assert!(empty["score"].is_null());
}

#[tokio::test]
async fn preference_picks_are_logged_as_conditions() {
    let a = app(false);
    let (_, v) = a.json("GET", "/api/test/preference/session", None).await;
    let sid = v["session_id"].as_str().unwrap().to_string();
    let mut want = Vec::new();
    loop {
        let (s, v) = a.json("GET", &format!("/api/test/preference/{sid}/next"), None).await;
        if s == StatusCode::GONE {
            break;
        }
        assert!(v.get("baseline_is_a").is_none() && v.get("styled").is_none());
        let id = v["item_id"].as_str().unwrap().to_string();
        let item = a.state.pool.preference.iter().find(|i| i.id == id).unwrap().clone();
        let pick = if item.baseline_is_a { "A" } else { "B" };
        want.push(Condition::Baseline);
        a.json("POST", &format!("/api/test/preference/{sid}/answer"), Some(json!({"item_id": id, "choice": pick}))).await;
    }
    let (_, r) = a.json("GET", "/api/results/preference", None).await;
    assert_eq!(r["score"]["counts"], json!([want.len(), 0, 0]));
    assert_eq!(r["score"]["percent"][0], 100.0);
}

#[tokio::test]
async fn query_match_flow() {
    let a = app(false);
    let (_, v) = a.json("GET", "/api/test/query_match/session", None).await;
    let sid = v["session_id"].as_str().unwrap().to_string();
    let (_, item) = a.json("GET", &format!("/api/test/query_match/{sid}/next"), None).await;
    assert!(item["stimuli"]["query"].as_str().unwrap().starts_with("/media/"));
    let id = item["item_id"].as_str().unwrap();
    let url = format!("/api/test/query_match/{sid}/answer");
    assert_eq!(a.json("POST", &url, Some(json!({"item_id": id, "choice": "meh"}))).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(a.json("POST", &url, Some(json!({"item_id": id, "choice": "good"}))).await.0, StatusCode::OK);
    let (_, r) = a.json("GET", "/api/results/query_match", None).await;
    assert_eq!(r["score"]["rate"], 100.0);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_answers_are_all_logged_whole() {
    let a = Arc::new(app(false));
    let mut sids = Vec::new();
    for _ in 0..8 {
        let (_, v) = a.json("GET", "/api/test/abx/session", None).await;
        sids.push(v["session_id"].as_str().unwrap().to_string());
    }
    let items: Vec<String> = a.state.pool.abx.iter().map(|i| i.id.clone()).collect();
    let mut handles = Vec::new();
    for sid in &sids {
        for item in &items {
            for dup in 0..2 {
                let (a, sid, item) = (a.clone(), sid.clone(), item.clone());
                handles.push(tokio::spawn(async move {
                    let choice = if dup == 0 { "A" } else { "B" };
                    a.json("POST", &format!("/api/test/abx/{sid}/answer"), Some(json!({"item_id": item, "choice": choice}))).await.0
                }));
            }
        }
    }
    let mut ok = 0;
    for h in handles {
        match h.await.unwrap() {
            StatusCode::OK => ok += 1,
            StatusCode::CONFLICT | StatusCode::GONE => {}
            other => panic!("unexpected {other}"),
        }
    }
    assert_eq!(ok, sids.len() * items.len());
    assert_eq!(a.log_lines(), ok);
    let log: Vec<AnswerRecord> = mimic_core::evalkit::read_jsonl(&a.state.config.data_dir.join(ANSWERS_FILE)).unwrap();
    assert_eq!(log.len(), ok);
    let store = Store::open(&a.state.config.data_dir).unwrap();
    for sid in &sids {
        assert_eq!(store.answered(sid), items.len());
    }
}

#[tokio::test]
async fn media_and_health() {
    let a = app(true);
    let (s, v) = a.json("GET", "/api/health", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["models_loaded"], true);
    assert_eq!(v["items"]["abx"], 15);
    assert_eq!(a.call("GET", "/media/..%2Fpipeline.json", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(a.call("GET", "/media/missing.wav", None).await.0, StatusCode::NOT_FOUND);
    let f = &a.state.pool.abx[0].audio_a;
    let (s, h, _) = a.call("GET", &format!("/media/{f}"), None).await;
    assert_eq!((s, &h["content-type"]), (StatusCode::OK, &"audio/wav".parse::<axum::http::HeaderValue>().unwrap()));
}

#[tokio::test]
async fn models_hot_reload() {
    let a = app(true);
    a.state.swap_pipeline(None);
    let body = json!({"text": "hello", "style": {"named": "happy"}});
    assert_eq!(a.call("POST", "/api/synthesize", Some(body.clone())).await.0, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(a.json("POST", "/api/models/reload", None).await.0, StatusCode::OK);
    assert_eq!(a.call("POST", "/api/synthesize", Some(body)).await.0, StatusCode::OK);
}

//! Router and handlers.

use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mimic_core::evalkit::{
    score_abx, score_preference, score_query_match, AbxAnswer, Choice, Condition, Judgment,
};
use mimic_core::pipeline::{Pipeline, SynthesisRequest};
use mimic_core::style_model::StyleEmbedding;
use mimic_core::Waveform;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::config::ServiceConfig;
use crate::pool::TestPool;
use crate::store::{Accept, Session, Store, TestKind};
use crate::ServiceError;

pub const EMBEDDING_HEADER: &str = "x-style-embedding";

pub struct AppState {
    pub config: ServiceConfig,
    pipeline: RwLock<Option<Arc<Pipeline>>>,
    pub pool: TestPool,
    store: Mutex<Store>,
}

impl AppState {
    pub fn new(config: ServiceConfig, pipeline: Option<Pipeline>, pool: TestPool, store: Store) -> Arc<Self> {
        Arc::new(Self { config, pipeline: RwLock::new(pipeline.map(Arc::new)), pool, store: Mutex::new(store) })
    }

    /// Loads the pool, opens the data directory and, when configured, the
    /// model bundle.
    pub fn from_config(config: ServiceConfig) -> Result<Arc<Self>, ServiceError> {
        let pool = TestPool::load(&config.pool_dir)?;
        let store = Store::open(&config.data_dir)?;
        let pipeline = match &config.model_dir {
            Some(dir) => Some(Pipeline::load(dir, config.vocoder)?),
            None => None,
        };
        Ok(Self::new(config, pipeline, pool, store))
    }

    pub fn pipeline(&self) -> Option<Arc<Pipeline>> {
        self.pipeline.read().expect("pipeline lock").clone()
    }

    /// Swaps in new models; requests already running keep the old ones.
    pub fn swap_pipeline(&self, p: Option<Pipeline>) {
        *self.pipeline.write().expect("pipeline lock") = p.map(Arc::new);
    }

    fn store(&self) -> std::sync::MutexGuard<'_, Store> {
        self.store.lock().unwrap_or_else(|e| e.into_inner())
    }
}

type Shared = Arc<AppState>;
type ApiResult<T> = Result<T, ServiceError>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/synthesize", post(synthesize))
        .route("/api/models/reload", post(reload))
        .route("/api/test/{kind}/session", get(create_session).post(create_session))
        .route("/api/test/{kind}/{sid}/next", get(next_item))
        .route("/api/test/{kind}/{sid}/answer", post(answer))
        .route("/api/results/{kind}", get(results))
        .route("/media/{file}", get(media))
        .with_state(state)
}

async fn health(State(st): State<Shared>) -> Json<Value> {
    Json(json!({
        "models_loaded": st.pipeline().is_some(),
        "items": {
            "abx": st.pool.abx.len(),
            "preference": st.pool.preference.len(),
            "query_match": st.pool.query_match.len(),
        },
    }))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct StyleBody {
    named: Option<String>,
    embedding: Option<Vec<f64>>,
    query_id: Option<String>,
}

#[derive(Debug, Deserialize)]
struct SynthesizeBody {
    text: String,
    #[serde(default)]
    style: StyleBody,
    speaker: Option<String>,
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(format!("body: {e}")))
}

fn media_url(file: &str) -> String {
    format!("/media/{file}")
}

fn build_request(st: &AppState, body: SynthesizeBody) -> ApiResult<SynthesisRequest> {
    if body.text.trim().is_empty() {
        return Err(ServiceError::Unprocessable("text is empty".into()));
    }
    let s = body.style;
    let n = [s.named.is_some(), s.embedding.is_some(), s.query_id.is_some()].iter().filter(|&&b| b).count();
    if n != 1 {
        return Err(ServiceError::BadRequest("style needs exactly one of named, embedding, query_id".into()));
    }
    let mut req = SynthesisRequest { text: body.text, speaker: body.speaker, ..Default::default() };
    if let Some(e) = s.embedding {
        req.embedding = Some(StyleEmbedding::from_slice(&e).map_err(|e| ServiceError::BadRequest(e.to_string()))?);
    } else if let Some(name) = s.named {
        mimic_core::pipeline::make_style_embedding(&name).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        req.named = Some(name);
    } else if let Some(qid) = s.query_id {
        let q = st.pool.query(&qid).ok_or_else(|| ServiceError::BadRequest(format!("unknown query `{qid}`")))?;
        let audio = Waveform::read_wav(&st.pool.media_dir.join(&q.query_audio))?;
        req.query = Some(mimic_core::pipeline::Query { audio, transcript: q.query_text.clone() });
    }
    Ok(req)
}

async fn synthesize(State(st): State<Shared>, body: Bytes) -> ApiResult<Response> {
    let body: SynthesizeBody = parse_json(&body)?;
    let req = build_request(&st, body)?;
    let pipeline = st.pipeline().ok_or_else(|| ServiceError::Unavailable("models not loaded".into()))?;
    let r = tokio::task::spawn_blocking(move || pipeline.synthesize(&req))
        .await
        .map_err(|e| ServiceError::Config(format!("synthesis task: {e}")))??;
    let wav = r.wave().to_wav_bytes()?;
    let header_value = serde_json::to_string(&r.embedding.0).expect("floats serialize");
    Ok((
        StatusCode::OK,
        [
            (header::CONTENT_TYPE, HeaderValue::from_static("audio/wav")),
            (header::HeaderName::from_static(EMBEDDING_HEADER), HeaderValue::from_str(&header_value).expect("ascii")),
        ],
        wav,
    )
        .into_response())
}

async fn reload(State(st): State<Shared>) -> ApiResult<Json<Value>> {
    let dir = st.config.model_dir.clone().ok_or_else(|| ServiceError::Unavailable("no model_dir configured".into()))?;
    let vocoder = st.config.vocoder;
    let p = tokio::task::spawn_blocking(move || Pipeline::load(&dir, vocoder))
        .await
        .map_err(|e| ServiceError::Config(format!("reload task: {e}")))??;
    st.swap_pipeline(Some(p));
    Ok(Json(json!({ "models_loaded": true })))
}

fn kind_of(s: &str) -> ApiResult<TestKind> {
    TestKind::parse(s).ok_or_else(|| ServiceError::NotFound(format!("test kind `{s}`")))
}

async fn create_session(State(st): State<Shared>, Path(kind): Path<String>) -> ApiResult<Json<Value>> {
    let kind = kind_of(&kind)?;
    let items = st.pool.item_ids(kind);
    if items.is_empty() {
        return Err(ServiceError::NotFound(format!("no {} items in the pool", kind.name())));
    }
    let s = st.store().create_session(kind, items)?;
    Ok(Json(json!({ "session_id": s.session_id, "test_kind": kind, "total": s.items.len() })))
}

fn session_for(store: &Store, kind: TestKind, sid: &str) -> ApiResult<Session> {
    match store.session(sid) {
        Some(s) if s.test_kind == kind => Ok(s.clone()),
        _ => Err(ServiceError::NotFound(format!("session {sid}"))),
    }
}

/// Listener-facing payload: audio URLs and texts, never styles or keys.
fn item_payload(pool: &TestPool, kind: TestKind, item_id: &str) -> ApiResult<Value> {
    let missing = || ServiceError::NotFound(format!("item {item_id}"));
    Ok(match kind {
        TestKind::Abx => {
            let it = pool.abx.iter().find(|i| i.id == item_id).ok_or_else(missing)?;
            json!({ "stimuli": { "a": media_url(&it.audio_a), "b": media_url(&it.audio_b), "x": media_url(&it.audio_x) } })
        }
        TestKind::Preference => {
            let it = pool.preference.iter().find(|i| i.id == item_id).ok_or_else(missing)?;
            json!({ "text": it.text, "stimuli": { "a": media_url(&it.audio_a), "b": media_url(&it.audio_b) } })
        }
        TestKind::QueryMatch => {
            let it = pool.query(item_id).ok_or_else(missing)?;
            json!({
                "query_text": it.query_text,
                "response_text": it.response_text,
                "stimuli": { "query": media_url(&it.query_audio), "response": media_url(&it.response_audio) },
            })
        }
    })
}

async fn next_item(State(st): State<Shared>, Path((kind, sid)): Path<(String, String)>) -> ApiResult<Json<Value>> {
    let kind = kind_of(&kind)?;
    let (session, next, answered) = {
        let store = st.store();
        let s = session_for(&store, kind, &sid)?;
        let next = store.next_item(&s).map(|(i, id)| (i, id.to_string()));
        let answered = store.answered(&sid);
        (s, next, answered)
    };
    let (index, item_id) = next.ok_or_else(|| ServiceError::Gone(format!("session {sid} is complete")))?;
    let mut payload = item_payload(&st.pool, kind, &item_id)?;
    let obj = payload.as_object_mut().expect("object");
    obj.insert("session_id".into(), json!(sid));
    obj.insert("item_id".into(), json!(item_id));
    obj.insert("index".into(), json!(index));
    obj.insert("answered".into(), json!(answered));
    obj.insert("total".into(), json!(session.items.len()));
    Ok(Json(payload))
}

#[derive(Debug, Deserialize)]
struct AnswerBody {
    item_id: String,
    choice: String,
}

/// The value written to the log for a listener's choice.
fn scored_choice(pool: &TestPool, kind: TestKind, item_id: &str, choice: &str) -> ApiResult<String> {
    let bad = |e: mimic_core::Error| ServiceError::BadRequest(e.to_string());
    Ok(match kind {
        TestKind::Abx => format!("{:?}", choice.parse::<Choice>().map_err(bad)?),
        TestKind::Preference => {
            let it = pool.preference.iter().find(|i| i.id == item_id).ok_or_else(|| ServiceError::NotFound(format!("item {item_id}")))?;
            it.condition_for(choice.parse::<Choice>().map_err(bad)?).name().to_string()
        }
        TestKind::QueryMatch => match choice.parse::<Judgment>().map_err(bad)? {
            Judgment::Good => "good".into(),
            Judgment::Bad => "bad".into(),
        },
    })
}

async fn answer(State(st): State<Shared>, Path((kind, sid)): Path<(String, String)>, body: Bytes) -> ApiResult<Json<Value>> {
    let kind = kind_of(&kind)?;
    let body: AnswerBody = parse_json(&body)?;
    let mut store = st.store();
    let session = session_for(&store, kind, &sid)?;
    if !session.items.contains(&body.item_id) {
        return Err(ServiceError::NotFound(format!("item {} in session {sid}", body.item_id)));
    }
    if store.next_item(&session).is_none() {
        return Err(ServiceError::Gone(format!("session {sid} is complete")));
    }
    let choice = scored_choice(&st.pool, kind, &body.item_id, &body.choice)?;
    let Accept::Recorded { answered, total } = store.record(&sid, &body.item_id, choice)?;
    Ok(Json(json!({ "accepted": true, "answered": answered, "total": total })))
}

async fn results(State(st): State<Shared>, Path(kind): Path<String>) -> ApiResult<Json<Value>> {
    let kind = kind_of(&kind)?;
    let log = st.store().read_log()?;
    Ok(Json(aggregate(&st.pool, kind, &log)?))
}

/// Scores every logged answer of `kind` with the evaluation toolkit.
pub fn aggregate(pool: &TestPool, kind: TestKind, log: &[crate::store::AnswerRecord]) -> ApiResult<Value> {
    let rows: Vec<_> = log.iter().filter(|r| r.kind == kind).collect();
    let sessions: std::collections::BTreeSet<&str> = rows.iter().map(|r| r.session_id.as_str()).collect();
    let bad = |e: mimic_core::Error| ServiceError::Config(format!("answer log: {e}"));
    let score = if rows.is_empty() {
        Value::Null
    } else {
        match kind {
            TestKind::Abx => {
                let answers = rows
                    .iter()
                    .map(|r| {
                        Ok(AbxAnswer {
                            session_id: r.session_id.clone(),
                            item_id: r.item_id.clone(),
                            choice: r.choice.parse().map_err(bad)?,
                            timestamp: r.timestamp,
                        })
                    })
                    .collect::<ApiResult<Vec<_>>>()?;
                serde_json::to_value(score_abx(&answers, &pool.abx)?).expect("score serializes")
            }
            TestKind::Preference => {
                let c = rows.iter().map(|r| r.choice.parse::<Condition>().map_err(bad)).collect::<ApiResult<Vec<_>>>()?;
                serde_json::to_value(score_preference(&c)?).expect("score serializes")
            }
            TestKind::QueryMatch => {
                let j = rows.iter().map(|r| r.choice.parse::<Judgment>().map_err(bad)).collect::<ApiResult<Vec<_>>>()?;
                serde_json::to_value(score_query_match(&j)?).expect("score serializes")
            }
        }
    };
    Ok(json!({ "kind": kind, "answers": rows.len(), "sessions": sessions.len(), "score": score }))
}

fn safe_name(file: &str) -> bool {
    !file.is_empty()
        && file.ends_with(".wav")
        && !file.starts_with('.')
        && file.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

async fn media(State(st): State<Shared>, Path(file): Path<String>) -> ApiResult<Response> {
    if !safe_name(&file) {
        return Err(ServiceError::NotFound(file));
    }
    let path = st.pool.media_dir.join(&file);
    let bytes = tokio::fs::read(&path).await.map_err(|_| ServiceError::NotFound(file))?;
    Ok(([(header::CONTENT_TYPE, "audio/wav")], bytes).into_response())
}

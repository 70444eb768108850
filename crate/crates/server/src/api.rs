//! Read-only HTTP API over an [`IndexStore`].

use std::collections::HashMap;
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::store::{published_version, IndexStore, TOP_DOCS, TOP_WORDS};

pub const VERSION_HEADER: &str = "x-store-version";

const INDEX_HTML: &str = include_str!("../ui/index.html");

/// Shared, swappable store. Readers clone the inner `Arc` and never block a swap
/// for longer than that clone.
#[derive(Clone)]
pub struct StoreHandle(Arc<RwLock<Arc<IndexStore>>>);

impl StoreHandle {
    pub fn new(store: IndexStore) -> Self {
        StoreHandle(Arc::new(RwLock::new(Arc::new(store))))
    }

    pub fn current(&self) -> Arc<IndexStore> {
        self.0.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Publish a fully loaded store.
    pub fn swap(&self, store: IndexStore) {
        *self.0.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(store);
    }
}

#[derive(Clone)]
struct AppState {
    store: StoreHandle,
    ui_dir: Option<PathBuf>,
}

struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn not_found(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::NOT_FOUND,
            code: "not_found",
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code: "bad_request",
            message: message.into(),
        }
    }
}

type Reply = std::result::Result<serde_json::Value, ApiError>;

fn finish(store: &IndexStore, reply: Reply) -> Response {
    let (status, body) = match reply {
        Ok(v) => (StatusCode::OK, v),
        Err(e) => (e.status, json!({ "code": e.code, "message": e.message })),
    };
    let bytes = serde_json::to_vec(&body).unwrap_or_default();
    let mut resp = (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response();
    if let Ok(v) = HeaderValue::from_str(store.version()) {
        resp.headers_mut().insert(VERSION_HEADER, v);
    }
    resp
}

fn to_value<T: Serialize>(v: &T) -> Reply {
    serde_json::to_value(v).map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        code: "internal",
        message: e.to_string(),
    })
}

type Params = HashMap<String, String>;

fn param(q: &Params, name: &str) -> std::result::Result<Option<usize>, ApiError> {
    match q.get(name) {
        None => Ok(None),
        Some(s) => s
            .parse()
            .map(Some)
            .map_err(|_| ApiError::bad_request(format!("{name} must be a non-negative integer, got '{s}'"))),
    }
}

fn topic_id(store: &IndexStore, raw: &str) -> std::result::Result<usize, ApiError> {
    let k: usize = raw.parse().map_err(|_| ApiError::bad_request(format!("topic id must be an integer, got '{raw}'")))?;
    if k >= store.manifest.num_topics {
        return Err(ApiError::not_found(format!("topic {k} does not exist")));
    }
    Ok(k)
}

fn slice_param(store: &IndexStore, q: &Params) -> std::result::Result<Option<usize>, ApiError> {
    let s = param(q, "slice")?;
    if let Some(t) = s {
        if t >= store.manifest.num_slices {
            return Err(ApiError::not_found(format!("slice {t} does not exist")));
        }
    }
    Ok(s)
}

fn page<T: Clone>(items: &[T], q: &Params, default_limit: usize) -> std::result::Result<(Vec<T>, usize), ApiError> {
    let offset = param(q, "offset")?.unwrap_or(0);
    let limit = param(q, "limit")?.unwrap_or(default_limit);
    let start = offset.min(items.len());
    let end = start.saturating_add(limit).min(items.len());
    Ok((items[start..end].to_vec(), items.len()))
}

async fn health(State(s): State<AppState>) -> Response {
    let store = s.store.current();
    let v = json!({ "status": "ok", "version": store.version() });
    finish(&store, Ok(v))
}

async fn slices(State(s): State<AppState>) -> Response {
    let store = s.store.current();
    finish(&store, to_value(&store.slices))
}

async fn topics(State(s): State<AppState>) -> Response {
    let store = s.store.current();
    finish(&store, to_value(&store.topics))
}

async fn topic(State(s): State<AppState>, UrlPath(k): UrlPath<String>) -> Response {
    let store = s.store.current();
    let reply = topic_id(&store, &k).and_then(|k| {
        let mut v = to_value(&store.topics[k])?;
        v["sentiment"] = match &store.sentiment {
            Some(sent) => to_value(&sent.topics[k].overall)?,
            None => serde_json::Value::Null,
        };
        Ok(v)
    });
    finish(&store, reply)
}

async fn topic_words(State(s): State<AppState>, UrlPath(k): UrlPath<String>, Query(q): Query<Params>) -> Response {
    let store = s.store.current();
    let reply = (|| {
        let k = topic_id(&store, &k)?;
        let slice = slice_param(&store, &q)?;
        let list = store
            .topic_words(k, slice)
            .ok_or_else(|| ApiError::not_found(format!("no word list for topic {k}")))?;
        let (words, total) = page(&list.words, &q, TOP_WORDS)?;
        Ok(json!({ "topic": k, "slice": slice, "total": total, "words": to_value(&words)? }))
    })();
    finish(&store, reply)
}

async fn topic_docs(State(s): State<AppState>, UrlPath(k): UrlPath<String>, Query(q): Query<Params>) -> Response {
    let store = s.store.current();
    let reply = (|| {
        let k = topic_id(&store, &k)?;
        let slice = slice_param(&store, &q)?;
        let list = store
            .topic_docs(k, slice)
            .ok_or_else(|| ApiError::not_found(format!("no document list for topic {k}")))?;
        let (docs, total) = page(&list.docs, &q, TOP_DOCS)?;
        Ok(json!({ "topic": k, "slice": slice, "total": total, "docs": to_value(&docs)? }))
    })();
    finish(&store, reply)
}

fn sentiment_of(store: &IndexStore) -> std::result::Result<&crate::store::SentimentIndex, ApiError> {
    store
        .sentiment
        .as_ref()
        .ok_or_else(|| ApiError::not_found("the store has no sentiment index"))
}

async fn topic_sentiment(State(s): State<AppState>, UrlPath(k): UrlPath<String>) -> Response {
    let store = s.store.current();
    let reply = topic_id(&store, &k).and_then(|k| to_value(&sentiment_of(&store)?.topics[k]));
    finish(&store, reply)
}

async fn doc(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    let store = s.store.current();
    let reply = match store.doc(&id) {
        Some(o) => to_value(o),
        None => Err(ApiError::not_found(format!("document {id} does not exist"))),
    };
    finish(&store, reply)
}

async fn doc_sentiment(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    let store = s.store.current();
    let reply = (|| {
        store.doc(&id).ok_or_else(|| ApiError::not_found(format!("document {id} does not exist")))?;
        let sent = sentiment_of(&store)?;
        let t = sent
            .docs
            .get(&id)
            .ok_or_else(|| ApiError::not_found(format!("document {id} has no sentiment")))?;
        to_value(t)
    })();
    finish(&store, reply)
}

async fn doc_sentences(State(s): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    let store = s.store.current();
    let reply = (|| {
        store.doc(&id).ok_or_else(|| ApiError::not_found(format!("document {id} does not exist")))?;
        let sent = sentiment_of(&store)?;
        let rows: Vec<_> = sent.sentences.iter().filter(|r| r.doc_id == id).collect();
        to_value(&rows)
    })();
    finish(&store, reply)
}

fn term_lookup(store: &IndexStore, term: &str) -> std::result::Result<usize, ApiError> {
    store
        .term_id(term)
        .ok_or_else(|| ApiError::not_found(format!("term '{term}' is not in the vocabulary")))
}

async fn word_topics(State(s): State<AppState>, UrlPath(term): UrlPath<String>) -> Response {
    let store = s.store.current();
    let reply = term_lookup(&store, &term).and_then(|w| {
        let ranks: Vec<_> = store.word_topics[w].iter().filter(|r| r.weight > 0.0).collect();
        Ok(json!({
            "term": term,
            "id": w,
            "count": store.terms[w].count,
            "topics": to_value(&ranks)?,
        }))
    });
    finish(&store, reply)
}

async fn word_sentiment(State(s): State<AppState>, UrlPath(term): UrlPath<String>) -> Response {
    let store = s.store.current();
    let reply = term_lookup(&store, &term).and_then(|w| to_value(&sentiment_of(&store)?.terms[w]));
    finish(&store, reply)
}

async fn embedding(State(s): State<AppState>, Query(q): Query<Params>) -> Response {
    let store = s.store.current();
    let reply = slice_param(&store, &q).and_then(|slice| match slice {
        None => to_value(&store.embedding),
        Some(t) => match store.embedding.iter().find(|e| e.slice == t) {
            Some(e) => to_value(e),
            None => Err(ApiError::not_found(format!("no embedding for slice {t}"))),
        },
    });
    finish(&store, reply)
}

async fn fallback(State(s): State<AppState>) -> Response {
    let store = s.store.current();
    finish(&store, Err(ApiError::not_found("no such endpoint")))
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js") | Some("mjs") => "text/javascript",
        Some("css") => "text/css",
        Some("json") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        _ => "application/octet-stream",
    }
}

async fn ui_file(state: &AppState, rel: &str) -> Response {
    let html = |body: Vec<u8>| ([(header::CONTENT_TYPE, "text/html; charset=utf-8")], body).into_response();
    let Some(root) = &state.ui_dir else {
        return html(INDEX_HTML.as_bytes().to_vec());
    };
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let rel_path = Path::new(rel);
    if rel_path.components().any(|c| !matches!(c, Component::Normal(_))) {
        return (StatusCode::NOT_FOUND, "not found").into_response();
    }
    let path = root.join(rel_path);
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(_) => (StatusCode::NOT_FOUND, "not found").into_response(),
    }
}

async fn ui_index(State(s): State<AppState>) -> Response {
    ui_file(&s, "").await
}

async fn ui_path(State(s): State<AppState>, UrlPath(rel): UrlPath<String>) -> Response {
    ui_file(&s, &rel).await
}

/// Router over `store`. Static UI files come from `ui_dir` when given, otherwise
/// a bundled placeholder page is served.
pub fn router(store: StoreHandle, ui_dir: Option<PathBuf>) -> Router {
    let state = AppState { store, ui_dir };
    Router::new()
        .route("/health", get(health))
        .route("/slices", get(slices))
        .route("/topics", get(topics))
        .route("/topics/{k}", get(topic))
        .route("/topics/{k}/words", get(topic_words))
        .route("/topics/{k}/docs", get(topic_docs))
        .route("/topics/{k}/sentiment", get(topic_sentiment))
        .route("/docs/{id}", get(doc))
        .route("/docs/{id}/sentiment", get(doc_sentiment))
        .route("/docs/{id}/sentences", get(doc_sentences))
        .route("/words/{term}/topics", get(word_topics))
        .route("/words/{term}/sentiment", get(word_sentiment))
        .route("/embedding", get(embedding))
        .route("/ui", get(ui_index))
        .route("/ui/", get(ui_index))
        .route("/ui/{*path}", get(ui_path))
        .fallback(fallback)
        .with_state(state)
}

/// Poll the published manifest and swap in new stores once they load cleanly.
pub async fn watch(handle: StoreHandle, dir: PathBuf, every: Duration) {
    let mut tick = tokio::time::interval(every);
    loop {
        tick.tick().await;
        let Some(v) = published_version(&dir) else { continue };
        if v == handle.current().version() {
            continue;
        }
        let d = dir.clone();
        match tokio::task::spawn_blocking(move || IndexStore::load(&d)).await {
            Ok(Ok(store)) => {
                log::info!("serving store version {}", store.version());
                handle.swap(store);
            }
            Ok(Err(e)) => log::warn!("keeping current store: {e}"),
            Err(e) => log::warn!("store reload task failed: {e}"),
        }
    }
}

pub struct ServeOptions {
    pub store_dir: PathBuf,
    pub bind: String,
    pub ui_dir: Option<PathBuf>,
    /// Reload interval; `None` disables reloading.
    pub poll: Option<Duration>,
}

/// Load the store and serve until ctrl-c.
pub async fn serve(opts: ServeOptions) -> Result<()> {
    let store = IndexStore::load(&opts.store_dir)?;
    let handle = StoreHandle::new(store);
    let listener = tokio::net::TcpListener::bind(&opts.bind)
        .await
        .map_err(|e| Error::io(&opts.bind, e))?;
    log::info!("listening on {}", opts.bind);
    if let Some(every) = opts.poll {
        tokio::spawn(watch(handle.clone(), opts.store_dir.clone(), every));
    }
    axum::serve(listener, router(handle, opts.ui_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::io(&opts.bind, e))
}

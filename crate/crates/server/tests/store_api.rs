use std::path::Path;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use serde_json::Value;
use tower::ServiceExt;

use trendweave_core::analytics::embed_model;
use trendweave_core::corpus::Vocabulary;
use trendweave_core::dtm::{fit, DtmConfig, DtmModel};
use trendweave_core::sentiment::{aggregate, score_records, Lexicon, SentimentReport};
use trendweave_core::synthetic::{generate, Synthetic, SyntheticSpec};
use trendweave_server::store::{TOP_DOCS, TOP_WORDS};
use trendweave_server::{router, BuildInputs, Error, IndexStore, StoreHandle, VERSION_HEADER};

struct Fixture {
    syn: Synthetic,
    vocab: Vocabulary,
    model: DtmModel,
    sentiment: SentimentReport,
}

fn fixture(docs_per_slice: usize, seed: u64) -> Fixture {
    let spec = SyntheticSpec {
        num_slices: 3,
        docs_per_slice,
        num_terms: 80,
        num_topics: 3,
        doc_length: 40,
        seed,
        ..SyntheticSpec::default()
    };
    let syn = generate(&spec).unwrap();
    let vocab = Vocabulary::from_parts(syn.terms.clone(), vec![1; 80]).unwrap();
    let mut cfg = DtmConfig::new(3);
    cfg.max_iter = 3;
    let (model, _) = fit(&syn.corpus, 80, &cfg).unwrap();
    let scores = score_records(&syn.records, &Lexicon::bundled());
    let sentiment = aggregate(&model, &syn.corpus, scores).unwrap();
    Fixture {
        syn,
        vocab,
        model,
        sentiment,
    }
}

fn build(f: &Fixture) -> IndexStore {
    let embedding = embed_model(&f.model).unwrap();
    IndexStore::build(&BuildInputs {
        model: &f.model,
        corpus: &f.syn.corpus,
        vocab: &f.vocab,
        records: &f.syn.records,
        sentiment: Some(&f.sentiment),
        embedding: &embedding,
    })
    .unwrap()
}

async fn get(app: &axum::Router, uri: &str) -> (StatusCode, String, Value) {
    let resp = app
        .clone()
        .oneshot(Request::builder().uri(uri).body(Body::empty()).unwrap())
        .await
        .unwrap();
    let status = resp.status();
    let version = resp
        .headers()
        .get(VERSION_HEADER)
        .map(|v| v.to_str().unwrap().to_string())
        .unwrap_or_default();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let body = serde_json::from_slice(&bytes).unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, version, body)
}

#[test]
fn small_fixture_has_full_integrity() {
    let f = fixture(4, 1);
    let store = build(&f);
    assert_eq!(store.opinions.len(), 12);
    for list in &store.topic_docs {
        assert!(list.docs.len() <= TOP_DOCS);
        for d in &list.docs {
            assert!(store.doc(&d.doc_id).is_some());
        }
        assert!(list.docs.windows(2).all(|p| p[0].membership >= p[1].membership));
    }
    for list in &store.topic_words {
        assert_eq!(list.words.len(), TOP_WORDS);
        assert!(list.words.iter().all(|w| w.term_id < store.terms.len()));
    }
    assert!(store.validate().is_ok());
}

#[test]
fn document_lists_truncate_to_twenty() {
    let f = fixture(30, 2);
    let store = build(&f);
    assert!(store.topic_docs.iter().all(|l| l.docs.len() == TOP_DOCS));
}

#[test]
fn missing_opinion_is_named() {
    let f = fixture(4, 3);
    let records: Vec<_> = f.syn.records.iter().filter(|r| r.id != "s1-d0002").cloned().collect();
    let embedding = embed_model(&f.model).unwrap();
    let err = IndexStore::build(&BuildInputs {
        model: &f.model,
        corpus: &f.syn.corpus,
        vocab: &f.vocab,
        records: &records,
        sentiment: None,
        embedding: &embedding,
    })
    .unwrap_err();
    assert!(matches!(err, Error::Dangling(_)));
    assert!(err.to_string().contains("s1-d0002"), "{err}");
}

#[test]
fn save_load_round_trip_and_stable_bytes() {
    let f = fixture(4, 4);
    let store = build(&f);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    store.save(a.path()).unwrap();
    build(&f).save(b.path()).unwrap();
    let loaded = IndexStore::load(a.path()).unwrap();
    assert_eq!(loaded, store);
    assert_eq!(dir_bytes(a.path()), dir_bytes(b.path()));
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for e in walk(dir) {
        out.push((e.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&e).unwrap()));
    }
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap().flatten() {
        if e.path().is_dir() {
            out.extend(walk(&e.path()));
        } else {
            out.push(e.path());
        }
    }
    out
}

#[test]
fn load_rejects_tampering_and_other_versions() {
    let f = fixture(4, 5);
    let store = build(&f);
    let dir = tempfile::tempdir().unwrap();
    store.save(dir.path()).unwrap();
    let seg = dir.path().join(&store.manifest.segments).join("terms.json");
    let text = std::fs::read_to_string(&seg).unwrap();
    std::fs::write(&seg, text.replacen("w0001", "w9999", 1)).unwrap();
    assert!(matches!(IndexStore::load(dir.path()), Err(Error::Mismatch(_))));

    store.save(dir.path()).unwrap();
    let mpath = dir.path().join("manifest.json");
    let mut m: Value = serde_json::from_str(&std::fs::read_to_string(&mpath).unwrap()).unwrap();
    m["api_version"] = 99.into();
    std::fs::write(&mpath, m.to_string()).unwrap();
    assert!(matches!(IndexStore::load(dir.path()), Err(Error::Version { found: 99, .. })));
}

#[test]
fn republishing_keeps_previous_segments_only() {
    let dir = tempfile::tempdir().unwrap();
    let stores: Vec<_> = (10..13).map(|s| build(&fixture(4, s))).collect();
    for s in &stores {
        s.save(dir.path()).unwrap();
    }
    let mut segs: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .flatten()
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("segments-"))
        .collect();
    segs.sort();
    let mut want = vec![stores[1].manifest.segments.clone(), stores[2].manifest.segments.clone()];
    want.sort();
    assert_eq!(segs, want);
    assert_eq!(IndexStore::load(dir.path()).unwrap().version(), stores[2].version());
}

#[tokio::test]
async fn endpoints_follow_the_contract() {
    let f = fixture(10, 6);
    let store = build(&f);
    let version = store.version().to_string();
    let app = router(StoreHandle::new(store), None);

    let (s, v, body) = get(&app, "/topics").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v, version);
    let topics = body.as_array().unwrap();
    assert_eq!(topics.len(), 3);
    for t in topics {
        assert!(t["id"].is_u64() && t["top_words"].is_array() && t["proportion"].is_f64());
        assert_eq!(t["slice_proportions"].as_array().unwrap().len(), 3);
    }

    let (s, _, body) = get(&app, "/topics/2/docs?slice=1").await;
    assert_eq!(s, StatusCode::OK);
    let docs = body["docs"].as_array().unwrap();
    assert!(!docs.is_empty() && docs.len() <= 20);
    let m: Vec<f64> = docs.iter().map(|d| d["membership"].as_f64().unwrap()).collect();
    assert!(m.windows(2).all(|p| p[0] >= p[1]));
    for d in docs {
        let id = d["doc_id"].as_str().unwrap();
        assert!(id.starts_with("s1-"));
        let (s, _, doc) = get(&app, &format!("/docs/{id}")).await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(doc["topics"][2].as_f64().unwrap(), d["membership"].as_f64().unwrap());
    }

    let (_, _, page) = get(&app, "/topics/0/words?offset=5&limit=3").await;
    let (_, _, full) = get(&app, "/topics/0/words").await;
    assert_eq!(full["words"].as_array().unwrap().len(), 50);
    assert_eq!(page["words"].as_array().unwrap()[..], full["words"].as_array().unwrap()[5..8]);

    let (s, _, body) = get(&app, "/words/w0001/topics").await;
    assert_eq!(s, StatusCode::OK);
    let ranks = body["topics"].as_array().unwrap();
    assert_eq!(ranks.len(), 3);
    assert!(ranks.iter().all(|r| r["rank"].as_u64().unwrap() >= 1));

    let (s, _, body) = get(&app, "/topics/1/sentiment").await;
    assert_eq!(s, StatusCode::OK);
    let o = &body["overall"];
    let sum = o["pos"].as_f64().unwrap() + o["neg"].as_f64().unwrap() + o["neu"].as_f64().unwrap();
    assert!((sum - 1.0).abs() < 1e-9);

    for uri in ["/docs/s0-d0000/sentiment", "/docs/s0-d0000/sentences", "/words/w0003/sentiment", "/slices", "/health", "/embedding", "/embedding?slice=2", "/topics/1"] {
        let (s, v, _) = get(&app, uri).await;
        assert_eq!(s, StatusCode::OK, "{uri}");
        assert_eq!(v, version);
    }

    for (uri, code) in [
        ("/topics/7", StatusCode::NOT_FOUND),
        ("/topics/x/words", StatusCode::BAD_REQUEST),
        ("/topics/0/docs?slice=9", StatusCode::NOT_FOUND),
        ("/topics/0/docs?limit=-1", StatusCode::BAD_REQUEST),
        ("/docs/nope", StatusCode::NOT_FOUND),
        ("/words/absent/topics", StatusCode::NOT_FOUND),
        ("/no/such/path", StatusCode::NOT_FOUND),
    ] {
        let (s, v, body) = get(&app, uri).await;
        assert_eq!(s, code, "{uri}");
        assert_eq!(v, version);
        assert!(body["code"].is_string() && body["message"].is_string(), "{uri}");
    }

    let (s, _, body) = get(&app, "/ui/").await;
    assert_eq!(s, StatusCode::OK);
    assert!(body.as_str().unwrap().contains("<html"));
}

#[tokio::test]
async fn identical_queries_give_identical_bytes() {
    let f = fixture(6, 7);
    let app = router(StoreHandle::new(build(&f)), None);
    for uri in ["/topics", "/topics/1/docs?slice=0", "/words/w0002/topics", "/embedding"] {
        let a = get(&app, uri).await;
        let b = get(&app, uri).await;
        assert_eq!(a.2.to_string(), b.2.to_string());
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn swap_is_atomic_for_readers() {
    let old = build(&fixture(4, 8));
    let new = build(&fixture(5, 9));
    let (v_old, v_new) = (old.version().to_string(), new.version().to_string());
    let docs_old = old.manifest.num_docs;
    let docs_new = new.manifest.num_docs;
    let handle = StoreHandle::new(old);
    let app = router(handle.clone(), None);
    let mut tasks = Vec::new();
    for _ in 0..8 {
        let app = app.clone();
        tasks.push(tokio::spawn(async move {
            let mut seen = Vec::new();
            for _ in 0..40 {
                let (_, v, body) = get(&app, "/topics/0/docs").await;
                let total = body["total"].as_u64().unwrap() as usize;
                seen.push((v, total));
                tokio::task::yield_now().await;
            }
            seen
        }));
    }
    tokio::time::sleep(std::time::Duration::from_millis(2)).await;
    handle.swap(new);
    for t in tasks {
        for (v, total) in t.await.unwrap() {
            // Version header and body always come from the same store.
            let expect = if v == v_old { docs_old.min(20) } else { docs_new.min(20) };
            assert!(v == v_old || v == v_new);
            assert_eq!(total, expect);
        }
    }
    assert_eq!(handle.current().version(), v_new);
}

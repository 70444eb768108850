//! Query indexes built from a fitted model and persisted as a directory of JSON
//! segments plus a manifest.
//!
//! Segments live in `segments-<version>/` where the version is a digest of their
//! bytes. The manifest is replaced by rename, so a reader sees either the old or
//! the new store, never a mix.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use trendweave_core::analytics::SliceEmbedding;
use trendweave_core::corpus::{RawRecord, SlicedCorpus, Vocabulary};
use trendweave_core::dtm::DtmModel;
use trendweave_core::lda::top_n;
use trendweave_core::sentiment::{pooled_mixture, Mixture, SentenceScore, SentimentReport, SentimentTriple};

use crate::error::{Error, Result};

/// Layout version of the store; a loader refuses any other.
pub const API_VERSION: u32 = 1;
pub const TOP_DOCS: usize = 20;
pub const TOP_WORDS: usize = 50;
/// Words shown in a topic summary.
pub const SUMMARY_WORDS: usize = 10;

const MANIFEST: &str = "manifest.json";
const SEGMENTS: [&str; 9] = [
    "opinions.json",
    "slices.json",
    "topics.json",
    "topic-words.json",
    "topic-docs.json",
    "terms.json",
    "word-topics.json",
    "sentiment.json",
    "embedding.json",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub api_version: u32,
    pub version: String,
    pub segments: String,
    pub num_topics: usize,
    pub num_slices: usize,
    pub num_docs: usize,
    pub num_terms: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Opinion {
    pub id: String,
    pub title: String,
    pub body: String,
    pub created_at: DateTime<Utc>,
    pub url: Option<String>,
    pub slice: usize,
    pub tokens: u64,
    /// `P(z | d)` for every topic.
    pub topics: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceInfo {
    pub index: usize,
    pub period_start: NaiveDate,
    pub period_end: NaiveDate,
    pub num_docs: usize,
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSummary {
    pub id: usize,
    pub top_words: Vec<String>,
    pub proportion: f64,
    /// `None` for slices without documents.
    pub slice_proportions: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordWeight {
    pub term_id: usize,
    pub term: String,
    pub weight: f64,
    pub sentiment: Option<SentimentTriple>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicWordList {
    pub topic: usize,
    /// `None` for the pooled list.
    pub slice: Option<usize>,
    pub words: Vec<WordWeight>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocMembership {
    pub doc_id: String,
    pub title: String,
    pub membership: f64,
    pub tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicDocList {
    pub topic: usize,
    pub slice: Option<usize>,
    pub docs: Vec<DocMembership>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermInfo {
    pub id: usize,
    pub term: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordRank {
    pub topic: usize,
    /// 1-based rank of the term within the pooled topic.
    pub rank: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentSeries {
    pub overall: SentimentTriple,
    pub slices: Vec<Option<SentimentTriple>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentIndex {
    pub sentences: Vec<SentenceScore>,
    pub docs: BTreeMap<String, SentimentTriple>,
    pub topics: Vec<SentimentSeries>,
    pub terms: Vec<SentimentSeries>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexStore {
    pub manifest: Manifest,
    pub opinions: Vec<Opinion>,
    pub slices: Vec<SliceInfo>,
    pub topics: Vec<TopicSummary>,
    pub topic_words: Vec<TopicWordList>,
    pub topic_docs: Vec<TopicDocList>,
    pub terms: Vec<TermInfo>,
    /// Per term id, its rank and weight in every topic.
    pub word_topics: Vec<Vec<WordRank>>,
    pub sentiment: Option<SentimentIndex>,
    pub embedding: Vec<SliceEmbedding>,
    doc_lookup: HashMap<String, usize>,
    term_lookup: HashMap<String, usize>,
}

pub struct BuildInputs<'a> {
    pub model: &'a DtmModel,
    pub corpus: &'a SlicedCorpus,
    pub vocab: &'a Vocabulary,
    pub records: &'a [RawRecord],
    pub sentiment: Option<&'a SentimentReport>,
    pub embedding: &'a [SliceEmbedding],
}

fn ranked_docs(opinions: &[Opinion], members: impl Iterator<Item = usize>, k: usize) -> Vec<DocMembership> {
    let mut idx: Vec<usize> = members.collect();
    idx.sort_by(|&a, &b| opinions[b].topics[k].total_cmp(&opinions[a].topics[k]).then(a.cmp(&b)));
    idx.truncate(TOP_DOCS);
    idx.into_iter()
        .map(|i| DocMembership {
            doc_id: opinions[i].id.clone(),
            title: opinions[i].title.clone(),
            membership: opinions[i].topics[k],
            tokens: opinions[i].tokens,
        })
        .collect()
}

impl IndexStore {
    pub fn build(inp: &BuildInputs) -> Result<Self> {
        let model = inp.model;
        let corpus = inp.corpus;
        let (k, nt, m) = (model.num_topics(), model.num_slices(), model.num_terms);
        if corpus.num_slices() != nt {
            return Err(Error::Mismatch(format!("model has {nt} slices, corpus has {}", corpus.num_slices())));
        }
        if inp.vocab.len() != m {
            return Err(Error::Mismatch(format!("model has {m} terms, vocabulary has {}", inp.vocab.len())));
        }
        let records: HashMap<&str, &RawRecord> = inp.records.iter().map(|r| (r.id.as_str(), r)).collect();

        let mut opinions = Vec::with_capacity(corpus.num_docs());
        for t in 0..nt {
            for (i, d) in corpus.slice_docs(t).iter().enumerate() {
                let r = records
                    .get(d.id.as_str())
                    .ok_or_else(|| Error::Dangling(format!("document {} has no opinion record", d.id)))?;
                opinions.push(Opinion {
                    id: d.id.clone(),
                    title: r.title.clone(),
                    body: r.body.clone(),
                    created_at: r.created_at,
                    url: r.url.clone(),
                    slice: t,
                    tokens: d.length(),
                    topics: model.doc_topic_dist(t, i)?,
                });
            }
        }

        let slices: Vec<SliceInfo> = corpus
            .slices
            .iter()
            .enumerate()
            .map(|(t, s)| SliceInfo {
                index: t,
                period_start: s.period_start,
                period_end: s.period_end,
                num_docs: s.len(),
                empty: s.is_empty(),
            })
            .collect();

        let pooled = pooled_mixture(model)?;
        let slice_mix: Vec<Option<Mixture>> = (0..nt)
            .map(|t| if corpus.slices[t].is_empty() { Ok(None) } else { Mixture::from_model(model, t).map(Some) })
            .collect::<trendweave_core::Result<_>>()?;
        let term = |w: usize| inp.vocab.term(w).unwrap_or_default().to_string();

        let term_sentiment = |slice: Option<usize>, w: usize| -> Option<SentimentTriple> {
            let rep = inp.sentiment?;
            match slice {
                None => rep.overall_terms.get(w).copied(),
                Some(t) => rep.slices.get(t)?.terms.get(w).copied(),
            }
        };

        let mut topics = Vec::with_capacity(k);
        let mut topic_words = Vec::new();
        let mut topic_docs = Vec::new();
        let mut word_topics = vec![Vec::with_capacity(k); m];
        for z in 0..k {
            let dist = &pooled.topic_word[z * m..(z + 1) * m];
            let ranked = top_n(dist, m);
            for (r, &(w, weight)) in ranked.iter().enumerate() {
                word_topics[w].push(WordRank {
                    topic: z,
                    rank: r + 1,
                    weight,
                });
            }
            let words = |slice: Option<usize>, list: &[(usize, f64)]| TopicWordList {
                topic: z,
                slice,
                words: list
                    .iter()
                    .map(|&(w, weight)| WordWeight {
                        term_id: w,
                        term: term(w),
                        weight,
                        sentiment: term_sentiment(slice, w),
                    })
                    .collect(),
            };
            topic_words.push(words(None, &ranked[..TOP_WORDS.min(m)]));
            for t in 0..nt {
                topic_words.push(words(Some(t), &model.top_words(t, z, TOP_WORDS)?));
            }

            topic_docs.push(TopicDocList {
                topic: z,
                slice: None,
                docs: ranked_docs(&opinions, 0..opinions.len(), z),
            });
            for t in 0..nt {
                topic_docs.push(TopicDocList {
                    topic: z,
                    slice: Some(t),
                    docs: ranked_docs(&opinions, corpus.slices[t].range(), z),
                });
            }

            topics.push(TopicSummary {
                id: z,
                top_words: ranked.iter().take(SUMMARY_WORDS).map(|&(w, _)| term(w)).collect(),
                proportion: pooled.p_z()[z],
                slice_proportions: slice_mix.iter().map(|mx| mx.as_ref().map(|mx| mx.p_z()[z])).collect(),
            });
        }

        let terms = (0..m)
            .map(|w| TermInfo {
                id: w,
                term: term(w),
                count: inp.vocab.frequency(w),
            })
            .collect();

        let sentiment = inp.sentiment.map(|rep| {
            let series = |overall: &[SentimentTriple], per_slice: &dyn Fn(usize) -> Option<SentimentTriple>, i| {
                SentimentSeries {
                    overall: overall[i],
                    slices: (0..nt).map(per_slice).collect(),
                }
            };
            let topics = (0..k)
                .map(|z| series(&rep.overall_topics, &|t| rep.slices[t].topics.get(z).copied(), z))
                .collect();
            let terms = (0..m)
                .map(|w| series(&rep.overall_terms, &|t| rep.slices[t].terms.get(w).copied(), w))
                .collect();
            SentimentIndex {
                sentences: rep.sentences.clone(),
                docs: rep.doc_map(),
                topics,
                terms,
            }
        });

        let manifest = Manifest {
            api_version: API_VERSION,
            version: String::new(),
            segments: String::new(),
            num_topics: k,
            num_slices: nt,
            num_docs: opinions.len(),
            num_terms: m,
        };
        let mut store = IndexStore {
            manifest,
            opinions,
            slices,
            topics,
            topic_words,
            topic_docs,
            terms,
            word_topics,
            sentiment,
            embedding: inp.embedding.to_vec(),
            doc_lookup: HashMap::new(),
            term_lookup: HashMap::new(),
        };
        let segments = store.segments()?;
        store.manifest.version = digest(&segments);
        store.manifest.segments = format!("segments-{}", store.manifest.version);
        store.index_lookups();
        store.validate()?;
        Ok(store)
    }

    fn index_lookups(&mut self) {
        self.doc_lookup = self.opinions.iter().enumerate().map(|(i, o)| (o.id.clone(), i)).collect();
        self.term_lookup = self.terms.iter().map(|t| (t.term.clone(), t.id)).collect();
    }

    /// Referential integrity and ordering checks.
    pub fn validate(&self) -> Result<()> {
        let mf = &self.manifest;
        let k = mf.num_topics;
        if self.opinions.len() != mf.num_docs || self.terms.len() != mf.num_terms || self.slices.len() != mf.num_slices {
            return Err(Error::Mismatch("segment sizes disagree with the manifest".into()));
        }
        if self.topics.len() != k || self.word_topics.len() != mf.num_terms {
            return Err(Error::Mismatch("topic segments disagree with the manifest".into()));
        }
        for (i, t) in self.terms.iter().enumerate() {
            if t.id != i {
                return Err(Error::Mismatch(format!("term {} stored at position {i}", t.id)));
            }
        }
        for list in &self.topic_words {
            if list.topic >= k {
                return Err(Error::Dangling(format!("topic {} in topic-word index", list.topic)));
            }
            for w in &list.words {
                match self.terms.get(w.term_id) {
                    Some(t) if t.term == w.term => {}
                    _ => return Err(Error::Dangling(format!("term id {} in topic-word index", w.term_id))),
                }
            }
        }
        for list in &self.topic_docs {
            if list.topic >= k {
                return Err(Error::Dangling(format!("topic {} in topic-document index", list.topic)));
            }
            for d in &list.docs {
                if !self.doc_lookup.contains_key(&d.doc_id) {
                    return Err(Error::Dangling(format!("document {} in topic-document index", d.doc_id)));
                }
            }
            if list.docs.windows(2).any(|p| p[0].membership < p[1].membership) {
                return Err(Error::Mismatch(format!("topic {} document list is not sorted", list.topic)));
            }
        }
        if let Some(s) = &self.sentiment {
            for id in s.docs.keys() {
                if !self.doc_lookup.contains_key(id) {
                    return Err(Error::Dangling(format!("document {id} in sentiment index")));
                }
            }
            if s.topics.len() != k || s.terms.len() != mf.num_terms {
                return Err(Error::Mismatch("sentiment index sizes disagree with the manifest".into()));
            }
        }
        for e in &self.embedding {
            if e.topics.len() != k || e.slice >= mf.num_slices {
                return Err(Error::Mismatch(format!("embedding of slice {} does not match the model", e.slice)));
            }
        }
        Ok(())
    }

    pub fn version(&self) -> &str {
        &self.manifest.version
    }

    pub fn doc(&self, id: &str) -> Option<&Opinion> {
        self.doc_lookup.get(id).map(|&i| &self.opinions[i])
    }

    pub fn term_id(&self, term: &str) -> Option<usize> {
        self.term_lookup.get(term).copied()
    }

    pub fn topic_words(&self, topic: usize, slice: Option<usize>) -> Option<&TopicWordList> {
        self.topic_words.iter().find(|l| l.topic == topic && l.slice == slice)
    }

    pub fn topic_docs(&self, topic: usize, slice: Option<usize>) -> Option<&TopicDocList> {
        self.topic_docs.iter().find(|l| l.topic == topic && l.slice == slice)
    }

    fn segments(&self) -> Result<Vec<(&'static str, Vec<u8>)>> {
        fn enc<T: Serialize + ?Sized>(name: &'static str, v: &T) -> Result<(&'static str, Vec<u8>)> {
            Ok((name, serde_json::to_vec_pretty(v).map_err(|e| Error::Json(name.into(), e))?))
        }
        // Same order as SEGMENTS.
        Ok(vec![
            enc(SEGMENTS[0], &self.opinions)?,
            enc(SEGMENTS[1], &self.slices)?,
            enc(SEGMENTS[2], &self.topics)?,
            enc(SEGMENTS[3], &self.topic_words)?,
            enc(SEGMENTS[4], &self.topic_docs)?,
            enc(SEGMENTS[5], &self.terms)?,
            enc(SEGMENTS[6], &self.word_topics)?,
            enc(SEGMENTS[7], &self.sentiment)?,
            enc(SEGMENTS[8], &self.embedding)?,
        ])
    }

    /// Write the segments and publish them by replacing the manifest. Segment
    /// directories older than the previously published one are removed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let previous = read_manifest(&dir.join(MANIFEST)).ok().map(|m| m.segments);
        let target = dir.join(&self.manifest.segments);
        if !target.exists() {
            let tmp = dir.join(format!(".{}.tmp", self.manifest.segments));
            if tmp.exists() {
                fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
            }
            fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
            for (name, bytes) in self.segments()? {
                let p = tmp.join(name);
                fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
            }
            fs::rename(&tmp, &target).map_err(|e| Error::io(&target, e))?;
        }
        let bytes = serde_json::to_vec_pretty(&self.manifest).map_err(|e| Error::Json(MANIFEST.into(), e))?;
        let tmp = dir.join(".manifest.json.tmp");
        fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, dir.join(MANIFEST)).map_err(|e| Error::io(dir.join(MANIFEST), e))?;

        let keep = [Some(self.manifest.segments.clone()), previous];
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.flatten() {
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.starts_with("segments-") && !keep.iter().flatten().any(|k| *k == name) {
                let _ = fs::remove_dir_all(entry.path());
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = read_manifest(&dir.join(MANIFEST))?;
        if manifest.api_version != API_VERSION {
            return Err(Error::Version {
                found: manifest.api_version,
                expected: API_VERSION,
            });
        }
        let seg = dir.join(&manifest.segments);
        let mut raw = Vec::with_capacity(SEGMENTS.len());
        for name in SEGMENTS {
            let p = seg.join(name);
            raw.push((name, fs::read(&p).map_err(|e| Error::io(&p, e))?));
        }
        let found = digest(&raw);
        if found != manifest.version {
            return Err(Error::Mismatch(format!(
                "segments hash to {found} but the manifest says {}",
                manifest.version
            )));
        }
        fn dec<T: for<'de> Deserialize<'de>>(seg: &(&str, Vec<u8>)) -> Result<T> {
            serde_json::from_slice(&seg.1).map_err(|e| Error::Json(seg.0.into(), e))
        }
        let mut store = IndexStore {
            opinions: dec(&raw[0])?,
            slices: dec(&raw[1])?,
            topics: dec(&raw[2])?,
            topic_words: dec(&raw[3])?,
            topic_docs: dec(&raw[4])?,
            terms: dec(&raw[5])?,
            word_topics: dec(&raw[6])?,
            sentiment: dec(&raw[7])?,
            embedding: dec(&raw[8])?,
            manifest,
            doc_lookup: HashMap::new(),
            term_lookup: HashMap::new(),
        };
        store.index_lookups();
        store.validate()?;
        Ok(store)
    }
}

/// Version stamp currently published in `dir`, if any.
pub fn published_version(dir: &Path) -> Option<String> {
    read_manifest(&dir.join(MANIFEST)).ok().map(|m| m.version)
}

fn read_manifest(path: &Path) -> Result<Manifest> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Json(path.display().to_string(), e))
}

fn digest(segments: &[(&str, Vec<u8>)]) -> String {
    let mut h = Sha256::new();
    for (name, bytes) in segments {
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    hex::encode(&h.finalize()[..8])
}

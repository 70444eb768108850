//! JSON and text views of fitted models, written next to the model files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{SlicedCorpus, Vocabulary};
use crate::dtm::DtmModel;
use crate::error::{Error, Result};
use crate::lda::{DocVariational, LdaModel};

/// Words kept per topic in `topic-word.json`.
pub const TOPIC_WORDS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedTerm {
    pub term: String,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicWords {
    pub topic: usize,
    /// Absent for a static model.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub slice: Option<usize>,
    pub words: Vec<WeightedTerm>,
}

fn named(vocab: &Vocabulary, top: Vec<(usize, f64)>) -> Result<Vec<WeightedTerm>> {
    top.into_iter()
        .map(|(w, prob)| {
            let term = vocab.term(w).ok_or(Error::UnknownTerm(w))?;
            Ok(WeightedTerm {
                term: term.to_string(),
                prob,
            })
        })
        .collect()
}

pub fn lda_topic_words(model: &LdaModel, vocab: &Vocabulary, n: usize) -> Result<Vec<TopicWords>> {
    (0..model.num_topics)
        .map(|k| {
            Ok(TopicWords {
                topic: k,
                slice: None,
                words: named(vocab, model.top_words(k, n))?,
            })
        })
        .collect()
}

/// Top words of every topic at every slice, slice-major.
pub fn dtm_topic_words(model: &DtmModel, vocab: &Vocabulary, n: usize) -> Result<Vec<TopicWords>> {
    let mut out = Vec::new();
    for t in 0..model.num_slices() {
        for k in 0..model.num_topics() {
            out.push(TopicWords {
                topic: k,
                slice: Some(t),
                words: named(vocab, model.top_words(t, k, n)?)?,
            });
        }
    }
    Ok(out)
}

/// Normalised `gamma` keyed by document id.
pub fn lda_doc_topics(corpus: &SlicedCorpus, docs: &[DocVariational]) -> Result<BTreeMap<String, Vec<f64>>> {
    if docs.len() != corpus.num_docs() {
        return Err(Error::Dimension("variational state does not match the corpus".into()));
    }
    Ok(corpus
        .documents
        .iter()
        .zip(docs)
        .map(|(d, v)| {
            let s: f64 = v.gamma.iter().sum();
            (d.id.clone(), v.gamma.iter().map(|g| g / s).collect())
        })
        .collect())
}

pub fn dtm_doc_topics(model: &DtmModel, corpus: &SlicedCorpus) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut out = BTreeMap::new();
    for t in 0..model.num_slices() {
        for (i, d) in corpus.slice_docs(t).iter().enumerate() {
            out.insert(d.id.clone(), model.doc_topic_dist(t, i)?);
        }
    }
    Ok(out)
}

/// `term<TAB>count` per line, most frequent first, ties by term.
pub fn frequency_text(vocab: &Vocabulary) -> String {
    let mut rows: Vec<(&str, u64)> = vocab.terms().iter().map(String::as_str).zip(vocab.frequencies().iter().copied()).collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    rows.iter().map(|(t, c)| format!("{t}\t{c}\n")).collect()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

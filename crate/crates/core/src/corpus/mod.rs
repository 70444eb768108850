//! Opinion records in, sliced bag-of-words corpus out.

mod io;
pub mod stopwords;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Duration, NaiveDate, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub use io::{export, import, DOCTERM_FILE, SLICES_FILE, VOCAB_FILE};

/// Sparse term counts of one document, sorted by term id.
pub type TermCounts = Vec<(usize, u32)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: String,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub title: String,
    pub body: String,
    #[serde(default)]
    pub url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordError {
    /// Position of the record in the input array.
    pub index: usize,
    pub id: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Ingested {
    pub records: Vec<RawRecord>,
    pub errors: Vec<RecordError>,
}

/// Source of raw JSON records, e.g. a scraper or a message queue consumer.
pub trait FetchHook {
    fn fetch(&mut self) -> Result<Vec<Value>>;
}

/// Read a JSON array of records from a file.
pub fn ingest_file(path: &Path) -> Result<Ingested> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let values: Vec<Value> = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    Ok(ingest_values(values))
}

pub fn ingest_hook(hook: &mut dyn FetchHook) -> Result<Ingested> {
    Ok(ingest_values(hook.fetch()?))
}

/// Validate raw JSON records. Records keep their input order; bad records become
/// error entries. A missing `id` defaults to the record's position.
pub fn ingest_values(values: impl IntoIterator<Item = Value>) -> Ingested {
    let mut out = Ingested::default();
    let mut seen = HashSet::new();
    for (index, value) in values.into_iter().enumerate() {
        let id = match value.get("id") {
            Some(Value::String(s)) => Some(s.clone()),
            Some(Value::Number(n)) => Some(n.to_string()),
            _ => None,
        };
        match parse_record(index, &value, id.clone()) {
            Ok(rec) => {
                if !seen.insert(rec.id.clone()) {
                    out.errors.push(RecordError {
                        index,
                        id: Some(rec.id),
                        message: "duplicate record id".into(),
                    });
                } else {
                    out.records.push(rec);
                }
            }
            Err(message) => out.errors.push(RecordError { index, id, message }),
        }
    }
    out
}

fn parse_record(index: usize, value: &Value, id: Option<String>) -> std::result::Result<RawRecord, String> {
    let obj = value.as_object().ok_or("record is not a JSON object")?;
    let body = obj
        .get("body")
        .and_then(Value::as_str)
        .ok_or("missing body")?
        .to_string();
    let created = obj
        .get("created_at")
        .and_then(Value::as_str)
        .ok_or("missing created_at")?;
    let created_at = parse_timestamp(created).ok_or_else(|| format!("unparseable created_at {created:?}"))?;
    let text = |key: &str| obj.get(key).and_then(Value::as_str).map(str::to_string);
    Ok(RawRecord {
        id: id.unwrap_or_else(|| index.to_string()),
        created_at,
        title: text("title").unwrap_or_default(),
        body,
        url: text("url"),
    })
}

/// Accepts RFC 3339, `YYYY-MM-DD HH:MM:SS` (UTC) and bare dates.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(Utc.from_utc_datetime(&t));
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|t| Utc.from_utc_datetime(&t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    #[default]
    English,
    Spanish,
}

impl FromStr for Language {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "english" | "en" => Ok(Language::English),
            "spanish" | "es" => Ok(Language::Spanish),
            other => Err(Error::Invalid(format!("unknown language {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationConfig {
    pub language: Language,
    /// Replaces the bundled list for `language` when set.
    pub stopwords: Option<Vec<String>>,
    pub min_frequency: u64,
    pub min_length: usize,
    pub lowercase: bool,
    pub strip_punctuation: bool,
    pub strip_accents: bool,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig {
            language: Language::English,
            stopwords: None,
            min_frequency: 2,
            min_length: 3,
            lowercase: true,
            strip_punctuation: true,
            strip_accents: true,
        }
    }
}

impl NormalizationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_frequency < 1 {
            return Err(Error::Invalid("min frequency must be at least 1".into()));
        }
        if self.min_length < 1 {
            return Err(Error::Invalid("min length must be at least 1".into()));
        }
        Ok(())
    }

    /// Load a stopword file (one word per line, `#` comments).
    pub fn with_stopword_file(mut self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.stopwords = Some(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string)
                .collect(),
        );
        Ok(self)
    }

    fn stopword_set(&self) -> HashSet<String> {
        let words: Vec<String> = match &self.stopwords {
            Some(list) => list.clone(),
            None => match self.language {
                Language::English => stopwords::ENGLISH.iter().map(|s| s.to_string()).collect(),
                Language::Spanish => stopwords::SPANISH.iter().map(|s| s.to_string()).collect(),
            },
        };
        // compare stopwords in the same normal form as tokens
        words.iter().map(|w| self.fold(w)).collect()
    }

    fn fold(&self, word: &str) -> String {
        let mut s = if self.lowercase { word.to_lowercase() } else { word.to_string() };
        if self.strip_accents {
            s = s.nfd().filter(|c| !is_combining_mark(*c)).collect();
        }
        s
    }

    /// Split text into candidate tokens before stopword and length filtering.
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let folded = self.fold(text);
        if self.strip_punctuation {
            folded
                .split(|c: char| !c.is_alphanumeric())
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect()
        } else {
            folded.split_whitespace().map(str::to_string).collect()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    terms: Vec<String>,
    frequencies: Vec<u64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_parts(terms: Vec<String>, frequencies: Vec<u64>) -> Result<Self> {
        if terms.len() != frequencies.len() {
            return Err(Error::Dimension(format!(
                "{} terms but {} frequencies",
                terms.len(),
                frequencies.len()
            )));
        }
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate term {t:?}")));
            }
        }
        Ok(Vocabulary {
            terms,
            frequencies,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn id(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, id: usize) -> Option<&str> {
        self.terms.get(id).map(String::as_str)
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn frequency(&self, id: usize) -> u64 {
        self.frequencies.get(id).copied().unwrap_or(0)
    }

    pub fn frequencies(&self) -> &[u64] {
        &self.frequencies
    }

    /// Append new terms, returning their ids. Existing ids are unchanged.
    pub fn push_terms(&mut self, new: impl IntoIterator<Item = (String, u64)>) -> Result<Vec<usize>> {
        let mut ids = Vec::new();
        for (term, freq) in new {
            if self.index.contains_key(&term) {
                return Err(Error::Invalid(format!("term {term:?} already in vocabulary")));
            }
            let id = self.terms.len();
            self.index.insert(term.clone(), id);
            self.terms.push(term);
            self.frequencies.push(freq);
            ids.push(id);
        }
        Ok(ids)
    }

    pub(crate) fn add_frequency(&mut self, id: usize, n: u64) {
        self.frequencies[id] += n;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizedDoc {
    pub id: String,
    pub created_at: DateTime<Utc>,
    /// Term ids in text order.
    pub tokens: Vec<usize>,
}

impl TokenizedDoc {
    pub fn counts(&self) -> TermCounts {
        let mut map = BTreeMap::new();
        for &t in &self.tokens {
            *map.entry(t).or_insert(0u32) += 1;
        }
        map.into_iter().collect()
    }
}

/// Tokenize records, filter stopwords, short and rare terms, and build the vocabulary.
/// Term ids follow lexicographic order of the surviving terms.
pub fn normalize(records: &[RawRecord], cfg: &NormalizationConfig) -> Result<(Vocabulary, Vec<TokenizedDoc>)> {
    cfg.validate()?;
    let stop = cfg.stopword_set();
    let raw: Vec<Vec<String>> = records.iter().map(|r| candidate_tokens(r, cfg, &stop)).collect();

    let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
    for toks in &raw {
        for t in toks {
            *freq.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    let kept: Vec<(&str, u64)> = freq.into_iter().filter(|&(_, n)| n >= cfg.min_frequency).collect();
    let vocab = Vocabulary::from_parts(
        kept.iter().map(|(t, _)| t.to_string()).collect(),
        kept.iter().map(|&(_, n)| n).collect(),
    )?;

    let docs: Vec<TokenizedDoc> = records
        .iter()
        .zip(&raw)
        .map(|(r, toks)| TokenizedDoc {
            id: r.id.clone(),
            created_at: r.created_at,
            tokens: toks.iter().filter_map(|t| vocab.id(t)).collect(),
        })
        .collect();
    if docs.iter().all(|d| d.tokens.is_empty()) {
        return Err(Error::EmptyCorpus("every document is empty after filtering".into()));
    }
    Ok((vocab, docs))
}

/// Tokenize a new batch against an existing vocabulary. Known terms keep their ids
/// (frequencies grow); unseen terms that pass the filters within the batch are
/// appended. Returns the documents and the ids of the appended terms.
pub fn normalize_batch(
    records: &[RawRecord],
    cfg: &NormalizationConfig,
    vocab: &mut Vocabulary,
) -> Result<(Vec<TokenizedDoc>, Vec<usize>)> {
    cfg.validate()?;
    let stop = cfg.stopword_set();
    let raw: Vec<Vec<String>> = records.iter().map(|r| candidate_tokens(r, cfg, &stop)).collect();
    let mut unseen: BTreeMap<&str, u64> = BTreeMap::new();
    for t in raw.iter().flatten() {
        match vocab.id(t) {
            Some(id) => vocab.add_frequency(id, 1),
            None => *unseen.entry(t.as_str()).or_insert(0) += 1,
        }
    }
    let new_ids = vocab.push_terms(
        unseen
            .into_iter()
            .filter(|&(_, n)| n >= cfg.min_frequency)
            .map(|(t, n)| (t.to_string(), n)),
    )?;
    let docs = records
        .iter()
        .zip(&raw)
        .map(|(r, toks)| TokenizedDoc {
            id: r.id.clone(),
            created_at: r.created_at,
            tokens: toks.iter().filter_map(|t| vocab.id(t)).collect(),
        })
        .collect();
    Ok((docs, new_ids))
}

fn candidate_tokens(r: &RawRecord, cfg: &NormalizationConfig, stop: &HashSet<String>) -> Vec<String> {
    let mut text = String::with_capacity(r.title.len() + r.body.len() + 1);
    text.push_str(&r.title);
    text.push('\n');
    text.push_str(&r.body);
    cfg.tokenize(&text)
        .into_iter()
        .filter(|t| t.chars().count() >= cfg.min_length && !stop.contains(t))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Daily,
    Weekly,
    Monthly,
    Yearly,
}

impl FromStr for Granularity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "daily" => Ok(Granularity::Daily),
            "weekly" => Ok(Granularity::Weekly),
            "monthly" => Ok(Granularity::Monthly),
            "yearly" => Ok(Granularity::Yearly),
            other => Err(Error::Invalid(format!(
                "granularity must be one of daily|weekly|monthly|yearly, got {other:?}"
            ))),
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::Daily => "daily",
            Granularity::Weekly => "weekly",
            Granularity::Monthly => "monthly",
            Granularity::Yearly => "yearly",
        })
    }
}

impl Granularity {
    /// First day of the calendar period containing `date`. Weeks start on Monday.
    pub fn period_start(self, date: NaiveDate) -> NaiveDate {
        match self {
            Granularity::Daily => date,
            Granularity::Weekly => date - Duration::days(date.weekday().num_days_from_monday() as i64),
            Granularity::Monthly => NaiveDate::from_ymd_opt(date.year(), date.month(), 1).unwrap(),
            Granularity::Yearly => NaiveDate::from_ymd_opt(date.year(), 1, 1).unwrap(),
        }
    }

    /// First day of the period following the one that starts at `start`.
    pub fn next_period(self, start: NaiveDate) -> NaiveDate {
        match self {
            Granularity::Daily => start + Duration::days(1),
            Granularity::Weekly => start + Duration::days(7),
            Granularity::Monthly => {
                if start.month() == 12 {
                    NaiveDate::from_ymd_opt(start.year() + 1, 1, 1).unwrap()
                } else {
                    NaiveDate::from_ymd_opt(start.year(), start.month() + 1, 1).unwrap()
                }
            }
            Granularity::Yearly => NaiveDate::from_ymd_opt(start.year() + 1, 1, 1).unwrap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub timestamp: DateTime<Utc>,
    pub counts: TermCounts,
}

impl Document {
    pub fn length(&self) -> u64 {
        self.counts.iter().map(|&(_, c)| c as u64).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slice {
    /// Half-open document index range.
    pub start: usize,
    pub end: usize,
    /// First day of the calendar window (inclusive).
    pub period_start: NaiveDate,
    /// First day after the calendar window.
    pub period_end: NaiveDate,
    /// Set for calendar periods with no documents.
    pub empty: bool,
}

impl Slice {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }

    pub fn contains(&self, t: &DateTime<Utc>) -> bool {
        let d = t.date_naive();
        d >= self.period_start && d < self.period_end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlicedCorpus {
    pub documents: Vec<Document>,
    pub slices: Vec<Slice>,
    pub granularity: Granularity,
}

impl SlicedCorpus {
    pub fn num_slices(&self) -> usize {
        self.slices.len()
    }

    pub fn num_docs(&self) -> usize {
        self.documents.len()
    }

    pub fn slice_docs(&self, t: usize) -> &[Document] {
        &self.documents[self.slices[t].range()]
    }

    /// Word counts `n_tw` of slice `t` as a dense vector over `num_terms`.
    pub fn slice_word_counts(&self, t: usize, num_terms: usize) -> Vec<f64> {
        let mut counts = vec![0.0; num_terms];
        for d in self.slice_docs(t) {
            for &(w, c) in &d.counts {
                counts[w] += c as f64;
            }
        }
        counts
    }

    /// Largest term id referenced plus one.
    pub fn max_term_bound(&self) -> usize {
        self.documents
            .iter()
            .flat_map(|d| d.counts.iter().map(|&(w, _)| w + 1))
            .max()
            .unwrap_or(0)
    }

    pub fn doc_index(&self, id: &str) -> Option<usize> {
        self.documents.iter().position(|d| d.id == id)
    }

    /// Append a batch as a new last slice. The batch must fall inside the calendar
    /// period directly after the current last slice.
    pub fn push_batch(&mut self, mut docs: Vec<Document>) -> Result<()> {
        if docs.is_empty() {
            return Err(Error::EmptyCorpus("empty update batch".into()));
        }
        docs.sort_by(|a, b| a.timestamp.cmp(&b.timestamp));
        let last_end = self
            .slices
            .last()
            .map(|s| s.period_end)
            .ok_or_else(|| Error::Invalid("corpus has no slices".into()))?;
        let first = self.granularity.period_start(docs[0].timestamp.date_naive());
        let last = self.granularity.period_start(docs[docs.len() - 1].timestamp.date_naive());
        if first < last_end {
            return Err(Error::Invalid(format!(
                "batch starts {} which is not after the last slice (ends {})",
                docs[0].timestamp, last_end
            )));
        }
        if first != last {
            return Err(Error::Invalid("batch spans more than one calendar period".into()));
        }
        if first != last_end {
            return Err(Error::Invalid(format!(
                "batch period {first} does not directly follow the last slice (expected {last_end})"
            )));
        }
        let start = self.documents.len();
        self.documents.extend(docs);
        self.slices.push(Slice {
            start,
            end: self.documents.len(),
            period_start: first,
            period_end: self.granularity.next_period(first),
            empty: false,
        });
        Ok(())
    }
}

/// Partition documents into calendar-aligned slices, sorted by timestamp. Empty
/// periods between the first and last document are kept and flagged.
pub fn slice(docs: &[TokenizedDoc], granularity: Granularity) -> Result<SlicedCorpus> {
    if docs.is_empty() {
        return Err(Error::EmptyCorpus("cannot slice zero documents".into()));
    }
    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.sort_by(|&a, &b| docs[a].created_at.cmp(&docs[b].created_at));
    let documents: Vec<Document> = order
        .iter()
        .map(|&i| Document {
            id: docs[i].id.clone(),
            timestamp: docs[i].created_at,
            counts: docs[i].counts(),
        })
        .collect();

    let first = granularity.period_start(documents[0].timestamp.date_naive());
    let mut slices = Vec::new();
    let mut period = first;
    let mut cursor = 0;
    while cursor < documents.len() {
        let next = granularity.next_period(period);
        let start = cursor;
        while cursor < documents.len() && documents[cursor].timestamp.date_naive() < next {
            cursor += 1;
        }
        slices.push(Slice {
            start,
            end: cursor,
            period_start: period,
            period_end: next,
            empty: start == cursor,
        });
        period = next;
    }
    Ok(SlicedCorpus {
        documents,
        slices,
        granularity,
    })
}

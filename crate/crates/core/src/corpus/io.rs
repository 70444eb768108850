//! On-disk corpus: `corpus.vocab`, `corpus.ldac`, `corpus.slices.json`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use super::{Document, Granularity, Slice, SlicedCorpus, Vocabulary};
use crate::error::{Error, Result};

pub const VOCAB_FILE: &str = "corpus.vocab";
pub const DOCTERM_FILE: &str = "corpus.ldac";
pub const SLICES_FILE: &str = "corpus.slices.json";

#[derive(Serialize, Deserialize)]
struct SliceFile {
    granularity: Granularity,
    documents: Vec<DocStamp>,
    slices: Vec<SliceEntry>,
}

#[derive(Serialize, Deserialize)]
struct DocStamp {
    id: String,
    timestamp: DateTime<Utc>,
}

#[derive(Serialize, Deserialize)]
struct SliceEntry {
    start: usize,
    end: usize,
    period_start: NaiveDate,
    period_end: NaiveDate,
    empty: bool,
}

pub(crate) fn docterm_line(doc: &Document) -> String {
    let mut line = doc.counts.len().to_string();
    for &(w, c) in &doc.counts {
        let _ = write!(line, " {w}:{c}");
    }
    line
}

pub fn export(corpus: &SlicedCorpus, vocab: &Vocabulary, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut text = String::new();
    for (id, term) in vocab.terms().iter().enumerate() {
        let _ = writeln!(text, "{id}\t{term}\t{}", vocab.frequency(id));
    }
    write(&dir.join(VOCAB_FILE), text.as_bytes())?;

    let mut text = String::new();
    for d in &corpus.documents {
        text.push_str(&docterm_line(d));
        text.push('\n');
    }
    write(&dir.join(DOCTERM_FILE), text.as_bytes())?;

    let file = SliceFile {
        granularity: corpus.granularity,
        documents: corpus
            .documents
            .iter()
            .map(|d| DocStamp {
                id: d.id.clone(),
                timestamp: d.timestamp,
            })
            .collect(),
        slices: corpus
            .slices
            .iter()
            .map(|s| SliceEntry {
                start: s.start,
                end: s.end,
                period_start: s.period_start,
                period_end: s.period_end,
                empty: s.empty,
            })
            .collect(),
    };
    let path = dir.join(SLICES_FILE);
    let json = serde_json::to_vec_pretty(&file).map_err(|e| Error::json(&path, e))?;
    write(&path, &json)
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn import(dir: &Path) -> Result<(SlicedCorpus, Vocabulary)> {
    let vocab = read_vocab(&dir.join(VOCAB_FILE))?;
    let rows = read_docterm(&dir.join(DOCTERM_FILE), vocab.len())?;
    let path = dir.join(SLICES_FILE);
    let file: SliceFile = serde_json::from_str(&read(&path)?).map_err(|e| Error::json(&path, e))?;

    if file.documents.len() != rows.len() {
        return Err(Error::Format(format!(
            "{} lists {} documents but {} has {} rows",
            SLICES_FILE,
            file.documents.len(),
            DOCTERM_FILE,
            rows.len()
        )));
    }
    let documents: Vec<Document> = file
        .documents
        .into_iter()
        .zip(rows)
        .map(|(s, counts)| Document {
            id: s.id,
            timestamp: s.timestamp,
            counts,
        })
        .collect();
    let slices: Vec<Slice> = file
        .slices
        .into_iter()
        .map(|s| Slice {
            start: s.start,
            end: s.end,
            period_start: s.period_start,
            period_end: s.period_end,
            empty: s.empty,
        })
        .collect();
    let mut expected = 0;
    for s in &slices {
        if s.start != expected || s.end < s.start {
            return Err(Error::Format("slices do not partition the documents".into()));
        }
        expected = s.end;
    }
    if expected != documents.len() {
        return Err(Error::Format("slices do not cover every document".into()));
    }
    Ok((
        SlicedCorpus {
            documents,
            slices,
            granularity: file.granularity,
        },
        vocab,
    ))
}

fn read_vocab(path: &Path) -> Result<Vocabulary> {
    let text = read(path)?;
    let mut terms = Vec::new();
    let mut freqs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let bad = || Error::Format(format!("{}:{}: expected id<TAB>term<TAB>frequency", path.display(), lineno + 1));
        let mut parts = line.split('\t');
        let id: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let term = parts.next().ok_or_else(bad)?;
        let freq: u64 = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        if id != terms.len() {
            return Err(Error::Format(format!("{}: term ids must be dense and ordered", path.display())));
        }
        terms.push(term.to_string());
        freqs.push(freq);
    }
    Vocabulary::from_parts(terms, freqs)
}

fn read_docterm(path: &Path, num_terms: usize) -> Result<Vec<super::TermCounts>> {
    let text = read(path)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let bad = |what: &str| Error::Format(format!("{}:{}: {what}", path.display(), lineno + 1));
        let mut parts = line.split_whitespace();
        let n: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("missing term count"))?;
        let mut counts = Vec::with_capacity(n);
        for p in parts {
            let (w, c) = p.split_once(':').ok_or_else(|| bad("entry must be id:count"))?;
            let w: usize = w.parse().map_err(|_| bad("bad term id"))?;
            let c: u32 = c.parse().map_err(|_| bad("bad count"))?;
            if w >= num_terms {
                return Err(Error::UnknownTerm(w));
            }
            counts.push((w, c));
        }
        if counts.len() != n {
            return Err(bad(&format!("declares {n} terms but lists {}", counts.len())));
        }
        rows.push(counts);
    }
    Ok(rows)
}

//! Sentence sentiment and its aggregation to documents, topics and terms.
//!
//! Sentences are scored by a lexicon counter (or read from a precomputed scores
//! file). Document triples are sentence means. Topic and term triples mix the
//! document triples through the topic model: `P(d | z)` comes from Bayes with a
//! uniform document prior, and `P(z | w)` from Bayes with `P(z)` the mean
//! document proportion.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::RawRecord;
use crate::dtm::DtmModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentimentTriple {
    pub pos: f64,
    pub neg: f64,
    pub neu: f64,
}

impl SentimentTriple {
    pub const NEUTRAL: SentimentTriple = SentimentTriple {
        pos: 0.0,
        neg: 0.0,
        neu: 1.0,
    };
    const ZERO: SentimentTriple = SentimentTriple {
        pos: 0.0,
        neg: 0.0,
        neu: 0.0,
    };

    pub fn new(pos: f64, neg: f64, neu: f64) -> Self {
        SentimentTriple { pos, neg, neu }
    }

    pub fn sum(&self) -> f64 {
        self.pos + self.neg + self.neu
    }

    /// Subjective mass, `pos + neg`.
    pub fn polarity(&self) -> f64 {
        self.pos + self.neg
    }

    pub fn scale(&self, c: f64) -> Self {
        SentimentTriple::new(self.pos * c, self.neg * c, self.neu * c)
    }

    fn add_scaled(&mut self, other: &SentimentTriple, c: f64) {
        self.pos += other.pos * c;
        self.neg += other.neg * c;
        self.neu += other.neu * c;
    }

    /// Non-negative components summing to one within `tol`.
    pub fn on_simplex(&self, tol: f64) -> bool {
        self.pos >= 0.0 && self.neg >= 0.0 && self.neu >= 0.0 && (self.sum() - 1.0).abs() <= tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    tags: HashMap<String, Polarity>,
}

const POSITIVE: &[&str] = &[
    "good", "great", "excellent", "amazing", "awesome", "wonderful", "fantastic", "nice", "best", "better",
    "love", "loved", "like", "liked", "happy", "glad", "pleased", "satisfied", "helpful", "friendly", "kind",
    "fast", "quick", "easy", "reliable", "efficient", "polite", "perfect", "recommend", "thanks", "thank",
    "grateful", "fair", "fine", "solved", "resolved", "success", "successful", "positive", "enjoy", "enjoyed",
    "comfortable", "clean", "professional", "responsive", "support", "improved", "improve", "benefit", "win",
    "correct", "valuable", "brilliant", "superb", "delighted", "impressive", "trust", "smooth", "cheap", "safe",
];

const NEGATIVE: &[&str] = &[
    "bad", "poor", "terrible", "awful", "horrible", "worst", "worse", "hate", "hated", "angry", "annoyed",
    "upset", "disappointed", "disappointing", "unhappy", "sad", "slow", "late", "delay", "delayed", "broken",
    "broke", "fail", "failed", "failure", "fault", "faulty", "wrong", "error", "problem", "problems", "issue",
    "complaint", "complain", "rude", "useless", "expensive", "overcharged", "charged", "fraud", "scam", "lost",
    "never", "refuse", "refused", "denied", "cancel", "cancelled", "difficult", "dirty", "unfair", "unacceptable",
    "negative", "lie", "lied", "abuse", "damage", "damaged", "dangerous", "crisis", "ignored", "incompetent",
];

impl Lexicon {
    /// Build from `(term, tag)` pairs; a term given both tags is an error.
    pub fn from_pairs<S: AsRef<str>>(pairs: impl IntoIterator<Item = (S, Polarity)>) -> Result<Self> {
        let mut tags = HashMap::new();
        for (term, tag) in pairs {
            let term = term.as_ref().to_lowercase();
            match tags.get(&term) {
                Some(&old) if old != tag => {
                    return Err(Error::Invalid(format!("lexicon term '{term}' is tagged both positive and negative")))
                }
                _ => {
                    tags.insert(term, tag);
                }
            }
        }
        Ok(Lexicon { tags })
    }

    /// Small English list shipped with the crate.
    pub fn bundled() -> Self {
        let pairs = POSITIVE
            .iter()
            .map(|t| (*t, Polarity::Positive))
            .chain(NEGATIVE.iter().map(|t| (*t, Polarity::Negative)));
        Lexicon::from_pairs(pairs).expect("bundled lexicon is consistent")
    }

    /// Parse `term <whitespace> tag` lines; tags are `positive`/`pos`/`+` or
    /// `negative`/`neg`/`-`. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(term), Some(tag), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Invalid(format!("lexicon line {}: expected 'term tag'", i + 1)));
            };
            let tag = match tag.to_lowercase().as_str() {
                "positive" | "pos" | "+" => Polarity::Positive,
                "negative" | "neg" | "-" => Polarity::Negative,
                other => return Err(Error::Invalid(format!("lexicon line {}: unknown tag '{other}'", i + 1))),
            };
            pairs.push((term.to_string(), tag));
        }
        Lexicon::from_pairs(pairs)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Lexicon::parse(&text)
    }

    pub fn get(&self, term: &str) -> Option<Polarity> {
        self.tags.get(term).copied()
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }
}

/// Split text on `.`, `!`, `?` and newlines, dropping blank pieces.
pub fn split_sentences(text: &str) -> Vec<&str> {
    text.split(['.', '!', '?', '\n'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect()
}

/// Lowercased alphanumeric runs. No stopword or length filtering, so that every
/// word counts toward the neutral share.
pub fn sentence_tokens(sentence: &str) -> Vec<String> {
    sentence
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn score_sentence<S: AsRef<str>>(tokens: &[S], lexicon: &Lexicon) -> Result<SentimentTriple> {
    if tokens.is_empty() {
        return Err(Error::Invalid("cannot score an empty sentence".into()));
    }
    let (mut p, mut q) = (0usize, 0usize);
    for t in tokens {
        match lexicon.get(t.as_ref()) {
            Some(Polarity::Positive) => p += 1,
            Some(Polarity::Negative) => q += 1,
            None => {}
        }
    }
    let n = tokens.len() as f64;
    let (pos, neg) = (p as f64 / n, q as f64 / n);
    Ok(SentimentTriple::new(pos, neg, 1.0 - pos - neg))
}

/// Mean of the sentence triples.
pub fn doc_score(sentences: &[SentimentTriple]) -> Result<SentimentTriple> {
    if sentences.is_empty() {
        return Err(Error::Invalid("document has no sentences".into()));
    }
    let mut acc = SentimentTriple::ZERO;
    for s in sentences {
        acc.add_scaled(s, 1.0);
    }
    Ok(acc.scale(1.0 / sentences.len() as f64))
}

/// `C_z * sum_d sc_d P(d | z)`, with `C_z` the reciprocal of the weighted sum's mass.
pub fn topic_score(docs: &[SentimentTriple], weights: &[f64]) -> Result<SentimentTriple> {
    if docs.len() != weights.len() {
        return Err(Error::Dimension(format!("{} documents but {} weights", docs.len(), weights.len())));
    }
    if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::Invalid("topic weights must be finite and non-negative".into()));
    }
    let mut acc = SentimentTriple::ZERO;
    for (d, &w) in docs.iter().zip(weights) {
        acc.add_scaled(d, w);
    }
    let mass = acc.sum();
    if mass <= 0.0 {
        return Err(Error::Invalid("topic has no weight on any document".into()));
    }
    Ok(acc.scale(1.0 / mass))
}

/// Topic-word and document-topic distributions of one collection of documents.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub num_topics: usize,
    pub num_terms: usize,
    /// `K x M`, rows `P(w | z)`.
    pub topic_word: Vec<f64>,
    /// `N x K`, rows `P(z | d)`.
    pub doc_topic: Vec<f64>,
    p_z: Vec<f64>,
    p_w: Vec<f64>,
}

impl Mixture {
    pub fn new(num_topics: usize, num_terms: usize, topic_word: Vec<f64>, doc_topic: Vec<f64>) -> Result<Self> {
        if num_topics == 0 || num_terms == 0 {
            return Err(Error::Invalid("mixture needs at least one topic and one term".into()));
        }
        if topic_word.len() != num_topics * num_terms || doc_topic.len() % num_topics != 0 {
            return Err(Error::Dimension("mixture tables do not match K and M".into()));
        }
        if doc_topic.is_empty() {
            return Err(Error::EmptyCorpus("no documents to aggregate over".into()));
        }
        for row in topic_word.chunks(num_terms).chain(doc_topic.chunks(num_topics)) {
            if row.iter().any(|p| !(*p >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::Invalid("mixture rows must be probability distributions".into()));
            }
        }
        let n = doc_topic.len() / num_topics;
        let mut p_z = vec![0.0; num_topics];
        for row in doc_topic.chunks(num_topics) {
            for (a, b) in p_z.iter_mut().zip(row) {
                *a += b / n as f64;
            }
        }
        let mut p_w = vec![0.0; num_terms];
        for (z, row) in topic_word.chunks(num_terms).enumerate() {
            for (a, b) in p_w.iter_mut().zip(row) {
                *a += b * p_z[z];
            }
        }
        Ok(Mixture {
            num_topics,
            num_terms,
            topic_word,
            doc_topic,
            p_z,
            p_w,
        })
    }

    /// Mixture of slice `t`: softmax topics and normalised `gamma`.
    pub fn from_model(model: &DtmModel, t: usize) -> Result<Self> {
        let k = model.num_topics();
        if t >= model.num_slices() {
            return Err(Error::OutOfRange(format!("slice {t} of {}", model.num_slices())));
        }
        let mut topic_word = Vec::with_capacity(k * model.num_terms);
        for z in 0..k {
            topic_word.extend(model.topic_word_dist(t, z)?);
        }
        let mut doc_topic = Vec::with_capacity(model.slices[t].num_docs() * k);
        for d in 0..model.slices[t].num_docs() {
            doc_topic.extend(model.doc_topic_dist(t, d)?);
        }
        Mixture::new(k, model.num_terms, topic_word, doc_topic)
    }

    pub fn num_docs(&self) -> usize {
        self.doc_topic.len() / self.num_topics
    }

    pub fn p_w_given_z(&self, w: usize, z: usize) -> f64 {
        self.topic_word[z * self.num_terms + w]
    }

    pub fn p_z_given_d(&self, z: usize, d: usize) -> f64 {
        self.doc_topic[d * self.num_topics + z]
    }

    /// `P(z)`: mean document proportion.
    pub fn p_z(&self) -> &[f64] {
        &self.p_z
    }

    /// `P(w) = sum_z P(w | z) P(z)`.
    pub fn p_w(&self) -> &[f64] {
        &self.p_w
    }

    /// `P(d | z) = P(z | d) / (N P(z))` for every document.
    pub fn p_d_given_z(&self, z: usize) -> Vec<f64> {
        let denom = self.num_docs() as f64 * self.p_z[z];
        (0..self.num_docs())
            .map(|d| if denom > 0.0 { self.p_z_given_d(z, d) / denom } else { 0.0 })
            .collect()
    }

    /// `P(z | w)` by Bayes; zero when `P(w) = 0`.
    pub fn p_z_given_w(&self, z: usize, w: usize) -> f64 {
        let pw = self.p_w[w];
        if pw > 0.0 {
            self.p_w_given_z(w, z) * self.p_z[z] / pw
        } else {
            0.0
        }
    }

    fn check_docs(&self, docs: &[SentimentTriple]) -> Result<()> {
        if docs.len() != self.num_docs() {
            return Err(Error::Dimension(format!(
                "{} document triples for {} documents",
                docs.len(),
                self.num_docs()
            )));
        }
        Ok(())
    }

    fn check_term(&self, w: usize) -> Result<()> {
        if w >= self.num_terms {
            return Err(Error::UnknownTerm(w));
        }
        Ok(())
    }

    /// Topic triples for every topic. Topics with no document weight are an error.
    pub fn topic_scores(&self, docs: &[SentimentTriple]) -> Result<Vec<SentimentTriple>> {
        self.check_docs(docs)?;
        (0..self.num_topics).map(|z| topic_score(docs, &self.p_d_given_z(z))).collect()
    }

    /// `sc_w = sum_z sc_z P(w | z) P(z) / P(w)`.
    pub fn term_score(&self, topics: &[SentimentTriple], w: usize) -> Result<SentimentTriple> {
        self.check_term(w)?;
        if topics.len() != self.num_topics {
            return Err(Error::Dimension(format!("{} topic triples for {} topics", topics.len(), self.num_topics)));
        }
        if !(self.p_w[w] > 0.0) {
            return Err(Error::Invalid(format!("term {w} has zero probability under every topic")));
        }
        let mut acc = SentimentTriple::ZERO;
        for (z, sc) in topics.iter().enumerate() {
            acc.add_scaled(sc, self.p_z_given_w(z, w));
        }
        Ok(acc)
    }

    /// Term triples for the whole vocabulary; terms with `P(w) = 0` are neutral.
    pub fn term_scores(&self, topics: &[SentimentTriple]) -> Result<Vec<SentimentTriple>> {
        (0..self.num_terms)
            .map(|w| {
                if self.p_w[w] > 0.0 {
                    self.term_score(topics, w)
                } else {
                    Ok(SentimentTriple::NEUTRAL)
                }
            })
            .collect()
    }

    /// `sc_d(* | z) = (sum_w sc_w P(w | z)) P(z | d)`. Sums to `P(z | d)` unless
    /// `normalize`, which divides that factor out.
    pub fn doc_score_given_topic(
        &self,
        terms: &[SentimentTriple],
        d: usize,
        z: usize,
        normalize: bool,
    ) -> Result<SentimentTriple> {
        if terms.len() != self.num_terms {
            return Err(Error::Dimension(format!("{} term triples for {} terms", terms.len(), self.num_terms)));
        }
        if d >= self.num_docs() || z >= self.num_topics {
            return Err(Error::OutOfRange(format!("document {d}, topic {z}")));
        }
        let mut acc = SentimentTriple::ZERO;
        for (w, sc) in terms.iter().enumerate() {
            acc.add_scaled(sc, self.p_w_given_z(w, z));
        }
        let c = if normalize { 1.0 } else { self.p_z_given_d(z, d) };
        Ok(acc.scale(c))
    }

    /// `sc_w(* | z) = (sum_d sc_d P(d | z)) P(z | w)`. Sums to
    /// `P(z | w) sum_d P(d | z)` unless `normalize`, which divides that out.
    pub fn term_score_given_topic(
        &self,
        docs: &[SentimentTriple],
        w: usize,
        z: usize,
        normalize: bool,
    ) -> Result<SentimentTriple> {
        self.check_docs(docs)?;
        self.check_term(w)?;
        if z >= self.num_topics {
            return Err(Error::OutOfRange(format!("topic {z} of {}", self.num_topics)));
        }
        let weights = self.p_d_given_z(z);
        let mut acc = SentimentTriple::ZERO;
        for (sc, p) in docs.iter().zip(&weights) {
            acc.add_scaled(sc, *p);
        }
        if normalize {
            let mass = weights.iter().sum::<f64>();
            Ok(if mass > 0.0 { acc.scale(1.0 / mass) } else { acc })
        } else {
            Ok(acc.scale(self.p_z_given_w(z, w)))
        }
    }
}

/// One scored sentence, as read from or written to a scores file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceScore {
    pub sentence_id: String,
    pub doc_id: String,
    pub pos: f64,
    pub neg: f64,
    pub neu: f64,
}

impl SentenceScore {
    pub fn triple(&self) -> SentimentTriple {
        SentimentTriple::new(self.pos, self.neg, self.neu)
    }
}

/// Score every sentence of every record (title first, then body). Sentences
/// without tokens are skipped. Ids are `<doc id>:<index>`.
pub fn score_records(records: &[RawRecord], lexicon: &Lexicon) -> Vec<SentenceScore> {
    let mut out = Vec::new();
    for r in records {
        let mut i = 0;
        for text in [r.title.as_str(), r.body.as_str()] {
            for s in split_sentences(text) {
                let tokens = sentence_tokens(s);
                let Ok(sc) = score_sentence(&tokens, lexicon) else { continue };
                out.push(SentenceScore {
                    sentence_id: format!("{}:{i}", r.id),
                    doc_id: r.id.clone(),
                    pos: sc.pos,
                    neg: sc.neg,
                    neu: sc.neu,
                });
                i += 1;
            }
        }
    }
    out
}

/// Read a precomputed scores file; each triple must lie on the simplex.
pub fn read_scores(path: &Path) -> Result<Vec<SentenceScore>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let scores: Vec<SentenceScore> = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    for s in &scores {
        if !s.triple().on_simplex(1e-9) {
            return Err(Error::Invalid(format!(
                "sentence {} of document {} is not a distribution",
                s.sentence_id, s.doc_id
            )));
        }
    }
    Ok(scores)
}

/// Document triples in the order of `doc_ids`. Documents without any scored
/// sentence are neutral; the second value counts them. Scores for unknown
/// documents are ignored.
pub fn doc_triples(sentences: &[SentenceScore], doc_ids: &[&str]) -> (Vec<SentimentTriple>, usize) {
    let mut by_doc: HashMap<&str, Vec<SentimentTriple>> = HashMap::new();
    for s in sentences {
        by_doc.entry(s.doc_id.as_str()).or_default().push(s.triple());
    }
    let mut missing = 0;
    let triples = doc_ids
        .iter()
        .map(|id| match by_doc.get(id).map(|v| doc_score(v)) {
            Some(Ok(t)) => t,
            _ => {
                missing += 1;
                SentimentTriple::NEUTRAL
            }
        })
        .collect();
    (triples, missing)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSentiment {
    pub slice: usize,
    /// Document triples in slice order.
    pub docs: Vec<SentimentTriple>,
    /// One per topic; empty for a slice without documents.
    pub topics: Vec<SentimentTriple>,
    /// One per vocabulary term; empty for a slice without documents.
    pub terms: Vec<SentimentTriple>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentReport {
    pub sentences: Vec<SentenceScore>,
    /// Document ids in corpus order, aligned with the concatenated slice `docs`.
    pub doc_ids: Vec<String>,
    pub slices: Vec<SliceSentiment>,
    /// Topic triples pooled over every document of every slice.
    pub overall_topics: Vec<SentimentTriple>,
    /// Term triples under the pooled mixture.
    pub overall_terms: Vec<SentimentTriple>,
    /// Documents that had no scorable sentence and were set neutral.
    pub neutral_docs: usize,
}

/// Mixture over every document of the model. Topics are the per-slice
/// distributions averaged with weights proportional to slice size.
pub fn pooled_mixture(model: &DtmModel) -> Result<Mixture> {
    let k = model.num_topics();
    let m = model.num_terms;
    let total: usize = model.slices.iter().map(|s| s.num_docs()).sum();
    if total == 0 {
        return Err(Error::EmptyCorpus("model has no fitted documents".into()));
    }
    let mut topic_word = vec![0.0; k * m];
    let mut doc_topic = Vec::with_capacity(total * k);
    for (t, s) in model.slices.iter().enumerate() {
        if s.num_docs() == 0 {
            continue;
        }
        let share = s.num_docs() as f64 / total as f64;
        for z in 0..k {
            for (a, p) in topic_word[z * m..(z + 1) * m].iter_mut().zip(model.topic_word_dist(t, z)?) {
                *a += share * p;
            }
        }
        for d in 0..s.num_docs() {
            doc_topic.extend(model.doc_topic_dist(t, d)?);
        }
    }
    Mixture::new(k, m, topic_word, doc_topic)
}

/// Aggregate sentence scores through a fitted model. Each slice uses its own
/// topics and proportions.
pub fn aggregate(
    model: &DtmModel,
    corpus: &crate::corpus::SlicedCorpus,
    sentences: Vec<SentenceScore>,
) -> Result<SentimentReport> {
    if model.num_slices() != corpus.num_slices() {
        return Err(Error::Dimension("model and corpus slice counts differ".into()));
    }
    let doc_ids: Vec<&str> = corpus.documents.iter().map(|d| d.id.as_str()).collect();
    let (all_docs, neutral_docs) = doc_triples(&sentences, &doc_ids);
    let mut slices = Vec::with_capacity(model.num_slices());
    for t in 0..model.num_slices() {
        let range = corpus.slices[t].range();
        let docs = all_docs[range].to_vec();
        if docs.is_empty() {
            slices.push(SliceSentiment {
                slice: t,
                docs,
                topics: Vec::new(),
                terms: Vec::new(),
            });
            continue;
        }
        let mix = Mixture::from_model(model, t)?;
        let topics = mix.topic_scores(&docs)?;
        let terms = mix.term_scores(&topics)?;
        slices.push(SliceSentiment {
            slice: t,
            docs,
            topics,
            terms,
        });
    }
    let pooled = pooled_mixture(model)?;
    let overall_topics = pooled.topic_scores(&all_docs)?;
    let overall_terms = pooled.term_scores(&overall_topics)?;
    Ok(SentimentReport {
        sentences,
        doc_ids: doc_ids.iter().map(|s| s.to_string()).collect(),
        slices,
        overall_topics,
        overall_terms,
        neutral_docs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicEntry {
    pub topic: usize,
    /// `None` for the pooled view.
    pub slice: Option<usize>,
    #[serde(flatten)]
    pub score: SentimentTriple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermEntry {
    pub term: String,
    pub slice: usize,
    #[serde(flatten)]
    pub score: SentimentTriple,
}

impl SentimentReport {
    /// Document id to triple.
    pub fn doc_map(&self) -> BTreeMap<String, SentimentTriple> {
        let docs = self.slices.iter().flat_map(|s| s.docs.iter());
        self.doc_ids.iter().cloned().zip(docs.copied()).collect()
    }

    pub fn topic_entries(&self) -> Vec<TopicEntry> {
        let overall = self.overall_topics.iter().enumerate().map(|(k, s)| TopicEntry {
            topic: k,
            slice: None,
            score: *s,
        });
        let per_slice = self.slices.iter().flat_map(|sl| {
            sl.topics.iter().enumerate().map(move |(k, s)| TopicEntry {
                topic: k,
                slice: Some(sl.slice),
                score: *s,
            })
        });
        overall.chain(per_slice).collect()
    }

    pub fn term_entries(&self, terms: &[String]) -> Vec<TermEntry> {
        self.slices
            .iter()
            .flat_map(|sl| {
                sl.terms.iter().zip(terms).map(move |(s, term)| TermEntry {
                    term: term.clone(),
                    slice: sl.slice,
                    score: *s,
                })
            })
            .collect()
    }

    /// Write `sentiment-sentence.json`, `sentiment-doc.json`, `sentiment-topic.json`
    /// and `sentiment-term.json` into `dir`.
    pub fn write(&self, dir: &Path, terms: &[String]) -> Result<()> {
        fn put<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
            let path = dir.join(name);
            let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(&path, e))?;
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
        }
        put(dir, "sentiment-sentence.json", &self.sentences)?;
        put(dir, "sentiment-doc.json", &self.doc_map())?;
        put(dir, "sentiment-topic.json", &self.topic_entries())?;
        put(dir, "sentiment-term.json", &self.term_entries(terms))
    }
}

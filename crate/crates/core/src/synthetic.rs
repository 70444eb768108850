//! Seeded synthetic corpora drawn from a known drifting topic model. Used by the
//! test suites and by `trendweave synth` to produce demo input.

use chrono::{Duration, NaiveDate, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Granularity, RawRecord, Slice, SlicedCorpus};
use crate::dtm::softmax;
use crate::error::{Error, Result};
use crate::sentiment::{Lexicon, Polarity};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_slices: usize,
    pub docs_per_slice: usize,
    pub num_terms: usize,
    pub num_topics: usize,
    /// Tokens per document are uniform in `[doc_length / 2, 3 doc_length / 2]`.
    pub doc_length: usize,
    /// Dirichlet concentration of document proportions.
    pub alpha: f64,
    /// Share of each topic's mass on its own block of words.
    pub block_mass: f64,
    /// Standard deviation of the per-slice random walk of every log weight.
    pub walk_sd: f64,
    /// Log-weight gain per slice of the drifting word in topic 0.
    pub drift_slope: f64,
    /// Chance that a sentence of the text rendering carries a polar word.
    pub polar_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_slices: 4,
            docs_per_slice: 100,
            num_terms: 500,
            num_topics: 5,
            doc_length: 100,
            alpha: 0.2,
            block_mass: 0.9,
            walk_sd: 0.05,
            drift_slope: 0.6,
            polar_rate: 0.5,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub spec: SyntheticSpec,
    pub terms: Vec<String>,
    pub corpus: SlicedCorpus,
    /// True `p(w | k)` per slice, each `K x M` row-major.
    pub truth: Vec<Vec<f64>>,
    /// Word of topic 0 whose weight grows with time.
    pub drift_word: usize,
    /// Text rendering of every document, in corpus order.
    pub records: Vec<RawRecord>,
}

impl Synthetic {
    pub fn true_prob(&self, t: usize, k: usize, w: usize) -> f64 {
        self.truth[t][k * self.spec.num_terms + w]
    }
}

/// Term name of id `w`; zero padded so that lexicographic order is id order.
pub fn term_name(w: usize) -> String {
    format!("w{w:04}")
}

pub fn generate(spec: &SyntheticSpec) -> Result<Synthetic> {
    let (k, m, n_t) = (spec.num_topics, spec.num_terms, spec.num_slices);
    if k == 0 || m < k || n_t == 0 || spec.docs_per_slice == 0 || spec.doc_length < 2 {
        return Err(Error::Invalid("synthetic spec needs K >= 1, M >= K, slices, documents and length".into()));
    }
    if m > 10_000 {
        return Err(Error::Invalid("synthetic vocabularies are limited to 10000 terms".into()));
    }
    if !(spec.alpha > 0.0) || !(0.0..=1.0).contains(&spec.block_mass) {
        return Err(Error::Invalid("synthetic alpha must be positive and block mass in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let block = m / k;

    // Initial log weights: a Zipf profile over the topic's block on top of a flat
    // background share.
    let mut logw = vec![0.0; k * m];
    for z in 0..k {
        let lo = z * block;
        let hi = if z + 1 == k { m } else { lo + block };
        let harmonic: f64 = (1..=hi - lo).map(|r| 1.0 / r as f64).sum();
        for w in 0..m {
            let mut p = (1.0 - spec.block_mass) / m as f64;
            if (lo..hi).contains(&w) {
                p += spec.block_mass / ((w - lo + 1) as f64 * harmonic);
            }
            logw[z * m + w] = p.ln();
        }
    }
    // A mid-ranked word of topic 0 climbs steadily.
    let drift_word = (block / 4).min(m - 1);
    let walk = Normal::new(0.0, spec.walk_sd.max(0.0)).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut truth = Vec::with_capacity(n_t);
    for t in 0..n_t {
        if t > 0 {
            for x in logw.iter_mut() {
                *x += walk.sample(&mut rng);
            }
            logw[drift_word] += spec.drift_slope;
        }
        let mut probs = Vec::with_capacity(k * m);
        for z in 0..k {
            probs.extend(softmax(&logw[z * m..(z + 1) * m]));
        }
        truth.push(probs);
    }

    let theta = Dirichlet::new(&vec![spec.alpha; k]).map_err(|e| Error::Invalid(e.to_string()))?;
    let lexicon_words: Vec<(Polarity, Vec<&str>)> = vec![
        (Polarity::Positive, vec!["good", "great", "excellent", "helpful", "friendly"]),
        (Polarity::Negative, vec!["bad", "terrible", "awful", "rude", "broken"]),
    ];
    debug_assert!(lexicon_words
        .iter()
        .all(|(p, ws)| ws.iter().all(|w| Lexicon::bundled().get(w) == Some(*p))));
    let terms: Vec<String> = (0..m).map(term_name).collect();

    let mut documents = Vec::new();
    let mut slices = Vec::new();
    let mut records = Vec::new();
    for (t, probs) in truth.iter().enumerate() {
        let year = 2000 + t as i32;
        let start = documents.len();
        let cum: Vec<Vec<f64>> = probs
            .chunks(m)
            .map(|row| {
                row.iter()
                    .scan(0.0, |acc, p| {
                        *acc += p;
                        Some(*acc)
                    })
                    .collect()
            })
            .collect();
        for d in 0..spec.docs_per_slice {
            let th: Vec<f64> = theta.sample(&mut rng);
            let len = rng.gen_range(spec.doc_length / 2..=spec.doc_length * 3 / 2);
            let mut tokens = Vec::with_capacity(len);
            for _ in 0..len {
                let mut u: f64 = rng.gen();
                let mut z = k - 1;
                for (j, p) in th.iter().enumerate() {
                    if u < *p {
                        z = j;
                        break;
                    }
                    u -= p;
                }
                let r = rng.gen::<f64>() * cum[z][m - 1];
                let w = cum[z].partition_point(|c| *c <= r).min(m - 1);
                tokens.push(w);
            }
            let mut counts = vec![0u32; m];
            for &w in &tokens {
                counts[w] += 1;
            }
            let id = format!("s{t}-d{d:04}");
            let day = (d * 365 / spec.docs_per_slice) as i64;
            let date = NaiveDate::from_ymd_opt(year, 1, 1).unwrap() + Duration::days(day);
            let timestamp = Utc.from_utc_datetime(&date.and_hms_opt(12, 0, 0).unwrap());

            // Text: sentences of ten words, some carrying one polar word whose sign
            // leans with the document's share of topic 0.
            let lean = th[0];
            let mut body = String::new();
            for chunk in tokens.chunks(10) {
                let mut words: Vec<&str> = chunk.iter().map(|&w| terms[w].as_str()).collect();
                if rng.gen::<f64>() < spec.polar_rate {
                    let group = if rng.gen::<f64>() < 0.3 + 0.6 * lean { 0 } else { 1 };
                    let list = &lexicon_words[group].1;
                    words.push(list[rng.gen_range(0..list.len())]);
                }
                body.push_str(&words.join(" "));
                body.push_str(". ");
            }
            records.push(RawRecord {
                id: id.clone(),
                created_at: timestamp,
                title: format!("Opinion {t}-{d}"),
                body: body.trim_end().to_string(),
                url: None,
            });
            documents.push(Document {
                id,
                timestamp,
                counts: counts
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(w, &c)| (w, c))
                    .collect(),
            });
        }
        slices.push(Slice {
            start,
            end: documents.len(),
            period_start: NaiveDate::from_ymd_opt(year, 1, 1).unwrap(),
            period_end: NaiveDate::from_ymd_opt(year + 1, 1, 1).unwrap(),
            empty: false,
        });
    }
    Ok(Synthetic {
        spec: spec.clone(),
        terms,
        corpus: SlicedCorpus {
            documents,
            slices,
            granularity: Granularity::Yearly,
        },
        truth,
        drift_word,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_determinism() {
        let spec = SyntheticSpec {
            docs_per_slice: 20,
            ..SyntheticSpec::default()
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.corpus.num_docs(), 80);
        assert_eq!(a.corpus.num_slices(), 4);
        assert_eq!(a.records.len(), 80);
        for probs in &a.truth {
            for row in probs.chunks(500) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        for t in 1..4 {
            assert!(a.true_prob(t, 0, a.drift_word) > a.true_prob(t - 1, 0, a.drift_word));
        }
        for (s, d) in a.corpus.slices.iter().zip(a.corpus.slices.iter().map(|s| &a.corpus.documents[s.range()])) {
            assert!(d.iter().all(|doc| s.contains(&doc.timestamp)));
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = SyntheticSpec {
            num_terms: 2,
            num_topics: 3,
            ..SyntheticSpec::default()
        };
        assert!(generate(&bad).is_err());
    }
}

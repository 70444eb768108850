//! Static LDA fitted by variational EM.
//!
//! Used on its own, to initialise the dynamic model from the pooled corpus, and
//! (through [`e_step_doc`]) as the per-document E-step of the dynamic fits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::corpus::TermCounts;
use crate::error::{Error, Result};

/// Symmetric Dirichlet pseudo-count added to topic-word counts in the M-step.
pub const TOPIC_SMOOTHING: f64 = 0.01;
pub const DEFAULT_TOPICS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub num_topics: usize,
    /// Symmetric document-topic prior; `None` means `1 / num_topics`.
    pub alpha: Option<f64>,
    pub seed: u64,
    /// Relative bound change that stops the EM loop.
    pub tol: f64,
    pub max_iter: usize,
    pub doc_tol: f64,
    pub doc_max_iter: usize,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            num_topics: DEFAULT_TOPICS,
            alpha: None,
            seed: 0,
            tol: 1e-4,
            max_iter: 100,
            doc_tol: 1e-6,
            doc_max_iter: 100,
        }
    }
}

impl LdaConfig {
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(1.0 / self.num_topics as f64)
    }
}

/// Row-major `K x M` matrix of log topic-word weights. Rows need not be normalised:
/// the dynamic model passes `m~ - log zeta`, which sums to less than one.
#[derive(Debug, Clone, Copy)]
pub struct LogTopics<'a> {
    pub num_topics: usize,
    pub num_terms: usize,
    pub data: &'a [f64],
}

impl<'a> LogTopics<'a> {
    pub fn new(num_topics: usize, num_terms: usize, data: &'a [f64]) -> Result<Self> {
        if data.len() != num_topics * num_terms {
            return Err(Error::Dimension(format!(
                "topic matrix has {} entries, expected {num_topics} x {num_terms}",
                data.len()
            )));
        }
        Ok(LogTopics {
            num_topics,
            num_terms,
            data,
        })
    }

    #[inline]
    pub fn get(&self, k: usize, w: usize) -> f64 {
        self.data[k * self.num_terms + w]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub num_topics: usize,
    pub num_terms: usize,
    pub alpha: f64,
    /// `log p(w | k)`, row-major `K x M`.
    pub log_topics: Vec<f64>,
}

impl LdaModel {
    pub fn view(&self) -> LogTopics<'_> {
        LogTopics {
            num_topics: self.num_topics,
            num_terms: self.num_terms,
            data: &self.log_topics,
        }
    }

    pub fn topic_probs(&self, k: usize) -> Vec<f64> {
        self.log_topics[k * self.num_terms..(k + 1) * self.num_terms]
            .iter()
            .map(|l| l.exp())
            .collect()
    }

    /// Top `n` words of topic `k` as `(term id, probability)`, most probable first.
    pub fn top_words(&self, k: usize, n: usize) -> Vec<(usize, f64)> {
        top_n(&self.topic_probs(k), n)
    }
}

/// Indices and values of the `n` largest entries, descending; ties broken by index.
pub fn top_n(values: &[f64], n: usize) -> Vec<(usize, f64)> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.into_iter().take(n).map(|i| (i, values[i])).collect()
}

/// Variational parameters of one document: Dirichlet `gamma` over topics and one
/// multinomial `phi` row per distinct term (row-major `terms x K`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocVariational {
    pub gamma: Vec<f64>,
    pub phi: Vec<f64>,
}

impl DocVariational {
    pub fn phi_row(&self, i: usize, k: usize) -> &[f64] {
        &self.phi[i * k..(i + 1) * k]
    }
}

/// Per-document evidence bound, split into the word-likelihood part
/// `sum c phi log beta` and the rest (theta and z terms, entropies).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DocBound {
    pub words: f64,
    pub rest: f64,
}

impl DocBound {
    pub fn total(&self) -> f64 {
        self.words + self.rest
    }
}

pub fn doc_bound(topics: LogTopics<'_>, alpha: f64, doc: &[(usize, u32)], var: &DocVariational) -> DocBound {
    let k = topics.num_topics;
    let kf = k as f64;
    let gsum: f64 = var.gamma.iter().sum();
    let dsum = digamma(gsum);
    let elog: Vec<f64> = var.gamma.iter().map(|&g| digamma(g) - dsum).collect();

    let mut rest = ln_gamma(kf * alpha) - kf * ln_gamma(alpha) - ln_gamma(gsum);
    for j in 0..k {
        rest += (alpha - 1.0) * elog[j] + ln_gamma(var.gamma[j]) - (var.gamma[j] - 1.0) * elog[j];
    }
    let mut words = 0.0;
    for (i, &(w, c)) in doc.iter().enumerate() {
        let c = c as f64;
        for (j, &p) in var.phi_row(i, k).iter().enumerate() {
            if p > 0.0 {
                rest += c * p * (elog[j] - p.ln());
                words += c * p * topics.get(j, w);
            }
        }
    }
    DocBound { words, rest }
}

/// Coordinate-ascent E-step for one document; `init_gamma` warm-starts the loop.
pub fn e_step_doc(
    topics: LogTopics<'_>,
    alpha: f64,
    doc: &[(usize, u32)],
    tol: f64,
    max_iter: usize,
    init_gamma: Option<&[f64]>,
) -> DocVariational {
    e_step_doc_traced(topics, alpha, doc, tol, max_iter, init_gamma).0
}

/// [`e_step_doc`] that also returns the bound after every inner iteration.
pub fn e_step_doc_traced(
    topics: LogTopics<'_>,
    alpha: f64,
    doc: &[(usize, u32)],
    tol: f64,
    max_iter: usize,
    init_gamma: Option<&[f64]>,
) -> (DocVariational, Vec<f64>) {
    let k = topics.num_topics;
    if doc.is_empty() {
        return (
            DocVariational {
                gamma: vec![alpha; k],
                phi: Vec::new(),
            },
            Vec::new(),
        );
    }
    let total: f64 = doc.iter().map(|&(_, c)| c as f64).sum();
    let mut gamma = match init_gamma {
        Some(g) if g.len() == k => g.to_vec(),
        _ => vec![alpha + total / k as f64; k],
    };
    let mut phi = vec![0.0; doc.len() * k];
    let mut trace = Vec::new();
    let mut dig = vec![0.0; k];
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..max_iter.max(1) {
        for (d, g) in dig.iter_mut().zip(&gamma) {
            *d = digamma(*g);
        }
        let mut next = vec![alpha; k];
        for (i, &(w, c)) in doc.iter().enumerate() {
            let row = &mut phi[i * k..(i + 1) * k];
            let mut max = f64::NEG_INFINITY;
            for j in 0..k {
                row[j] = dig[j] + topics.get(j, w);
                max = max.max(row[j]);
            }
            let mut norm = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                norm += *x;
            }
            for (j, x) in row.iter_mut().enumerate() {
                *x /= norm;
                next[j] += c as f64 * *x;
            }
        }
        gamma = next;
        let var = DocVariational {
            gamma: gamma.clone(),
            phi: phi.clone(),
        };
        let b = doc_bound(topics, alpha, doc, &var).total();
        trace.push(b);
        let converged = prev.is_finite() && ((b - prev) / prev).abs() < tol;
        prev = b;
        if converged {
            break;
        }
    }
    (DocVariational { gamma, phi }, trace)
}

/// Sum of document bounds plus the smoothing term `eta * sum log beta` that the
/// smoothed M-step maximises.
pub fn lda_bound(model: &LdaModel, docs: &[TermCounts], vars: &[DocVariational]) -> Result<f64> {
    if docs.len() != vars.len() {
        return Err(Error::Dimension(format!(
            "{} documents but {} variational states",
            docs.len(),
            vars.len()
        )));
    }
    let view = model.view();
    let mut total = 0.0;
    for (doc, var) in docs.iter().zip(vars) {
        if var.gamma.len() != model.num_topics || var.phi.len() != doc.len() * model.num_topics {
            return Err(Error::Dimension("variational state does not match document".into()));
        }
        if doc.iter().any(|&(w, _)| w >= model.num_terms) {
            return Err(Error::Dimension("document term outside the model vocabulary".into()));
        }
        total += doc_bound(view, model.alpha, doc, var).total();
    }
    total += TOPIC_SMOOTHING * model.log_topics.iter().sum::<f64>();
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdaFit {
    pub model: LdaModel,
    pub docs: Vec<DocVariational>,
    /// Bound after each EM iteration.
    pub bounds: Vec<f64>,
    pub converged: bool,
}

/// Smoothed M-step: `beta_kw ∝ eta + sum_d c_dw phi_dwk`.
fn m_step(docs: &[TermCounts], vars: &[DocVariational], k: usize, m: usize) -> Vec<f64> {
    let mut counts = vec![TOPIC_SMOOTHING; k * m];
    for (doc, var) in docs.iter().zip(vars) {
        for (i, &(w, c)) in doc.iter().enumerate() {
            for (j, &p) in var.phi_row(i, k).iter().enumerate() {
                counts[j * m + w] += c as f64 * p;
            }
        }
    }
    for row in counts.chunks_mut(m) {
        let log_norm = row.iter().sum::<f64>().ln();
        for x in row.iter_mut() {
            *x = x.ln() - log_norm;
        }
    }
    counts
}

fn init_topics(docs: &[TermCounts], k: usize, m: usize, seed: u64) -> Vec<f64> {
    let mut freq = vec![1.0; m];
    for doc in docs {
        for &(w, c) in doc {
            freq[w] += c as f64;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(k * m);
    for _ in 0..k {
        let row: Vec<f64> = freq.iter().map(|f| f * (0.5 + rng.gen::<f64>())).collect();
        let log_norm = row.iter().sum::<f64>().ln();
        out.extend(row.iter().map(|x| x.ln() - log_norm));
    }
    out
}

pub fn fit_lda(docs: &[TermCounts], num_terms: usize, cfg: &LdaConfig) -> Result<LdaFit> {
    let k = cfg.num_topics;
    if k == 0 {
        return Err(Error::Invalid("number of topics must be at least 1".into()));
    }
    let alpha = cfg.alpha();
    if !(alpha > 0.0) {
        return Err(Error::Invalid(format!("alpha must be positive, got {alpha}")));
    }
    if docs.iter().all(|d| d.is_empty()) {
        return Err(Error::EmptyCorpus("LDA needs at least one non-empty document".into()));
    }
    let mut seen = vec![false; num_terms];
    for doc in docs {
        for &(w, _) in doc {
            *seen.get_mut(w).ok_or(Error::UnknownTerm(w))? = true;
        }
    }
    let distinct = seen.iter().filter(|&&s| s).count();
    if k > distinct {
        return Err(Error::Invalid(format!(
            "{k} topics requested but the corpus has only {distinct} distinct terms"
        )));
    }

    let mut model = LdaModel {
        num_topics: k,
        num_terms,
        alpha,
        log_topics: init_topics(docs, k, num_terms, cfg.seed),
    };
    let mut vars: Vec<DocVariational> = Vec::new();
    let mut bounds = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.max_iter {
        let view = model.view();
        vars = docs
            .par_iter()
            .enumerate()
            .map(|(d, doc)| {
                let init = vars.get(d).map(|v| v.gamma.as_slice());
                e_step_doc(view, alpha, doc, cfg.doc_tol, cfg.doc_max_iter, init)
            })
            .collect();
        model.log_topics = m_step(docs, &vars, k, num_terms);
        let b = lda_bound(&model, docs, &vars)?;
        let done = bounds
            .last()
            .map(|&prev: &f64| ((b - prev) / prev).abs() < cfg.tol)
            .unwrap_or(false);
        bounds.push(b);
        if done {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("LDA did not converge in {} iterations", cfg.max_iter);
    }
    Ok(LdaFit {
        model,
        docs: vars,
        bounds,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Two disjoint 10-word topics over a 20-word vocabulary.
    fn separable_corpus(n_docs: usize, seed: u64) -> Vec<TermCounts> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n_docs)
            .map(|_| {
                let mix: f64 = rng.gen();
                let mut counts = [0u32; 20];
                for _ in 0..40 {
                    let topic = if rng.gen::<f64>() < mix { 0 } else { 1 };
                    counts[topic * 10 + rng.gen_range(0..10)] += 1;
                }
                counts
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(w, &c)| (w, c))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn single_topic_is_smoothed_unigram() {
        let docs = separable_corpus(30, 3);
        let fit = fit_lda(
            &docs,
            20,
            &LdaConfig {
                num_topics: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let mut counts = vec![0.0; 20];
        for d in &docs {
            for &(w, c) in d {
                counts[w] += c as f64;
            }
        }
        let total: f64 = counts.iter().sum();
        for (w, p) in fit.model.topic_probs(0).iter().enumerate() {
            let expect = (counts[w] + TOPIC_SMOOTHING) / (total + 20.0 * TOPIC_SMOOTHING);
            assert_abs_diff_eq!(*p, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn recovers_disjoint_topics() {
        let docs = separable_corpus(200, 11);
        let fit = fit_lda(
            &docs,
            20,
            &LdaConfig {
                num_topics: 2,
                seed: 5,
                ..Default::default()
            },
        )
        .unwrap();
        let mut found: Vec<Vec<usize>> = (0..2)
            .map(|k| {
                let mut top: Vec<usize> = fit.model.top_words(k, 10).into_iter().map(|(w, _)| w).collect();
                top.sort();
                top
            })
            .collect();
        found.sort();
        assert_eq!(found[0], (0..10).collect::<Vec<_>>());
        assert_eq!(found[1], (10..20).collect::<Vec<_>>());
    }

    #[test]
    fn bound_is_monotone_and_seeded() {
        let docs = separable_corpus(80, 2);
        let cfg = LdaConfig {
            num_topics: 3,
            seed: 9,
            ..Default::default()
        };
        let a = fit_lda(&docs, 20, &cfg).unwrap();
        for w in a.bounds.windows(2) {
            assert!(w[1] >= w[0] - 1e-6 * w[0].abs(), "{} -> {}", w[0], w[1]);
        }
        let b = fit_lda(&docs, 20, &cfg).unwrap();
        let bits = |m: &LdaModel| m.log_topics.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.model), bits(&b.model));
        for k in 0..3 {
            let s: f64 = a.model.topic_probs(k).iter().sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn too_many_topics() {
        let docs = vec![vec![(0, 2), (1, 1)]];
        let err = fit_lda(
            &docs,
            5,
            &LdaConfig {
                num_topics: 3,
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(err.to_string().contains("only 2 distinct terms"));
    }

    #[test]
    fn empty_document_gets_prior() {
        let data = vec![(0.5f64).ln(); 4];
        let topics = LogTopics::new(2, 2, &data).unwrap();
        let v = e_step_doc(topics, 0.3, &[], 1e-6, 100, None);
        assert_eq!(v.gamma, vec![0.3, 0.3]);
        assert!(v.phi.is_empty());
    }

    #[test]
    fn dominant_topic_wins() {
        let data = vec![0.0, 0.0, -30.0, -30.0];
        let topics = LogTopics::new(2, 2, &data).unwrap();
        let v = e_step_doc(topics, 0.5, &[(0, 3), (1, 2)], 1e-6, 100, None);
        assert!(v.gamma[0] - 0.5 > v.gamma[1] - 0.5);
        for i in 0..2 {
            let s: f64 = v.phi_row(i, 2).iter().sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-9);
        }
    }

    /// Straightforward token-by-token fixed-point iteration of the standard updates.
    fn oracle_gamma(log_beta: &[[f64; 5]; 2], alpha: f64, tokens: &[usize]) -> Vec<f64> {
        let n = tokens.len() as f64;
        let mut gamma = vec![alpha + n / 2.0; 2];
        for _ in 0..5000 {
            let mut next = vec![alpha; 2];
            for &w in tokens {
                let a = (digamma(gamma[0]) + log_beta[0][w]).exp();
                let b = (digamma(gamma[1]) + log_beta[1][w]).exp();
                next[0] += a / (a + b);
                next[1] += b / (a + b);
            }
            gamma = next;
        }
        gamma
    }

    #[test]
    fn e_step_matches_token_level_oracle() {
        let probs = [[0.4, 0.3, 0.1, 0.1, 0.1], [0.05, 0.15, 0.2, 0.25, 0.35]];
        let log_beta = probs.map(|r| r.map(f64::ln));
        let flat: Vec<f64> = log_beta.iter().flatten().copied().collect();
        let topics = LogTopics::new(2, 5, &flat).unwrap();
        let tokens = [0, 0, 1, 3, 4, 4, 4, 2, 0];
        let doc: TermCounts = vec![(0, 3), (1, 1), (2, 1), (3, 1), (4, 3)];
        let (v, trace) = e_step_doc_traced(topics, 0.7, &doc, 0.0, 5000, None);
        let expect = oracle_gamma(&log_beta, 0.7, &tokens);
        for j in 0..2 {
            assert_abs_diff_eq!(v.gamma[j], expect[j], epsilon = 1e-8);
        }
        for w in trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12 * w[0].abs());
        }
    }

    #[test]
    fn one_word_bound_closed_form() {
        // K = 1, vocabulary of two terms, one document holding one token of term 0:
        // theta is degenerate, so the bound is log beta_0 + eta (log beta_0 + log beta_1).
        let docs = vec![vec![(0usize, 1u32)]];
        let fit = fit_lda(
            &docs,
            2,
            &LdaConfig {
                num_topics: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let b0 = (1.0 + TOPIC_SMOOTHING) / (1.0 + 2.0 * TOPIC_SMOOTHING);
        let b1 = TOPIC_SMOOTHING / (1.0 + 2.0 * TOPIC_SMOOTHING);
        let expect = b0.ln() + TOPIC_SMOOTHING * (b0.ln() + b1.ln());
        let got = lda_bound(&fit.model, &docs, &fit.docs).unwrap();
        assert_abs_diff_eq!(got, expect, epsilon = 1e-12);
    }

    #[test]
    fn duplicated_corpus_doubles_document_part() {
        let docs = separable_corpus(5, 8);
        let fit = fit_lda(
            &docs,
            20,
            &LdaConfig {
                num_topics: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let smoothing = TOPIC_SMOOTHING * fit.model.log_topics.iter().sum::<f64>();
        let single = lda_bound(&fit.model, &docs, &fit.docs).unwrap() - smoothing;
        let docs2: Vec<TermCounts> = docs.iter().chain(&docs).cloned().collect();
        let vars2: Vec<DocVariational> = fit.docs.iter().chain(&fit.docs).cloned().collect();
        let double = lda_bound(&fit.model, &docs2, &vars2).unwrap() - smoothing;
        assert_abs_diff_eq!(double, 2.0 * single, epsilon = 1e-9 * single.abs());
    }

    #[test]
    fn bound_checks_dimensions() {
        let docs = separable_corpus(4, 1);
        let fit = fit_lda(
            &docs,
            20,
            &LdaConfig {
                num_topics: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(lda_bound(&fit.model, &docs[..3], &fit.docs).is_err());
    }
}

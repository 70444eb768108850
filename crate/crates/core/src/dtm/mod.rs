//! Dynamic topic model state.
//!
//! Each topic `k` and word `w` carries a chain of natural parameters over the time
//! slices. The chain posterior is represented by variational Kalman observations
//! (`obs`, `obs_var`), their filtered moments (`filt_mean`, `filt_var`) and smoothed
//! moments (`mean`, `var`). Word probabilities come from a softmax over the smoothed
//! means. `zeta[k]` bounds the log-normaliser of topic `k` in a slice.

pub mod bound;
mod chain;
pub mod fit;
mod format;

use serde::{Deserialize, Serialize};

use crate::corpus::SlicedCorpus;
use crate::error::{Error, Result};
use crate::kalman;

pub use bound::{slice_bound, slice_topic_terms, topic_bound, topic_terms, total_bound, TopicTerms};
pub use fit::{fit, init_dtm, DtmConfig, FitReport, PhaseTimings};
pub use format::{deserialize, read_model, serialize, write_model, FORMAT_VERSION};

pub const DEFAULT_SIGMA2: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtmHyper {
    pub num_topics: usize,
    /// Process variance of the topic chains.
    pub sigma2: f64,
    /// Variance of the proportion chain; only read when `alpha_drift` is set.
    pub delta2: f64,
    /// Symmetric Dirichlet prior on document proportions.
    pub alpha: f64,
    /// Experimental: let the per-slice prior drift as a Gaussian random walk with
    /// variance `delta2`.
    pub alpha_drift: bool,
}

impl DtmHyper {
    pub fn new(num_topics: usize) -> Self {
        DtmHyper {
            num_topics,
            sigma2: DEFAULT_SIGMA2,
            delta2: DEFAULT_SIGMA2,
            alpha: 1.0 / num_topics.max(1) as f64,
            alpha_drift: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_topics < 1 {
            return Err(Error::Invalid("number of topics must be at least 1".into()));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::Invalid(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.delta2 >= 0.0) {
            return Err(Error::Invalid(format!("delta2 must be non-negative, got {}", self.delta2)));
        }
        Ok(())
    }

    pub fn initial_variance(&self) -> f64 {
        self.sigma2 * kalman::INITIAL_VARIANCE_SCALE
    }
}

impl Default for DtmHyper {
    fn default() -> Self {
        DtmHyper::new(crate::lda::DEFAULT_TOPICS)
    }
}

/// Document and topic parts of the bound recorded when a slice was last fitted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub doc_bound: f64,
    pub topic_bound: f64,
}

/// Everything the model holds for one time slice. Matrices are row-major `K x M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceState {
    pub obs: Vec<f64>,
    pub obs_var: Vec<f64>,
    pub filt_mean: Vec<f64>,
    pub filt_var: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub zeta: Vec<f64>,
    pub alpha: f64,
    /// `docs x K` Dirichlet parameters, in slice document order.
    pub gammas: Vec<f64>,
    /// Per document, `distinct terms x K` multinomial parameters.
    pub phis: Vec<Vec<f64>>,
    pub ledger: LedgerEntry,
}

impl SliceState {
    pub fn num_docs(&self) -> usize {
        self.phis.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtmModel {
    pub hyper: DtmHyper,
    pub num_terms: usize,
    /// Smoothed moments of the chain-start state, `K x M`.
    pub initial_mean: Vec<f64>,
    pub initial_var: Vec<f64>,
    pub slices: Vec<SliceState>,
}

/// Numerically safe softmax.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = out.iter().sum();
    for v in &mut out {
        *v /= s;
    }
    out
}

impl DtmModel {
    pub fn num_topics(&self) -> usize {
        self.hyper.num_topics
    }

    pub fn num_slices(&self) -> usize {
        self.slices.len()
    }

    fn check_slice_topic(&self, t: usize, k: usize) -> Result<()> {
        if t >= self.num_slices() {
            return Err(Error::OutOfRange(format!("slice {t} of {}", self.num_slices())));
        }
        if k >= self.num_topics() {
            return Err(Error::OutOfRange(format!("topic {k} of {}", self.num_topics())));
        }
        Ok(())
    }

    /// Smoothed means of topic `k` at slice `t`; these are the posterior means of the
    /// natural parameters.
    pub fn topic_means(&self, t: usize, k: usize) -> Result<&[f64]> {
        self.check_slice_topic(t, k)?;
        let m = self.num_terms;
        Ok(&self.slices[t].mean[k * m..(k + 1) * m])
    }

    /// `p(w | k)` at slice `t`: softmax of the smoothed means.
    pub fn topic_word_dist(&self, t: usize, k: usize) -> Result<Vec<f64>> {
        Ok(softmax(self.topic_means(t, k)?))
    }

    /// Normalised `gamma` of document `d` (index within slice `t`).
    pub fn doc_topic_dist(&self, t: usize, d: usize) -> Result<Vec<f64>> {
        if t >= self.num_slices() {
            return Err(Error::OutOfRange(format!("slice {t} of {}", self.num_slices())));
        }
        let s = &self.slices[t];
        let k = self.num_topics();
        if d >= s.num_docs() || s.gammas.len() < (d + 1) * k {
            return Err(Error::OutOfRange(format!("document {d} is not fitted in slice {t}")));
        }
        let g = &s.gammas[d * k..(d + 1) * k];
        let total: f64 = g.iter().sum();
        Ok(g.iter().map(|x| x / total).collect())
    }

    /// Log topic weights `m~ - log zeta` used by the document E-step of slice `t`.
    pub fn e_step_topics(&self, t: usize) -> Vec<f64> {
        let s = &self.slices[t];
        let m = self.num_terms;
        let mut out = s.mean.clone();
        for (k, row) in out.chunks_mut(m).enumerate() {
            let lz = s.zeta[k].ln();
            for x in row {
                *x -= lz;
            }
        }
        out
    }

    /// Expected topic-word counts `n_tkw = sum_d c_dw phi_dwk` for slice `t`.
    pub fn expected_counts(&self, corpus: &SlicedCorpus, t: usize) -> Result<Vec<f64>> {
        let k = self.num_topics();
        let s = &self.slices[t];
        let docs = corpus.slice_docs(t);
        if docs.len() != s.num_docs() {
            return Err(Error::Dimension(format!(
                "slice {t} has {} documents in the corpus but {} in the model",
                docs.len(),
                s.num_docs()
            )));
        }
        let mut counts = vec![0.0; k * self.num_terms];
        for (doc, phi) in docs.iter().zip(&s.phis) {
            if phi.len() != doc.counts.len() * k {
                return Err(Error::Dimension(format!("document {} does not match its phi", doc.id)));
            }
            for (i, &(w, c)) in doc.counts.iter().enumerate() {
                if w >= self.num_terms {
                    return Err(Error::UnknownTerm(w));
                }
                for j in 0..k {
                    counts[j * self.num_terms + w] += c as f64 * phi[i * k + j];
                }
            }
        }
        Ok(counts)
    }

    /// Recompute `zeta` for every topic of slice `t` from its smoothed moments.
    pub(crate) fn refresh_zeta(&mut self, t: usize) -> Result<()> {
        let m = self.num_terms;
        let s = &mut self.slices[t];
        for k in 0..s.zeta.len() {
            s.zeta[k] = kalman::zeta(&s.mean[k * m..(k + 1) * m], &s.var[k * m..(k + 1) * m])?;
        }
        Ok(())
    }

    /// Largest relative deviation between stored `zeta` and its definition.
    pub fn zeta_deviation(&self) -> f64 {
        let m = self.num_terms;
        let mut worst: f64 = 0.0;
        for s in &self.slices {
            for (k, &z) in s.zeta.iter().enumerate() {
                let lz = kalman::log_zeta(&s.mean[k * m..(k + 1) * m], &s.var[k * m..(k + 1) * m])
                    .unwrap_or(f64::INFINITY);
                worst = worst.max(((z.ln() - lz).exp_m1()).abs());
            }
        }
        worst
    }

    /// Top `n` words of topic `k` at slice `t` as `(term id, probability)`.
    pub fn top_words(&self, t: usize, k: usize, n: usize) -> Result<Vec<(usize, f64)>> {
        Ok(crate::lda::top_n(&self.topic_word_dist(t, k)?, n))
    }
}

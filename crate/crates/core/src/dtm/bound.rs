//! Evidence lower bound of the dynamic model.
//!
//! The per-(slice, topic) bound has an uncancelled form with three parts and a
//! cancelled form where the `2 pi` terms and the `n - n zeta^-1 sum exp(..)` terms are
//! dropped. The two agree whenever `zeta` equals its definition.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DtmModel;
use crate::corpus::SlicedCorpus;
use crate::error::{Error, Result};
use crate::lda::{doc_bound, DocVariational, LogTopics};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopicTerms {
    /// Expected log transition density.
    pub transition: f64,
    /// Expected word likelihood under the `zeta` bound.
    pub likelihood: f64,
    /// Gaussian entropy of the smoothed state.
    pub entropy: f64,
}

impl TopicTerms {
    pub fn total(&self) -> f64 {
        self.transition + self.likelihood + self.entropy
    }
}

fn check_lengths(prev_mean: &[f64], prev_var: &[f64], mean: &[f64], var: &[f64], counts: &[f64]) -> Result<()> {
    let n = mean.len();
    if [prev_mean.len(), prev_var.len(), var.len(), counts.len()].iter().any(|&l| l != n) {
        return Err(Error::Dimension("topic bound inputs differ in length".into()));
    }
    if n == 0 {
        return Err(Error::Invalid("topic bound over an empty vocabulary".into()));
    }
    Ok(())
}

/// Uncancelled bound terms for one topic at one slice. `prev_*` are the smoothed
/// moments of the previous slice (or the chain start for the first slice).
pub fn topic_terms(
    sigma2: f64,
    prev_mean: &[f64],
    prev_var: &[f64],
    mean: &[f64],
    var: &[f64],
    counts: &[f64],
    zeta: f64,
) -> Result<TopicTerms> {
    check_lengths(prev_mean, prev_var, mean, var, counts)?;
    if !(zeta > 0.0 && zeta.is_finite()) {
        return Err(Error::Invalid(format!("zeta must be positive and finite, got {zeta}")));
    }
    let v = mean.len() as f64;
    let mut sq = 0.0;
    let mut tr = 0.0;
    let mut tr_prev = 0.0;
    let mut nm = 0.0;
    let mut n = 0.0;
    let mut mass = 0.0;
    let mut logdet = 0.0;
    for w in 0..mean.len() {
        let d = mean[w] - prev_mean[w];
        sq += d * d;
        tr += var[w];
        tr_prev += prev_var[w];
        nm += counts[w] * mean[w];
        n += counts[w];
        mass += (mean[w] + 0.5 * var[w]).exp();
        logdet += var[w].ln();
    }
    let transition =
        -0.5 * v * (sigma2.ln() + (2.0 * PI).ln()) - sq / (2.0 * sigma2) - tr / sigma2 + (tr_prev - tr) / (2.0 * sigma2);
    let likelihood = nm - n * mass / zeta + n - n * zeta.ln();
    let entropy = 0.5 * logdet + 0.5 * v * (2.0 * PI).ln();
    Ok(TopicTerms {
        transition,
        likelihood,
        entropy,
    })
}

/// Cancelled bound for one topic at one slice; takes `log zeta` so that it stays
/// finite when `zeta` itself would overflow.
pub fn topic_bound(
    sigma2: f64,
    prev_mean: &[f64],
    prev_var: &[f64],
    mean: &[f64],
    var: &[f64],
    counts: &[f64],
    log_zeta: f64,
) -> Result<f64> {
    check_lengths(prev_mean, prev_var, mean, var, counts)?;
    let v = mean.len() as f64;
    let mut b = -0.5 * v * sigma2.ln();
    let mut n = 0.0;
    for w in 0..mean.len() {
        let d = mean[w] - prev_mean[w];
        b += -d * d / (2.0 * sigma2) - var[w] / sigma2 + (prev_var[w] - var[w]) / (2.0 * sigma2)
            + counts[w] * mean[w]
            + 0.5 * var[w].ln();
        n += counts[w];
    }
    Ok(b - n * log_zeta)
}

impl DtmModel {
    /// Smoothed moments of the slice preceding `t`, or of the chain start.
    pub(crate) fn prev_moments(&self, t: usize) -> (&[f64], &[f64]) {
        if t == 0 {
            (&self.initial_mean, &self.initial_var)
        } else {
            (&self.slices[t - 1].mean, &self.slices[t - 1].var)
        }
    }

    /// Cancelled topic bound of slice `t` summed over topics, for given expected counts.
    pub(crate) fn topic_part(&self, t: usize, counts: &[f64]) -> Result<f64> {
        let m = self.num_terms;
        let s = &self.slices[t];
        let (pm, pv) = self.prev_moments(t);
        let mut total = 0.0;
        for k in 0..self.num_topics() {
            let r = k * m..(k + 1) * m;
            total += topic_bound(
                self.hyper.sigma2,
                &pm[r.clone()],
                &pv[r.clone()],
                &s.mean[r.clone()],
                &s.var[r.clone()],
                &counts[r],
                s.zeta[k].ln(),
            )?;
        }
        Ok(total)
    }

    /// Document part of the bound of slice `t`: the theta and z terms and entropies
    /// of every document. The word term is carried by the topic part.
    pub(crate) fn doc_part(&self, corpus: &SlicedCorpus, t: usize) -> Result<f64> {
        let k = self.num_topics();
        let s = &self.slices[t];
        let docs = corpus.slice_docs(t);
        if docs.len() != s.num_docs() || s.gammas.len() != docs.len() * k {
            return Err(Error::Dimension(format!("slice {t} documents do not match the model")));
        }
        // Word log weights do not enter the `rest` part, so any table will do.
        let dummy = vec![0.0; k * self.num_terms];
        let view = LogTopics::new(k, self.num_terms, &dummy)?;
        let total = docs
            .par_iter()
            .enumerate()
            .map(|(d, doc)| {
                let var = DocVariational {
                    gamma: s.gammas[d * k..(d + 1) * k].to_vec(),
                    phi: s.phis[d].clone(),
                };
                doc_bound(view, s.alpha, &doc.counts, &var).rest
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum();
        Ok(total)
    }
}

/// Uncancelled terms of every topic at slice `t`.
pub fn slice_topic_terms(model: &DtmModel, corpus: &SlicedCorpus, t: usize) -> Result<Vec<TopicTerms>> {
    check_slice(model, corpus, t)?;
    let counts = model.expected_counts(corpus, t)?;
    let m = model.num_terms;
    let s = &model.slices[t];
    let (pm, pv) = model.prev_moments(t);
    (0..model.num_topics())
        .map(|k| {
            let r = k * m..(k + 1) * m;
            topic_terms(
                model.hyper.sigma2,
                &pm[r.clone()],
                &pv[r.clone()],
                &s.mean[r.clone()],
                &s.var[r.clone()],
                &counts[r],
                s.zeta[k],
            )
        })
        .collect()
}

fn check_slice(model: &DtmModel, corpus: &SlicedCorpus, t: usize) -> Result<()> {
    if t >= model.num_slices() || t >= corpus.num_slices() {
        return Err(Error::OutOfRange(format!(
            "slice {t} (model has {}, corpus has {})",
            model.num_slices(),
            corpus.num_slices()
        )));
    }
    Ok(())
}

/// Bound contributed by slice `t`: its topic part plus the document part.
pub fn slice_bound(model: &DtmModel, corpus: &SlicedCorpus, t: usize) -> Result<f64> {
    check_slice(model, corpus, t)?;
    let counts = model.expected_counts(corpus, t)?;
    Ok(model.topic_part(t, &counts)? + model.doc_part(corpus, t)?)
}

pub fn total_bound(model: &DtmModel, corpus: &SlicedCorpus) -> Result<f64> {
    if model.num_slices() != corpus.num_slices() {
        return Err(Error::Dimension(format!(
            "model has {} slices, corpus has {}",
            model.num_slices(),
            corpus.num_slices()
        )));
    }
    (0..model.num_slices()).map(|t| slice_bound(model, corpus, t)).sum()
}

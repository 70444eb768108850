//! Variational EM for the dynamic model.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bound::{slice_topic_terms, TopicTerms};
use super::chain::{self, ChainData, ChainOpts};
use super::{DtmHyper, DtmModel, LedgerEntry, SliceState};
use crate::corpus::{SlicedCorpus, TermCounts};
use crate::error::{Error, Result};
use crate::kalman;
use crate::lda::{e_step_doc, fit_lda, LdaConfig, LogTopics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtmConfig {
    pub hyper: DtmHyper,
    pub seed: u64,
    /// Relative change of the total bound that stops EM.
    pub tol: f64,
    pub max_iter: usize,
    pub lda_max_iter: usize,
    pub doc_tol: f64,
    pub doc_max_iter: usize,
    /// Relative change of a topic's bound that ends its M-step.
    pub m_step_tol: f64,
    pub m_step_max_cycles: usize,
    pub newton_iter: usize,
    /// Starting observation variance; `None` means `10 * sigma2`.
    pub init_obs_variance: Option<f64>,
    /// Share one observation variance across the slices of each word chain.
    pub tie_obs_variance: bool,
}

impl DtmConfig {
    pub fn new(num_topics: usize) -> Self {
        DtmConfig {
            hyper: DtmHyper::new(num_topics),
            seed: 0,
            tol: 1e-4,
            max_iter: 50,
            lda_max_iter: 100,
            doc_tol: 1e-6,
            doc_max_iter: 100,
            m_step_tol: 1e-5,
            m_step_max_cycles: 10,
            newton_iter: 10,
            init_obs_variance: None,
            tie_obs_variance: false,
        }
    }

    pub fn init_obs_variance(&self) -> f64 {
        self.init_obs_variance.unwrap_or(10.0 * self.hyper.sigma2)
    }

    pub(crate) fn chain_opts(&self) -> ChainOpts {
        ChainOpts {
            newton_iter: self.newton_iter,
            tie_obs_var: self.tie_obs_variance,
        }
    }
}

impl Default for DtmConfig {
    fn default() -> Self {
        DtmConfig::new(crate::lda::DEFAULT_TOPICS)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub init_secs: f64,
    pub e_step_secs: f64,
    pub m_step_secs: f64,
    pub total_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub iterations: usize,
    pub converged: bool,
    /// Total bound after each EM iteration.
    pub bounds: Vec<f64>,
    pub slice_ledger: Vec<LedgerEntry>,
    /// Uncancelled bound terms per slice and topic.
    pub topic_terms: Vec<Vec<TopicTerms>>,
    pub timings: PhaseTimings,
}

fn slice_alphas(hyper: &DtmHyper, num_slices: usize, seed: u64) -> Vec<f64> {
    if !hyper.alpha_drift {
        return vec![hyper.alpha; num_slices];
    }
    use rand_distr::{Distribution, Normal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a1fa);
    let step = Normal::new(0.0, hyper.delta2.sqrt()).expect("delta2 is validated non-negative");
    let floor = hyper.alpha * 1e-3;
    let mut out = Vec::with_capacity(num_slices);
    let mut a = hyper.alpha;
    for t in 0..num_slices {
        if t > 0 {
            a = (a + step.sample(&mut rng)).max(floor);
        }
        out.push(a);
    }
    out
}

/// Forward-backward every (topic, word) chain from the stored observations and
/// refresh the chain start and `zeta`.
pub(crate) fn smooth_all(model: &mut DtmModel) -> Result<()> {
    let km = model.num_topics() * model.num_terms;
    let n = model.num_slices();
    let data_counts = vec![0.0; n];
    let sigma2 = model.hyper.sigma2;
    let v0 = model.hyper.initial_variance();
    let results: Vec<chain::ChainMoments> = (0..km)
        .into_par_iter()
        .map(|i| {
            let obs: Vec<f64> = model.slices.iter().map(|s| s.obs[i]).collect();
            let obs_var: Vec<f64> = model.slices.iter().map(|s| s.obs_var[i]).collect();
            let data = ChainData {
                sigma2,
                v0,
                counts: &data_counts,
                totals: &data_counts,
                log_zeta: &data_counts,
            };
            let mut mo = chain::ChainMoments {
                filt_mean: vec![0.0; n],
                filt_var: vec![0.0; n],
                mean: vec![0.0; n + 1],
                var: vec![0.0; n + 1],
            };
            chain::moments(&data, &obs, &obs_var, &mut mo);
            mo
        })
        .collect();
    for (i, mo) in results.into_iter().enumerate() {
        store_moments(model, i, &mo);
    }
    for t in 0..n {
        model.refresh_zeta(t)?;
    }
    Ok(())
}

fn store_moments(model: &mut DtmModel, i: usize, mo: &chain::ChainMoments) {
    model.initial_mean[i] = mo.mean[0];
    model.initial_var[i] = mo.var[0];
    for (t, s) in model.slices.iter_mut().enumerate() {
        s.filt_mean[i] = mo.filt_mean[t];
        s.filt_var[i] = mo.filt_var[t];
        s.mean[i] = mo.mean[t + 1];
        s.var[i] = mo.var[t + 1];
    }
}

fn check_corpus(corpus: &SlicedCorpus, num_terms: usize) -> Result<()> {
    if corpus.num_slices() == 0 || corpus.num_docs() == 0 {
        return Err(Error::EmptyCorpus("the corpus has no documents".into()));
    }
    for d in &corpus.documents {
        for &(w, _) in &d.counts {
            if w >= num_terms {
                return Err(Error::UnknownTerm(w));
            }
        }
    }
    Ok(())
}

/// Initialise from a single LDA fit on the pooled corpus: every slice observes the
/// LDA log topics, and documents start from their LDA variational parameters.
pub fn init_dtm(corpus: &SlicedCorpus, num_terms: usize, cfg: &DtmConfig) -> Result<DtmModel> {
    cfg.hyper.validate()?;
    check_corpus(corpus, num_terms)?;
    let k = cfg.hyper.num_topics;
    let docs: Vec<TermCounts> = corpus.documents.iter().map(|d| d.counts.clone()).collect();
    let lda = fit_lda(
        &docs,
        num_terms,
        &LdaConfig {
            num_topics: k,
            alpha: Some(cfg.hyper.alpha),
            seed: cfg.seed,
            tol: cfg.tol,
            max_iter: cfg.lda_max_iter,
            doc_tol: cfg.doc_tol,
            doc_max_iter: cfg.doc_max_iter,
        },
    )?;
    let alphas = slice_alphas(&cfg.hyper, corpus.num_slices(), cfg.seed);
    let km = k * num_terms;
    let slices = corpus
        .slices
        .iter()
        .zip(&alphas)
        .map(|(sl, &alpha)| {
            let vars = &lda.docs[sl.range()];
            SliceState {
                obs: lda.model.log_topics.clone(),
                obs_var: vec![cfg.init_obs_variance(); km],
                filt_mean: vec![0.0; km],
                filt_var: vec![0.0; km],
                mean: vec![0.0; km],
                var: vec![0.0; km],
                zeta: vec![1.0; k],
                alpha,
                gammas: vars.iter().flat_map(|v| v.gamma.iter().copied()).collect(),
                phis: vars.iter().map(|v| v.phi.clone()).collect(),
                ledger: LedgerEntry::default(),
            }
        })
        .collect();
    let mut model = DtmModel {
        hyper: cfg.hyper,
        num_terms,
        initial_mean: vec![0.0; km],
        initial_var: vec![0.0; km],
        slices,
    };
    smooth_all(&mut model)?;
    for t in 0..model.num_slices() {
        update_ledger(&mut model, corpus, t)?;
    }
    Ok(model)
}

pub(crate) fn update_ledger(model: &mut DtmModel, corpus: &SlicedCorpus, t: usize) -> Result<()> {
    let counts = model.expected_counts(corpus, t)?;
    let entry = LedgerEntry {
        doc_bound: model.doc_part(corpus, t)?,
        topic_bound: model.topic_part(t, &counts)?,
    };
    model.slices[t].ledger = entry;
    Ok(())
}

/// Document E-step for slice `t`, warm-started from the stored `gamma`.
pub(crate) fn e_step_slice(model: &mut DtmModel, corpus: &SlicedCorpus, t: usize, cfg: &DtmConfig) -> Result<()> {
    let k = model.num_topics();
    let table = model.e_step_topics(t);
    let view = LogTopics::new(k, model.num_terms, &table)?;
    let s = &model.slices[t];
    let alpha = s.alpha;
    let docs = corpus.slice_docs(t);
    let vars: Vec<_> = docs
        .par_iter()
        .enumerate()
        .map(|(d, doc)| {
            let init = s.gammas.get(d * k..(d + 1) * k);
            e_step_doc(view, alpha, &doc.counts, cfg.doc_tol, cfg.doc_max_iter, init)
        })
        .collect();
    let s = &mut model.slices[t];
    s.gammas = vars.iter().flat_map(|v| v.gamma.iter().copied()).collect();
    s.phis = vars.into_iter().map(|v| v.phi).collect();
    Ok(())
}

/// Topic M-step: per-word chain optimisation with `zeta` fixed, then closed-form
/// `zeta`, repeated per topic until its bound settles.
pub(crate) fn m_step(model: &mut DtmModel, counts: &[Vec<f64>], cfg: &DtmConfig) -> Result<()> {
    let m = model.num_terms;
    let n = model.num_slices();
    let sigma2 = model.hyper.sigma2;
    let v0 = model.hyper.initial_variance();
    let opts = cfg.chain_opts();
    for k in 0..model.num_topics() {
        let totals: Vec<f64> = counts.iter().map(|c| c[k * m..(k + 1) * m].iter().sum()).collect();
        let mut prev = topic_bound_over_slices(model, counts, k)?;
        for _ in 0..cfg.m_step_max_cycles.max(1) {
            let log_zeta: Vec<f64> = model.slices.iter().map(|s| s.zeta[k].ln()).collect();
            let model_ref = &*model;
            let results: Vec<(Vec<f64>, Vec<f64>, chain::ChainMoments)> = (0..m)
                .into_par_iter()
                .map(|w| {
                    let i = k * m + w;
                    let mut obs: Vec<f64> = model_ref.slices.iter().map(|s| s.obs[i]).collect();
                    let mut obs_var: Vec<f64> = model_ref.slices.iter().map(|s| s.obs_var[i]).collect();
                    let word_counts: Vec<f64> = counts.iter().map(|c| c[i]).collect();
                    let data = ChainData {
                        sigma2,
                        v0,
                        counts: &word_counts,
                        totals: &totals,
                        log_zeta: &log_zeta,
                    };
                    let (mo, _) = chain::optimize(&data, &mut obs, &mut obs_var, opts);
                    (obs, obs_var, mo)
                })
                .collect();
            for (w, (obs, obs_var, mo)) in results.into_iter().enumerate() {
                let i = k * m + w;
                for t in 0..n {
                    model.slices[t].obs[i] = obs[t];
                    model.slices[t].obs_var[i] = obs_var[t];
                }
                store_moments(model, i, &mo);
            }
            for s in model.slices.iter_mut() {
                s.zeta[k] = kalman::zeta(&s.mean[k * m..(k + 1) * m], &s.var[k * m..(k + 1) * m])?;
            }
            let b = topic_bound_over_slices(model, counts, k)?;
            let done = ((b - prev) / prev.abs().max(1e-300)).abs() < cfg.m_step_tol;
            prev = b;
            if done {
                break;
            }
        }
    }
    Ok(())
}

fn topic_bound_over_slices(model: &DtmModel, counts: &[Vec<f64>], k: usize) -> Result<f64> {
    let m = model.num_terms;
    let mut total = 0.0;
    for t in 0..model.num_slices() {
        let (pm, pv) = model.prev_moments(t);
        let s = &model.slices[t];
        let r = k * m..(k + 1) * m;
        total += super::topic_bound(
            model.hyper.sigma2,
            &pm[r.clone()],
            &pv[r.clone()],
            &s.mean[r.clone()],
            &s.var[r.clone()],
            &counts[t][r],
            s.zeta[k].ln(),
        )?;
    }
    Ok(total)
}

/// Fit the dynamic model to a sliced corpus over `num_terms` words.
pub fn fit(corpus: &SlicedCorpus, num_terms: usize, cfg: &DtmConfig) -> Result<(DtmModel, FitReport)> {
    let start = Instant::now();
    let mut model = init_dtm(corpus, num_terms, cfg)?;
    let mut timings = PhaseTimings {
        init_secs: start.elapsed().as_secs_f64(),
        ..Default::default()
    };
    let mut bounds = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..cfg.max_iter {
        iterations += 1;
        let t0 = Instant::now();
        for t in 0..model.num_slices() {
            e_step_slice(&mut model, corpus, t, cfg)?;
        }
        let counts: Vec<Vec<f64>> = (0..model.num_slices())
            .map(|t| model.expected_counts(corpus, t))
            .collect::<Result<_>>()?;
        timings.e_step_secs += t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        m_step(&mut model, &counts, cfg)?;
        timings.m_step_secs += t1.elapsed().as_secs_f64();
        let mut b = 0.0;
        for t in 0..model.num_slices() {
            update_ledger(&mut model, corpus, t)?;
            b += model.slices[t].ledger.doc_bound + model.slices[t].ledger.topic_bound;
        }
        let done = bounds
            .last()
            .map(|&p: &f64| ((b - p) / p).abs() < cfg.tol)
            .unwrap_or(false);
        bounds.push(b);
        if done {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("dynamic model did not converge in {} iterations", cfg.max_iter);
    }
    timings.total_secs = start.elapsed().as_secs_f64();
    let topic_terms = (0..model.num_slices())
        .map(|t| slice_topic_terms(&model, corpus, t))
        .collect::<Result<_>>()?;
    let report = FitReport {
        iterations,
        converged,
        bounds,
        slice_ledger: model.slices.iter().map(|s| s.ledger).collect(),
        topic_terms,
        timings,
    };
    Ok((model, report))
}

//! Sequential update: absorb a new batch of documents as one more slice while
//! leaving the earlier slices untouched.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::jensen_shannon;
use crate::corpus::{Document, SlicedCorpus, TermCounts};
use crate::dtm::fit::{e_step_slice, update_ledger};
use crate::dtm::{softmax, DtmConfig, DtmModel, SliceState};
use crate::error::{Error, Result};
use crate::kalman;
use crate::lda::{fit_lda, LdaConfig};

/// Smallest vocabulary for which a bottom decile is meaningful.
pub const MIN_TAIL_VOCABULARY: usize = 100;

const OBS_BOUND: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongTail {
    /// Smoothed natural parameter of a tail word.
    pub beta: f64,
    /// Variational observation of a tail word.
    pub beta_hat: f64,
}

/// Bottom decile of topic `k` at the last slice, by probability (ties by id).
pub fn tail_words(model: &DtmModel, k: usize) -> Result<Vec<usize>> {
    let t = model
        .num_slices()
        .checked_sub(1)
        .ok_or_else(|| Error::Invalid("model has no slices".into()))?;
    if model.num_terms < MIN_TAIL_VOCABULARY {
        return Err(Error::Invalid(format!(
            "vocabulary of {} terms is too small for a long tail (need {MIN_TAIL_VOCABULARY}); pass explicit long-tail values instead",
            model.num_terms
        )));
    }
    let means = model.topic_means(t, k)?;
    let mut idx: Vec<usize> = (0..means.len()).collect();
    idx.sort_by(|&a, &b| means[a].total_cmp(&means[b]).then(a.cmp(&b)));
    idx.truncate(means.len() / 10);
    Ok(idx)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median smoothed mean and observation over the pooled bottom deciles of every topic.
pub fn long_tail(model: &DtmModel) -> Result<LongTail> {
    let m = model.num_terms;
    let t = model.num_slices().saturating_sub(1);
    let mut betas = Vec::new();
    let mut hats = Vec::new();
    for k in 0..model.num_topics() {
        for w in tail_words(model, k)? {
            betas.push(model.slices[t].mean[k * m + w]);
            hats.push(model.slices[t].obs[k * m + w]);
        }
    }
    let lt = LongTail {
        beta: median(betas),
        beta_hat: median(hats),
    };
    if !lt.beta.is_finite() || !lt.beta_hat.is_finite() {
        return Err(Error::Invalid("long-tail values are not finite".into()));
    }
    Ok(lt)
}

/// Values of one tail word of one topic, both chosen at random.
pub fn sample_tail<R: Rng>(model: &DtmModel, rng: &mut R) -> Result<LongTail> {
    let k = rng.gen_range(0..model.num_topics());
    let words = tail_words(model, k)?;
    let w = words[rng.gen_range(0..words.len())];
    let t = model.num_slices() - 1;
    let i = k * model.num_terms + w;
    Ok(LongTail {
        beta: model.slices[t].mean[i],
        beta_hat: model.slices[t].obs[i],
    })
}

fn widen(v: &[f64], k: usize, m: usize, q: usize, fill: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(k * (m + q));
    for row in v.chunks(m) {
        out.extend_from_slice(row);
        out.extend(std::iter::repeat(fill).take(q));
    }
    out
}

/// Append `new_terms` words to every slice and topic, set to the long-tail values.
/// Existing entries keep their values; `zeta` is refreshed for every slice.
pub fn extend_vocabulary(model: &mut DtmModel, new_terms: usize, tail: LongTail, obs_var: f64) -> Result<()> {
    if new_terms == 0 {
        return Ok(());
    }
    if !(obs_var > 0.0) {
        return Err(Error::Invalid("observation variance must be positive".into()));
    }
    let (k, m, q) = (model.num_topics(), model.num_terms, new_terms);
    let sigma2 = model.hyper.sigma2;
    let v0 = model.hyper.initial_variance();
    let n = model.num_slices();
    // Variances of a chain with constant observation variance do not depend on the
    // observations.
    let mut fm = vec![0.0; n];
    let mut fv = vec![0.0; n];
    kalman::filter_into(&vec![0.0; n], &vec![obs_var; n], sigma2, 0.0, v0, &mut fm, &mut fv);
    let mut sm = vec![0.0; n];
    let mut sv = vec![0.0; n];
    kalman::smooth_into(&fm, &fv, sigma2, &mut sm, &mut sv);
    let (m0, v0s) = kalman::smooth_initial(0.0, v0, sigma2, tail.beta, sv[0]);

    model.initial_mean = widen(&model.initial_mean, k, m, q, m0);
    model.initial_var = widen(&model.initial_var, k, m, q, v0s);
    for (t, s) in model.slices.iter_mut().enumerate() {
        s.obs = widen(&s.obs, k, m, q, tail.beta_hat);
        s.obs_var = widen(&s.obs_var, k, m, q, obs_var);
        s.filt_mean = widen(&s.filt_mean, k, m, q, tail.beta);
        s.filt_var = widen(&s.filt_var, k, m, q, fv[t]);
        s.mean = widen(&s.mean, k, m, q, tail.beta);
        s.var = widen(&s.var, k, m, q, sv[t]);
    }
    model.num_terms = m + q;
    for t in 0..n {
        model.refresh_zeta(t)?;
    }
    Ok(())
}

/// Minimum-cost perfect matching on a square cost matrix. Returns `assign` with row
/// `i` matched to column `assign[i]`.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Vec<usize>> {
    let n = cost.len();
    if cost.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension("cost matrix must be square".into()));
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::Invalid("costs must be finite".into()));
    }
    // Potentials formulation with 1-based sentinel column 0.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    Ok(assign)
}

/// New documents for the next slice. Term ids below `num_terms + new_terms` are valid,
/// where the last `new_terms` ids are words first seen in this batch.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateBatch {
    pub documents: Vec<Document>,
    pub new_terms: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateTimings {
    pub lda_secs: f64,
    pub update_secs: f64,
    pub total_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateReport {
    pub new_documents: usize,
    pub new_terms: usize,
    pub long_tail: LongTail,
    /// `alignment[j]` is the model topic given to batch topic `j`.
    pub alignment: Vec<usize>,
    /// Bound of the new slice after each restricted EM iteration.
    pub bounds: Vec<f64>,
    /// Stored bounds of earlier slices plus the new slice's bound.
    pub global_bound: f64,
    pub iterations: usize,
    pub converged: bool,
    pub timings: UpdateTimings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Update {
    pub model: DtmModel,
    pub corpus: SlicedCorpus,
    pub report: UpdateReport,
}

/// Per-word inputs for the last two slices of a chain.
struct Pair {
    sigma2: f64,
    /// Filtered moments of the previous slice.
    m: f64,
    v: f64,
    count: f64,
    total: f64,
    log_zeta: f64,
}

impl Pair {
    fn ext(&self, obs: f64, obs_var: f64) -> kalman::Extension {
        kalman::extend_unchecked(self.m, self.v, obs, obs_var, self.sigma2)
    }

    /// Word share of the new slice's topic bound, with the previous slice's smoothed
    /// moments as they follow from the one-step backward pass.
    fn objective(&self, e: &kalman::Extension) -> f64 {
        let s2 = self.sigma2;
        let d = e.new_mean - e.prev_smoothed_mean;
        self.count * e.new_mean - self.total * (e.new_mean + 0.5 * e.new_variance - self.log_zeta).exp()
            - d * d / (2.0 * s2)
            - e.new_variance / s2
            + (e.prev_smoothed_variance - e.new_variance) / (2.0 * s2)
            + 0.5 * e.new_variance.ln()
    }

    fn optimize(&self, obs: &mut f64, obs_var: &mut f64, newton_iter: usize) -> kalman::Extension {
        let mut e = self.ext(*obs, *obs_var);
        let mut f = self.objective(&e);
        for round in 0..2 {
            // Newton in the observation; smoothed means are affine in it.
            for _ in 0..newton_iter {
                let p = self.v + self.sigma2;
                let a = p / (p + *obs_var);
                let b = self.v / p * a;
                let ex = self.total * (e.new_mean + 0.5 * e.new_variance - self.log_zeta).exp();
                let g = (self.count - ex) * a - (e.new_mean - e.prev_smoothed_mean) * (a - b) / self.sigma2;
                let h = -ex * a * a - (a - b) * (a - b) / self.sigma2;
                if !(h < 0.0) {
                    break;
                }
                let step = (-g / h).clamp(-5.0, 5.0);
                let mut s = 1.0;
                let mut moved = false;
                for _ in 0..30 {
                    let cand = (*obs + s * step).clamp(-OBS_BOUND, OBS_BOUND);
                    let ec = self.ext(cand, *obs_var);
                    let fc = self.objective(&ec);
                    if fc > f {
                        moved = fc - f > 1e-12 * f.abs().max(1.0);
                        *obs = cand;
                        e = ec;
                        f = fc;
                        break;
                    }
                    s *= 0.5;
                }
                if !moved {
                    break;
                }
            }
            if round == 1 {
                break;
            }
            let before = f;
            for factor in [2.0, 0.5] {
                loop {
                    let cand = (*obs_var * factor).clamp(1e-8, 1e4);
                    if cand == *obs_var {
                        break;
                    }
                    let ec = self.ext(*obs, cand);
                    let fc = self.objective(&ec);
                    if fc > f {
                        *obs_var = cand;
                        e = ec;
                        f = fc;
                    } else {
                        break;
                    }
                }
            }
            if f == before {
                break;
            }
        }
        e
    }
}

/// Bound of the last slice (topic part plus document part).
fn last_slice_bound(model: &DtmModel, corpus: &SlicedCorpus) -> Result<f64> {
    crate::dtm::slice_bound(model, corpus, model.num_slices() - 1)
}

/// Fit a new batch as slice `T + 1`. Slices before `T` are not modified; slice `T`
/// only has its smoothed moments, `zeta` and ledger entry refreshed by the one-step
/// backward pass.
pub fn sequential_update(
    model: &DtmModel,
    corpus: &SlicedCorpus,
    batch: &UpdateBatch,
    cfg: &DtmConfig,
    tail_override: Option<LongTail>,
) -> Result<Update> {
    let start = Instant::now();
    if model.num_slices() != corpus.num_slices() || model.num_slices() == 0 {
        return Err(Error::Dimension("model and corpus slices differ".into()));
    }
    if batch.documents.is_empty() {
        return Err(Error::EmptyCorpus("empty update batch".into()));
    }
    let new_m = model.num_terms + batch.new_terms;
    for d in &batch.documents {
        if let Some(&(w, _)) = d.counts.iter().find(|&&(w, _)| w >= new_m) {
            return Err(Error::UnknownTerm(w));
        }
    }
    let mut corpus = corpus.clone();
    corpus.push_batch(batch.documents.clone())?;
    let tail = match tail_override {
        Some(t) => t,
        None => long_tail(model)?,
    };
    let mut model = model.clone();
    extend_vocabulary(&mut model, batch.new_terms, tail, cfg.init_obs_variance())?;

    let k = model.num_topics();
    let m = model.num_terms;
    let prev = model.num_slices() - 1;
    let new = prev + 1;
    let docs: Vec<TermCounts> = corpus.slice_docs(new).iter().map(|d| d.counts.clone()).collect();

    // Static LDA on the batch, aligned to the topics of the previous slice.
    let t_lda = Instant::now();
    let lda = fit_lda(
        &docs,
        m,
        &LdaConfig {
            num_topics: k,
            alpha: Some(model.slices[prev].alpha),
            seed: cfg.seed,
            tol: cfg.tol,
            max_iter: cfg.lda_max_iter,
            doc_tol: cfg.doc_tol,
            doc_max_iter: cfg.doc_max_iter,
        },
    )?;
    let lda_secs = t_lda.elapsed().as_secs_f64();
    let old_topics: Vec<Vec<f64>> = (0..k).map(|j| model.topic_word_dist(prev, j)).collect::<Result<_>>()?;
    let cost: Vec<Vec<f64>> = (0..k)
        .map(|b| {
            let p = lda.model.topic_probs(b);
            old_topics.iter().map(|q| jensen_shannon(&p, q)).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let alignment = hungarian(&cost)?;
    let mut seen = vec![false; m];
    for d in &docs {
        for &(w, _) in d {
            seen[w] = true;
        }
    }
    let mut obs = vec![tail.beta_hat; k * m];
    for (b, &target) in alignment.iter().enumerate() {
        for w in 0..m {
            if seen[w] {
                obs[target * m + w] = lda.model.log_topics[b * m + w];
            }
        }
    }
    let mut inverse = vec![0; k];
    for (b, &target) in alignment.iter().enumerate() {
        inverse[target] = b;
    }
    let gammas: Vec<f64> = lda
        .docs
        .iter()
        .flat_map(|v| inverse.iter().map(|&b| v.gamma[b]).collect::<Vec<_>>())
        .collect();
    let phis: Vec<Vec<f64>> = lda
        .docs
        .iter()
        .map(|v| {
            v.phi
                .chunks(k)
                .flat_map(|row| inverse.iter().map(|&b| row[b]).collect::<Vec<_>>())
                .collect()
        })
        .collect();

    // One-step forward for the new slice, one-step backward for the previous one.
    let obs_var = vec![cfg.init_obs_variance(); k * m];
    let mut state = SliceState {
        obs,
        obs_var,
        filt_mean: vec![0.0; k * m],
        filt_var: vec![0.0; k * m],
        mean: vec![0.0; k * m],
        var: vec![0.0; k * m],
        zeta: vec![1.0; k],
        alpha: model.slices[prev].alpha,
        gammas,
        phis,
        ledger: Default::default(),
    };
    {
        let p = &mut model.slices[prev];
        for i in 0..k * m {
            let e = kalman::one_step_extend(p.filt_mean[i], p.filt_var[i], state.obs[i], state.obs_var[i], model.hyper.sigma2)?;
            state.filt_mean[i] = e.new_mean;
            state.filt_var[i] = e.new_variance;
            state.mean[i] = e.new_mean;
            state.var[i] = e.new_variance;
            p.mean[i] = e.prev_smoothed_mean;
            p.var[i] = e.prev_smoothed_variance;
        }
    }
    model.slices.push(state);
    model.refresh_zeta(new)?;
    model.refresh_zeta(prev)?;

    // Restricted EM on the new slice.
    let mut bounds = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..cfg.max_iter {
        iterations += 1;
        e_step_slice(&mut model, &corpus, new, cfg)?;
        let counts = model.expected_counts(&corpus, new)?;
        m_step_last(&mut model, prev, &counts, cfg)?;
        let b = last_slice_bound(&model, &corpus)?;
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
    model.refresh_zeta(prev)?;
    update_ledger(&mut model, &corpus, prev)?;
    update_ledger(&mut model, &corpus, new)?;
    let global_bound = model
        .slices
        .iter()
        .map(|s| s.ledger.doc_bound + s.ledger.topic_bound)
        .sum();
    let total_secs = start.elapsed().as_secs_f64();
    let report = UpdateReport {
        new_documents: batch.documents.len(),
        new_terms: batch.new_terms,
        long_tail: tail,
        alignment,
        bounds,
        global_bound,
        iterations,
        converged,
        timings: UpdateTimings {
            lda_secs,
            update_secs: total_secs - lda_secs,
            total_secs,
        },
    };
    Ok(Update { model, corpus, report })
}

/// M-step restricted to the last slice: per-word observation and variance updates
/// with `zeta` fixed, then closed-form `zeta`, repeated per topic.
fn m_step_last(model: &mut DtmModel, prev: usize, counts: &[f64], cfg: &DtmConfig) -> Result<()> {
    let m = model.num_terms;
    let new = prev + 1;
    let sigma2 = model.hyper.sigma2;
    for k in 0..model.num_topics() {
        let r = k * m..(k + 1) * m;
        let total: f64 = counts[r.clone()].iter().sum();
        let mut last = f64::NEG_INFINITY;
        for _ in 0..cfg.m_step_max_cycles.max(1) {
            let log_zeta = model.slices[new].zeta[k].ln();
            let (p, s) = (&model.slices[prev], &model.slices[new]);
            let results: Vec<(f64, f64, kalman::Extension)> = r
                .clone()
                .into_par_iter()
                .map(|i| {
                    let pair = Pair {
                        sigma2,
                        m: p.filt_mean[i],
                        v: p.filt_var[i],
                        count: counts[i],
                        total,
                        log_zeta,
                    };
                    let (mut o, mut ov) = (s.obs[i], s.obs_var[i]);
                    let e = pair.optimize(&mut o, &mut ov, cfg.newton_iter);
                    (o, ov, e)
                })
                .collect();
            for (off, (o, ov, e)) in results.into_iter().enumerate() {
                let i = k * m + off;
                let s = &mut model.slices[new];
                s.obs[i] = o;
                s.obs_var[i] = ov;
                s.filt_mean[i] = e.new_mean;
                s.filt_var[i] = e.new_variance;
                s.mean[i] = e.new_mean;
                s.var[i] = e.new_variance;
                let p = &mut model.slices[prev];
                p.mean[i] = e.prev_smoothed_mean;
                p.var[i] = e.prev_smoothed_variance;
            }
            let s = &mut model.slices[new];
            s.zeta[k] = kalman::zeta(&s.mean[r.clone()], &s.var[r.clone()])?;
            let (pm, pv) = (&model.slices[prev].mean, &model.slices[prev].var);
            let s = &model.slices[new];
            let b = crate::dtm::topic_bound(
                sigma2,
                &pm[r.clone()],
                &pv[r.clone()],
                &s.mean[r.clone()],
                &s.var[r.clone()],
                &counts[r.clone()],
                s.zeta[k].ln(),
            )?;
            let done = last.is_finite() && ((b - last) / last.abs().max(1e-300)).abs() < cfg.m_step_tol;
            last = b;
            if done {
                break;
            }
        }
    }
    Ok(())
}

/// Total variation distance between the topic distributions of two slices.
pub fn topic_shift(model: &DtmModel, a: usize, b: usize, k: usize) -> Result<f64> {
    let p = softmax(model.topic_means(a, k)?);
    let q = softmax(model.topic_means(b, k)?);
    Ok(0.5 * p.iter().zip(&q).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Granularity, Slice};
    use crate::dtm::{fit, DtmHyper, LedgerEntry};
    use chrono::{NaiveDate, TimeZone, Utc};
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn brute_force(cost: &[Vec<f64>]) -> f64 {
        fn go(cost: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
            if row == cost.len() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..cost.len() {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost[row][j] + go(cost, row + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        go(cost, 0, &mut vec![false; cost.len()])
    }

    proptest! {
        #[test]
        fn hungarian_matches_enumeration(n in 1usize..7, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cost: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
            let a = hungarian(&cost).unwrap();
            let mut sorted = a.clone();
            sorted.sort();
            prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
            let c: f64 = a.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
            prop_assert!((c - brute_force(&cost)).abs() < 1e-12);
        }
    }

    #[test]
    fn hungarian_finds_the_obvious_permutation() {
        let cost = vec![vec![5.0, 0.0, 5.0], vec![5.0, 5.0, 0.0], vec![0.0, 5.0, 5.0]];
        assert_eq!(hungarian(&cost).unwrap(), vec![1, 2, 0]);
        assert!(hungarian(&[vec![1.0, 2.0]]).is_err());
    }

    fn flat_model(num_terms: usize, tail: f64) -> DtmModel {
        let k = 2;
        let mut mean = vec![0.0; k * num_terms];
        for (i, x) in mean.iter_mut().enumerate() {
            // First half of each topic is the tail.
            *x = if i % num_terms < num_terms / 2 { tail } else { -1.0 - (i % 7) as f64 };
        }
        let s = SliceState {
            obs: mean.iter().map(|x| x - 0.5).collect(),
            obs_var: vec![0.05; k * num_terms],
            filt_mean: mean.clone(),
            filt_var: vec![0.01; k * num_terms],
            mean,
            var: vec![0.01; k * num_terms],
            zeta: vec![1.0; k],
            alpha: 0.5,
            gammas: vec![],
            phis: vec![],
            ledger: LedgerEntry::default(),
        };
        let mut m = DtmModel {
            hyper: DtmHyper::new(k),
            num_terms,
            initial_mean: vec![0.0; k * num_terms],
            initial_var: vec![0.1; k * num_terms],
            slices: vec![s.clone(), s],
        };
        m.refresh_zeta(0).unwrap();
        m.refresh_zeta(1).unwrap();
        m
    }

    #[test]
    fn constant_tail_gives_its_value() {
        let m = flat_model(200, -20.0);
        let lt = long_tail(&m).unwrap();
        assert_eq!(lt.beta, -20.0);
        assert_eq!(lt.beta_hat, -20.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_tail(&m, &mut rng).unwrap().beta, -20.0);
        assert!(long_tail(&flat_model(50, -20.0)).is_err());
    }

    #[test]
    fn extension_appends_tail_columns_only() {
        let before = flat_model(120, -20.0);
        let lt = long_tail(&before).unwrap();
        let mut same = before.clone();
        extend_vocabulary(&mut same, 0, lt, 0.05).unwrap();
        assert_eq!(same, before);

        let mut after = before.clone();
        extend_vocabulary(&mut after, 3, lt, 0.05).unwrap();
        assert_eq!(after.num_terms, 123);
        for t in 0..2 {
            for k in 0..2 {
                let old = &before.slices[t].mean[k * 120..(k + 1) * 120];
                let new = &after.slices[t].mean[k * 123..(k + 1) * 123];
                assert_eq!(&new[..120], old);
                assert_eq!(&new[120..], &[-20.0; 3]);
                let hats = &after.slices[t].obs[k * 123 + 120..(k + 1) * 123];
                assert_eq!(hats, &[lt.beta_hat; 3]);
                assert_eq!(
                    &after.slices[t].obs_var[k * 123..k * 123 + 120],
                    &before.slices[t].obs_var[k * 120..(k + 1) * 120]
                );
            }
        }
        assert!(after.zeta_deviation() < 1e-12);
    }

    /// Stationary corpus over 120 words: two topics on disjoint halves of words 0..100,
    /// words 100..120 unused. Yearly slices from 2001.
    fn stationary(slices: usize, docs: usize, seed: u64) -> SlicedCorpus {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut documents = Vec::new();
        let mut out = Vec::new();
        for t in 0..slices {
            let start = documents.len();
            for d in 0..docs {
                documents.push(stationary_doc(&mut rng, t, d));
            }
            out.push(Slice {
                start,
                end: documents.len(),
                period_start: NaiveDate::from_ymd_opt(2001 + t as i32, 1, 1).unwrap(),
                period_end: NaiveDate::from_ymd_opt(2002 + t as i32, 1, 1).unwrap(),
                empty: false,
            });
        }
        SlicedCorpus {
            documents,
            slices: out,
            granularity: Granularity::Yearly,
        }
    }

    fn stationary_doc(rng: &mut ChaCha8Rng, t: usize, d: usize) -> Document {
        let mix: f64 = rng.gen();
        let mut c = [0u32; 120];
        for _ in 0..50 {
            let base = if rng.gen::<f64>() < mix { 0 } else { 50 };
            // Zipf-like within a topic.
            let r: f64 = rng.gen();
            c[base + ((r * r * 50.0) as usize).min(49)] += 1;
        }
        Document {
            id: format!("{t}-{d}"),
            timestamp: Utc.with_ymd_and_hms(2001 + t as i32, 6, 1, 0, 0, 0).unwrap(),
            counts: c.iter().enumerate().filter(|(_, &n)| n > 0).map(|(w, &n)| (w, n)).collect(),
        }
    }

    #[test]
    fn stationary_update_keeps_topics_and_past_slices() {
        let corpus = stationary(3, 40, 5);
        let cfg = DtmConfig::new(2);
        let (model, _) = fit(&corpus, 120, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let batch = UpdateBatch {
            documents: (0..40).map(|d| stationary_doc(&mut rng, 3, d)).collect(),
            new_terms: 0,
        };
        let up = sequential_update(&model, &corpus, &batch, &cfg, None).unwrap();
        assert_eq!(up.model.num_slices(), 4);
        assert_eq!(up.corpus.num_slices(), 4);
        for k in 0..2 {
            let tv = topic_shift(&up.model, 2, 3, k).unwrap();
            assert!(tv < 0.1, "topic {k}: total variation {tv}");
        }
        for t in 0..2 {
            assert_eq!(up.model.slices[t], model.slices[t]);
        }
        assert_eq!(up.model.initial_mean, model.initial_mean);
        for w in up.report.bounds.windows(2) {
            assert!(w[1] >= w[0] - 1e-6 * w[0].abs(), "{:?}", up.report.bounds);
        }
        assert!(up.model.zeta_deviation() < 1e-12);

        // Wrong period and empty batches are rejected.
        let mut late = batch.clone();
        for d in &mut late.documents {
            d.timestamp = Utc.with_ymd_and_hms(2009, 1, 1, 0, 0, 0).unwrap();
        }
        assert!(sequential_update(&model, &corpus, &late, &cfg, None).is_err());
        let empty = UpdateBatch {
            documents: vec![],
            new_terms: 0,
        };
        assert!(sequential_update(&model, &corpus, &empty, &cfg, None).is_err());
    }

    #[test]
    fn new_words_enter_with_tail_values() {
        let corpus = stationary(2, 30, 8);
        let cfg = DtmConfig::new(2);
        let (model, _) = fit(&corpus, 120, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut documents: Vec<Document> = (0..30).map(|d| stationary_doc(&mut rng, 2, d)).collect();
        documents[0].counts.push((120, 2));
        documents[1].counts.push((121, 1));
        let batch = UpdateBatch {
            documents,
            new_terms: 2,
        };
        let up = sequential_update(&model, &corpus, &batch, &cfg, None).unwrap();
        assert_eq!(up.model.num_terms, 122);
        let m = 122;
        for k in 0..2 {
            assert_eq!(up.model.slices[0].mean[k * m + 120], up.report.long_tail.beta);
            assert_eq!(
                &up.model.slices[0].mean[k * m..k * m + 120],
                &model.slices[0].mean[k * 120..(k + 1) * 120]
            );
        }
        let bad = UpdateBatch {
            documents: vec![stationary_doc(&mut rng, 2, 99)],
            new_terms: 0,
        };
        let mut bad = bad;
        bad.documents[0].counts.push((500, 1));
        assert!(matches!(
            sequential_update(&model, &corpus, &bad, &cfg, None),
            Err(Error::UnknownTerm(500))
        ));
    }

    #[test]
    fn unseen_words_share_one_tail_value_per_topic() {
        // Words 100..120 never occur, so within a topic their chains are identical.
        let corpus = stationary(3, 40, 9);
        let (model, _) = fit(&corpus, 120, &DtmConfig::new(2)).unwrap();
        let t = 2;
        for k in 0..2 {
            let means = model.topic_means(t, k).unwrap();
            let tail = tail_words(&model, k).unwrap();
            assert!(tail.iter().all(|&w| w >= 100));
            for &w in &tail {
                assert!((means[w] - means[tail[0]]).abs() < 1e-10);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lt = long_tail(&model).unwrap();
        let draw = sample_tail(&model, &mut rng).unwrap();
        assert!(draw.beta.is_finite() && lt.beta < -5.0);
    }
}

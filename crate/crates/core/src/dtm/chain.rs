//! Per-word optimisation of the variational observations of one topic chain.
//!
//! With `zeta` held fixed the topic bound separates over words. For one word the
//! objective is a function of the smoothed means and variances of its chain, which
//! in turn are produced by the Kalman smoother from the observations. Smoothed means
//! are linear in the observations for fixed observation variances, so Newton steps
//! are taken in observation space through that linear map. Observation variances are
//! tuned by a multiplicative search. Every accepted move increases the objective.

use crate::kalman;

/// Box on observations; keeps never-seen words from drifting without limit.
pub(crate) const OBS_BOUND: f64 = 30.0;
const OBS_VAR_MIN: f64 = 1e-8;
const OBS_VAR_MAX: f64 = 1e4;
const MAX_STEP: f64 = 5.0;

/// Inputs of one word chain, indexed by slice.
pub(crate) struct ChainData<'a> {
    pub sigma2: f64,
    pub v0: f64,
    pub counts: &'a [f64],
    pub totals: &'a [f64],
    pub log_zeta: &'a [f64],
}

#[derive(Clone, Copy)]
pub(crate) struct ChainOpts {
    pub newton_iter: usize,
    pub tie_obs_var: bool,
}

/// Moments of a word chain; `mean[0]`/`var[0]` is the chain start.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ChainMoments {
    pub filt_mean: Vec<f64>,
    pub filt_var: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl ChainMoments {
    fn new(n: usize) -> Self {
        ChainMoments {
            filt_mean: vec![0.0; n],
            filt_var: vec![0.0; n],
            mean: vec![0.0; n + 1],
            var: vec![0.0; n + 1],
        }
    }
}

pub(crate) fn moments(data: &ChainData<'_>, obs: &[f64], obs_var: &[f64], out: &mut ChainMoments) {
    let n = obs.len();
    kalman::filter_into(obs, obs_var, data.sigma2, 0.0, data.v0, &mut out.filt_mean, &mut out.filt_var);
    kalman::smooth_into(&out.filt_mean, &out.filt_var, data.sigma2, &mut out.mean[1..], &mut out.var[1..]);
    let (m0, v0) = kalman::smooth_initial(0.0, data.v0, data.sigma2, out.mean[1], out.var[1]);
    out.mean[0] = m0;
    out.var[0] = v0;
    debug_assert_eq!(out.mean.len(), n + 1);
}

/// The word's share of the topic bound summed over slices.
pub(crate) fn objective(data: &ChainData<'_>, mo: &ChainMoments) -> f64 {
    let s2 = data.sigma2;
    let mut f = 0.0;
    for t in 1..mo.mean.len() {
        let (m, v) = (mo.mean[t], mo.var[t]);
        let (pm, pv) = (mo.mean[t - 1], mo.var[t - 1]);
        let d = m - pm;
        f += data.counts[t - 1] * m - data.totals[t - 1] * (m + 0.5 * v - data.log_zeta[t - 1]).exp()
            - d * d / (2.0 * s2)
            - v / s2
            + (pv - v) / (2.0 * s2)
            + 0.5 * v.ln();
    }
    f
}

fn evaluate(data: &ChainData<'_>, obs: &[f64], obs_var: &[f64], mo: &mut ChainMoments) -> f64 {
    moments(data, obs, obs_var, mo);
    objective(data, mo)
}

/// Columns of the linear map from observations to smoothed means (start slot included).
fn smoother_map(data: &ChainData<'_>, obs_var: &[f64], scratch: &mut ChainMoments) -> Vec<Vec<f64>> {
    let n = obs_var.len();
    let mut unit = vec![0.0; n];
    let mut cols = Vec::with_capacity(n);
    for s in 0..n {
        unit[s] = 1.0;
        moments(data, &unit, obs_var, scratch);
        cols.push(scratch.mean.clone());
        unit[s] = 0.0;
    }
    cols
}

/// Solve `a x = b` for a symmetric positive definite `a` (row-major, `n x n`).
fn cholesky_solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for p in 0..j {
                s -= l[i * n + p] * l[j * n + p];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for p in 0..i {
            s -= l[i * n + p] * y[p];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for p in i + 1..n {
            s -= l[p * n + i] * x[p];
        }
        x[i] = s / l[i * n + i];
    }
    Some(x)
}

/// Projected Newton ascent on the observations with variances fixed.
fn newton(
    data: &ChainData<'_>,
    obs: &mut [f64],
    obs_var: &[f64],
    mut f: f64,
    iters: usize,
    mo: &mut ChainMoments,
    trial: &mut ChainMoments,
) -> f64 {
    let n = obs.len();
    let s2 = data.sigma2;
    let cols = smoother_map(data, obs_var, trial);
    for _ in 0..iters {
        moments(data, obs, obs_var, mo);
        // Gradient and (tridiagonal) Hessian with respect to the smoothed means.
        let slots = n + 1;
        let mut g = vec![0.0; slots];
        let mut diag = vec![0.0; slots];
        for t in 1..slots {
            let d = (mo.mean[t] - mo.mean[t - 1]) / s2;
            let e = data.totals[t - 1] * (mo.mean[t] + 0.5 * mo.var[t] - data.log_zeta[t - 1]).exp();
            g[t] += data.counts[t - 1] - e - d;
            g[t - 1] += d;
            diag[t] -= e + 1.0 / s2;
            diag[t - 1] -= 1.0 / s2;
        }
        let hv = |x: &[f64]| -> Vec<f64> {
            (0..slots)
                .map(|i| {
                    let mut y = diag[i] * x[i];
                    if i > 0 {
                        y += x[i - 1] / s2;
                    }
                    if i + 1 < slots {
                        y += x[i + 1] / s2;
                    }
                    y
                })
                .collect()
        };
        let grad: Vec<f64> = cols.iter().map(|c| c.iter().zip(&g).map(|(a, b)| a * b).sum()).collect();
        let hcols: Vec<Vec<f64>> = cols.iter().map(|c| hv(c)).collect();
        let mut neg_h = vec![0.0; n * n];
        let mut scale: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let v: f64 = -cols[i].iter().zip(&hcols[j]).map(|(a, b)| a * b).sum::<f64>();
                neg_h[i * n + j] = v;
            }
            scale = scale.max(neg_h[i * n + i].abs());
        }
        let mut lambda = 1e-10 * scale.max(1e-12);
        let mut dir = None;
        for _ in 0..20 {
            let mut a = neg_h.clone();
            for i in 0..n {
                a[i * n + i] += lambda;
            }
            if let Some(x) = cholesky_solve(&a, &grad, n) {
                dir = Some(x);
                break;
            }
            lambda *= 100.0;
        }
        let Some(mut dir) = dir else { break };
        let big = dir.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if big > MAX_STEP {
            for x in &mut dir {
                *x *= MAX_STEP / big;
            }
        }

        let mut step = 1.0;
        let mut cand = vec![0.0; n];
        let mut accepted = false;
        for _ in 0..30 {
            for i in 0..n {
                cand[i] = (obs[i] + step * dir[i]).clamp(-OBS_BOUND, OBS_BOUND);
            }
            let fc = evaluate(data, &cand, obs_var, trial);
            if fc > f {
                obs.copy_from_slice(&cand);
                let gain = fc - f;
                f = fc;
                accepted = gain > 1e-12 * f.abs().max(1.0);
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    f
}

/// Multiplicative search over observation variances.
fn tune_obs_var(
    data: &ChainData<'_>,
    obs: &[f64],
    obs_var: &mut [f64],
    mut f: f64,
    tied: bool,
    trial: &mut ChainMoments,
) -> f64 {
    let n = obs_var.len();
    let groups: Vec<Vec<usize>> = if tied { vec![(0..n).collect()] } else { (0..n).map(|t| vec![t]).collect() };
    let mut cand = obs_var.to_vec();
    for group in groups {
        for factor in [2.0, 0.5] {
            loop {
                let mut moved = false;
                for &t in &group {
                    let v = (obs_var[t] * factor).clamp(OBS_VAR_MIN, OBS_VAR_MAX);
                    moved |= v != obs_var[t];
                    cand[t] = v;
                }
                if !moved {
                    break;
                }
                let fc = evaluate(data, obs, &cand, trial);
                if fc > f {
                    f = fc;
                    obs_var.copy_from_slice(&cand);
                } else {
                    cand.copy_from_slice(obs_var);
                    break;
                }
            }
        }
    }
    f
}

/// Improve `obs` and `obs_var` in place and return the final moments and objective.
pub(crate) fn optimize(
    data: &ChainData<'_>,
    obs: &mut [f64],
    obs_var: &mut [f64],
    opts: ChainOpts,
) -> (ChainMoments, f64) {
    let n = obs.len();
    let mut mo = ChainMoments::new(n);
    let mut trial = ChainMoments::new(n);
    let f0 = evaluate(data, obs, obs_var, &mut mo);
    let f1 = newton(data, obs, obs_var, f0, opts.newton_iter, &mut mo, &mut trial);
    let f2 = tune_obs_var(data, obs, obs_var, f1, opts.tie_obs_var, &mut trial);
    let f3 = if f2 > f1 {
        newton(data, obs, obs_var, f2, opts.newton_iter, &mut mo, &mut trial)
    } else {
        f2
    };
    let f = evaluate(data, obs, obs_var, &mut mo);
    debug_assert!((f - f3).abs() <= 1e-9 * f.abs().max(1.0));
    (mo, f)
}

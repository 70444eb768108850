//! Scalar random-walk state-space smoothing for one (topic, word) chain.
//!
//! The latent natural parameter evolves as `b_t = b_{t-1} + N(0, sigma2)` with a
//! prior `b_0 ~ N(m0, v0)`, and each slice contributes a Gaussian pseudo-observation
//! `obs_t ~ N(b_t, obs_var_t)`. Forward filtering gives `m_t = E[b_t | obs_{1:t}]`,
//! backward (RTS) smoothing gives `m~_t = E[b_t | obs_{1:T}]`.

use crate::error::{Error, Result};

/// Multiplier on the process variance used for the prior variance of the chain start.
pub const INITIAL_VARIANCE_SCALE: f64 = 1e3;

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub observations: Vec<f64>,
    pub observation_variances: Vec<f64>,
    pub process_variance: f64,
    pub initial_mean: f64,
    pub initial_variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Filtered {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedChain {
    pub filtered_mean: Vec<f64>,
    pub filtered_variance: Vec<f64>,
    pub smoothed_mean: Vec<f64>,
    pub smoothed_variance: Vec<f64>,
}

/// Result of absorbing one extra slice at the end of an already smoothed chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extension {
    /// Filtered mean and variance of the new slice; these are also its smoothed values.
    pub new_mean: f64,
    pub new_variance: f64,
    /// Re-smoothed mean and variance of the previous last slice.
    pub prev_smoothed_mean: f64,
    pub prev_smoothed_variance: f64,
}

impl Chain {
    /// Chain with the default prior `m0 = 0`, `v0 = sigma2 * 1e3`.
    pub fn new(observations: Vec<f64>, observation_variances: Vec<f64>, process_variance: f64) -> Self {
        Chain {
            observations,
            observation_variances,
            process_variance,
            initial_mean: 0.0,
            initial_variance: process_variance * INITIAL_VARIANCE_SCALE,
        }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.observations.is_empty() {
            return Err(Error::Invalid("chain needs at least one slice".into()));
        }
        if self.observations.len() != self.observation_variances.len() {
            return Err(Error::Dimension(format!(
                "{} observations but {} observation variances",
                self.observations.len(),
                self.observation_variances.len()
            )));
        }
        check_positive("process variance", self.process_variance)?;
        check_positive("initial variance", self.initial_variance)?;
        for &v in &self.observation_variances {
            check_positive("observation variance", v)?;
        }
        if !self.initial_mean.is_finite() || self.observations.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("non-finite chain observation".into()));
        }
        Ok(())
    }
}

fn check_positive(what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("{what} must be positive and finite, got {v}")))
    }
}

/// Forward filter into caller-provided buffers. No validation.
#[inline]
pub fn filter_into(
    obs: &[f64],
    obs_var: &[f64],
    sigma2: f64,
    m0: f64,
    v0: f64,
    mean: &mut [f64],
    var: &mut [f64],
) {
    let mut m = m0;
    let mut v = v0;
    for t in 0..obs.len() {
        let p = v + sigma2;
        let gain = p / (p + obs_var[t]);
        m += gain * (obs[t] - m);
        v = (1.0 - gain) * p;
        mean[t] = m;
        var[t] = v;
    }
}

/// RTS backward pass into caller-provided buffers. No validation.
#[inline]
pub fn smooth_into(
    filt_mean: &[f64],
    filt_var: &[f64],
    sigma2: f64,
    sm_mean: &mut [f64],
    sm_var: &mut [f64],
) {
    let n = filt_mean.len();
    if n == 0 {
        return;
    }
    sm_mean[n - 1] = filt_mean[n - 1];
    sm_var[n - 1] = filt_var[n - 1];
    for t in (0..n - 1).rev() {
        let (m, v) = backward_step(filt_mean[t], filt_var[t], sigma2, sm_mean[t + 1], sm_var[t + 1]);
        sm_mean[t] = m;
        sm_var[t] = v;
    }
}

/// One RTS step: smoothed moments at `t` from filtered moments at `t` and smoothed at `t+1`.
#[inline]
pub fn backward_step(m: f64, v: f64, sigma2: f64, next_sm_mean: f64, next_sm_var: f64) -> (f64, f64) {
    let p = v + sigma2;
    let j = v / p;
    (m + j * (next_sm_mean - m), v + j * j * (next_sm_var - p))
}

/// Smoothed moments of the chain-start state `b_0` given the smoothed first slice.
#[inline]
pub fn smooth_initial(m0: f64, v0: f64, sigma2: f64, first_sm_mean: f64, first_sm_var: f64) -> (f64, f64) {
    backward_step(m0, v0, sigma2, first_sm_mean, first_sm_var)
}

pub fn forward(chain: &Chain) -> Result<Filtered> {
    chain.validate()?;
    let n = chain.len();
    let mut mean = vec![0.0; n];
    let mut variance = vec![0.0; n];
    filter_into(
        &chain.observations,
        &chain.observation_variances,
        chain.process_variance,
        chain.initial_mean,
        chain.initial_variance,
        &mut mean,
        &mut variance,
    );
    Ok(Filtered { mean, variance })
}

pub fn backward(chain: &Chain, filtered: &Filtered) -> Result<SmoothedChain> {
    check_positive("process variance", chain.process_variance)?;
    if filtered.mean.len() != chain.len() || filtered.variance.len() != chain.len() {
        return Err(Error::Dimension(format!(
            "chain has {} slices, filtered state has {}/{}",
            chain.len(),
            filtered.mean.len(),
            filtered.variance.len()
        )));
    }
    let n = chain.len();
    let mut smoothed_mean = vec![0.0; n];
    let mut smoothed_variance = vec![0.0; n];
    smooth_into(
        &filtered.mean,
        &filtered.variance,
        chain.process_variance,
        &mut smoothed_mean,
        &mut smoothed_variance,
    );
    Ok(SmoothedChain {
        filtered_mean: filtered.mean.clone(),
        filtered_variance: filtered.variance.clone(),
        smoothed_mean,
        smoothed_variance,
    })
}

/// Forward filter followed by backward smoothing.
pub fn smooth(chain: &Chain) -> Result<SmoothedChain> {
    let filtered = forward(chain)?;
    backward(chain, &filtered)
}

/// Extend a chain by one slice using only the last filtered state: one forward step
/// for the new slice and one backward step for the old last slice.
pub fn one_step_extend(
    last_filtered_mean: f64,
    last_filtered_variance: f64,
    observation: f64,
    observation_variance: f64,
    process_variance: f64,
) -> Result<Extension> {
    check_positive("process variance", process_variance)?;
    check_positive("observation variance", observation_variance)?;
    check_positive("filtered variance", last_filtered_variance)?;
    if !observation.is_finite() || !last_filtered_mean.is_finite() {
        return Err(Error::Invalid("non-finite chain value".into()));
    }
    Ok(extend_unchecked(
        last_filtered_mean,
        last_filtered_variance,
        observation,
        observation_variance,
        process_variance,
    ))
}

#[inline]
pub(crate) fn extend_unchecked(m: f64, v: f64, obs: f64, obs_var: f64, sigma2: f64) -> Extension {
    let p = v + sigma2;
    let gain = p / (p + obs_var);
    let new_mean = m + gain * (obs - m);
    let new_variance = (1.0 - gain) * p;
    let (prev_smoothed_mean, prev_smoothed_variance) = backward_step(m, v, sigma2, new_mean, new_variance);
    Extension {
        new_mean,
        new_variance,
        prev_smoothed_mean,
        prev_smoothed_variance,
    }
}

impl SmoothedChain {
    /// Apply [`one_step_extend`] to this chain, returning the chain over `T + 1` slices.
    /// Slices before the old last one keep their previous smoothed values.
    pub fn extend(&self, observation: f64, observation_variance: f64, process_variance: f64) -> Result<SmoothedChain> {
        let last = self
            .filtered_mean
            .len()
            .checked_sub(1)
            .ok_or_else(|| Error::Invalid("no prior chain to extend".into()))?;
        let ext = one_step_extend(
            self.filtered_mean[last],
            self.filtered_variance[last],
            observation,
            observation_variance,
            process_variance,
        )?;
        let mut out = self.clone();
        out.filtered_mean.push(ext.new_mean);
        out.filtered_variance.push(ext.new_variance);
        out.smoothed_mean[last] = ext.prev_smoothed_mean;
        out.smoothed_variance[last] = ext.prev_smoothed_variance;
        out.smoothed_mean.push(ext.new_mean);
        out.smoothed_variance.push(ext.new_variance);
        Ok(out)
    }
}

/// `zeta = sum_w exp(mean_w + var_w / 2)`, evaluated with a max shift.
pub fn zeta(smoothed_mean: &[f64], smoothed_variance: &[f64]) -> Result<f64> {
    let lz = log_zeta(smoothed_mean, smoothed_variance)?;
    let z = lz.exp();
    if !z.is_finite() {
        return Err(Error::Overflow(format!("zeta overflows f64 (log zeta = {lz})")));
    }
    Ok(z)
}

/// Natural log of [`zeta`]; stays finite when `zeta` itself would overflow.
pub fn log_zeta(smoothed_mean: &[f64], smoothed_variance: &[f64]) -> Result<f64> {
    if smoothed_mean.len() != smoothed_variance.len() {
        return Err(Error::Dimension(format!(
            "{} means but {} variances",
            smoothed_mean.len(),
            smoothed_variance.len()
        )));
    }
    if smoothed_mean.is_empty() {
        return Err(Error::Invalid("zeta over an empty vocabulary".into()));
    }
    let shift = smoothed_mean
        .iter()
        .zip(smoothed_variance)
        .map(|(m, v)| m + 0.5 * v)
        .fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::Overflow("non-finite exponent in zeta".into()));
    }
    let sum: f64 = smoothed_mean
        .iter()
        .zip(smoothed_variance)
        .map(|(m, v)| (m + 0.5 * v - shift).exp())
        .sum();
    Ok(shift + sum.ln())
}

//! One-dimensional Gaussian mixtures fitted by expectation-maximization.
//!
//! Densities are evaluated in log space and normalized with log-sum-exp.
//! The E-step runs over fixed-size chunks in parallel and the per-chunk
//! partial sums are reduced in chunk order, so a fit is bit-identical no
//! matter how many worker threads are available.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantile::{percentile_sorted, sorted_copy};
use crate::rng;

/// Lower bound on every component variance.
pub const VARIANCE_FLOOR: f64 = 1e-8;

/// A component whose total responsibility falls below this is considered collapsed.
pub const MIN_COMPONENT_MASS: f64 = 1e-12;

const CHUNK: usize = 1 << 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    /// Stop when the relative log-likelihood change drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Fit on a seeded random subset when there are more values than this.
    pub subsample_cap: Option<usize>,
    pub subsample_seed: u64,
    pub variance_floor: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 500,
            subsample_cap: Some(2_000_000),
            subsample_seed: 0,
            variance_floor: VARIANCE_FLOOR,
        }
    }
}

/// Fitted mixture, components sorted by ascending mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub k: usize,
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
}

impl GmmParams {
    /// Builds a mixture from explicit parameters. Components are sorted by
    /// (mean, variance); the log-likelihood is left at 0.
    pub fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        let mut p = Self {
            k: weights.len(),
            weights,
            means,
            variances,
            log_likelihood: 0.0,
            iterations: 0,
        };
        p.validate()?;
        p.sort_components();
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k;
        if k == 0 || self.weights.len() != k || self.means.len() != k || self.variances.len() != k {
            return Err(Error::InvalidArgument(format!(
                "mixture with k={k} has {} weights, {} means, {} variances",
                self.weights.len(),
                self.means.len(),
                self.variances.len()
            )));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument("weights must be finite and >= 0".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
        }
        if self.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument("means must be finite".into()));
        }
        if self.variances.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidArgument("variances must be finite and > 0".into()));
        }
        Ok(())
    }

    pub fn std_dev(&self, component: usize) -> f64 {
        self.variances[component].sqrt()
    }

    /// Index of the component with the largest posterior for `v`.
    pub fn classify(&self, v: f64) -> usize {
        let terms = LogTerms::new(&self.weights, &self.means, &self.variances);
        let mut buf = vec![0.0; self.k];
        terms.posterior(v, &mut buf);
        argmax(&buf)
    }

    fn sort_components(&mut self) {
        let mut order: Vec<usize> = (0..self.k).collect();
        order.sort_by(|&a, &b| {
            self.means[a]
                .total_cmp(&self.means[b])
                .then(self.variances[a].total_cmp(&self.variances[b]))
        });
        self.weights = order.iter().map(|&i| self.weights[i]).collect();
        self.means = order.iter().map(|&i| self.means[i]).collect();
        self.variances = order.iter().map(|&i| self.variances[i]).collect();
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Per-component constants for evaluating `ln(pi_k N(v | mu_k, var_k))`.
#[derive(Debug, Clone)]
pub(crate) struct LogTerms {
    offset: Vec<f64>,
    mean: Vec<f64>,
    half_inv_var: Vec<f64>,
}

impl LogTerms {
    pub(crate) fn new(weights: &[f64], means: &[f64], variances: &[f64]) -> Self {
        let offset = weights
            .iter()
            .zip(variances)
            .map(|(&w, &var)| w.ln() - 0.5 * (2.0 * PI * var).ln())
            .collect();
        Self {
            offset,
            mean: means.to_vec(),
            half_inv_var: variances.iter().map(|&v| 0.5 / v).collect(),
        }
    }

    pub(crate) fn from_params(p: &GmmParams) -> Self {
        Self::new(&p.weights, &p.means, &p.variances)
    }

    /// Writes normalized responsibilities into `out` and returns the log mixture density.
    #[inline]
    pub(crate) fn posterior(&self, v: f64, out: &mut [f64]) -> f64 {
        let mut max = f64::NEG_INFINITY;
        for (j, o) in out.iter_mut().enumerate() {
            let d = v - self.mean[j];
            *o = self.offset[j] - d * d * self.half_inv_var[j];
            max = max.max(*o);
        }
        if max == f64::NEG_INFINITY {
            // every component has zero weight or underflowed to -inf; split evenly
            let share = 1.0 / out.len() as f64;
            out.iter_mut().for_each(|o| *o = share);
            return f64::NEG_INFINITY;
        }
        let mut sum = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            sum += *o;
        }
        for o in out.iter_mut() {
            *o /= sum;
        }
        max + sum.ln()
    }
}

/// Posterior responsibilities, one row of `k` entries per value.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    k: usize,
    data: Vec<f64>,
}

impl Responsibilities {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_rows(&self) -> usize {
        self.data.len() / self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.k)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}

pub fn responsibilities(params: &GmmParams, values: &[f64]) -> Responsibilities {
    let terms = LogTerms::from_params(params);
    let k = params.k;
    let mut data = vec![0.0; values.len() * k];
    data.par_chunks_mut(CHUNK * k)
        .zip(values.par_chunks(CHUNK))
        .for_each(|(r, vs)| {
            for (row, &v) in r.chunks_exact_mut(k).zip(vs) {
                terms.posterior(v, row);
            }
        });
    Responsibilities { k, data }
}

/// Total log-likelihood `sum_r ln sum_k pi_k N(v_r | mu_k, var_k)`.
pub fn log_likelihood(params: &GmmParams, values: &[f64]) -> f64 {
    let terms = LogTerms::from_params(params);
    let k = params.k;
    let partial: Vec<f64> = values
        .par_chunks(CHUNK)
        .map(|vs| {
            let mut buf = vec![0.0; k];
            vs.iter().map(|&v| terms.posterior(v, &mut buf)).sum::<f64>()
        })
        .collect();
    partial.iter().sum()
}

/// Fits a `k`-component mixture by EM.
pub fn fit_em(values: &[f64], k: usize, cfg: &EmConfig) -> Result<GmmParams> {
    fit_em_traced(values, k, cfg).map(|(p, _)| p)
}

/// Like [`fit_em`], also returning the log-likelihood evaluated before every
/// M-step and at the final parameters.
pub fn fit_em_traced(values: &[f64], k: usize, cfg: &EmConfig) -> Result<(GmmParams, Vec<f64>)> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if !(cfg.tol >= 0.0) || cfg.max_iter == 0 || !(cfg.variance_floor > 0.0) {
        return Err(Error::InvalidArgument(format!("invalid EM config {cfg:?}")));
    }
    if values.len() < 10 * k {
        return Err(Error::InsufficientData(format!(
            "{} values for {k} components; need at least {}",
            values.len(),
            10 * k
        )));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("value {i} is not finite")));
    }

    let owned;
    let values = match cfg.subsample_cap {
        Some(cap) if cap < values.len() => {
            if cap < 10 * k {
                return Err(Error::InvalidArgument(format!(
                    "subsample cap {cap} is below the {} values needed",
                    10 * k
                )));
            }
            owned = subsample(values, cap, cfg.subsample_seed);
            owned.as_slice()
        }
        _ => values,
    };

    let mut state = initialize(values, k, cfg.variance_floor);
    let mut resp = vec![0.0; values.len() * k];
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iter {
        let (ll, mass, weighted_sum) = e_step(&state, values, &mut resp);
        if let Some(&prev) = trace.last() {
            let prev: f64 = prev;
            if (ll - prev).abs() <= cfg.tol * prev.abs() {
                trace.push(ll);
                converged = true;
                break;
            }
        }
        trace.push(ll);
        state = m_step(values, &resp, &mass, &weighted_sum, cfg.variance_floor)?;
        iterations += 1;
    }

    let final_ll = if converged {
        *trace.last().expect("trace is non-empty after convergence")
    } else {
        let ll = e_step(&state, values, &mut resp).0;
        trace.push(ll);
        ll
    };

    let mut params = GmmParams {
        k,
        weights: state.weights,
        means: state.means,
        variances: state.variances,
        log_likelihood: final_ll,
        iterations,
    };
    params.sort_components();
    Ok((params, trace))
}

fn subsample(values: &[f64], cap: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed);
    let mut idx = rand::seq::index::sample(&mut r, values.len(), cap).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| values[i]).collect()
}

struct State {
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
}

/// Means at equally spaced quantiles, variances at `var(values) / k^2`, uniform weights.
fn initialize(values: &[f64], k: usize, floor: f64) -> State {
    let sorted = sorted_copy(values);
    let means = (1..=k)
        .map(|j| percentile_sorted(&sorted, 100.0 * j as f64 / (k + 1) as f64))
        .collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let init_var = (var / (k * k) as f64).max(floor);
    State {
        weights: vec![1.0 / k as f64; k],
        means,
        variances: vec![init_var; k],
    }
}

/// Fills `resp` and returns (log-likelihood, per-component mass, per-component weighted sum).
fn e_step(state: &State, values: &[f64], resp: &mut [f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let k = state.means.len();
    let terms = LogTerms::new(&state.weights, &state.means, &state.variances);
    let partials: Vec<(f64, Vec<f64>, Vec<f64>)> = resp
        .par_chunks_mut(CHUNK * k)
        .zip(values.par_chunks(CHUNK))
        .map(|(r, vs)| {
            let mut ll = 0.0;
            let mut mass = vec![0.0; k];
            let mut sum = vec![0.0; k];
            for (row, &v) in r.chunks_exact_mut(k).zip(vs) {
                ll += terms.posterior(v, row);
                for j in 0..k {
                    mass[j] += row[j];
                    sum[j] += row[j] * v;
                }
            }
            (ll, mass, sum)
        })
        .collect();

    let mut ll = 0.0;
    let mut mass = vec![0.0; k];
    let mut sum = vec![0.0; k];
    for (l, m, s) in partials {
        ll += l;
        for j in 0..k {
            mass[j] += m[j];
            sum[j] += s[j];
        }
    }
    (ll, mass, sum)
}

fn m_step(values: &[f64], resp: &[f64], mass: &[f64], weighted_sum: &[f64], floor: f64) -> Result<State> {
    let k = mass.len();
    if let Some((component, &m)) = mass.iter().enumerate().find(|(_, &m)| !(m >= MIN_COMPONENT_MASS)) {
        return Err(Error::DegenerateComponent { component, mass: m });
    }
    let means: Vec<f64> = weighted_sum.iter().zip(mass).map(|(s, m)| s / m).collect();

    let partials: Vec<Vec<f64>> = resp
        .par_chunks(CHUNK * k)
        .zip(values.par_chunks(CHUNK))
        .map(|(r, vs)| {
            let mut sq = vec![0.0; k];
            for (row, &v) in r.chunks_exact(k).zip(vs) {
                for j in 0..k {
                    let d = v - means[j];
                    sq[j] += row[j] * d * d;
                }
            }
            sq
        })
        .collect();
    let mut sq = vec![0.0; k];
    for p in partials {
        for j in 0..k {
            sq[j] += p[j];
        }
    }

    // summed mass equals n up to rounding; dividing by it keeps sum(weights) == 1
    let total: f64 = mass.iter().sum();
    Ok(State {
        weights: mass.iter().map(|m| m / total).collect(),
        means,
        variances: sq.iter().zip(mass).map(|(s, m)| (s / m).max(floor)).collect(),
    })
}

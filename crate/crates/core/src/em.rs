//! Expectation-maximization learning of the prior scale `tau`, the slab
//! mean and variance, and the AWGN noise variance.
//!
//! The weights `w_j` are treated as known structure. Each EM step runs GAMP to
//! convergence and then maximizes the expected complete-data log-likelihood
//! using the per-entry posteriors implied by the final pseudo-measurements
//! `(r_j, s)`.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::channels::{input_support_prob, slab_posterior};
use crate::engine::{gamp_run, GampResult};
use crate::model::{AwgnOutputChannel, GampConfig, ProblemInstance, WeightedBGPrior};
use crate::{Error, Result};

/// Floor on the learned slab variance.
pub const THETA_VAR_FLOOR: f64 = 1e-12;
/// Floor on the initial slab variance guess.
pub const INIT_THETA_VAR_FLOOR: f64 = 1e-6;
/// Below this total support probability the slab parameters are left alone.
pub const EMPTY_SUPPORT_MASS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateFlags {
    pub tau: bool,
    pub theta_mean: bool,
    pub theta_var: bool,
    pub noise_var: bool,
}

impl Default for EstimateFlags {
    fn default() -> Self {
        Self::all(true)
    }
}

impl EstimateFlags {
    pub fn all(on: bool) -> Self {
        Self {
            tau: on,
            theta_mean: on,
            theta_var: on,
            noise_var: on,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    pub max_em_iterations: usize,
    /// Stop when the scaled parameter change drops to this value.
    pub em_tol: f64,
    pub init_snr_guess: f64,
    pub estimate: EstimateFlags,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_em_iterations: 100,
            em_tol: 1e-6,
            init_snr_guess: 100.0,
            estimate: EstimateFlags::default(),
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_em_iterations == 0 {
            return Err(Error::InvalidParameter("max_em_iterations must be >= 1".into()));
        }
        if !(self.em_tol.is_finite() && self.em_tol > 0.0) {
            return Err(Error::InvalidParameter("em_tol must be > 0".into()));
        }
        if !(self.init_snr_guess.is_finite() && self.init_snr_guess > 0.0) {
            return Err(Error::InvalidParameter("init_snr_guess must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EmInit {
    pub prior: WeightedBGPrior,
    pub channel: AwgnOutputChannel,
    /// `y` was identically zero; the returned prior is a placeholder.
    pub degenerate_observations: bool,
}

/// Starting point for EM derived from the energy of `y`.
pub fn em_init(problem: &ProblemInstance, weights: &Array1<f64>, config: &EmConfig) -> Result<EmInit> {
    crate::model::validate_problem(problem)?;
    config.validate()?;
    if weights.len() != problem.n() {
        return Err(Error::DimensionMismatch {
            what: "weights",
            expected: problem.n(),
            found: weights.len(),
        });
    }
    let (m, n) = (problem.m() as f64, problem.n() as f64);
    let y_energy = problem.observations_y.dot(&problem.observations_y);
    let noise_var = y_energy / ((config.init_snr_guess + 1.0) * m);

    let weight_sum: f64 = weights.sum();
    let max_w = weights.iter().cloned().fold(0.0, f64::max);
    if weight_sum <= 0.0 {
        return Err(Error::InvalidParameter("weights are all zero".into()));
    }
    let tau = (0.5 * m / weight_sum).min((1.0 - 1e-6) / max_w).min(1.0);
    let active = (weight_sum * tau / n) * problem.frobenius_sq();
    let theta_var = ((y_energy - m * noise_var) / active).max(INIT_THETA_VAR_FLOOR);

    Ok(EmInit {
        prior: WeightedBGPrior::new(weights.clone(), tau, 0.0, theta_var)?,
        channel: AwgnOutputChannel::new(noise_var)?,
        degenerate_observations: y_energy == 0.0,
    })
}

#[derive(Debug, Clone)]
pub struct EmUpdate {
    pub prior: WeightedBGPrior,
    pub channel: AwgnOutputChannel,
    /// Total posterior support mass was below [`EMPTY_SUPPORT_MASS`]; the
    /// prior parameters were passed through unchanged.
    pub empty_support: bool,
}

/// Per-entry posterior statistics used by the M-step.
#[derive(Debug, Clone)]
pub struct EntryPosteriors {
    pub support: Array1<f64>,
    pub slab_mean: Array1<f64>,
    pub slab_var: Array1<f64>,
}

pub fn entry_posteriors(prior: &WeightedBGPrior, r: &Array1<f64>, s: f64) -> Result<EntryPosteriors> {
    let n = prior.n();
    let mut support = Array1::zeros(n);
    let mut slab_mean = Array1::zeros(n);
    let mut slab_var = Array1::zeros(n);
    for j in 0..n {
        support[j] = input_support_prob(
            r[j],
            s,
            prior.weights()[j],
            prior.tau(),
            prior.theta_mean(),
            prior.theta_var(),
        )?;
        let (g, v) = slab_posterior(r[j], s, prior.theta_mean(), prior.theta_var());
        slab_mean[j] = g;
        slab_var[j] = v;
    }
    Ok(EntryPosteriors {
        support,
        slab_mean,
        slab_var,
    })
}

/// Maximizer over `tau` of `sum_j pi_j ln(w_j tau) + (1 - pi_j) ln(1 - w_j tau)`.
///
/// Unit weights use the closed form `mean(pi)`; otherwise the concave
/// objective is maximized by Newton steps safeguarded with bisection on
/// `(0, 1 / max w]`.
pub fn update_tau(weights: &Array1<f64>, support: &Array1<f64>) -> f64 {
    if weights.iter().all(|&w| w == 1.0) {
        return support.mean().unwrap_or(0.0);
    }
    let active: Vec<(f64, f64)> = weights
        .iter()
        .zip(support.iter())
        .filter(|(w, _)| **w > 0.0)
        .map(|(&w, &p)| (w, p))
        .collect();
    let max_w = active.iter().map(|(w, _)| *w).fold(0.0, f64::max);
    if active.is_empty() || active.iter().all(|(_, p)| *p == 0.0) {
        return 0.0;
    }
    let upper = (1.0 / max_w).min(1.0);
    let derivs = |tau: f64| {
        let mut g = 0.0;
        let mut h = 0.0;
        for &(w, p) in &active {
            if p > 0.0 {
                g += p / tau;
                h -= p / (tau * tau);
            }
            if p < 1.0 {
                let rest = 1.0 - w * tau;
                g -= (1.0 - p) * w / rest;
                h -= (1.0 - p) * w * w / (rest * rest);
            }
        }
        (g, h)
    };

    let (mut lo, mut hi) = (0.0, upper);
    let total: f64 = active.iter().map(|(_, p)| p).sum();
    let weight_total: f64 = active.iter().map(|(w, _)| w).sum();
    let mut tau = (total / weight_total).clamp(0.5 * upper * 1e-12, 0.5 * upper);
    for _ in 0..200 {
        let (g, h) = derivs(tau);
        if !g.is_finite() {
            // Only reachable at the upper end where some 1 - w tau vanishes.
            hi = tau;
        } else if g > 0.0 {
            lo = tau;
        } else {
            hi = tau;
        }
        let newton = tau - g / h;
        let next = if g.is_finite() && h < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - tau).abs() <= 1e-15 * tau.max(1e-300) || hi - lo <= 1e-16 {
            tau = next;
            break;
        }
        tau = next;
    }
    tau.clamp(0.0, upper)
}

/// One M-step from a finished GAMP run.
pub fn em_update(
    problem: &ProblemInstance,
    prior: &WeightedBGPrior,
    channel: &AwgnOutputChannel,
    gamp_result: &GampResult,
    flags: &EstimateFlags,
) -> Result<EmUpdate> {
    let state = &gamp_result.final_state;
    if state.iteration == 0 {
        return Err(Error::InvalidParameter(
            "EM update needs a GAMP result with at least one iteration".into(),
        ));
    }
    let post = entry_posteriors(prior, &state.r, state.s)?;
    let mass: f64 = post.support.sum();
    let empty_support = mass < EMPTY_SUPPORT_MASS;

    let (mut tau, mut mean, mut var) = (prior.tau(), prior.theta_mean(), prior.theta_var());
    if !empty_support {
        if flags.tau {
            tau = update_tau(prior.weights(), &post.support);
        }
        if flags.theta_mean {
            mean = post.support.dot(&post.slab_mean) / mass;
        }
        if flags.theta_var {
            let spread: f64 = post
                .support
                .iter()
                .zip(post.slab_mean.iter().zip(post.slab_var.iter()))
                .map(|(p, (g, v))| p * (v + (g - mean) * (g - mean)))
                .sum();
            var = (spread / mass).max(THETA_VAR_FLOOR);
        }
    }

    let mut noise_var = channel.noise_var();
    if flags.noise_var {
        let m = problem.m() as f64;
        noise_var = problem
            .observations_y
            .iter()
            .zip(state.z_mean.iter().zip(state.z_var.iter()))
            .map(|(y, (z, zv))| (y - z) * (y - z) + zv)
            .sum::<f64>()
            / m;
    }

    Ok(EmUpdate {
        prior: prior.with_params(tau, mean, var)?,
        channel: AwgnOutputChannel::new(noise_var)?,
        empty_support,
    })
}

#[derive(Debug, Clone)]
pub struct EmRunResult {
    pub gamp: GampResult,
    pub prior: WeightedBGPrior,
    pub channel: AwgnOutputChannel,
    pub em_iterations: usize,
    /// GAMP iterations summed over all EM steps.
    pub total_gamp_iterations: usize,
    pub converged: bool,
    pub degenerate_observations: bool,
    pub empty_support: bool,
}

/// Scaled parameter change between two EM iterates. The slab mean is measured
/// against the slab standard deviation and the noise variance against the
/// per-measurement energy of `y`, so parameters heading to zero do not stall
/// the stop test.
fn parameter_change(
    old: (&WeightedBGPrior, &AwgnOutputChannel),
    new: (&WeightedBGPrior, &AwgnOutputChannel),
    y_power: f64,
) -> f64 {
    let rel = |a: f64, b: f64, scale: f64| {
        if a == b {
            0.0
        } else {
            (a - b).abs() / scale.max(1e-300)
        }
    };
    let (p0, c0) = old;
    let (p1, c1) = new;
    [
        rel(p0.tau(), p1.tau(), p0.tau().max(p1.tau())),
        rel(p0.theta_mean(), p1.theta_mean(), p0.theta_var().sqrt()),
        rel(p0.theta_var(), p1.theta_var(), p0.theta_var().max(p1.theta_var())),
        rel(c0.noise_var(), c1.noise_var(), c0.noise_var().max(y_power)),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// EM from the [`em_init`] starting point.
pub fn em_run(
    problem: &ProblemInstance,
    weights: &Array1<f64>,
    em_config: &EmConfig,
    gamp_config: &GampConfig,
) -> Result<EmRunResult> {
    let init = em_init(problem, weights, em_config)?;
    let mut out = em_run_from(problem, init.prior, init.channel, em_config, gamp_config)?;
    out.degenerate_observations = init.degenerate_observations;
    Ok(out)
}

/// EM from explicit starting parameters.
pub fn em_run_from(
    problem: &ProblemInstance,
    prior: WeightedBGPrior,
    channel: AwgnOutputChannel,
    em_config: &EmConfig,
    gamp_config: &GampConfig,
) -> Result<EmRunResult> {
    em_config.validate()?;
    let y_power = problem.observations_y.dot(&problem.observations_y) / problem.m() as f64;
    let (mut prior, mut channel) = (prior, channel);
    let mut total_gamp_iterations = 0;
    let mut empty_support = false;
    let mut converged = false;
    let mut em_iterations = 0;
    let mut last = None;

    while em_iterations < em_config.max_em_iterations {
        em_iterations += 1;
        let result = gamp_run(problem, &prior, &channel, gamp_config)?;
        total_gamp_iterations += result.iterations_used;
        if result.diagnostic.is_some() || result.iterations_used == 0 {
            last = Some(result);
            break;
        }
        let update = em_update(problem, &prior, &channel, &result, &em_config.estimate)?;
        empty_support |= update.empty_support;
        let change = parameter_change((&prior, &channel), (&update.prior, &update.channel), y_power);
        prior = update.prior;
        channel = update.channel;
        last = Some(result);
        if change <= em_config.em_tol {
            converged = true;
            break;
        }
    }

    Ok(EmRunResult {
        gamp: last.expect("at least one EM iteration runs"),
        prior,
        channel,
        em_iterations,
        total_gamp_iterations,
        converged,
        degenerate_observations: false,
        empty_support,
    })
}

//! Scalar MMSE channel functions.
//!
//! The input channel is the weighted Bernoulli-Gauss posterior of one entry
//! `x_j` observed through the Gaussian pseudo-measurement `r_j = x_j + N(0, s)`.
//! The output channel is the AWGN posterior of `z_l` given `y_l`, with
//! pseudo-prior `z_l ~ N(o_l, v)`.

mod oracle;

use std::f64::consts::PI;

use ndarray::Array1;

use crate::model::{AwgnOutputChannel, WeightedBGPrior};
use crate::{Error, Result};

pub use oracle::{gauss_legendre, oracle_input_moments, QuadratureSettings};

/// Computed posterior variances in `[-NEGATIVE_VAR_CLAMP, 0)` are clamped to 0.
pub const NEGATIVE_VAR_CLAMP: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputChannelResult {
    pub posterior_mean: f64,
    pub posterior_var: f64,
    /// Posterior probability that the entry is non-zero.
    pub support_prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputChannelResult {
    pub posterior_mean: f64,
    pub posterior_var: f64,
}

/// Separable input prior as seen by the GAMP engine.
pub trait InputChannel {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Prior mean vector and entry-averaged prior variance.
    fn prior_moments(&self) -> (Array1<f64>, f64);

    fn eval(&self, j: usize, r: f64, s: f64) -> Result<InputChannelResult>;
}

/// Separable measurement channel as seen by the GAMP engine.
pub trait OutputChannel {
    fn eval(&self, o: f64, v: f64, y: f64, variance_floor: f64) -> Result<OutputChannelResult>;
}

impl InputChannel for WeightedBGPrior {
    fn len(&self) -> usize {
        self.n()
    }

    fn prior_moments(&self) -> (Array1<f64>, f64) {
        crate::model::prior_moments(self)
    }

    fn eval(&self, j: usize, r: f64, s: f64) -> Result<InputChannelResult> {
        input_channel(r, s, self.weights()[j], self.tau(), self.theta_mean(), self.theta_var())
    }
}

impl OutputChannel for AwgnOutputChannel {
    fn eval(&self, o: f64, v: f64, y: f64, variance_floor: f64) -> Result<OutputChannelResult> {
        output_channel_awgn(o, v, y, self.effective_noise_var(variance_floor))
    }
}

pub(crate) fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (d * d / var + (2.0 * PI * var).ln())
}

fn check_input_domain(r: f64, s: f64, w: f64, tau: f64, theta_mean: f64, theta_var: f64) -> Result<f64> {
    if !(r.is_finite() && theta_mean.is_finite()) {
        return Err(Error::Domain(format!(
            "non-finite input r = {r}, theta_mean = {theta_mean}"
        )));
    }
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::Domain(format!("s = {s} must be finite and > 0")));
    }
    if !(theta_var.is_finite() && theta_var > 0.0) {
        return Err(Error::Domain(format!("theta_var = {theta_var} must be finite and > 0")));
    }
    let p = w * tau;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("w * tau = {p} outside [0, 1]")));
    }
    Ok(p)
}

/// Returns `(pi, 1 - pi)`, each computed without cancellation.
fn support_and_complement(r: f64, s: f64, p: f64, theta_mean: f64, theta_var: f64) -> (f64, f64) {
    if p == 0.0 {
        return (0.0, 1.0);
    }
    if p == 1.0 {
        return (1.0, 0.0);
    }
    let slab = p.ln() + log_normal_pdf(r, theta_mean, s + theta_var);
    let spike = (-p).ln_1p() + log_normal_pdf(r, 0.0, s);
    let gap = spike - slab;
    (logistic(-gap), logistic(gap))
}

/// `1 / (1 + exp(-t))` without overflow.
fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Posterior probability that `x != 0` given `r = x + N(0, s)` under the
/// weighted Bernoulli-Gauss prior.
pub fn input_support_prob(r: f64, s: f64, w: f64, tau: f64, theta_mean: f64, theta_var: f64) -> Result<f64> {
    let p = check_input_domain(r, s, w, tau, theta_mean, theta_var)?;
    Ok(support_and_complement(r, s, p, theta_mean, theta_var).0)
}

/// Posterior mean and variance of one entry under the weighted
/// Bernoulli-Gauss prior.
///
/// With `gamma = (theta_mean / theta_var + r / s) / (1 / theta_var + 1 / s)` and
/// `nu = 1 / (1 / theta_var + 1 / s)` the posterior mean is `pi * gamma` and the
/// variance `pi (nu + gamma^2) - (pi gamma)^2`, evaluated here as
/// `pi nu + pi (1 - pi) gamma^2`.
pub fn input_channel(r: f64, s: f64, w: f64, tau: f64, theta_mean: f64, theta_var: f64) -> Result<InputChannelResult> {
    let p = check_input_domain(r, s, w, tau, theta_mean, theta_var)?;
    let (pi, pi_c) = support_and_complement(r, s, p, theta_mean, theta_var);
    let precision = 1.0 / theta_var + 1.0 / s;
    let nu = 1.0 / precision;
    let gamma = (theta_mean / theta_var + r / s) / precision;
    let var = pi * nu + pi * pi_c * gamma * gamma;
    Ok(InputChannelResult {
        posterior_mean: pi * gamma,
        posterior_var: clamp_variance(var)?,
        support_prob: pi,
    })
}

/// Slab-component posterior `(gamma, nu)`: the mean and variance of `x` given
/// `x != 0`.
pub fn slab_posterior(r: f64, s: f64, theta_mean: f64, theta_var: f64) -> (f64, f64) {
    let precision = 1.0 / theta_var + 1.0 / s;
    ((theta_mean / theta_var + r / s) / precision, 1.0 / precision)
}

pub(crate) fn clamp_variance(var: f64) -> Result<f64> {
    if var >= 0.0 {
        Ok(var)
    } else if var >= -NEGATIVE_VAR_CLAMP {
        Ok(0.0)
    } else {
        Err(Error::NegativeVariance(var))
    }
}

/// AWGN output channel: posterior of `z` given `y = z + N(0, noise_var)` and
/// `z ~ N(o, v)`.
pub fn output_channel_awgn(o: f64, v: f64, y: f64, noise_var: f64) -> Result<OutputChannelResult> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::Domain(format!("v = {v} must be finite and > 0")));
    }
    if !(noise_var.is_finite() && noise_var >= 0.0) {
        return Err(Error::Domain(format!("noise_var = {noise_var} must be >= 0")));
    }
    if !(o.is_finite() && y.is_finite()) {
        return Err(Error::Domain(format!("non-finite input o = {o}, y = {y}")));
    }
    let total = v + noise_var;
    Ok(OutputChannelResult {
        posterior_mean: o + v / total * (y - o),
        posterior_var: v * noise_var / total,
    })
}

//! Quadrature oracle for the weighted Bernoulli-Gauss input channel.
//!
//! The spike contributes an analytic point mass at zero. The slab part,
//! `w tau N(x; theta_mean, theta_var) N(r; x, s)`, is integrated numerically
//! with composite Gauss-Legendre rules in the log domain. Nothing here uses
//! the conjugate closed forms: the peak of the slab integrand is located by
//! golden-section search and the evidence, mean and variance all come out of
//! the quadrature sums.

use super::{clamp_variance, log_normal_pdf, InputChannelResult};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSettings {
    /// Gauss-Legendre order per panel. A second pass runs at twice this order.
    pub order: usize,
    /// Panels per `min(sqrt(s), sqrt(theta_var))`.
    pub panels_per_sigma: usize,
    /// Half-width of the integration window around the peak, in the same unit.
    pub half_width_sigmas: f64,
    /// Relative disagreement between the two orders that counts as lost precision.
    pub consistency_tol: f64,
    /// Largest `|log Z_spike - log Z_slab|` accepted.
    pub max_log_evidence_gap: f64,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self {
            order: 16,
            panels_per_sigma: 2,
            half_width_sigmas: 40.0,
            consistency_tol: 1e-10,
            max_log_evidence_gap: 1e7,
        }
    }
}

/// Nodes and weights of the `order`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let nf = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if order == 0 { 1.0 } else { p1 };
            let p_prev = if order <= 1 { 1.0 } else { p0 };
            dp = nf * (x * p - p_prev) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    (nodes, weights)
}

struct SlabMoments {
    log_evidence: f64,
    mean: f64,
    var: f64,
}

fn log_slab_integrand(x: f64, r: f64, s: f64, theta_mean: f64, theta_var: f64) -> f64 {
    log_normal_pdf(x, theta_mean, theta_var) + log_normal_pdf(r, x, s)
}

/// Maximiser of the (concave) log slab integrand; it lies between
/// `theta_mean` and `r`.
fn locate_peak(r: f64, s: f64, theta_mean: f64, theta_var: f64) -> f64 {
    let f = |x| log_slab_integrand(x, r, s, theta_mean, theta_var);
    let (mut lo, mut hi) = (theta_mean.min(r), theta_mean.max(r));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..200 {
        if hi - lo <= 1e-15 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if fa >= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

fn slab_moments(
    r: f64,
    s: f64,
    theta_mean: f64,
    theta_var: f64,
    order: usize,
    settings: &QuadratureSettings,
) -> SlabMoments {
    let sigma = s.sqrt().min(theta_var.sqrt());
    let peak = locate_peak(r, s, theta_mean, theta_var);
    let lo = peak - settings.half_width_sigmas * sigma;
    let panels = (2.0 * settings.half_width_sigmas * settings.panels_per_sigma as f64).ceil() as usize;
    let width = 2.0 * settings.half_width_sigmas * sigma / panels as f64;
    let (nodes, weights) = gauss_legendre(order);

    let mut xs = Vec::with_capacity(panels * order);
    let mut logs = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let centre = lo + (p as f64 + 0.5) * width;
        for (t, w) in nodes.iter().zip(&weights) {
            let x = centre + 0.5 * width * t;
            xs.push(x);
            logs.push((0.5 * width * w).ln() + log_slab_integrand(x, r, s, theta_mean, theta_var));
        }
    }
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let z: f64 = scaled.iter().sum();
    let mean = xs.iter().zip(&scaled).map(|(x, e)| x * e).sum::<f64>() / z;
    let var = xs
        .iter()
        .zip(&scaled)
        .map(|(x, e)| (x - mean) * (x - mean) * e)
        .sum::<f64>()
        / z;
    SlabMoments {
        log_evidence: top + z.ln(),
        mean,
        var,
    }
}

fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Posterior moments of one entry under the weighted Bernoulli-Gauss prior,
/// computed by numerical integration.
pub fn oracle_input_moments(
    r: f64,
    s: f64,
    w: f64,
    tau: f64,
    theta_mean: f64,
    theta_var: f64,
    settings: &QuadratureSettings,
) -> Result<InputChannelResult> {
    let p = super::check_input_domain(r, s, w, tau, theta_mean, theta_var)?;
    if p == 0.0 {
        return Ok(InputChannelResult {
            posterior_mean: 0.0,
            posterior_var: 0.0,
            support_prob: 0.0,
        });
    }
    let coarse = slab_moments(r, s, theta_mean, theta_var, settings.order, settings);
    let fine = slab_moments(r, s, theta_mean, theta_var, 2 * settings.order, settings);
    for (name, a, b) in [
        ("log evidence", coarse.log_evidence, fine.log_evidence),
        ("slab mean", coarse.mean, fine.mean),
        ("slab variance", coarse.var, fine.var),
    ] {
        if rel_diff(a, b) > settings.consistency_tol && (a - b).abs() > 1e-300 {
            return Err(Error::LossOfPrecision(format!(
                "{name} differs between orders: {a:e} vs {b:e}"
            )));
        }
    }

    let (pi, pi_c) = if p == 1.0 {
        (1.0, 0.0)
    } else {
        let log_slab = p.ln() + fine.log_evidence;
        let log_spike = (-p).ln_1p() + log_normal_pdf(r, 0.0, s);
        let gap = log_spike - log_slab;
        if gap.abs() > settings.max_log_evidence_gap {
            return Err(Error::LossOfPrecision(format!("log-evidence gap {gap:e}")));
        }
        (1.0 / (1.0 + gap.exp()), 1.0 / (1.0 + (-gap).exp()))
    };
    // Law of total variance over the spike/slab mixture.
    let var = pi * fine.var + pi * pi_c * fine.mean * fine.mean;
    Ok(InputChannelResult {
        posterior_mean: pi * fine.mean,
        posterior_var: clamp_variance(var)?,
        support_prob: pi,
    })
}

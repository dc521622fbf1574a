//! Logistic transition fits of binary recovery outcomes.
//!
//! For a fixed `delta` the success probability is modelled as
//! `P(success | rho) = 1 / (1 + exp((rho - rho0) / beta))`, `beta > 0`, and
//! fitted by maximum likelihood on the individual Bernoulli outcomes. The
//! reported band is where the fitted curve crosses 90% and 10% success.

use super::TrialRecord;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSettings {
    /// Smallest `beta` reported for separated data.
    pub beta_floor: f64,
    pub max_iterations: usize,
    /// Newton step size at which the fit counts as converged.
    pub tol: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            beta_floor: 1e-6,
            max_iterations: 200,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionCurve {
    pub delta: f64,
    /// Rho at 50% success.
    pub rho_50: f64,
    /// Rho at 10% success (upper end of the band).
    pub rho_10: f64,
    /// Rho at 90% success (lower end of the band).
    pub rho_90: f64,
    /// False when the data were separated and the midpoint rule was used.
    pub fit_converged: bool,
    pub n_trials: usize,
}

/// `(rho0, beta, proper_mle)` for a set of `(rho, success)` outcomes.
pub fn fit_logistic(points: &[(f64, bool)], settings: &FitSettings) -> Result<(f64, f64, bool)> {
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::DegenerateData("fewer than two distinct rho values".into()));
    }
    let successes = points.iter().filter(|p| p.1).count();
    if successes == 0 || successes == points.len() {
        return Err(Error::DegenerateData(
            "outcomes are constant: no transition in range".into(),
        ));
    }

    let max_success = points
        .iter()
        .filter(|p| p.1)
        .map(|p| p.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let min_failure = points
        .iter()
        .filter(|p| !p.1)
        .map(|p| p.0)
        .fold(f64::INFINITY, f64::min);
    let min_success = points.iter().filter(|p| p.1).map(|p| p.0).fold(f64::INFINITY, f64::min);
    let max_failure = points
        .iter()
        .filter(|p| !p.1)
        .map(|p| p.0)
        .fold(f64::NEG_INFINITY, f64::max);
    if min_success > max_failure {
        return Err(Error::DegenerateData("success increases with rho".into()));
    }
    if max_success <= min_failure {
        // Separated: no finite MLE. Take the midpoint of the last all-success
        // and first all-failure rho.
        let (lo, hi) = if max_success < min_failure {
            (max_success, min_failure)
        } else {
            let t = max_success;
            let below = distinct.iter().rev().find(|&&r| r < t).copied().unwrap_or(t);
            let above = distinct.iter().find(|&&r| r > t).copied().unwrap_or(t);
            (below, above)
        };
        let beta = ((hi - lo) / (2.0 * 9f64.ln())).max(settings.beta_floor);
        return Ok((0.5 * (lo + hi), beta, false));
    }

    let centre = points.iter().map(|p| p.0).sum::<f64>() / points.len() as f64;
    let loglik = |a: f64, b: f64| {
        points
            .iter()
            .map(|&(rho, y)| {
                let eta = a + b * (rho - centre);
                // ln(1 + e^eta) without overflow
                let soft = eta.max(0.0) + (-eta.abs()).exp().ln_1p();
                if y {
                    eta - soft
                } else {
                    -soft
                }
            })
            .sum::<f64>()
    };

    let (mut a, mut b) = (0.0, 0.0);
    let mut current = loglik(a, b);
    let mut converged = false;
    for _ in 0..settings.max_iterations {
        let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(rho, y) in points {
            let x = rho - centre;
            let p = 1.0 / (1.0 + (-(a + b * x)).exp());
            let r = if y { 1.0 } else { 0.0 } - p;
            let w = p * (1.0 - p);
            g0 += r;
            g1 += r * x;
            h00 += w;
            h01 += w * x;
            h11 += w * x * x;
        }
        let det = h00 * h11 - h01 * h01;
        if !(det.is_finite() && det > 0.0) {
            break;
        }
        let da = (h11 * g0 - h01 * g1) / det;
        let db = (h00 * g1 - h01 * g0) / det;
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let next = loglik(a + step * da, b + step * db);
            if next >= current - 1e-12 * current.abs() {
                a += step * da;
                b += step * db;
                current = next;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        if (step * da).abs() <= settings.tol * (1.0 + a.abs()) && (step * db).abs() <= settings.tol * (1.0 + b.abs()) {
            converged = true;
            break;
        }
    }
    if !(b < 0.0 && b.is_finite() && a.is_finite()) {
        return Err(Error::DegenerateData(format!(
            "fitted slope {b} does not describe a decreasing transition"
        )));
    }
    let beta = (-1.0 / b).max(settings.beta_floor);
    Ok((centre - a / b, beta, converged))
}

/// Fits one `delta` column.
pub fn fit_transition(records: &[TrialRecord], settings: &FitSettings) -> Result<TransitionCurve> {
    let delta = records
        .first()
        .ok_or_else(|| Error::DegenerateData("no records".into()))?
        .delta;
    if records.iter().any(|r| r.delta != delta) {
        return Err(Error::InvalidParameter("records span several delta values".into()));
    }
    let points: Vec<(f64, bool)> = records.iter().map(|r| (r.rho, r.success)).collect();
    let (rho0, beta, converged) = fit_logistic(&points, settings)?;
    let band = beta * 9f64.ln();
    Ok(TransitionCurve {
        delta,
        rho_50: rho0,
        rho_10: rho0 + band,
        rho_90: rho0 - band,
        fit_converged: converged,
        n_trials: records.len(),
    })
}

/// Curves for every fittable column, plus the columns that were skipped.
#[derive(Debug, Clone, Default)]
pub struct FitSummary {
    pub curves: Vec<TransitionCurve>,
    pub skipped: Vec<(f64, String)>,
}

/// Fits every `delta` column of a record set.
pub fn fit_all(records: &[TrialRecord], settings: &FitSettings) -> FitSummary {
    let mut sorted = records.to_vec();
    super::sort_records(&mut sorted);
    let mut summary = FitSummary::default();
    for column in sorted.chunk_by(|a, b| a.delta == b.delta) {
        match fit_transition(column, settings) {
            Ok(curve) => summary.curves.push(curve),
            Err(e) => summary.skipped.push((column[0].delta, e.to_string())),
        }
    }
    summary
}

//! Domain types for the linear measurement model `y = A x + e`.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default floor applied to every variance before it is inverted.
pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-12;

/// A linear measurement problem: matrix `A` (m x n), observations `y`
/// and, for synthetic instances, the ground-truth signal.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub matrix_a: Array2<f64>,
    pub observations_y: Array1<f64>,
    pub truth_x: Option<Array1<f64>>,
    /// Noise variance the observations were generated with, if known.
    pub noise_var: Option<f64>,
}

impl ProblemInstance {
    /// Builds and validates an instance.
    pub fn new(matrix_a: Array2<f64>, observations_y: Array1<f64>, truth_x: Option<Array1<f64>>) -> Result<Self> {
        let problem = Self {
            matrix_a,
            observations_y,
            truth_x,
            noise_var: None,
        };
        validate_problem(&problem)?;
        Ok(problem)
    }

    pub fn with_noise_var(mut self, noise_var: f64) -> Self {
        self.noise_var = Some(noise_var);
        self
    }

    /// Number of measurements.
    pub fn m(&self) -> usize {
        self.matrix_a.nrows()
    }

    /// Signal length.
    pub fn n(&self) -> usize {
        self.matrix_a.ncols()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.matrix_a.iter().map(|a| a * a).sum()
    }
}

/// Checks every [`ProblemInstance`] invariant.
pub fn validate_problem(problem: &ProblemInstance) -> Result<()> {
    let (m, n) = problem.matrix_a.dim();
    if m == 0 || n == 0 {
        return Err(Error::InvalidParameter(format!(
            "matrix must be non-empty, got {m} x {n}"
        )));
    }
    if problem.observations_y.len() != m {
        return Err(Error::DimensionMismatch {
            what: "observations_y",
            expected: m,
            found: problem.observations_y.len(),
        });
    }
    if let Some(x) = &problem.truth_x {
        if x.len() != n {
            return Err(Error::DimensionMismatch {
                what: "truth_x",
                expected: n,
                found: x.len(),
            });
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("truth_x"));
        }
    }
    if !problem.matrix_a.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("matrix_a"));
    }
    if !problem.observations_y.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("observations_y"));
    }
    if let Some(nv) = problem.noise_var {
        if !(nv.is_finite() && nv >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise_var must be finite and >= 0, got {nv}"
            )));
        }
    }
    if problem.frobenius_sq() <= 0.0 {
        return Err(Error::ZeroMatrix);
    }
    Ok(())
}

/// Weighted Bernoulli-Gauss prior
/// `p(x_j) = (1 - w_j tau) delta(x_j) + w_j tau N(x_j; theta_mean, theta_var)`.
///
/// All weights equal to one gives the ordinary i.i.d. Bernoulli-Gauss prior.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedBGPrior {
    weights: Array1<f64>,
    tau: f64,
    theta_mean: f64,
    theta_var: f64,
}

impl WeightedBGPrior {
    pub fn new(weights: Array1<f64>, tau: f64, theta_mean: f64, theta_var: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter("weights must be non-empty".into()));
        }
        if let Some((j, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && (0.0..=1.0).contains(*w)))
        {
            return Err(Error::InvalidParameter(format!("weights[{j}] = {w} outside [0, 1]")));
        }
        if !(tau.is_finite() && (0.0..=1.0).contains(&tau)) {
            return Err(Error::InvalidParameter(format!("tau = {tau} outside [0, 1]")));
        }
        if let Some((j, w)) = weights.iter().enumerate().find(|(_, w)| **w * tau > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "weights[{j}] * tau = {} exceeds 1",
                w * tau
            )));
        }
        if !theta_mean.is_finite() {
            return Err(Error::InvalidParameter("theta_mean must be finite".into()));
        }
        if !(theta_var.is_finite() && theta_var > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "theta_var = {theta_var} must be finite and > 0"
            )));
        }
        Ok(Self {
            weights,
            tau,
            theta_mean,
            theta_var,
        })
    }

    /// The i.i.d. Bernoulli-Gauss prior on `n` entries.
    pub fn unweighted(n: usize, tau: f64, theta_mean: f64, theta_var: f64) -> Result<Self> {
        Self::new(Array1::ones(n), tau, theta_mean, theta_var)
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn theta_mean(&self) -> f64 {
        self.theta_mean
    }

    pub fn theta_var(&self) -> f64 {
        self.theta_var
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    /// Prior probability that entry `j` is non-zero.
    pub fn support_prob(&self, j: usize) -> f64 {
        self.weights[j] * self.tau
    }

    pub fn is_unweighted(&self) -> bool {
        self.weights.iter().all(|&w| w == 1.0)
    }

    /// Copy with replaced shared parameters; weights are kept.
    pub fn with_params(&self, tau: f64, theta_mean: f64, theta_var: f64) -> Result<Self> {
        Self::new(self.weights.clone(), tau, theta_mean, theta_var)
    }
}

/// Prior mean vector and entry-averaged prior variance, used to start GAMP.
pub fn prior_moments(prior: &WeightedBGPrior) -> (Array1<f64>, f64) {
    let (tau, mean, var) = (prior.tau, prior.theta_mean, prior.theta_var);
    let second = var + mean * mean;
    let mut total_var = 0.0;
    let means = prior.weights.mapv(|w| {
        let p = w * tau;
        let mu = p * mean;
        total_var += (p * second - mu * mu).max(0.0);
        mu
    });
    (means, total_var / prior.n() as f64)
}

/// Additive white Gaussian noise measurement channel `y = z + e`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AwgnOutputChannel {
    noise_var: f64,
}

impl AwgnOutputChannel {
    pub fn new(noise_var: f64) -> Result<Self> {
        if !(noise_var.is_finite() && noise_var >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise_var = {noise_var} must be finite and >= 0"
            )));
        }
        Ok(Self { noise_var })
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// Noise variance as used inside the channel functions.
    pub fn effective_noise_var(&self, variance_floor: f64) -> f64 {
        self.noise_var.max(variance_floor)
    }
}

/// What a solver run does when its state turns non-finite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergencePolicy {
    /// Return [`Error::Divergence`].
    #[default]
    Error,
    /// Return the last finite state with `converged = false` and a diagnostic.
    Flag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GampConfig {
    pub max_iterations: usize,
    /// Stop when `||x_t - x_{t-1}|| / max(||x_t||, eps) <= convergence_tol`.
    pub convergence_tol: f64,
    pub variance_floor: f64,
    /// Weight of the previous iterate in the (x_mean, x_var) update.
    pub damping: f64,
    pub divergence: DivergencePolicy,
    pub record_history: bool,
}

impl Default for GampConfig {
    fn default() -> Self {
        Self {
            max_iterations: 300,
            convergence_tol: 1e-6,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
            damping: 0.0,
            divergence: DivergencePolicy::Error,
            record_history: false,
        }
    }
}

impl GampConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be >= 1".into()));
        }
        if !(self.convergence_tol.is_finite() && self.convergence_tol > 0.0) {
            return Err(Error::InvalidParameter("convergence_tol must be > 0".into()));
        }
        if !(self.variance_floor.is_finite() && self.variance_floor > 0.0) {
            return Err(Error::InvalidParameter("variance_floor must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::InvalidParameter("damping must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// All quantities of one GAMP iteration `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct GampState {
    pub x_mean: Array1<f64>,
    /// Uniform (entry-averaged) posterior variance of `x`.
    pub x_var: f64,
    pub q: Array1<f64>,
    pub o: Array1<f64>,
    pub v: f64,
    pub s: f64,
    pub r: Array1<f64>,
    pub z_mean: Array1<f64>,
    pub z_var: Array1<f64>,
    pub u: f64,
    pub iteration: usize,
    /// `||A||_F^2`, fixed for the run.
    pub frobenius_sq: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn validate_accepts_well_formed() {
        let a = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        assert!(ProblemInstance::new(a, array![1.0, 2.0], None).is_ok());
    }

    #[test]
    fn validate_rejects_bad_lengths() {
        let a = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let err = ProblemInstance::new(a.clone(), array![1.0, 2.0, 3.0], None).unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                what: "observations_y",
                ..
            }
        ));
        let err = ProblemInstance::new(a, array![1.0, 2.0], Some(array![1.0])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { what: "truth_x", .. }));
    }

    #[test]
    fn validate_rejects_zero_and_non_finite_matrix() {
        let err = ProblemInstance::new(Array2::zeros((2, 3)), array![1.0, 2.0], None).unwrap_err();
        assert!(matches!(err, Error::ZeroMatrix));
        let a = array![[1.0, f64::NAN, 3.0], [4.0, 5.0, 6.0]];
        let err = ProblemInstance::new(a, array![1.0, 2.0], None).unwrap_err();
        assert!(matches!(err, Error::NonFinite("matrix_a")));
    }

    #[test]
    fn prior_rejects_out_of_range() {
        assert!(WeightedBGPrior::new(array![1.2], 0.5, 0.0, 1.0).is_err());
        assert!(WeightedBGPrior::new(array![1.0], -0.1, 0.0, 1.0).is_err());
        assert!(WeightedBGPrior::new(array![1.0], 0.5, 0.0, 0.0).is_err());
        assert!(WeightedBGPrior::new(array![1.0], 0.5, f64::NAN, 1.0).is_err());
        assert!(WeightedBGPrior::new(array![0.0, 1.0], 1.0, 0.0, 1.0).is_ok());
    }

    #[test]
    fn moments_of_pure_spike_and_pure_gaussian() {
        let spike = WeightedBGPrior::new(Array1::zeros(4), 0.7, 3.0, 2.0).unwrap();
        let (mean, var) = prior_moments(&spike);
        assert!(mean.iter().all(|&v| v == 0.0));
        assert_eq!(var, 0.0);

        let gauss = WeightedBGPrior::unweighted(4, 1.0, 0.0, 1.0).unwrap();
        let (mean, var) = prior_moments(&gauss);
        assert!(mean.iter().all(|&v| v == 0.0));
        assert_eq!(var, 1.0);
    }

    #[test]
    fn moments_of_half_sparse_scalar() {
        let prior = WeightedBGPrior::unweighted(1, 0.5, 1.0, 1.0).unwrap();
        let (mean, var) = prior_moments(&prior);
        assert_eq!(mean[0], 0.5);
        assert!((var - 0.75).abs() < 1e-15);
    }

    #[test]
    fn gamp_config_validation() {
        assert!(GampConfig::default().validate().is_ok());
        let bad = GampConfig {
            damping: 1.0,
            ..GampConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = GampConfig {
            max_iterations: 0,
            ..GampConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn awgn_floor() {
        let ch = AwgnOutputChannel::new(0.0).unwrap();
        assert_eq!(ch.effective_noise_var(1e-12), 1e-12);
        assert!(AwgnOutputChannel::new(-1.0).is_err());
    }
}

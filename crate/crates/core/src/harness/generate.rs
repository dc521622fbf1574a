//! Synthetic problem generation: weight profiles, Gaussian measurement
//! matrices, weighted Bernoulli-Gauss signals and per-trial seeds.

use std::path::PathBuf;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::model::ProblemInstance;
use crate::{Error, Result};

/// Sub-stream ids inside one instance seed.
pub const STREAM_MATRIX: u64 = 0;
pub const STREAM_SIGNAL: u64 = 1;
pub const STREAM_NOISE: u64 = 2;

/// Per-entry weight profile of the signal prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightShape {
    /// All ones: the i.i.d. prior.
    Uniform,
    /// `w_j = exp(-25 (j / n - 1/2)^2)`, `j = 0..n`.
    #[serde(alias = "gaussian_eq9")]
    Gaussian,
    /// One weight per line in a text file.
    File(PathBuf),
}

/// Builds the weight vector for a profile.
pub fn make_weights(n: usize, shape: &WeightShape) -> Result<Array1<f64>> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    match shape {
        WeightShape::Uniform => Ok(Array1::ones(n)),
        WeightShape::Gaussian => Ok(Array1::from_shape_fn(n, |j| {
            let u = j as f64 / n as f64 - 0.5;
            (-25.0 * u * u).exp()
        })),
        WeightShape::File(path) => {
            let weights = crate::problem_io::read_vector(path)?;
            if weights.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "weights file",
                    expected: n,
                    found: weights.len(),
                });
            }
            if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
                return Err(Error::InvalidParameter(format!("weight {w} outside [0, 1]")));
            }
            Ok(weights)
        }
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one trial: SplitMix64 chained over
/// `(base_seed, delta_index, rho_index, trial)`.
pub fn trial_seed(base_seed: u64, delta_index: usize, rho_index: usize, trial: usize) -> u64 {
    let mut h = splitmix64(base_seed);
    for part in [delta_index as u64, rho_index as u64, trial as u64] {
        h = splitmix64(h ^ part);
    }
    h
}

/// Independent sub-stream seed for one random object of a trial.
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream.wrapping_add(0xA076_1D64_78BD_642F)))
}

/// `m x n` matrix with i.i.d. `N(0, 1/m)` entries.
pub fn gen_matrix(m: usize, n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (m as f64).sqrt();
    Array2::from_shape_simple_fn((m, n), || {
        let g: f64 = rng.sample(StandardNormal);
        g * scale
    })
}

/// Draws a signal from the weighted Bernoulli-Gauss prior. Returns the
/// signal and its support.
pub fn gen_signal(
    weights: &Array1<f64>,
    tau: f64,
    theta_mean: f64,
    theta_var: f64,
    seed: u64,
) -> Result<(Array1<f64>, Vec<usize>)> {
    if let Some(w) = weights.iter().find(|w| **w * tau > 1.0 || **w * tau < 0.0) {
        return Err(Error::InvalidParameter(format!("w * tau = {} outside [0, 1]", w * tau)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = theta_var.sqrt();
    let mut support = Vec::new();
    let x = Array1::from_iter(weights.iter().enumerate().map(|(j, w)| {
        let active = rng.random::<f64>() < w * tau;
        let g: f64 = rng.sample(StandardNormal);
        if active {
            support.push(j);
            theta_mean + sd * g
        } else {
            0.0
        }
    }));
    Ok((x, support))
}

/// AWGN draw with the given variance.
pub fn gen_noise(m: usize, noise_var: f64, seed: u64) -> Array1<f64> {
    if noise_var == 0.0 {
        return Array1::zeros(m);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = noise_var.sqrt();
    Array1::from_shape_simple_fn(m, || {
        let g: f64 = rng.sample(StandardNormal);
        sd * g
    })
}

/// One synthetic instance `y = A x + e` with `n = weights.len()`, the matrix,
/// signal and noise each drawn from their own sub-stream of `seed`. Returns
/// the problem (truth and noise variance attached) and the signal support.
pub fn gen_instance(
    m: usize,
    weights: &Array1<f64>,
    tau: f64,
    theta_mean: f64,
    theta_var: f64,
    noise_var: f64,
    seed: u64,
) -> Result<(ProblemInstance, Vec<usize>)> {
    let a = gen_matrix(m, weights.len(), stream_seed(seed, STREAM_MATRIX));
    let (x, support) = gen_signal(weights, tau, theta_mean, theta_var, stream_seed(seed, STREAM_SIGNAL))?;
    let y = a.dot(&x) + gen_noise(m, noise_var, stream_seed(seed, STREAM_NOISE));
    let problem = ProblemInstance::new(a, y, Some(x))?.with_noise_var(noise_var);
    Ok((problem, support))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauCalibration {
    pub tau: f64,
    /// `max_j w_j tau` would have exceeded one; the mean support size is
    /// below the requested `k`.
    pub clamped: bool,
}

/// `tau = k / sum_j w_j`, clamped so that `max_j w_j tau <= 1`.
pub fn calibrate_tau(k: usize, weights: &Array1<f64>) -> Result<TauCalibration> {
    if k > weights.len() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} exceeds n = {}",
            weights.len()
        )));
    }
    if k == 0 {
        return Ok(TauCalibration {
            tau: 0.0,
            clamped: false,
        });
    }
    let sum: f64 = weights.sum();
    let max_w = weights.iter().cloned().fold(0.0, f64::max);
    if sum <= 0.0 {
        return Err(Error::InfeasibleSparsity {
            target: k,
            reachable: 0.0,
        });
    }
    let tau = k as f64 / sum;
    let cap = 1.0 / max_w;
    if tau <= cap {
        return Ok(TauCalibration { tau, clamped: false });
    }
    let reachable = cap * sum;
    if reachable < 0.95 * k as f64 {
        return Err(Error::InfeasibleSparsity { target: k, reachable });
    }
    Ok(TauCalibration {
        tau: cap,
        clamped: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_weights_reference_values() {
        let w = make_weights(1000, &WeightShape::Gaussian).unwrap();
        assert_eq!(w[500], 1.0);
        assert!((w[0] - (-6.25f64).exp()).abs() < 1e-18);
        assert!((w[0] - 1.930_454_136_2e-3).abs() < 1e-12);
        assert!((w[400] - 0.778_800_783_1).abs() < 1e-10);
        assert!(w.iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn weight_shape_names() {
        for name in ["\"gaussian\"", "\"gaussian_eq9\""] {
            assert_eq!(
                serde_json::from_str::<WeightShape>(name).unwrap(),
                WeightShape::Gaussian
            );
        }
        assert_eq!(serde_json::to_string(&WeightShape::Gaussian).unwrap(), "\"gaussian\"");
        assert_eq!(
            serde_json::from_str::<WeightShape>(r#"{"file": "w.csv"}"#).unwrap(),
            WeightShape::File("w.csv".into())
        );
    }

    #[test]
    fn uniform_weights() {
        assert_eq!(make_weights(5, &WeightShape::Uniform).unwrap(), Array1::<f64>::ones(5));
        assert!(make_weights(0, &WeightShape::Uniform).is_err());
    }

    #[test]
    fn matrix_determinism_and_distinct_seeds() {
        let a = gen_matrix(20, 30, 7);
        assert_eq!(a, gen_matrix(20, 30, 7));
        let b = gen_matrix(20, 30, 8);
        let differing = a.iter().zip(b.iter()).filter(|(x, y)| x != y).count();
        assert!(differing as f64 >= 0.99 * 600.0);
    }

    #[test]
    fn matrix_column_norms() {
        let a = gen_matrix(1000, 2000, 2024);
        let mean_sq: f64 = a.columns().into_iter().map(|c| c.dot(&c)).sum::<f64>() / 2000.0;
        assert!((mean_sq - 1.0).abs() < 0.1, "{mean_sq}");
    }

    #[test]
    fn zero_tau_gives_zero_signal() {
        let (x, support) = gen_signal(&Array1::ones(50), 0.0, 0.0, 1.0, 3).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
        assert!(support.is_empty());
    }

    #[test]
    fn signal_rejects_invalid_probabilities() {
        assert!(gen_signal(&Array1::ones(3), 1.5, 0.0, 1.0, 3).is_err());
    }

    #[test]
    fn calibrate_uniform_half() {
        let cal = calibrate_tau(50, &Array1::ones(100)).unwrap();
        assert_eq!(cal.tau, 0.5);
        assert!(!cal.clamped);
    }

    #[test]
    fn calibrate_gaussian_weights() {
        // sum_j w_j ~ n sqrt(pi / 25) erf(2.5) = 0.353_214 n for n = 1000.
        let w = make_weights(1000, &WeightShape::Gaussian).unwrap();
        let cal = calibrate_tau(100, &w).unwrap();
        assert!((cal.tau - 0.2831).abs() < 1e-3, "{}", cal.tau);
    }

    #[test]
    fn calibrate_clamps_and_rejects() {
        let w = make_weights(1000, &WeightShape::Gaussian).unwrap();
        let cal = calibrate_tau(360, &w).unwrap();
        assert!(cal.clamped);
        assert_eq!(cal.tau, 1.0);
        assert!(matches!(
            calibrate_tau(500, &w),
            Err(Error::InfeasibleSparsity { target: 500, .. })
        ));
    }

    #[test]
    fn trial_seeds_differ() {
        let s = trial_seed(1, 0, 0, 0);
        assert_eq!(s, trial_seed(1, 0, 0, 0));
        assert_ne!(s, trial_seed(1, 0, 0, 1));
        assert_ne!(s, trial_seed(1, 0, 1, 0));
        assert_ne!(s, trial_seed(1, 1, 0, 0));
        assert_ne!(s, trial_seed(2, 0, 0, 0));
    }
}

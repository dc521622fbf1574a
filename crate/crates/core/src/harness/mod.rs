//! Phase-transition experiments over the `(delta, rho) = (m/n, k/m)` plane.
//!
//! Every grid cell runs `trials_per_point` independent reconstructions. Each
//! trial derives its own seed from `(base_seed, delta_index, rho_index,
//! trial)`, so the record list does not depend on how trials are scheduled.

mod fit;
mod generate;
mod plot;
mod results;

use std::time::Instant;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::{em_run, EmConfig};
use crate::engine::gamp_run;
use crate::model::{AwgnOutputChannel, DivergencePolicy, GampConfig, ProblemInstance, WeightedBGPrior};
use crate::{Error, Result};

pub use fit::{fit_all, fit_logistic, fit_transition, FitSettings, FitSummary, TransitionCurve};
pub use generate::{
    calibrate_tau, gen_instance, gen_matrix, gen_noise, gen_signal, make_weights, splitmix64, stream_seed, trial_seed,
    TauCalibration, WeightShape, STREAM_MATRIX, STREAM_NOISE, STREAM_SIGNAL,
};
pub use plot::{long_format_csv, parse_reference_csv, render_svg, PlotSeries, ReferenceCurve};
pub use results::{curves_to_csv, parse_curves_csv, parse_results_csv, records_to_csv, CURVES_HEADER, RESULTS_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    /// True weights and parameters known to the solver.
    GenieWeighted,
    /// True shared parameters, but the solver assumes unit weights with
    /// `tau` rescaled to the same expected support size.
    GenieUnweighted,
    /// True weights; `tau`, the slab parameters and the noise variance are
    /// learned by EM.
    EmWeighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub n: usize,
    pub delta_grid: Vec<f64>,
    pub rho_grid: Vec<f64>,
    pub trials_per_point: usize,
    pub success_nmse_tol: f64,
    pub solver_mode: SolverMode,
    pub weight_shape: WeightShape,
    pub base_seed: u64,
    /// Slab mean of the generated signals.
    pub theta_mean: f64,
    /// Slab variance of the generated signals.
    pub theta_var: f64,
    /// Measurement noise variance; 0 means noiseless.
    pub noise_var: f64,
    /// Store wall-clock runtimes; off keeps result files reproducible.
    pub record_timing: bool,
    pub gamp: GampConfig,
    pub em: EmConfig,
}

/// `start, start + step, ..` up to and including `stop`.
pub fn uniform_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|i| start + step * i as f64).collect()
}

impl Default for SweepConfig {
    fn default() -> Self {
        let grid: Vec<f64> = (1..=20).map(|i| i as f64 / 20.0).collect();
        Self {
            n: 500,
            delta_grid: grid.clone(),
            rho_grid: grid,
            trials_per_point: 10,
            success_nmse_tol: 1e-4,
            solver_mode: SolverMode::GenieWeighted,
            weight_shape: WeightShape::Uniform,
            base_seed: 0,
            theta_mean: 0.0,
            theta_var: 1.0,
            noise_var: 0.0,
            record_timing: false,
            gamp: GampConfig::default(),
            em: EmConfig::default(),
        }
    }
}

fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter(format!("{name} is empty")));
    }
    if let Some(v) = grid.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
        return Err(Error::InvalidParameter(format!("{name} value {v} outside (0, 1]")));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(format!("{name} must be strictly increasing")));
    }
    Ok(())
}

impl SweepConfig {
    /// Measurements for a `delta` value.
    pub fn m_for(&self, delta: f64) -> usize {
        ((delta * self.n as f64).round() as usize).max(1)
    }

    /// Target support size for a cell.
    pub fn k_for(&self, delta: f64, rho: f64) -> usize {
        (rho * self.m_for(delta) as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter("n must be >= 1".into()));
        }
        check_grid("delta_grid", &self.delta_grid)?;
        check_grid("rho_grid", &self.rho_grid)?;
        if self.trials_per_point == 0 {
            return Err(Error::InvalidParameter("trials_per_point must be >= 1".into()));
        }
        if !(self.success_nmse_tol.is_finite() && self.success_nmse_tol > 0.0) {
            return Err(Error::InvalidParameter("success_nmse_tol must be > 0".into()));
        }
        if !(self.theta_var.is_finite() && self.theta_var > 0.0 && self.theta_mean.is_finite()) {
            return Err(Error::InvalidParameter("invalid slab parameters".into()));
        }
        if !(self.noise_var.is_finite() && self.noise_var >= 0.0) {
            return Err(Error::InvalidParameter("noise_var must be >= 0".into()));
        }
        self.gamp.validate()?;
        self.em.validate()?;
        let weights = make_weights(self.n, &self.weight_shape)?;
        for &delta in &self.delta_grid {
            for &rho in &self.rho_grid {
                calibrate_tau(self.k_for(delta, rho), &weights)?;
            }
        }
        Ok(())
    }
}

/// Outcome of one reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub delta: f64,
    pub rho: f64,
    pub trial_index: usize,
    pub seed: u64,
    pub k_drawn: usize,
    pub nmse: f64,
    pub success: bool,
    pub iterations: usize,
    pub runtime_ms: f64,
    /// Why the solver stopped early, if it did. Not persisted.
    pub diagnostic: Option<String>,
}

/// `||x_hat - x||^2 / ||x||^2` and whether it is within `tol`. A zero truth
/// uses `||x_hat||^2` instead.
pub fn evaluate_success(x_hat: &Array1<f64>, x_true: &Array1<f64>, tol: f64) -> Result<(f64, bool)> {
    if x_hat.len() != x_true.len() {
        return Err(Error::DimensionMismatch {
            what: "estimate",
            expected: x_true.len(),
            found: x_hat.len(),
        });
    }
    let err: f64 = x_hat.iter().zip(x_true).map(|(a, b)| (a - b) * (a - b)).sum();
    let energy = x_true.dot(x_true);
    let nmse = if energy == 0.0 { err } else { err / energy };
    let nmse = if nmse.is_nan() { f64::INFINITY } else { nmse };
    Ok((nmse, nmse <= tol))
}

struct Solved {
    estimate: Array1<f64>,
    iterations: usize,
    diagnostic: Option<String>,
}

fn solve(config: &SweepConfig, problem: &ProblemInstance, weights: &Array1<f64>, tau: f64) -> Result<Solved> {
    let gamp = GampConfig {
        divergence: DivergencePolicy::Flag,
        ..config.gamp.clone()
    };
    let channel = AwgnOutputChannel::new(config.noise_var)?;
    let (result, iterations) = match config.solver_mode {
        SolverMode::GenieWeighted => {
            let prior = WeightedBGPrior::new(weights.clone(), tau, config.theta_mean, config.theta_var)?;
            let r = gamp_run(problem, &prior, &channel, &gamp)?;
            let it = r.iterations_used;
            (r, it)
        }
        SolverMode::GenieUnweighted => {
            let n = weights.len() as f64;
            let tau_flat = (tau * weights.sum() / n).min(1.0);
            let prior = WeightedBGPrior::unweighted(weights.len(), tau_flat, config.theta_mean, config.theta_var)?;
            let r = gamp_run(problem, &prior, &channel, &gamp)?;
            let it = r.iterations_used;
            (r, it)
        }
        SolverMode::EmWeighted => {
            let r = em_run(problem, weights, &config.em, &gamp)?;
            (r.gamp, r.total_gamp_iterations)
        }
    };
    Ok(Solved {
        estimate: result.x_estimate,
        iterations,
        diagnostic: result.diagnostic,
    })
}

fn run_trial(
    config: &SweepConfig,
    weights: &Array1<f64>,
    delta_index: usize,
    rho_index: usize,
    trial: usize,
) -> Result<TrialRecord> {
    let delta = config.delta_grid[delta_index];
    let rho = config.rho_grid[rho_index];
    let m = config.m_for(delta);
    let tau = calibrate_tau(config.k_for(delta, rho), weights)?.tau;
    let seed = trial_seed(config.base_seed, delta_index, rho_index, trial);

    let (problem, support) = gen_instance(
        m,
        weights,
        tau,
        config.theta_mean,
        config.theta_var,
        config.noise_var,
        seed,
    )?;
    let x = problem.truth_x.clone().expect("generated instances carry the truth");

    let start = Instant::now();
    let solved = solve(config, &problem, weights, tau);
    let runtime_ms = if config.record_timing {
        start.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    };
    let (nmse, success, iterations, diagnostic) = match solved {
        Ok(s) => {
            let (nmse, ok) = evaluate_success(&s.estimate, &x, config.success_nmse_tol)?;
            (nmse, ok, s.iterations, s.diagnostic)
        }
        Err(e) => (f64::INFINITY, false, 0, Some(e.to_string())),
    };
    Ok(TrialRecord {
        delta,
        rho,
        trial_index: trial,
        seed,
        k_drawn: support.len(),
        nmse,
        success,
        iterations,
        runtime_ms,
        diagnostic,
    })
}

/// Runs every cell and trial of the sweep.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<TrialRecord>> {
    run_sweep_with(config, None, |_, _| true)
}

/// Runs the cells accepted by `include(delta, rho)` on at most `threads`
/// workers (all available cores when `None`). Records come back in grid
/// order: delta, then rho, then trial.
pub fn run_sweep_with<F>(config: &SweepConfig, threads: Option<usize>, include: F) -> Result<Vec<TrialRecord>>
where
    F: Fn(f64, f64) -> bool + Sync,
{
    config.validate()?;
    let weights = make_weights(config.n, &config.weight_shape)?;
    let mut items = Vec::new();
    for (di, &delta) in config.delta_grid.iter().enumerate() {
        for (ri, &rho) in config.rho_grid.iter().enumerate() {
            if include(delta, rho) {
                items.extend((0..config.trials_per_point).map(|t| (di, ri, t)));
            }
        }
    }
    let work = || -> Result<Vec<TrialRecord>> {
        items
            .par_iter()
            .map(|&(di, ri, t)| run_trial(config, &weights, di, ri, t))
            .collect()
    };
    match threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

/// Sorts records into grid order.
pub fn sort_records(records: &mut [TrialRecord]) {
    records.sort_by(|a, b| {
        a.delta
            .total_cmp(&b.delta)
            .then(a.rho.total_cmp(&b.rho))
            .then(a.trial_index.cmp(&b.trial_index))
    });
}

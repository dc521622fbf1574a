//! Uniform-variance MMSE GAMP.
//!
//! One iteration, given `(x_mean, x_var, q)` from iteration `t - 1`:
//!
//! ```text
//! v = ||A||_F^2 x_var / m
//! o = A x_mean - v q
//! z_mean, z_var = output channel(o, v; y)
//! q = (z_mean - o) / v
//! u = mean((v - z_var) / v^2)
//! s = 1 / (||A||_F^2 u / n)
//! r = x_mean + s A^T q
//! x_mean, x_var = input channel(r, s), x_var averaged over entries
//! ```

use ndarray::{Array1, Zip};

use crate::channels::{InputChannel, OutputChannel};
use crate::model::{DivergencePolicy, GampConfig, GampState, ProblemInstance};
use crate::{Error, Result};

/// Guard against dividing by a zero-norm estimate in the stop criterion.
const STOP_EPS: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Relative change of `x_mean` in this iteration.
    pub change: f64,
    pub x_var: f64,
    pub v: f64,
}

#[derive(Debug, Clone)]
pub struct GampResult {
    pub x_estimate: Array1<f64>,
    pub final_state: GampState,
    pub iterations_used: usize,
    pub converged: bool,
    pub history: Option<Vec<IterationRecord>>,
    /// Set when the run stopped on a non-finite state under [`DivergencePolicy::Flag`].
    pub diagnostic: Option<String>,
}

/// Initial state: prior mean and averaged prior variance, `q = 0`.
pub fn gamp_init<I: InputChannel>(problem: &ProblemInstance, prior: &I) -> Result<GampState> {
    crate::model::validate_problem(problem)?;
    if prior.len() != problem.n() {
        return Err(Error::DimensionMismatch {
            what: "prior weights",
            expected: problem.n(),
            found: prior.len(),
        });
    }
    let (m, n) = (problem.m(), problem.n());
    let (x_mean, x_var) = prior.prior_moments();
    Ok(GampState {
        x_mean,
        x_var,
        q: Array1::zeros(m),
        o: Array1::zeros(m),
        v: 0.0,
        s: 0.0,
        r: Array1::zeros(n),
        z_mean: Array1::zeros(m),
        z_var: Array1::zeros(m),
        u: 0.0,
        iteration: 0,
        frobenius_sq: problem.frobenius_sq(),
    })
}

fn check_finite(iteration: usize, what: &'static str, values: &Array1<f64>) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence { iteration, what })
    }
}

fn check_scalar(iteration: usize, what: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence { iteration, what })
    }
}

/// Advances `state` by one iteration. The input state is not modified.
pub fn gamp_iterate<I: InputChannel, O: OutputChannel>(
    state: &GampState,
    problem: &ProblemInstance,
    prior: &I,
    output: &O,
    config: &GampConfig,
) -> Result<GampState> {
    let a = &problem.matrix_a;
    let y = &problem.observations_y;
    let (m, n) = (problem.m() as f64, problem.n() as f64);
    let floor = config.variance_floor;
    let t = state.iteration + 1;

    let x_var_prev = state.x_var.max(floor);
    let v = (state.frobenius_sq / m * x_var_prev).max(floor);
    check_scalar(t, "v", v)?;

    let o = a.dot(&state.x_mean) - &(v * &state.q);
    check_finite(t, "o", &o)?;

    let mut z_mean = Array1::zeros(o.len());
    let mut z_var = Array1::zeros(o.len());
    for ((zm, zv), (&ol, &yl)) in z_mean.iter_mut().zip(z_var.iter_mut()).zip(o.iter().zip(y.iter())) {
        let res = output.eval(ol, v, yl, floor)?;
        *zm = res.posterior_mean;
        *zv = res.posterior_var;
    }

    let q = (&z_mean - &o) / v;
    check_finite(t, "q", &q)?;
    let u = z_var.iter().map(|zv| (v - zv) / (v * v)).sum::<f64>() / m;
    let s = 1.0 / (state.frobenius_sq / n * u);
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::Divergence {
            iteration: t,
            what: "s",
        });
    }
    let s = s.max(floor);

    let r = &state.x_mean + &(s * a.t().dot(&q));
    check_finite(t, "r", &r)?;

    let mut x_new = Array1::zeros(r.len());
    let mut var_sum = 0.0;
    for (j, (xj, &rj)) in x_new.iter_mut().zip(r.iter()).enumerate() {
        let res = prior.eval(j, rj, s)?;
        *xj = res.posterior_mean;
        var_sum += res.posterior_var;
    }
    let mut x_var = var_sum / n;

    if config.damping > 0.0 {
        let d = config.damping;
        Zip::from(&mut x_new)
            .and(&state.x_mean)
            .for_each(|new, &old| *new = (1.0 - d) * *new + d * old);
        x_var = (1.0 - d) * x_var + d * state.x_var;
    }
    check_finite(t, "x_mean", &x_new)?;
    check_scalar(t, "x_var", x_var)?;

    Ok(GampState {
        x_mean: x_new,
        x_var: x_var.max(floor),
        q,
        o,
        v,
        s,
        r,
        z_mean,
        z_var,
        u,
        iteration: t,
        frobenius_sq: state.frobenius_sq,
    })
}

fn relative_change(new: &Array1<f64>, old: &Array1<f64>) -> f64 {
    let diff = Zip::from(new)
        .and(old)
        .fold(0.0, |acc, a, b| acc + (a - b) * (a - b))
        .sqrt();
    let norm = new.dot(new).sqrt();
    if diff == 0.0 {
        0.0
    } else {
        diff / norm.max(STOP_EPS)
    }
}

/// Runs GAMP until the relative change of `x_mean` drops to
/// `config.convergence_tol` or `config.max_iterations` is reached.
pub fn gamp_run<I: InputChannel, O: OutputChannel>(
    problem: &ProblemInstance,
    prior: &I,
    output: &O,
    config: &GampConfig,
) -> Result<GampResult> {
    config.validate()?;
    let mut state = gamp_init(problem, prior)?;
    let mut history = config.record_history.then(Vec::new);
    let mut converged = false;
    let mut diagnostic = None;

    while state.iteration < config.max_iterations {
        let next = match gamp_iterate(&state, problem, prior, output, config) {
            Ok(next) => next,
            Err(err @ (Error::Divergence { .. } | Error::NegativeVariance(_) | Error::Domain(_)))
                if config.divergence == DivergencePolicy::Flag =>
            {
                diagnostic = Some(err.to_string());
                break;
            }
            Err(err) => return Err(err),
        };
        let change = relative_change(&next.x_mean, &state.x_mean);
        if let Some(h) = history.as_mut() {
            h.push(IterationRecord {
                iteration: next.iteration,
                change,
                x_var: next.x_var,
                v: next.v,
            });
        }
        state = next;
        if change <= config.convergence_tol {
            converged = true;
            break;
        }
    }

    Ok(GampResult {
        x_estimate: state.x_mean.clone(),
        iterations_used: state.iteration,
        final_state: state,
        converged,
        history,
        diagnostic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AwgnOutputChannel, WeightedBGPrior};
    use ndarray::{array, Array2};

    #[test]
    fn init_from_prior_moments() {
        let problem = ProblemInstance::new(array![[1.0, 0.5]], array![1.0], None).unwrap();
        let prior = WeightedBGPrior::new(array![1.0, 0.5], 0.5, 2.0, 1.0).unwrap();
        let st = gamp_init(&problem, &prior).unwrap();
        assert_eq!(st.x_mean, array![1.0, 0.5]);
        assert!((st.x_var - 1.25).abs() < 1e-15);
        assert_eq!(st.q, array![0.0]);
        assert_eq!(st.iteration, 0);
        assert_eq!(st.frobenius_sq, 1.25);
    }

    #[test]
    fn init_rejects_prior_length_mismatch() {
        let problem = ProblemInstance::new(array![[1.0, 0.5]], array![1.0], None).unwrap();
        let prior = WeightedBGPrior::unweighted(3, 0.5, 0.0, 1.0).unwrap();
        assert!(matches!(
            gamp_init(&problem, &prior),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn all_zero_prior_is_floored() {
        let problem = ProblemInstance::new(array![[1.0, 2.0]], array![0.5], None).unwrap();
        let prior = WeightedBGPrior::new(array![0.0, 0.0], 0.5, 0.0, 1.0).unwrap();
        let cfg = GampConfig::default();
        let st = gamp_init(&problem, &prior).unwrap();
        assert_eq!(st.x_var, 0.0);
        let next = gamp_iterate(&st, &problem, &prior, &AwgnOutputChannel::new(0.1).unwrap(), &cfg).unwrap();
        assert!(next.v > 0.0);
        assert!(next.x_mean.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn scalar_conjugate_gaussian() {
        let problem = ProblemInstance::new(array![[1.0]], array![2.0], None).unwrap();
        let prior = WeightedBGPrior::unweighted(1, 1.0, 0.0, 1.0).unwrap();
        let out = AwgnOutputChannel::new(1.0).unwrap();
        let res = gamp_run(&problem, &prior, &out, &GampConfig::default()).unwrap();
        assert!(res.converged);
        assert!((res.x_estimate[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn v_equals_x_var_for_unit_norm_rows() {
        // ||A||_F^2 = m makes v equal to the previous x_var.
        let a = array![[0.6, 0.8, 0.0], [0.0, 0.6, 0.8]];
        let problem = ProblemInstance::new(a, array![0.3, -0.2], None).unwrap();
        let prior = WeightedBGPrior::unweighted(3, 0.4, 0.5, 2.0).unwrap();
        let out = AwgnOutputChannel::new(0.01).unwrap();
        let st = gamp_init(&problem, &prior).unwrap();
        let next = gamp_iterate(&st, &problem, &prior, &out, &GampConfig::default()).unwrap();
        assert!((next.v - st.x_var).abs() < 1e-14);
        let again = gamp_iterate(&next, &problem, &prior, &out, &GampConfig::default()).unwrap();
        assert!((again.v - next.x_var).abs() < 1e-14);
    }

    #[test]
    fn zero_observations_fixed_point() {
        let a = Array2::from_shape_fn((3, 5), |(i, j)| ((i * 5 + j) as f64).sin());
        let problem = ProblemInstance::new(a, Array1::zeros(3), None).unwrap();
        let prior = WeightedBGPrior::unweighted(5, 0.3, 0.0, 1.0).unwrap();
        let out = AwgnOutputChannel::new(0.0).unwrap();
        let res = gamp_run(&problem, &prior, &out, &GampConfig::default()).unwrap();
        assert!(res.converged);
        assert!(res.iterations_used <= 2);
        assert!(res.x_estimate.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn damping_keeps_part_of_previous_iterate() {
        let a = array![[1.0, 0.2], [0.3, -0.7]];
        let problem = ProblemInstance::new(a, array![0.5, 1.0], None).unwrap();
        let prior = WeightedBGPrior::unweighted(2, 0.5, 0.0, 1.0).unwrap();
        let out = AwgnOutputChannel::new(0.05).unwrap();
        let st = gamp_init(&problem, &prior).unwrap();
        let plain = gamp_iterate(&st, &problem, &prior, &out, &GampConfig::default()).unwrap();
        let cfg = GampConfig {
            damping: 0.25,
            ..GampConfig::default()
        };
        let damped = gamp_iterate(&st, &problem, &prior, &out, &cfg).unwrap();
        for j in 0..2 {
            let expect = 0.75 * plain.x_mean[j] + 0.25 * st.x_mean[j];
            assert!((damped.x_mean[j] - expect).abs() < 1e-15);
        }
        assert!((damped.x_var - (0.75 * plain.x_var + 0.25 * st.x_var)).abs() < 1e-15);
    }

    #[test]
    fn history_is_recorded_on_request() {
        let problem = ProblemInstance::new(array![[1.0]], array![2.0], None).unwrap();
        let prior = WeightedBGPrior::unweighted(1, 1.0, 0.0, 1.0).unwrap();
        let out = AwgnOutputChannel::new(1.0).unwrap();
        let cfg = GampConfig {
            record_history: true,
            ..GampConfig::default()
        };
        let res = gamp_run(&problem, &prior, &out, &cfg).unwrap();
        let h = res.history.unwrap();
        assert_eq!(h.len(), res.iterations_used);
        assert!(h.last().unwrap().change <= cfg.convergence_tol);
    }

    #[test]
    fn max_iterations_reached_is_not_converged() {
        let problem = ProblemInstance::new(array![[1.0, 0.3]], array![2.0], None).unwrap();
        let prior = WeightedBGPrior::unweighted(2, 0.5, 0.0, 1.0).unwrap();
        let out = AwgnOutputChannel::new(1.0).unwrap();
        let cfg = GampConfig {
            max_iterations: 1,
            ..GampConfig::default()
        };
        let res = gamp_run(&problem, &prior, &out, &cfg).unwrap();
        assert_eq!(res.iterations_used, 1);
        assert!(!res.converged);
        assert_eq!(res.x_estimate, res.final_state.x_mean);
    }
}

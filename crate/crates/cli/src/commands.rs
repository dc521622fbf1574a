use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ndarray::Array1;
use serde::{Deserialize, Serialize};

use wgamp::em::{em_init, em_run_from, EmConfig};
use wgamp::engine::gamp_run;
use wgamp::harness::{
    calibrate_tau, curves_to_csv, evaluate_success, fit_all, gen_instance, long_format_csv, make_weights,
    parse_curves_csv, parse_reference_csv, parse_results_csv, records_to_csv, render_svg, run_sweep_with, sort_records,
    trial_seed, FitSettings, PlotSeries, SweepConfig, TrialRecord, WeightShape,
};
use wgamp::model::{AwgnOutputChannel, DivergencePolicy, GampConfig, WeightedBGPrior};
use wgamp::problem_io::{read_problem, write_atomic, write_problem, PriorParams, ProblemFile};

use crate::config::load;
use crate::{Common, Status};

fn require_out(common: &Common) -> Result<&Path> {
    common.out.as_deref().context("--out is required for this command")
}

/// Synthetic problem description shared by `gen` and `solve`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n: usize,
    /// `m = round(delta n)`.
    pub delta: f64,
    /// `k = round(rho m)`, the expected support size.
    pub rho: f64,
    pub weight_shape: WeightShape,
    pub theta_mean: f64,
    pub theta_var: f64,
    pub noise_var: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n: 500,
            delta: 0.5,
            rho: 0.1,
            weight_shape: WeightShape::Uniform,
            theta_mean: 0.0,
            theta_var: 1.0,
            noise_var: 0.0,
            seed: 0,
        }
    }
}

fn generate(cfg: &GenConfig) -> Result<ProblemFile> {
    for (name, v) in [("delta", cfg.delta), ("rho", cfg.rho)] {
        if !(v > 0.0 && v <= 1.0) {
            bail!("{name} = {v} must lie in (0, 1]");
        }
    }
    let weights = make_weights(cfg.n, &cfg.weight_shape)?;
    let m = ((cfg.delta * cfg.n as f64).round() as usize).max(1);
    let k = (cfg.rho * m as f64).round() as usize;
    let cal = calibrate_tau(k, &weights)?;
    if cal.clamped {
        eprintln!("warning: tau clamped to {}; expected support below k = {k}", cal.tau);
    }
    let (problem, _) = gen_instance(
        m,
        &weights,
        cal.tau,
        cfg.theta_mean,
        cfg.theta_var,
        cfg.noise_var,
        cfg.seed,
    )?;
    Ok(ProblemFile {
        problem,
        seed: Some(cfg.seed),
        weights: Some(weights),
        prior: Some(PriorParams {
            tau: cal.tau,
            theta_mean: cfg.theta_mean,
            theta_var: cfg.theta_var,
        }),
    })
}

pub fn gen(common: &Common, seed: Option<u64>) -> Result<Status> {
    let mut cfg: GenConfig = load(common.config.as_deref(), &common.overrides)?;
    let out = require_out(common)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let file = generate(&cfg)?;
    write_problem(out, &file)?;
    if common.verbose > 0 {
        eprintln!(
            "wrote {} (m = {}, n = {})",
            out.display(),
            file.problem.m(),
            file.problem.n()
        );
    }
    Ok(Status::Ok)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    /// Problem header written by `gen` (or by hand).
    pub problem: Option<PathBuf>,
    /// Generate the problem instead of reading it.
    pub generate: Option<GenConfig>,
    /// Prior parameters; default: those recorded in the problem file.
    pub prior: Option<PriorParams>,
    /// Noise variance; default: the one recorded in the problem file.
    pub noise_var: Option<f64>,
    pub gamp: GampConfig,
    pub em: EmConfig,
}

#[derive(Debug, Serialize)]
struct SolveReport {
    x_hat: Vec<f64>,
    nmse: Option<f64>,
    iterations: usize,
    converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    diagnostic: Option<String>,
}

pub fn solve(common: &Common, seed: Option<u64>, em: bool) -> Result<Status> {
    let mut cfg: SolveConfig = load(common.config.as_deref(), &common.overrides)?;
    if let (Some(s), Some(g)) = (seed, cfg.generate.as_mut()) {
        g.seed = s;
    }
    let file = match (&cfg.problem, &cfg.generate) {
        (Some(path), None) => read_problem(path).with_context(|| format!("reading {}", path.display()))?,
        (None, Some(g)) => generate(g)?,
        _ => bail!("exactly one of `problem` and `generate` must be configured"),
    };
    let problem = &file.problem;
    let weights = file.weights.clone().unwrap_or_else(|| Array1::ones(problem.n()));
    let params = cfg.prior.or(file.prior);
    let noise_var = cfg.noise_var.or(problem.noise_var);
    let gamp_cfg = GampConfig {
        divergence: DivergencePolicy::Flag,
        ..cfg.gamp.clone()
    };

    let (result, iterations, converged) = if em {
        let init = em_init(problem, &weights, &cfg.em)?;
        let prior = match params {
            Some(p) => WeightedBGPrior::new(weights.clone(), p.tau, p.theta_mean, p.theta_var)?,
            None => init.prior,
        };
        let channel = match noise_var {
            Some(v) => AwgnOutputChannel::new(v)?,
            None => init.channel,
        };
        let run = em_run_from(problem, prior, channel, &cfg.em, &gamp_cfg)?;
        eprintln!(
            "learned tau = {}, theta_mean = {}, theta_var = {}, noise_var = {} after {} EM iterations",
            run.prior.tau(),
            run.prior.theta_mean(),
            run.prior.theta_var(),
            run.channel.noise_var(),
            run.em_iterations
        );
        let converged = run.converged && run.gamp.converged;
        (run.gamp, run.total_gamp_iterations, converged)
    } else {
        let p = params.context("no prior parameters: set `prior` or use a problem file that records them")?;
        let v = noise_var.context("no noise variance: set `noise_var` or use a problem file that records it")?;
        let prior = WeightedBGPrior::new(weights.clone(), p.tau, p.theta_mean, p.theta_var)?;
        let run = gamp_run(problem, &prior, &AwgnOutputChannel::new(v)?, &gamp_cfg)?;
        let (it, c) = (run.iterations_used, run.converged);
        (run, it, c)
    };

    let nmse = problem
        .truth_x
        .as_ref()
        .map(|x| evaluate_success(&result.x_estimate, x, 1.0).map(|(e, _)| e))
        .transpose()?;
    let report = SolveReport {
        x_hat: result.x_estimate.to_vec(),
        nmse,
        iterations,
        converged,
        diagnostic: result.diagnostic,
    };
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    match &common.out {
        Some(path) => write_atomic(path, json.as_bytes())?,
        None => print!("{json}"),
    }
    if common.verbose > 0 {
        eprintln!("{iterations} iterations, converged = {converged}");
    }
    Ok(if converged { Status::Ok } else { Status::NotConverged })
}

/// Existing records of finished cells, keyed by `(delta index, rho index)`.
fn finished_cells(cfg: &SweepConfig, records: Vec<TrialRecord>) -> Result<HashMap<(usize, usize), Vec<TrialRecord>>> {
    let mut cells: HashMap<(usize, usize), Vec<TrialRecord>> = HashMap::new();
    for r in records {
        let di = cfg.delta_grid.iter().position(|&d| d == r.delta);
        let ri = cfg.rho_grid.iter().position(|&p| p == r.rho);
        let (Some(di), Some(ri)) = (di, ri) else {
            bail!(
                "existing results contain delta = {}, rho = {} outside the configured grid",
                r.delta,
                r.rho
            );
        };
        if r.trial_index >= cfg.trials_per_point || r.seed != trial_seed(cfg.base_seed, di, ri, r.trial_index) {
            bail!(
                "existing results were produced with a different configuration (trial {} at delta = {}, rho = {})",
                r.trial_index,
                r.delta,
                r.rho
            );
        }
        cells.entry((di, ri)).or_default().push(r);
    }
    cells.retain(|_, recs| {
        recs.sort_by_key(|r| r.trial_index);
        recs.dedup_by_key(|r| r.trial_index);
        recs.len() == cfg.trials_per_point
    });
    Ok(cells)
}

pub fn sweep(common: &Common, seed: Option<u64>, threads: Option<usize>, resume: bool) -> Result<Status> {
    let mut cfg: SweepConfig = load(common.config.as_deref(), &common.overrides)?;
    if let Some(s) = seed {
        cfg.base_seed = s;
    }
    cfg.validate()?;
    if threads == Some(0) {
        bail!("--threads must be at least 1");
    }
    let out = require_out(common)?;

    let done = if resume && out.exists() {
        let text = fs::read_to_string(out).with_context(|| format!("reading {}", out.display()))?;
        finished_cells(&cfg, parse_results_csv(&text)?)?
    } else {
        HashMap::new()
    };
    if common.verbose > 0 && !done.is_empty() {
        eprintln!("resuming: {} finished cells kept", done.len());
    }

    let mut records: Vec<TrialRecord> = done.values().flatten().cloned().collect();
    for (di, &delta) in cfg.delta_grid.iter().enumerate() {
        let pending = |d: f64, rho: f64| {
            d == delta && {
                let ri = cfg.rho_grid.iter().position(|&p| p == rho).expect("grid value");
                !done.contains_key(&(di, ri))
            }
        };
        let fresh = run_sweep_with(&cfg, threads, pending)?;
        if fresh.is_empty() {
            continue;
        }
        if common.verbose > 0 {
            let ok = fresh.iter().filter(|r| r.success).count();
            eprintln!("delta = {delta}: {ok}/{} trials succeeded", fresh.len());
        }
        records.extend(fresh);
        sort_records(&mut records);
        write_atomic(out, records_to_csv(&records)?.as_bytes())?;
    }
    sort_records(&mut records);
    write_atomic(out, records_to_csv(&records)?.as_bytes())?;
    Ok(Status::Ok)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Smallest reported transition width for separated data.
    pub beta_floor: f64,
    pub max_iterations: usize,
    pub tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        let s = FitSettings::default();
        Self {
            beta_floor: s.beta_floor,
            max_iterations: s.max_iterations,
            tol: s.tol,
        }
    }
}

pub fn fit(common: &Common, results: &Path) -> Result<Status> {
    let cfg: FitConfig = load(common.config.as_deref(), &common.overrides)?;
    if !(cfg.beta_floor > 0.0 && cfg.tol > 0.0 && cfg.max_iterations > 0) {
        bail!("beta_floor, tol and max_iterations must be positive");
    }
    let out = require_out(common)?;
    let text = fs::read_to_string(results).with_context(|| format!("reading {}", results.display()))?;
    let records = parse_results_csv(&text)?;
    let settings = FitSettings {
        beta_floor: cfg.beta_floor,
        max_iterations: cfg.max_iterations,
        tol: cfg.tol,
    };
    let summary = fit_all(&records, &settings);
    write_atomic(out, curves_to_csv(&summary.curves)?.as_bytes())?;
    println!(
        "fitted {} delta column(s), skipped {}",
        summary.curves.len(),
        summary.skipped.len()
    );
    for (delta, reason) in &summary.skipped {
        println!("skipped delta = {delta}: {reason}");
    }
    Ok(Status::Ok)
}

fn split_label(arg: &str) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((label, path)) if !label.is_empty() => (label.to_string(), PathBuf::from(path)),
        _ => {
            let path = PathBuf::from(arg);
            let label = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| arg.to_string());
            (label, path)
        }
    }
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (fs::canonicalize(a), fs::canonicalize(b)) {
        (Ok(a), Ok(b)) => a == b,
        _ => a == b,
    }
}

pub fn plot(common: &Common, curves: &[String], references: &[String]) -> Result<Status> {
    if common.config.is_some() || !common.overrides.is_empty() {
        bail!("plot takes no configuration");
    }
    let out = require_out(common)?;
    let long = out.with_extension("long.csv");
    let mut series = Vec::new();
    let mut inputs = Vec::new();
    for arg in curves {
        let (label, path) = split_label(arg);
        inputs.push(path.clone());
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        series.push(PlotSeries {
            label,
            curves: parse_curves_csv(&text)?,
        });
    }
    let mut refs = Vec::new();
    for arg in references {
        let (label, path) = split_label(arg);
        inputs.push(path.clone());
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        refs.push(parse_reference_csv(&label, &text)?);
    }
    if let Some(p) = inputs.iter().find(|p| same_file(p, out) || same_file(p, &long)) {
        bail!("output would overwrite the input {}", p.display());
    }
    write_atomic(out, render_svg(&series, &refs).as_bytes())?;
    write_atomic(&long, long_format_csv(&series).as_bytes())?;
    if common.verbose > 0 {
        eprintln!("wrote {} and {}", out.display(), long.display());
    }
    Ok(Status::Ok)
}

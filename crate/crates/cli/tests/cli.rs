use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;
use wgamp::harness::{parse_curves_csv, records_to_csv, TrialRecord};

fn wgamp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wgamp"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

fn json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

fn scalar_problem(dir: &Path) {
    write(
        dir,
        "p.json",
        r#"{"format": "wgamp-problem-v1", "m": 1, "n": 1, "matrix": "p.A.csv", "observations": "p.y.csv"}"#,
    );
    write(dir, "p.A.csv", "1\n");
    write(dir, "p.y.csv", "2\n");
    write(
        dir,
        "solve.json",
        r#"{"problem": "p.json", "prior": {"tau": 1.0, "theta_mean": 0.0, "theta_var": 1.0}, "noise_var": 1.0}"#,
    );
}

#[test]
fn solve_scalar_conjugate_problem() {
    let dir = TempDir::new().unwrap();
    scalar_problem(dir.path());
    let out = wgamp(dir.path(), &["solve", "--config", "solve.json", "--out", "x.json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(dir.path(), "x.json");
    let x = report["x_hat"][0].as_f64().unwrap();
    assert!((x - 1.0).abs() <= 1e-6, "{x}");
    assert_eq!(report["converged"], Value::Bool(true));
    assert!(report["nmse"].is_null());
}

#[test]
fn solve_reports_non_convergence() {
    let dir = TempDir::new().unwrap();
    scalar_problem(dir.path());
    let out = wgamp(
        dir.path(),
        &[
            "solve",
            "--config",
            "solve.json",
            "--set",
            "gamp.max_iterations=1",
            "--out",
            "x.json",
        ],
    );
    assert_eq!(code(&out), 2);
    assert_eq!(json(dir.path(), "x.json")["converged"], Value::Bool(false));
}

#[test]
fn invalid_override_writes_nothing() {
    let dir = TempDir::new().unwrap();
    scalar_problem(dir.path());
    for bad in ["gamp.no_such_key=1", "nonsense=1", "gamp.max_iterations=-3", "novalue"] {
        let out = wgamp(
            dir.path(),
            &["solve", "--config", "solve.json", "--set", bad, "--out", "x.json"],
        );
        assert_eq!(code(&out), 1, "{bad}");
        assert!(!dir.path().join("x.json").exists());
        assert!(!out.stderr.is_empty());
    }
    let out = wgamp(dir.path(), &["sweep", "--set", "trials=3", "--out", "r.csv"]);
    assert_eq!(code(&out), 1);
    assert!(!dir.path().join("r.csv").exists());
}

#[test]
fn usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&wgamp(dir.path(), &["solve", "--bogus"])), 1);
    assert_eq!(code(&wgamp(dir.path(), &[])), 1);
    assert_eq!(code(&wgamp(dir.path(), &["--help"])), 0);
    // Neither a problem file nor a generator.
    assert_eq!(code(&wgamp(dir.path(), &["solve"])), 1);
}

#[test]
fn em_without_estimation_matches_plain_solve() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "solve.json",
        r#"{"generate": {"n": 200, "delta": 0.5, "rho": 0.15, "weight_shape": "gaussian", "noise_var": 1e-4, "seed": 4}}"#,
    );
    let plain = wgamp(dir.path(), &["solve", "--config", "solve.json", "--out", "plain.json"]);
    assert_eq!(code(&plain), 0, "{}", String::from_utf8_lossy(&plain.stderr));
    let em = wgamp(
        dir.path(),
        &[
            "solve",
            "--em",
            "--config",
            "solve.json",
            "--set",
            r#"em.estimate={"tau": false, "theta_mean": false, "theta_var": false, "noise_var": false}"#,
            "--out",
            "em.json",
        ],
    );
    assert_eq!(code(&em), 0, "{}", String::from_utf8_lossy(&em.stderr));
    assert_eq!(
        fs::read(dir.path().join("plain.json")).unwrap(),
        fs::read(dir.path().join("em.json")).unwrap()
    );
    assert!(json(dir.path(), "plain.json")["nmse"].as_f64().unwrap() < 1e-2);
}

#[test]
fn gen_then_solve_recovers_signal() {
    let dir = TempDir::new().unwrap();
    let out = wgamp(
        dir.path(),
        &[
            "gen",
            "--set",
            "n=300",
            "--set",
            "rho=0.1",
            "--seed",
            "8",
            "--out",
            "prob.json",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["prob.json", "prob.A.csv", "prob.y.csv", "prob.x.csv", "prob.w.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let header = json(dir.path(), "prob.json");
    assert_eq!(header["m"], 150);
    assert_eq!(header["seed"], 8);
    write(dir.path(), "solve.json", r#"{"problem": "prob.json"}"#);
    let out = wgamp(dir.path(), &["solve", "--config", "solve.json", "--out", "x.json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(json(dir.path(), "x.json")["nmse"].as_f64().unwrap() <= 1e-4);
    let out = wgamp(
        dir.path(),
        &["solve", "--em", "--config", "solve.json", "--out", "x.json"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(json(dir.path(), "x.json")["nmse"].as_f64().unwrap() <= 1e-4);
}

fn small_sweep(dir: &Path) {
    write(
        dir,
        "sweep.json",
        r#"{"n": 80, "delta_grid": [0.4, 0.8], "rho_grid": [0.1, 0.3], "trials_per_point": 2,
            "weight_shape": "gaussian", "base_seed": 3}"#,
    );
}

#[test]
fn sweep_single_cell() {
    let dir = TempDir::new().unwrap();
    let args = [
        "sweep",
        "--set",
        "n=60",
        "--set",
        "delta_grid=[0.5]",
        "--set",
        "rho_grid=[0.1]",
        "--set",
        "trials_per_point=1",
        "--out",
        "r.csv",
    ];
    assert_eq!(code(&wgamp(dir.path(), &args)), 0);
    let text = fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(
        lines[0],
        "delta,rho,trial,seed,k_drawn,iterations,nmse,success,runtime_ms"
    );
}

#[test]
fn sweep_is_reproducible_across_threads() {
    let dir = TempDir::new().unwrap();
    small_sweep(dir.path());
    for (threads, out) in [("1", "a.csv"), ("3", "b.csv"), ("1", "c.csv")] {
        let o = wgamp(
            dir.path(),
            &["sweep", "--config", "sweep.json", "--threads", threads, "--out", out],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());
    assert_eq!(a, fs::read(dir.path().join("c.csv")).unwrap());
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 1 + 2 * 2 * 2);
}

#[test]
fn resume_completes_partial_results() {
    let dir = TempDir::new().unwrap();
    small_sweep(dir.path());
    assert_eq!(
        code(&wgamp(
            dir.path(),
            &["sweep", "--config", "sweep.json", "--out", "full.csv"]
        )),
        0
    );
    let full = fs::read_to_string(dir.path().join("full.csv")).unwrap();
    // Keep the header, the first cell and half of the second.
    let partial: String = full.lines().take(4).map(|l| format!("{l}\n")).collect();
    write(dir.path(), "part.csv", &partial);
    let o = wgamp(
        dir.path(),
        &["sweep", "--config", "sweep.json", "--resume", "--out", "part.csv"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(dir.path().join("part.csv")).unwrap(), full);

    write(dir.path(), "part.csv", &partial);
    let o = wgamp(
        dir.path(),
        &[
            "sweep",
            "--config",
            "sweep.json",
            "--seed",
            "4",
            "--resume",
            "--out",
            "part.csv",
        ],
    );
    assert_eq!(code(&o), 1);
    assert_eq!(fs::read_to_string(dir.path().join("part.csv")).unwrap(), partial);
}

/// Logistic outcomes around rho0 = 0.4 at delta = 0.5, plus an all-success
/// column at delta = 0.9.
fn logistic_fixture() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut records = Vec::new();
    let mut push = |delta: f64, rho: f64, t: usize, success: bool| {
        records.push(TrialRecord {
            delta,
            rho,
            trial_index: t,
            seed: 0,
            k_drawn: 0,
            nmse: if success { 0.0 } else { 1.0 },
            success,
            iterations: 1,
            runtime_ms: 0.0,
            diagnostic: None,
        })
    };
    for i in 30..=50 {
        let rho = i as f64 / 100.0;
        let p = 1.0 / (1.0 + ((rho - 0.4) / 0.02).exp());
        for t in 0..50 {
            push(0.5, rho, t, rng.random::<f64>() < p);
        }
    }
    for rho in [0.1, 0.2] {
        push(0.9, rho, 0, true);
    }
    records_to_csv(&records).unwrap()
}

#[test]
fn fit_reports_curves_and_skipped_columns() {
    let dir = TempDir::new().unwrap();
    let fixture = logistic_fixture();
    write(dir.path(), "r.csv", &fixture);
    let o = wgamp(dir.path(), &["fit", "r.csv", "--out", "curves.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let curves = parse_curves_csv(&fs::read_to_string(dir.path().join("curves.csv")).unwrap()).unwrap();
    assert_eq!(curves.len(), 1);
    assert!((curves[0].rho_50 - 0.4).abs() <= 0.02, "{:?}", curves[0]);
    assert_eq!(curves[0].n_trials, 21 * 50);
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("skipped delta = 0.9"), "{stdout}");
    assert_eq!(fs::read_to_string(dir.path().join("r.csv")).unwrap(), fixture);

    let first = fs::read(dir.path().join("curves.csv")).unwrap();
    assert_eq!(code(&wgamp(dir.path(), &["fit", "r.csv", "--out", "curves.csv"])), 0);
    assert_eq!(first, fs::read(dir.path().join("curves.csv")).unwrap());
}

#[test]
fn plot_emits_well_formed_svg() {
    let dir = TempDir::new().unwrap();
    let curves = "delta,rho50,rho10,rho90,fit_converged,n_trials\n\
                  0.25,0.5,0.55,0.45,true,200\n0.5,0.6,0.65,0.55,false,200\n";
    write(dir.path(), "genie.csv", curves);
    write(dir.path(), "em.csv", curves);
    write(dir.path(), "l1.csv", "delta,rho\n0.1,0.2\n0.9,0.8\n");
    let o = wgamp(
        dir.path(),
        &[
            "plot",
            "genie.csv",
            "EM & co=em.csv",
            "--reference",
            "l1.csv",
            "--out",
            "fig.svg",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let svg = fs::read_to_string(dir.path().join("fig.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).expect("well-formed XML");
    let series = doc
        .descendants()
        .filter(|n| n.has_tag_name("polyline") && n.attribute("class") == Some("series"))
        .count();
    assert_eq!(series, 2);
    let long = fs::read_to_string(dir.path().join("fig.long.csv")).unwrap();
    assert_eq!(long.lines().count(), 1 + 2 * 2 * 3);
}

#[test]
fn plot_never_overwrites_its_inputs() {
    let dir = TempDir::new().unwrap();
    let curves = "delta,rho50,rho10,rho90,fit_converged,n_trials\n0.5,0.6,0.65,0.55,true,200\n";
    write(dir.path(), "c.csv", curves);
    assert_eq!(code(&wgamp(dir.path(), &["plot", "c.csv", "--out", "c.svg"])), 0);
    assert_eq!(fs::read_to_string(dir.path().join("c.csv")).unwrap(), curves);
    assert!(dir.path().join("c.long.csv").exists());

    write(dir.path(), "d.long.csv", curves);
    assert_eq!(code(&wgamp(dir.path(), &["plot", "d.long.csv", "--out", "d.svg"])), 1);
    assert_eq!(code(&wgamp(dir.path(), &["plot", "c.csv", "--out", "c.csv"])), 1);
    assert_eq!(fs::read_to_string(dir.path().join("c.csv")).unwrap(), curves);
    assert_eq!(fs::read_to_string(dir.path().join("d.long.csv")).unwrap(), curves);
}

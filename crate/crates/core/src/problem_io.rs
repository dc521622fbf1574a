//! Problem files: a JSON header plus CSV payloads.
//!
//! ```text
//! problem.json   {"format": "wgamp-problem-v1", "m": .., "n": .., "noise_var": ..,
//!                 "seed": .., "matrix": "A.csv", "observations": "y.csv",
//!                 "truth": "x.csv", "weights": "w.csv", "prior": {..}}
//! A.csv          m lines, n comma-separated values each (row-major, no header)
//! y.csv          m lines, one value each
//! x.csv, w.csv   n lines, one value each (optional)
//! ```
//!
//! Payload paths are resolved relative to the header's directory. Reals are
//! written with 17 significant digits.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::model::ProblemInstance;
use crate::{Error, Result};

pub const PROBLEM_FORMAT: &str = "wgamp-problem-v1";

/// Shared prior parameters recorded by the generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorParams {
    pub tau: f64,
    pub theta_mean: f64,
    pub theta_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemHeader {
    pub format: String,
    pub m: usize,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_var: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub matrix: String,
    pub observations: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorParams>,
}

/// A problem together with the optional generator metadata of its file.
#[derive(Debug, Clone)]
pub struct ProblemFile {
    pub problem: ProblemInstance,
    pub seed: Option<u64>,
    pub weights: Option<Array1<f64>>,
    pub prior: Option<PriorParams>,
}

/// 17 significant digits, round-trip exact.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `contents` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Format(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

fn parse_real(field: &str, path: &Path, line: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| {
        Error::Format(format!(
            "{}:{}: cannot parse {:?} as a number",
            path.display(),
            line,
            field
        ))
    })
}

/// Reads a one-value-per-line vector.
pub fn read_vector(path: &Path) -> Result<Array1<f64>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_real(line, path, i + 1)?);
    }
    Ok(Array1::from(out))
}

pub fn vector_to_csv(v: &Array1<f64>) -> String {
    let mut s = String::with_capacity(v.len() * 24);
    for x in v {
        s.push_str(&fmt_real(*x));
        s.push('\n');
    }
    s
}

pub fn read_matrix(path: &Path, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path)?;
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for field in line.split(',') {
            data.push(parse_real(field, path, i + 1)?);
        }
        if data.len() - before != cols {
            return Err(Error::DimensionMismatch {
                what: "matrix row length",
                expected: cols,
                found: data.len() - before,
            });
        }
        seen += 1;
    }
    if seen != rows {
        return Err(Error::DimensionMismatch {
            what: "matrix rows",
            expected: rows,
            found: seen,
        });
    }
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Format(e.to_string()))
}

pub fn matrix_to_csv(a: &Array2<f64>) -> String {
    let mut s = String::with_capacity(a.len() * 24);
    for row in a.rows() {
        let fields: Vec<String> = row.iter().map(|x| fmt_real(*x)).collect();
        s.push_str(&fields.join(","));
        s.push('\n');
    }
    s
}

fn resolve(header_path: &Path, file: &str) -> PathBuf {
    let base = header_path.parent().unwrap_or(Path::new("."));
    base.join(file)
}

/// Loads and validates a problem from its JSON header.
pub fn read_problem(header_path: &Path) -> Result<ProblemFile> {
    let header: ProblemHeader = serde_json::from_str(&fs::read_to_string(header_path)?)?;
    if header.format != PROBLEM_FORMAT {
        return Err(Error::Format(format!("unsupported problem format {:?}", header.format)));
    }
    let a = read_matrix(&resolve(header_path, &header.matrix), header.m, header.n)?;
    let y = read_vector(&resolve(header_path, &header.observations))?;
    let truth = header
        .truth
        .as_deref()
        .map(|f| read_vector(&resolve(header_path, f)))
        .transpose()?;
    let weights = header
        .weights
        .as_deref()
        .map(|f| read_vector(&resolve(header_path, f)))
        .transpose()?;
    if let Some(w) = &weights {
        if w.len() != header.n {
            return Err(Error::DimensionMismatch {
                what: "weights",
                expected: header.n,
                found: w.len(),
            });
        }
    }
    let mut problem = ProblemInstance::new(a, y, truth)?;
    if let Some(nv) = header.noise_var {
        problem = problem.with_noise_var(nv);
        crate::model::validate_problem(&problem)?;
    }
    Ok(ProblemFile {
        problem,
        seed: header.seed,
        weights,
        prior: header.prior,
    })
}

/// Writes a problem as `<stem>.json` plus `<stem>.A.csv`, `<stem>.y.csv`
/// and, when present, `<stem>.x.csv` and `<stem>.w.csv` next to it.
pub fn write_problem(header_path: &Path, file: &ProblemFile) -> Result<()> {
    let stem = header_path
        .file_stem()
        .ok_or_else(|| Error::Format(format!("not a file path: {}", header_path.display())))?
        .to_string_lossy()
        .into_owned();
    let problem = &file.problem;
    let name = |suffix: &str| format!("{stem}.{suffix}.csv");

    write_atomic(
        &resolve(header_path, &name("A")),
        matrix_to_csv(&problem.matrix_a).as_bytes(),
    )?;
    write_atomic(
        &resolve(header_path, &name("y")),
        vector_to_csv(&problem.observations_y).as_bytes(),
    )?;
    if let Some(x) = &problem.truth_x {
        write_atomic(&resolve(header_path, &name("x")), vector_to_csv(x).as_bytes())?;
    }
    if let Some(w) = &file.weights {
        write_atomic(&resolve(header_path, &name("w")), vector_to_csv(w).as_bytes())?;
    }
    let header = ProblemHeader {
        format: PROBLEM_FORMAT.to_string(),
        m: problem.m(),
        n: problem.n(),
        noise_var: problem.noise_var,
        seed: file.seed,
        matrix: name("A"),
        observations: name("y"),
        truth: problem.truth_x.as_ref().map(|_| name("x")),
        weights: file.weights.as_ref().map(|_| name("w")),
        prior: file.prior,
    };
    let mut json = serde_json::to_string_pretty(&header)?;
    json.push('\n');
    write_atomic(header_path, json.as_bytes())
}

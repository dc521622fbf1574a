//! Results and curves CSV files.

use super::{TransitionCurve, TrialRecord};
use crate::problem_io::fmt_real;
use crate::{Error, Result};

pub const RESULTS_HEADER: [&str; 9] = [
    "delta",
    "rho",
    "trial",
    "seed",
    "k_drawn",
    "iterations",
    "nmse",
    "success",
    "runtime_ms",
];

pub const CURVES_HEADER: [&str; 6] = ["delta", "rho50", "rho10", "rho90", "fit_converged", "n_trials"];

fn to_string(writer: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = writer.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

pub fn records_to_csv(records: &[TrialRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RESULTS_HEADER)?;
    for r in records {
        w.write_record([
            fmt_real(r.delta),
            fmt_real(r.rho),
            r.trial_index.to_string(),
            r.seed.to_string(),
            r.k_drawn.to_string(),
            r.iterations.to_string(),
            fmt_real(r.nmse),
            r.success.to_string(),
            fmt_real(r.runtime_ms),
        ])?;
    }
    to_string(w)
}

fn check_header(reader: &mut csv::Reader<&[u8]>, expected: &[&str]) -> Result<()> {
    let headers = reader.headers()?;
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::Format(format!(
            "unexpected header {:?}, expected {}",
            headers.iter().collect::<Vec<_>>(),
            expected.join(",")
        )));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    let raw = rec
        .get(i)
        .ok_or_else(|| Error::Format(format!("missing column {name}")))?;
    raw.trim()
        .parse()
        .map_err(|_| Error::Format(format!("bad value {raw:?} in column {name}")))
}

pub fn parse_results_csv(text: &str) -> Result<Vec<TrialRecord>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    check_header(&mut reader, &RESULTS_HEADER)?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        out.push(TrialRecord {
            delta: field(&rec, 0, "delta")?,
            rho: field(&rec, 1, "rho")?,
            trial_index: field(&rec, 2, "trial")?,
            seed: field(&rec, 3, "seed")?,
            k_drawn: field(&rec, 4, "k_drawn")?,
            iterations: field(&rec, 5, "iterations")?,
            nmse: field(&rec, 6, "nmse")?,
            success: field(&rec, 7, "success")?,
            runtime_ms: field(&rec, 8, "runtime_ms")?,
            diagnostic: None,
        });
    }
    Ok(out)
}

pub fn curves_to_csv(curves: &[TransitionCurve]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CURVES_HEADER)?;
    for c in curves {
        w.write_record([
            fmt_real(c.delta),
            fmt_real(c.rho_50),
            fmt_real(c.rho_10),
            fmt_real(c.rho_90),
            c.fit_converged.to_string(),
            c.n_trials.to_string(),
        ])?;
    }
    to_string(w)
}

pub fn parse_curves_csv(text: &str) -> Result<Vec<TransitionCurve>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    check_header(&mut reader, &CURVES_HEADER)?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        out.push(TransitionCurve {
            delta: field(&rec, 0, "delta")?,
            rho_50: field(&rec, 1, "rho50")?,
            rho_10: field(&rec, 2, "rho10")?,
            rho_90: field(&rec, 3, "rho90")?,
            fit_converged: field(&rec, 4, "fit_converged")?,
            n_trials: field(&rec, 5, "n_trials")?,
        });
    }
    Ok(out)
}

//! CSV and JSON-lines writers for run artifacts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use qedq_core::models::QueueRealization;
use qedq_core::stats::{EnsembleStats, QUANTILE_PROBS};
use qedq_core::Cadlag;

use crate::harness::{HResult, HarnessError, Verdict};

fn csv_writer(path: &Path) -> HResult<csv::Writer<File>> {
    Ok(csv::Writer::from_writer(File::create(path)?))
}

fn csv_err(e: csv::Error) -> HarnessError {
    HarnessError::Io(e.into())
}

/// Event log: `t, event_type, Q_after`, preceded by the initial state as an
/// `initial` row at time 0.
pub fn write_events(path: &Path, r: &QueueRealization) -> HResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t", "event_type", "Q_after"]).map_err(csv_err)?;
    w.serialize((0.0, "initial", r.queue.initial() as u64)).map_err(csv_err)?;
    for e in &r.events {
        w.serialize((e.t, e.kind.name(), e.q_after)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// One path on a grid: `t, value`.
pub fn write_path_csv(path: &Path, times: &[f64], values: &[f64]) -> HResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t", "value"]).map_err(csv_err)?;
    for (t, v) in times.iter().zip(values) {
        w.serialize((t, v)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct PathPoint {
    t: f64,
    v: f64,
}

/// One path on a grid as JSON lines `{"t": …, "v": …}`.
pub fn write_path_jsonl(path: &Path, times: &[f64], values: &[f64]) -> HResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (&t, &v) in times.iter().zip(values) {
        serde_json::to_writer(&mut w, &PathPoint { t, v }).map_err(std::io::Error::from)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-replication samples in long form: `replication, t, X`.
pub fn write_replications(path: &Path, t_grid: &[f64], rows: &[Vec<f64>]) -> HResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["replication", "t", "X"]).map_err(csv_err)?;
    for (rep, row) in rows.iter().enumerate() {
        for (t, x) in t_grid.iter().zip(row) {
            w.serialize((rep, t, x)).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-time ensemble statistics: `t, count, mean, variance, se, q01 … q99`.
/// Undefined variances are written as empty fields.
pub fn write_ensemble(path: &Path, stats: &EnsembleStats) -> HResult<()> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = ["t", "count", "mean", "variance", "se"].map(String::from).to_vec();
    header.extend(QUANTILE_PROBS.iter().map(|p| format!("q{:02}", (p * 100.0).round() as u32)));
    w.write_record(&header).map_err(csv_err)?;
    for (t, s) in stats.t_grid().iter().zip(stats.summaries()) {
        let mut rec = vec![t.to_string(), s.count.to_string(), s.mean.to_string()];
        rec.push(s.variance.map_or(String::new(), |v| v.to_string()));
        rec.push(s.std_error.map_or(String::new(), |v| v.to_string()));
        rec.extend(s.quantiles.iter().map(f64::to_string));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// A sampled field: `t, x, value`.
pub fn write_field(path: &Path, rows: &[(f64, f64, f64)]) -> HResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t", "x", "value"]).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Any serializable value as pretty JSON.
pub fn write_json(path: &Path, value: &impl Serialize) -> HResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// `verdicts.jsonl`, one verdict per line. Runtimes are left out so the file
/// is a function of the configuration and seed alone.
pub fn write_verdicts(path: &Path, verdicts: &[Verdict]) -> HResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in verdicts {
        writeln!(w, "{}", v.to_json_line())?;
    }
    w.flush()?;
    Ok(())
}

/// `summary.csv`: experiment, status, statistic, threshold, runtime_s,
/// replications.
pub fn write_summary(path: &Path, verdicts: &[Verdict]) -> HResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["experiment", "status", "statistic", "threshold", "runtime_s", "replications"])
        .map_err(csv_err)?;
    for v in verdicts {
        w.serialize((&v.experiment, v.status.name(), v.statistic, v.threshold, v.runtime_s, v.replications))
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_jsonl_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.jsonl");
        write_path_jsonl(&p, &[0.0, 0.5], &[1.0, -2.5]).unwrap();
        assert_eq!(std::fs::read_to_string(p).unwrap(), "{\"t\":0.0,\"v\":1.0}\n{\"t\":0.5,\"v\":-2.5}\n");
    }

    #[test]
    fn ensemble_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        let mut e = EnsembleStats::new(vec![0.0, 1.0]);
        e.push(&[1.0, 2.0]).unwrap();
        e.push(&[3.0, 2.0]).unwrap();
        write_ensemble(&p, &e).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,count,mean,variance,se,q01,q05,q25,q50,q75,q95,q99");
        assert!(lines.next().unwrap().starts_with("0,2,2,2,1,"));
        assert!(lines.next().unwrap().starts_with("1,2,2,0,0,"));
    }
}

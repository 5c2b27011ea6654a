//! CSV and JSON emission.
//!
//! Every CSV starts with a `# schema: <name>` comment line followed by the
//! header row. Floats use Rust's shortest round-trip `Display` form, so
//! output is byte-stable for identical inputs.

use std::io::{self, Write};

use crate::sim::{Metrics, SweepAggregate, SweepRow};

pub const METRICS_SCHEMA: &str = "semtrack.metrics.v1";
pub const TRAJECTORY_SCHEMA: &str = "semtrack.trajectory.v1";
pub const SWEEP_SCHEMA: &str = "semtrack.sweep.v1";
pub const AGGREGATE_SCHEMA: &str = "semtrack.aggregate.v1";

pub const METRICS_HEADER: &str = "scheme,seed,gamma,avg_cost,avg_tx_power,comm_rate,diverged,steps";
pub const TRAJECTORY_HEADER: &str = "scheme,t,cost";
pub const SWEEP_HEADER: &str = "scheme,axis,value,seed,avg_cost,avg_tx_power,comm_rate,diverged";
pub const AGGREGATE_HEADER: &str =
    "scheme,axis,value,n_seeds,mean_cost,stderr_cost,mean_tx_power,mean_comm_rate,n_diverged";

fn preamble<W: Write>(out: &mut W, schema: &str, header: &str) -> io::Result<()> {
    writeln!(out, "# schema: {schema}")?;
    writeln!(out, "{header}")
}

pub fn write_metrics_csv<W: Write>(out: &mut W, rows: &[Metrics]) -> io::Result<()> {
    preamble(out, METRICS_SCHEMA, METRICS_HEADER)?;
    for m in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            m.scheme.name(),
            m.seed,
            m.gamma,
            m.avg_cost,
            m.avg_tx_power,
            m.comm_rate,
            m.diverged,
            m.steps
        )?;
    }
    Ok(())
}

pub fn write_trajectory_csv<W: Write>(out: &mut W, rows: &[Metrics]) -> io::Result<()> {
    preamble(out, TRAJECTORY_SCHEMA, TRAJECTORY_HEADER)?;
    for m in rows {
        for &(t, cost) in &m.cost_trajectory {
            writeln!(out, "{},{},{}", m.scheme.name(), t, cost)?;
        }
    }
    Ok(())
}

pub fn write_sweep_csv<W: Write>(out: &mut W, rows: &[SweepRow]) -> io::Result<()> {
    preamble(out, SWEEP_SCHEMA, SWEEP_HEADER)?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.scheme.name(),
            r.axis.name(),
            r.value,
            r.seed,
            r.avg_cost,
            r.avg_tx_power,
            r.comm_rate,
            r.diverged
        )?;
    }
    Ok(())
}

pub fn write_aggregate_csv<W: Write>(out: &mut W, rows: &[SweepAggregate]) -> io::Result<()> {
    preamble(out, AGGREGATE_SCHEMA, AGGREGATE_HEADER)?;
    for a in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            a.scheme.name(),
            a.axis.name(),
            a.value,
            a.n_seeds,
            a.mean_cost,
            a.stderr_cost,
            a.mean_tx_power,
            a.mean_comm_rate,
            a.n_diverged
        )?;
    }
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<W: Write, T: serde::Serialize + ?Sized>(out: &mut W, value: &T) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut *out, value).map_err(io::Error::other)?;
    writeln!(out)
}

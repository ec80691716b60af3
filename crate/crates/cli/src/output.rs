//! File outputs: per-iteration trace CSV, the structured result file, and
//! the benchmark/transition tables.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use bestsubset::SolveResult;
use serde::{Deserialize, Serialize};

pub const TRACE_HEADER: &str = "k,step_type,f,residual,t_k,support_changed,ge_cum,cg_cum";
pub const BENCH_HEADER: &str = "dataset,algorithm,s,cpu_seconds,ge,cg,metric,converged";
pub const TRANSITION_HEADER: &str = "fraction,s,algorithm,cpu_seconds,ge,cg,converged";

pub fn write_trace_csv(path: &Path, result: &SolveResult) -> Result<()> {
    let mut out = BufWriter::new(
        File::create(path).with_context(|| format!("creating trace file {}", path.display()))?,
    );
    writeln!(out, "{TRACE_HEADER}")?;
    for rec in &result.trace {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            rec.k,
            rec.step_type.name(),
            rec.f,
            rec.residual,
            rec.extrapolation_t,
            rec.support_changed,
            rec.ge_cum,
            rec.cg_cum
        )?;
    }
    Ok(())
}

/// The structured solve summary; field set is part of the CLI contract.
#[derive(Debug, Serialize, Deserialize)]
pub struct ResultFile {
    pub n: usize,
    pub s: usize,
    pub support: Vec<usize>,
    pub values: Vec<f64>,
    pub f: f64,
    pub residual: f64,
    pub iterations: u64,
    pub ge: u64,
    pub cg: u64,
    pub status: String,
}

impl ResultFile {
    pub fn from_result(result: &SolveResult, s: usize) -> Self {
        Self {
            n: result.w.ambient_dim(),
            s,
            support: result.w.support().to_vec(),
            values: result.w.values().to_vec(),
            f: result.f,
            residual: result.residual,
            iterations: result.iterations,
            ge: result.ge,
            cg: result.cg,
            status: result.status.name().to_string(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path)
            .with_context(|| format!("creating result file {}", path.display()))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)?;
        Ok(())
    }
}

/// Writes a table either to the given path or to stdout.
pub fn write_table(path: Option<&Path>, header: &str, rows: &[String]) -> Result<()> {
    match path {
        Some(p) => {
            let mut out = BufWriter::new(
                File::create(p).with_context(|| format!("creating table {}", p.display()))?,
            );
            writeln!(out, "{header}")?;
            for row in rows {
                writeln!(out, "{row}")?;
            }
        }
        None => {
            println!("{header}");
            for row in rows {
                println!("{row}");
            }
        }
    }
    Ok(())
}

//! Result emission: one flat record per (cell, policy, seed), written as CSV
//! or JSON with dot-decimal numbers, plus a run manifest that is always
//! written last, atomically, so a manifest on disk means the results beside
//! it are complete.

use std::io::Write;
use std::path::{Path, PathBuf};

use dralb_core::{MetricsReport, SimConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn file_name(self) -> &'static str {
        match self {
            OutputFormat::Csv => "results.csv",
            OutputFormat::Json => "results.json",
        }
    }
}

/// One row of output. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub cell: String,
    pub policy: String,
    pub hosts: usize,
    pub vms_per_host: usize,
    pub tasks: usize,
    pub arrival_rate: f64,
    pub seed: u64,
    pub makespan_s: f64,
    pub avg_response_s: f64,
    pub util_cpu: f64,
    pub util_mem: f64,
    pub util_energy: f64,
    pub util_bw: f64,
    pub util_dc: f64,
    pub wastage_pct: f64,
    pub failures: u64,
    pub sla_violation_rate: f64,
    pub penalty_profit: f64,
    pub energy_joules: f64,
    pub traffic_overflow: f64,
    pub tasks_completed: u64,
}

impl RunRecord {
    pub fn new(cell: &str, cfg: &SimConfig, seed: u64, report: &MetricsReport) -> RunRecord {
        let [util_cpu, util_mem, util_energy, util_bw] = report.utilization_per_dim;
        RunRecord {
            cell: cell.to_string(),
            policy: cfg.policy.name().to_string(),
            hosts: cfg.hosts,
            vms_per_host: cfg.vms_per_host,
            tasks: cfg.tasks,
            arrival_rate: cfg.arrival_rate,
            seed,
            makespan_s: report.makespan,
            avg_response_s: report.avg_response_time,
            util_cpu,
            util_mem,
            util_energy,
            util_bw,
            util_dc: report.utilization_dc,
            wastage_pct: report.wastage_pct,
            failures: report.failures,
            sla_violation_rate: report.sla_violation_rate,
            penalty_profit: report.penalty_profit,
            energy_joules: report.energy_joules,
            traffic_overflow: report.traffic.overflow_proportion,
            tasks_completed: report.tasks_completed,
        }
    }
}

/// Everything needed to reproduce and locate a finished run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub preset: Option<String>,
    pub base_config: SimConfig,
    pub seeds: Vec<u64>,
    pub outputs: Vec<String>,
    pub duration_secs: f64,
}

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot encode {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("cannot encode {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> OutputError {
    OutputError::Io { path: path.display().to_string(), source }
}

pub fn write_records(
    records: &[RunRecord],
    format: OutputFormat,
    mut sink: impl Write,
    path: &Path,
) -> Result<(), OutputError> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(sink);
            for r in records {
                w.serialize(r)
                    .map_err(|source| OutputError::Csv { path: path.display().to_string(), source })?;
            }
            w.flush().map_err(|source| io_err(path, source))?;
        }
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut sink, records)
                .map_err(|source| OutputError::Json { path: path.display().to_string(), source })?;
            sink.write_all(b"\n").map_err(|source| io_err(path, source))?;
            sink.flush().map_err(|source| io_err(path, source))?;
        }
    }
    Ok(())
}

/// Write the result file into `dir`, returning its path.
pub fn write_results_file(
    records: &[RunRecord],
    format: OutputFormat,
    dir: &Path,
) -> Result<PathBuf, OutputError> {
    std::fs::create_dir_all(dir).map_err(|source| io_err(dir, source))?;
    let path = dir.join(format.file_name());
    let file = std::fs::File::create(&path).map_err(|source| io_err(&path, source))?;
    write_records(records, format, std::io::BufWriter::new(file), &path)?;
    Ok(path)
}

/// Write the manifest next to the results via a temp file and rename, so a
/// partial write can never masquerade as a finished run.
pub fn write_manifest(manifest: &RunManifest, dir: &Path) -> Result<PathBuf, OutputError> {
    let path = dir.join("manifest.json");
    let tmp = dir.join("manifest.json.tmp");
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|source| OutputError::Json { path: path.display().to_string(), source })?;
    std::fs::write(&tmp, text.as_bytes()).map_err(|source| io_err(&tmp, source))?;
    std::fs::rename(&tmp, &path).map_err(|source| io_err(&path, source))?;
    Ok(path)
}

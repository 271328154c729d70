//! `dralb-sim`: run the datacenter placement simulator from the command
//! line, one config or a whole experiment grid at a time.
//!
//! Precedence for every knob: built-in defaults, then the `--config` file,
//! then flags. Presets overwrite only their own grid dimensions. Exit codes:
//! 0 on success, 2 for configuration problems, 3 for output I/O problems.

mod config;
mod output;
mod preset;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use thiserror::Error;

use config::FileSettings;
use dralb_core::{replicate, PolicyKind, SimConfig};
use output::{OutputFormat, RunManifest, RunRecord};
use preset::PresetCell;

/// Compare placement policies on a simulated IaaS datacenter.
#[derive(Parser, Debug)]
#[command(name = "dralb-sim", version, about)]
struct Cli {
    /// Placement policy: rnd, seq, dhlb, or dralb
    #[arg(long)]
    policy: Option<PolicyKind>,

    /// Number of physical hosts in the fleet
    #[arg(long)]
    hosts: Option<usize>,

    /// Concurrent processing slots per host
    #[arg(long)]
    vms_per_host: Option<usize>,

    /// Number of tasks to generate
    #[arg(long)]
    tasks: Option<usize>,

    /// Mean task arrivals per second
    #[arg(long)]
    arrival_rate: Option<f64>,

    /// Base RNG seed
    #[arg(long)]
    seed: Option<u64>,

    /// Replications per config, seeded seed, seed+1, ...
    #[arg(long)]
    seeds: Option<u64>,

    /// Experiment grid: table2, table3, fig2, fig3, fig4, or fig5
    #[arg(long)]
    preset: Option<String>,

    /// Flat `key = value` config file
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory; omitted, results go to stdout and no manifest is
    /// written
    #[arg(long)]
    out: Option<PathBuf>,

    /// Result encoding
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
}

#[derive(Debug, Error)]
enum AppError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
}

impl AppError {
    fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) => 2,
            AppError::Io(_) => 3,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> AppError {
    AppError::Config(e.to_string())
}

fn io_err(e: impl std::fmt::Display) -> AppError {
    AppError::Io(e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(cli: Cli) -> Result<(), AppError> {
    let started = Instant::now();
    let threads = read_thread_cap()?;

    let file_settings = match &cli.config {
        Some(path) => config::load(path).map_err(config_err)?,
        None => FileSettings::default(),
    };
    let mut base = SimConfig::default();
    let rt_pinned = file_settings.apply(&mut base);
    apply_flags(&cli, &mut base);
    if !rt_pinned {
        // Keep the SLA ceiling tracking whatever hardware and workload the
        // file or flags ended up selecting.
        config::refresh_derived_threshold(&mut base);
    }
    base.validate().map_err(config_err)?;

    let seeds_n = cli
        .seeds
        .or(file_settings.seeds)
        .unwrap_or(if cli.preset.is_some() { 20 } else { 1 });
    if seeds_n == 0 {
        return Err(AppError::Config("seeds must be at least 1".to_string()));
    }

    let cells: Vec<PresetCell> = match &cli.preset {
        Some(name) => preset::grid(name, &base).map_err(config_err)?,
        None => vec![PresetCell { label: "single".to_string(), cfg: base.clone() }],
    };

    let mut records = Vec::new();
    for cell in &cells {
        let summary = replicate(&cell.cfg, seeds_n, threads).map_err(config_err)?;
        log::info!(
            "{} {}: mean makespan {:.3}s, mean failures {:.1}",
            cell.label,
            cell.cfg.policy,
            summary.makespan.mean,
            summary.failures.mean
        );
        for run in &summary.runs {
            records.push(RunRecord::new(&cell.label, &cell.cfg, run.seed, &run.report));
        }
    }

    match &cli.out {
        Some(dir) => {
            let results_path =
                output::write_results_file(&records, cli.format, dir).map_err(io_err)?;
            let manifest = RunManifest {
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                preset: cli.preset.clone(),
                base_config: base.clone(),
                seeds: (0..seeds_n).map(|i| base.seed.wrapping_add(i)).collect(),
                outputs: vec![results_path.display().to_string()],
                duration_secs: started.elapsed().as_secs_f64(),
            };
            output::write_manifest(&manifest, dir).map_err(io_err)?;
        }
        None => {
            let stdout = std::io::stdout().lock();
            output::write_records(&records, cli.format, stdout, Path::new("<stdout>"))
                .map_err(io_err)?;
        }
    }
    Ok(())
}

fn apply_flags(cli: &Cli, cfg: &mut SimConfig) {
    if let Some(p) = cli.policy {
        cfg.policy = p;
    }
    if let Some(h) = cli.hosts {
        cfg.hosts = h;
    }
    if let Some(v) = cli.vms_per_host {
        cfg.vms_per_host = v;
    }
    if let Some(t) = cli.tasks {
        cfg.tasks = t;
    }
    if let Some(r) = cli.arrival_rate {
        cfg.arrival_rate = r;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
}

/// DRALB_SIM_THREADS caps how many replications run in parallel; unset means
/// one worker per CPU.
fn read_thread_cap() -> Result<Option<usize>, AppError> {
    match std::env::var("DRALB_SIM_THREADS") {
        Ok(raw) => {
            let n: usize = raw.trim().parse().map_err(|_| {
                AppError::Config(format!(
                    "DRALB_SIM_THREADS must be a positive integer, got {raw:?}"
                ))
            })?;
            if n == 0 {
                return Err(AppError::Config(
                    "DRALB_SIM_THREADS must be at least 1".to_string(),
                ));
            }
            Ok(Some(n))
        }
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(AppError::Config(format!("DRALB_SIM_THREADS: {e}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_overlay_the_base_config() {
        let cli = Cli::parse_from([
            "dralb-sim",
            "--policy",
            "seq",
            "--hosts",
            "3",
            "--tasks",
            "9",
            "--arrival-rate",
            "0.5",
            "--seed",
            "42",
            "--vms-per-host",
            "2",
        ]);
        let mut cfg = SimConfig::default();
        apply_flags(&cli, &mut cfg);
        assert_eq!(cfg.policy, PolicyKind::Sequential);
        assert_eq!(cfg.hosts, 3);
        assert_eq!(cfg.vms_per_host, 2);
        assert_eq!(cfg.tasks, 9);
        assert_eq!(cfg.arrival_rate, 0.5);
        assert_eq!(cfg.seed, 42);
    }

    #[test]
    fn absent_flags_leave_the_base_alone() {
        let cli = Cli::parse_from(["dralb-sim"]);
        let mut cfg = SimConfig::default();
        apply_flags(&cli, &mut cfg);
        assert_eq!(cfg, SimConfig::default());
    }
}

//! Flat `key = value` run-configuration files.
//!
//! Lines are independent; `#` starts a comment and blank lines are skipped.
//! Every key is optional, unknown keys are errors, and values set here sit
//! between built-in defaults and command-line flags in precedence.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use dralb_core::{derived_rt_threshold, PolicyKind, SimConfig};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigFileError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Line { path: String, line: usize, msg: String },
}

/// Everything a config file may set. `None` means "not mentioned".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FileSettings {
    pub policy: Option<PolicyKind>,
    pub hosts: Option<usize>,
    pub vms_per_host: Option<usize>,
    pub tasks: Option<usize>,
    pub arrival_rate: Option<f64>,
    pub seed: Option<u64>,
    pub seeds: Option<u64>,
    pub sample_interval: Option<f64>,
    pub cluster_size: Option<usize>,
    pub rt_threshold: Option<f64>,
    pub ruc_threshold: Option<f64>,
    pub price_per_unit: Option<f64>,
    pub penalty_per_unit: Option<f64>,
    pub cost_per_unit: Option<f64>,
    pub host_mips: Option<Vec<f64>>,
    pub host_ram_mb: Option<f64>,
    pub host_bw_mps: Option<f64>,
    pub host_energy_budget_w: Option<f64>,
    pub power_work_w: Option<f64>,
    pub power_idle_w: Option<f64>,
    pub power_standby_w: Option<f64>,
    pub storage_gb: Option<f64>,
    pub length_min: Option<f64>,
    pub length_max: Option<f64>,
    pub file_min: Option<f64>,
    pub file_max: Option<f64>,
    pub output_min: Option<f64>,
    pub output_max: Option<f64>,
    pub bw_demand_max: Option<f64>,
    pub service_time_target_s: Option<f64>,
    pub energy_per_mips: Option<f64>,
}

impl FileSettings {
    /// Overlay these settings on a config. Returns whether the response-time
    /// threshold was pinned explicitly; when it never is, the caller should
    /// re-derive it from the final workload and hardware.
    pub fn apply(&self, cfg: &mut SimConfig) -> bool {
        macro_rules! set {
            ($field:expr, $target:expr) => {
                if let Some(v) = $field {
                    $target = v;
                }
            };
        }
        set!(self.policy, cfg.policy);
        set!(self.hosts, cfg.hosts);
        set!(self.vms_per_host, cfg.vms_per_host);
        set!(self.tasks, cfg.tasks);
        set!(self.arrival_rate, cfg.arrival_rate);
        set!(self.seed, cfg.seed);
        set!(self.sample_interval, cfg.sample_interval);
        set!(self.cluster_size, cfg.cluster_size);
        set!(self.rt_threshold, cfg.contract.rt_threshold);
        set!(self.ruc_threshold, cfg.contract.ruc_threshold);
        set!(self.price_per_unit, cfg.contract.price_per_unit);
        set!(self.penalty_per_unit, cfg.contract.penalty_per_unit);
        set!(self.cost_per_unit, cfg.contract.cost_per_unit);
        if let Some(mips) = &self.host_mips {
            cfg.host_template.mips = mips.clone();
        }
        set!(self.host_ram_mb, cfg.host_template.ram_mb);
        set!(self.host_bw_mps, cfg.host_template.bw_mps);
        set!(self.host_energy_budget_w, cfg.host_template.energy_budget_w);
        set!(self.power_work_w, cfg.host_template.power_work_w);
        set!(self.power_idle_w, cfg.host_template.power_idle_w);
        set!(self.power_standby_w, cfg.host_template.power_standby_w);
        set!(self.storage_gb, cfg.host_template.storage_gb);
        set!(self.length_min, cfg.workload.length_mips.0);
        set!(self.length_max, cfg.workload.length_mips.1);
        set!(self.file_min, cfg.workload.file_size_mb.0);
        set!(self.file_max, cfg.workload.file_size_mb.1);
        set!(self.output_min, cfg.workload.output_size_mb.0);
        set!(self.output_max, cfg.workload.output_size_mb.1);
        set!(self.bw_demand_max, cfg.workload.bw_demand_max);
        set!(self.service_time_target_s, cfg.workload.service_time_target_s);
        set!(self.energy_per_mips, cfg.workload.energy_per_mips);
        self.rt_threshold.is_some()
    }
}

/// Re-derive the default response-time ceiling after workload or hardware
/// overrides, so the SLA keeps tracking what "normal" service looks like.
pub fn refresh_derived_threshold(cfg: &mut SimConfig) {
    cfg.contract.rt_threshold = derived_rt_threshold(&cfg.workload, &cfg.host_template);
}

pub fn load(path: &Path) -> Result<FileSettings, ConfigFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigFileError::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse(&text, &path.display().to_string())
}

fn parse(text: &str, path: &str) -> Result<FileSettings, ConfigFileError> {
    let mut s = FileSettings::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.split_once('#') {
            Some((before, _)) => before.trim(),
            None => raw.trim(),
        };
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(line_err(path, line_no, "expected `key = value`"));
        };
        let key = key.trim();
        let value = value.trim();
        if value.is_empty() {
            return Err(line_err(path, line_no, &format!("key `{key}` has no value")));
        }
        match key {
            "policy" => s.policy = Some(parse_value(path, line_no, key, value)?),
            "hosts" => s.hosts = Some(parse_value(path, line_no, key, value)?),
            "vms_per_host" => s.vms_per_host = Some(parse_value(path, line_no, key, value)?),
            "tasks" => s.tasks = Some(parse_value(path, line_no, key, value)?),
            "arrival_rate" => s.arrival_rate = Some(parse_value(path, line_no, key, value)?),
            "seed" => s.seed = Some(parse_value(path, line_no, key, value)?),
            "seeds" => s.seeds = Some(parse_value(path, line_no, key, value)?),
            "sample_interval" => s.sample_interval = Some(parse_value(path, line_no, key, value)?),
            "cluster_size" => s.cluster_size = Some(parse_value(path, line_no, key, value)?),
            "rt_threshold" => s.rt_threshold = Some(parse_value(path, line_no, key, value)?),
            "ruc_threshold" => s.ruc_threshold = Some(parse_value(path, line_no, key, value)?),
            "price_per_unit" => s.price_per_unit = Some(parse_value(path, line_no, key, value)?),
            "penalty_per_unit" => {
                s.penalty_per_unit = Some(parse_value(path, line_no, key, value)?)
            }
            "cost_per_unit" => s.cost_per_unit = Some(parse_value(path, line_no, key, value)?),
            "host_mips" => {
                let ratings = value
                    .split(',')
                    .map(|part| parse_value(path, line_no, key, part.trim()))
                    .collect::<Result<Vec<f64>, _>>()?;
                s.host_mips = Some(ratings);
            }
            "host_ram_mb" => s.host_ram_mb = Some(parse_value(path, line_no, key, value)?),
            "host_bw_mps" => s.host_bw_mps = Some(parse_value(path, line_no, key, value)?),
            "host_energy_budget_w" => {
                s.host_energy_budget_w = Some(parse_value(path, line_no, key, value)?)
            }
            "power_work_w" => s.power_work_w = Some(parse_value(path, line_no, key, value)?),
            "power_idle_w" => s.power_idle_w = Some(parse_value(path, line_no, key, value)?),
            "power_standby_w" => {
                s.power_standby_w = Some(parse_value(path, line_no, key, value)?)
            }
            "storage_gb" => s.storage_gb = Some(parse_value(path, line_no, key, value)?),
            "length_min" => s.length_min = Some(parse_value(path, line_no, key, value)?),
            "length_max" => s.length_max = Some(parse_value(path, line_no, key, value)?),
            "file_min" => s.file_min = Some(parse_value(path, line_no, key, value)?),
            "file_max" => s.file_max = Some(parse_value(path, line_no, key, value)?),
            "output_min" => s.output_min = Some(parse_value(path, line_no, key, value)?),
            "output_max" => s.output_max = Some(parse_value(path, line_no, key, value)?),
            "bw_demand_max" => s.bw_demand_max = Some(parse_value(path, line_no, key, value)?),
            "service_time_target_s" => {
                s.service_time_target_s = Some(parse_value(path, line_no, key, value)?)
            }
            "energy_per_mips" => s.energy_per_mips = Some(parse_value(path, line_no, key, value)?),
            _ => {
                return Err(line_err(path, line_no, &format!("unknown key `{key}`")));
            }
        }
    }
    Ok(s)
}

fn line_err(path: &str, line: usize, msg: &str) -> ConfigFileError {
    ConfigFileError::Line { path: path.to_string(), line, msg: msg.to_string() }
}

fn parse_value<T>(path: &str, line: usize, key: &str, value: &str) -> Result<T, ConfigFileError>
where
    T: FromStr,
    T::Err: Display,
{
    value.parse().map_err(|e| {
        line_err(path, line, &format!("bad value {value:?} for `{key}`: {e}"))
    })
}

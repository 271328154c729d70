//! Named experiment grids. Each preset expands to a list of cells (one per
//! grid point per policy); the caller replicates every cell over its seeds.

use dralb_core::{PolicyKind, SimConfig};
use thiserror::Error;

pub const PRESET_NAMES: [&str; 6] = ["table2", "table3", "fig2", "fig3", "fig4", "fig5"];

/// One grid point under one policy. The label names the grid point; the
/// policy is carried in the config and reported separately.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetCell {
    pub label: String,
    pub cfg: SimConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown preset {name:?}, expected one of {}", PRESET_NAMES.join(", "))]
pub struct UnknownPreset {
    pub name: String,
}

/// Expand a preset over a base config. Grid dimensions (hosts, tasks, and
/// where the preset defines one, arrival rate) overwrite the base; every
/// other knob is inherited from it.
pub fn grid(name: &str, base: &SimConfig) -> Result<Vec<PresetCell>, UnknownPreset> {
    let mut points: Vec<(String, SimConfig)> = Vec::new();
    let mut point = |label: String, cfg: SimConfig| points.push((label, cfg));
    match name {
        // Makespan grid: five task counts against two fleet sizes.
        "table2" => {
            for &tasks in &[40usize, 80, 120, 160, 200] {
                for &hosts in &[10usize, 20] {
                    let vms = hosts * base.vms_per_host;
                    point(
                        format!("t{tasks}_v{vms}"),
                        SimConfig { hosts, tasks, ..base.clone() },
                    );
                }
            }
        }
        // Utilization/wastage: a fixed fleet under light and heavy demand.
        "table3" => {
            for &tasks in &[100usize, 400] {
                point(
                    format!("t{tasks}"),
                    SimConfig { hosts: 20, tasks, arrival_rate: 6.0, ..base.clone() },
                );
            }
        }
        // Response-time sweeps over arrival rate; fig3 triples the demand so
        // tasks outnumber the fleet's machine slots.
        "fig2" | "fig3" => {
            let tasks = if name == "fig2" { 400 } else { 1000 };
            for &rate in &[1.0f64, 2.0, 4.0, 8.0, 16.0] {
                point(
                    format!("rate{rate}"),
                    SimConfig { hosts: 50, tasks, arrival_rate: rate, ..base.clone() },
                );
            }
        }
        // Deployment failures on a deliberately small fleet.
        "fig4" => {
            for tasks in (25usize..=200).step_by(25) {
                point(format!("t{tasks}"), SimConfig { hosts: 5, tasks, ..base.clone() });
            }
        }
        // Traffic balance under growing demand.
        "fig5" => {
            for &tasks in &[50usize, 100, 150, 200] {
                point(
                    format!("t{tasks}"),
                    SimConfig { hosts: 10, tasks, arrival_rate: 4.0, ..base.clone() },
                );
            }
        }
        other => return Err(UnknownPreset { name: other.to_string() }),
    }
    Ok(points
        .into_iter()
        .flat_map(|(label, cfg)| {
            PolicyKind::ALL.into_iter().map(move |policy| PresetCell {
                label: label.clone(),
                cfg: SimConfig { policy, ..cfg.clone() },
            })
        })
        .collect())
}

//! Measured quantities: fleet utilization, energy drawn over an interval,
//! per-task timing and makespan, and traffic-skew statistics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::PhysicalHost;

/// Number of managed resource dimensions.
pub const N_RESOURCES: usize = 4;

/// Point-in-time utilization of the fleet.
///
/// The datacenter average divides by the number of hosts in service, i.e.
/// hosts currently carrying at least one machine. A host with nothing
/// placed on it idles in standby and is not provisioned capacity, so it
/// stays out of the denominator; the figure measures how fully the hosts a
/// policy engages are actually used across all four dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilizationSnapshot {
    /// Per-host utilization fractions in dimension order, fleet order.
    pub per_host: Vec<[f64; N_RESOURCES]>,
    /// Mean utilization per dimension across hosts in service.
    pub per_dim: [f64; N_RESOURCES],
    /// Mean of `per_dim`, the single datacenter utilization figure.
    pub dc_average: f64,
    /// Hosts carrying at least one machine, the averaging denominator.
    pub serving_hosts: usize,
    pub n_resources: usize,
}

/// Snapshot the fleet's utilization. With no host in service every average
/// is 0.
pub fn utilization(hosts: &[PhysicalHost]) -> UtilizationSnapshot {
    let per_host: Vec<[f64; N_RESOURCES]> = hosts.iter().map(PhysicalHost::utilization).collect();
    let mut per_dim = [0.0; N_RESOURCES];
    let mut serving = 0usize;
    for (host, util) in hosts.iter().zip(&per_host) {
        if host.is_on() && host.vm_count() > 0 {
            serving += 1;
            for d in 0..N_RESOURCES {
                per_dim[d] += util[d];
            }
        }
    }
    if serving > 0 {
        for item in &mut per_dim {
            *item /= serving as f64;
        }
    }
    let dc_average = per_dim.iter().sum::<f64>() / N_RESOURCES as f64;
    UtilizationSnapshot {
        per_host,
        per_dim,
        dc_average,
        serving_hosts: serving,
        n_resources: N_RESOURCES,
    }
}

/// Operating regime a host was billed under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnergyState {
    OnWorking,
    OnIdle,
    Off,
}

/// Energy one host drew over one sampling interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub host_id: u64,
    pub interval_s: f64,
    /// Mean utilization across the four dimensions at billing time.
    pub utilization: f64,
    pub state: EnergyState,
    pub joules: f64,
}

/// Bill every host for one interval. A powered-on host draws a blend of its
/// working and idle wattage in proportion to its mean utilization, so an
/// empty host draws exactly its idle power; a powered-off host draws standby.
pub fn energy(hosts: &[PhysicalHost], interval_s: f64) -> Vec<EnergyRecord> {
    assert!(interval_s > 0.0, "billing interval must be positive");
    hosts
        .iter()
        .map(|h| {
            if h.is_on() {
                let u = h.mean_utilization();
                EnergyRecord {
                    host_id: h.id,
                    interval_s,
                    utilization: u,
                    state: if h.vm_count() > 0 { EnergyState::OnWorking } else { EnergyState::OnIdle },
                    joules: interval_s * (u * h.power.work_w + (1.0 - u) * h.power.idle_w),
                }
            } else {
                EnergyRecord {
                    host_id: h.id,
                    interval_s,
                    utilization: 0.0,
                    state: EnergyState::Off,
                    joules: interval_s * h.power.standby_w,
                }
            }
        })
        .collect()
}

pub fn total_energy(records: &[EnergyRecord]) -> f64 {
    records.iter().map(|r| r.joules).sum()
}

/// Timing components of one completed task, all in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub task_id: u64,
    pub arrival: f64,
    pub receiving: f64,
    pub waiting: f64,
    pub processing: f64,
    /// Always the sum of the three phases.
    pub turnaround: f64,
}

impl TimingRecord {
    pub fn new(task_id: u64, arrival: f64, receiving: f64, waiting: f64, processing: f64) -> Self {
        TimingRecord {
            task_id,
            arrival,
            receiving,
            waiting,
            processing,
            turnaround: receiving + waiting + processing,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("makespan is undefined without completed tasks")]
pub struct NoCompletions;

/// Elapsed time from the earliest arrival to the last completion.
pub fn makespan(timings: &[TimingRecord]) -> Result<f64, NoCompletions> {
    if timings.is_empty() {
        return Err(NoCompletions);
    }
    let first_arrival = timings.iter().map(|t| t.arrival).fold(f64::INFINITY, f64::min);
    let last_completion =
        timings.iter().map(|t| t.arrival + t.turnaround).fold(f64::NEG_INFINITY, f64::max);
    Ok(last_completion - first_arrival)
}

/// Mean turnaround across completions; 0 when nothing completed.
pub fn mean_turnaround(timings: &[TimingRecord]) -> f64 {
    if timings.is_empty() {
        return 0.0;
    }
    timings.iter().map(|t| t.turnaround).sum::<f64>() / timings.len() as f64
}

/// How placed demand spread over the fleet relative to each server's fair
/// share of capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficStats {
    /// Share of all assigned weight each server carries, in percent.
    pub per_server_pct: Vec<f64>,
    /// Fraction of traffic sitting above its server's fair share.
    pub overflow_proportion: f64,
}

/// Compare assigned weight per server against capacity-proportional fair
/// shares. Both inputs are normalized internally; a zero total on either
/// side yields zeros.
pub fn traffic_overflow(assigned_weights: &[f64], capacity_weights: &[f64]) -> TrafficStats {
    assert_eq!(
        assigned_weights.len(),
        capacity_weights.len(),
        "assigned and capacity weight lists cover different fleets"
    );
    let assigned_total: f64 = assigned_weights.iter().sum();
    let capacity_total: f64 = capacity_weights.iter().sum();
    if assigned_total <= 0.0 || capacity_total <= 0.0 {
        return TrafficStats {
            per_server_pct: vec![0.0; assigned_weights.len()],
            overflow_proportion: 0.0,
        };
    }
    let per_server_pct: Vec<f64> =
        assigned_weights.iter().map(|w| w / assigned_total * 100.0).collect();
    let overflow_proportion = assigned_weights
        .iter()
        .zip(capacity_weights)
        .map(|(&a, &c)| (a / assigned_total - c / capacity_total).max(0.0))
        .sum();
    TrafficStats { per_server_pct, overflow_proportion }
}

/// Every run-level figure the simulator reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub makespan: f64,
    pub avg_response_time: f64,
    /// Time-averaged utilization per dimension over the run's samples.
    pub utilization_per_dim: [f64; N_RESOURCES],
    /// Time-averaged datacenter utilization over the run's samples.
    pub utilization_dc: f64,
    /// Complement of the datacenter utilization, in percent.
    pub wastage_pct: f64,
    pub failures: u64,
    pub sla_violation_rate: f64,
    pub penalty_profit: f64,
    pub energy_joules: f64,
    pub traffic: TrafficStats,
    /// Overflow proportion of the routing census at each sample instant;
    /// `traffic.overflow_proportion` is the final-census value.
    pub traffic_overflow_series: Vec<f64>,
    pub tasks_total: u64,
    pub tasks_completed: u64,
}

//! Discrete-event simulation: workload generation, the event loop that
//! carries every task through receiving, waiting and processing on its host,
//! periodic rebalancing and metric sampling, and seeded replication.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::IntensityQueues;
use crate::metrics::{
    self, MetricsReport, TimingRecord, N_RESOURCES,
};
use crate::model::{
    self, PhysicalHost, PlacementMap, PowerProfile, ResourceVector, Task, VirtualMachine,
};
use crate::schedulers::{
    place_dhlb, place_dralb, place_random, place_sequential, PlacementDecision, PolicyKind,
};
use crate::sla::{
    check_violation, penalty_function, plan_rebalance, rebalance_needed, SlaContract, SlaLedger,
    VmMove,
};

/// Hardware every physical host is stamped from. CPU capacities alternate
/// through `mips` by host id; the remaining dimensions are uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostTemplate {
    pub mips: Vec<f64>,
    pub ram_mb: f64,
    pub bw_mps: f64,
    pub energy_budget_w: f64,
    pub power_work_w: f64,
    pub power_idle_w: f64,
    pub power_standby_w: f64,
    /// Recorded for completeness; storage is not a managed dimension.
    pub storage_gb: f64,
}

impl Default for HostTemplate {
    fn default() -> Self {
        HostTemplate {
            mips: vec![1860.0, 2660.0],
            ram_mb: 4096.0,
            bw_mps: 100.0,
            energy_budget_w: 500.0,
            power_work_w: 250.0,
            power_idle_w: 150.0,
            power_standby_w: 10.0,
            storage_gb: 10.0,
        }
    }
}

/// Ranges the synthetic workload is drawn from. Lengths are MIPS-seconds of
/// compute, sizes are MB, bandwidth demand is M/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadModel {
    pub length_mips: (f64, f64),
    pub file_size_mb: (f64, f64),
    pub output_size_mb: (f64, f64),
    /// Bandwidth demand is uniform in (0, bw_demand_max].
    pub bw_demand_max: f64,
    /// A task's CPU demand is the MIPS needed to finish its length in this
    /// many seconds on a dedicated machine.
    pub service_time_target_s: f64,
    /// Energy budget demanded per MIPS of CPU demand.
    pub energy_per_mips: f64,
}

impl Default for WorkloadModel {
    fn default() -> Self {
        WorkloadModel {
            length_mips: (250.0, 1000.0),
            file_size_mb: (100.0, 2000.0),
            output_size_mb: (20.0, 40.0),
            bw_demand_max: 100.0,
            service_time_target_s: 1.0,
            energy_per_mips: 0.30,
        }
    }
}

/// Everything one simulation run needs; fully determines the result together
/// with nothing else (same config, same report).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub hosts: usize,
    /// Concurrent processing slots per host.
    pub vms_per_host: usize,
    pub tasks: usize,
    pub policy: PolicyKind,
    pub seed: u64,
    /// Mean task arrivals per second.
    pub arrival_rate: f64,
    /// Spacing of metric samples and rebalance passes, seconds.
    pub sample_interval: f64,
    /// Hosts per cluster for the hierarchical baseline.
    pub cluster_size: usize,
    pub contract: SlaContract,
    pub host_template: HostTemplate,
    pub workload: WorkloadModel,
}

/// Twice the expected unencumbered turnaround — the line-rate copy plus the
/// service-time target — so waits beyond it flag genuine backlog, not
/// normal service.
pub fn derived_rt_threshold(workload: &WorkloadModel, template: &HostTemplate) -> f64 {
    let mean_file = (workload.file_size_mb.0 + workload.file_size_mb.1) / 2.0;
    2.0 * (mean_file / template.bw_mps + workload.service_time_target_s)
}

impl Default for SimConfig {
    fn default() -> Self {
        let host_template = HostTemplate::default();
        let workload = WorkloadModel::default();
        let contract = SlaContract {
            rt_threshold: derived_rt_threshold(&workload, &host_template),
            ruc_threshold: 0.95,
            price_per_unit: 1.0,
            penalty_per_unit: 0.5,
            cost_per_unit: 0.1,
        };
        SimConfig {
            hosts: 20,
            vms_per_host: 10,
            tasks: 400,
            policy: PolicyKind::Dralb,
            seed: 1,
            arrival_rate: 2.0,
            sample_interval: 1.0,
            cluster_size: 10,
            contract,
            host_template,
            workload,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("invalid configuration: {field} {reason}")]
pub struct ConfigError {
    pub field: &'static str,
    pub reason: String,
}

fn invalid(field: &'static str, reason: &str) -> ConfigError {
    ConfigError { field, reason: reason.to_string() }
}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

fn non_negative(v: f64) -> bool {
    v.is_finite() && v >= 0.0
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.vms_per_host == 0 {
            return Err(invalid("vms_per_host", "must be at least 1"));
        }
        if !positive(self.arrival_rate) {
            return Err(invalid("arrival_rate", "must be a positive number"));
        }
        if !positive(self.sample_interval) {
            return Err(invalid("sample_interval", "must be a positive number"));
        }
        if self.cluster_size == 0 {
            return Err(invalid("cluster_size", "must be at least 1"));
        }
        let t = &self.host_template;
        if t.mips.is_empty() || !t.mips.iter().all(|&m| positive(m)) {
            return Err(invalid("host_template.mips", "needs at least one positive rating"));
        }
        if !positive(t.ram_mb) || !positive(t.bw_mps) || !positive(t.energy_budget_w) {
            return Err(invalid("host_template", "capacities must be positive"));
        }
        if ![t.power_work_w, t.power_idle_w, t.power_standby_w, t.storage_gb]
            .iter()
            .all(|&v| non_negative(v))
        {
            return Err(invalid("host_template", "power and storage cannot be negative"));
        }
        let w = &self.workload;
        for (field, (lo, hi)) in [
            ("workload.length_mips", w.length_mips),
            ("workload.file_size_mb", w.file_size_mb),
        ] {
            if !positive(lo) || !hi.is_finite() || hi < lo {
                return Err(invalid(field, "needs 0 < low <= high"));
            }
        }
        let (out_lo, out_hi) = w.output_size_mb;
        if !non_negative(out_lo) || !out_hi.is_finite() || out_hi < out_lo {
            return Err(invalid("workload.output_size_mb", "needs 0 <= low <= high"));
        }
        if !positive(w.bw_demand_max) {
            return Err(invalid("workload.bw_demand_max", "must be positive"));
        }
        if !positive(w.service_time_target_s) {
            return Err(invalid("workload.service_time_target_s", "must be positive"));
        }
        if !non_negative(w.energy_per_mips) {
            return Err(invalid("workload.energy_per_mips", "cannot be negative"));
        }
        let c = &self.contract;
        if !positive(c.rt_threshold) {
            return Err(invalid("contract.rt_threshold", "must be positive"));
        }
        if !(positive(c.ruc_threshold) && c.ruc_threshold <= 1.0) {
            return Err(invalid("contract.ruc_threshold", "must lie in (0, 1]"));
        }
        if ![c.price_per_unit, c.penalty_per_unit, c.cost_per_unit]
            .iter()
            .all(|&v| non_negative(v))
        {
            return Err(invalid("contract", "prices cannot be negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("could not build the replication thread pool: {0}")]
    ThreadPool(String),
}

/// Stamp out the fleet: ids 0..hosts, CPU ratings cycling through the
/// template's list.
pub fn build_hosts(cfg: &SimConfig) -> Vec<PhysicalHost> {
    let t = &cfg.host_template;
    let power = PowerProfile {
        work_w: t.power_work_w,
        idle_w: t.power_idle_w,
        standby_w: t.power_standby_w,
    };
    (0..cfg.hosts as u64)
        .map(|id| {
            let mips = t.mips[id as usize % t.mips.len()];
            let capacity = ResourceVector::new(mips, t.ram_mb, t.energy_budget_w, t.bw_mps);
            PhysicalHost::new(id, capacity, power)
        })
        .collect()
}

/// Per-dimension mean capacity of the fleet, the yardstick tasks are
/// classified against. An empty fleet yields the zero vector.
pub fn reference_capacity(hosts: &[PhysicalHost]) -> ResourceVector {
    if hosts.is_empty() {
        return ResourceVector::ZERO;
    }
    let sum = hosts.iter().fold(ResourceVector::ZERO, |acc, h| acc.add(&h.capacity));
    let n = hosts.len() as f64;
    ResourceVector::new(sum.cpu / n, sum.mem / n, sum.energy / n, sum.bw / n)
}

/// Draw the full task list for a run. Arrivals follow a Poisson process at
/// the configured rate; attributes are uniform in their configured ranges;
/// demands derive from the attributes. Fully determined by the seed.
pub fn generate_workload(cfg: &SimConfig) -> Vec<Task> {
    let reference = reference_capacity(&build_hosts(cfg));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let gaps = Exp::new(cfg.arrival_rate).expect("validated positive arrival rate");
    let w = &cfg.workload;
    let mut now = 0.0;
    (0..cfg.tasks as u64)
        .map(|id| {
            now += gaps.sample(&mut rng);
            let length = rng.random_range(w.length_mips.0..=w.length_mips.1);
            let file_size = rng.random_range(w.file_size_mb.0..=w.file_size_mb.1);
            let output_size = rng.random_range(w.output_size_mb.0..=w.output_size_mb.1);
            let bw = w.bw_demand_max * (1.0 - rng.random::<f64>());
            let cpu = length / w.service_time_target_s;
            let demand = ResourceVector::new(cpu, file_size, w.energy_per_mips * cpu, bw);
            let (weights, _) = crate::classifier::classify(&demand, &reference);
            Task {
                id,
                client_id: id,
                arrival_time: now,
                length,
                demand,
                file_size,
                output_size,
                weights,
                deadline_rt: cfg.contract.rt_threshold,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    Completion { task_id: u64 },
    Ready { task_id: u64 },
    Arrival { task_id: u64 },
    /// Wakes the scheduler so overdue queued requests are dropped even when
    /// nothing else is happening.
    Expire { task_id: u64 },
    Rebalance { index: u64 },
    Sample { index: u64 },
}

impl EventKind {
    fn priority(&self) -> u8 {
        match self {
            EventKind::Completion { .. } => 0,
            EventKind::Ready { .. } => 1,
            EventKind::Arrival { .. } => 2,
            EventKind::Expire { .. } => 3,
            EventKind::Rebalance { .. } => 4,
            EventKind::Sample { .. } => 5,
        }
    }

    fn tie_id(&self) -> u64 {
        match self {
            EventKind::Completion { task_id }
            | EventKind::Ready { task_id }
            | EventKind::Arrival { task_id }
            | EventKind::Expire { task_id } => *task_id,
            EventKind::Rebalance { index } | EventKind::Sample { index } => *index,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Scheduled {
    time: f64,
    kind: EventKind,
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.time
            .total_cmp(&other.time)
            .then_with(|| self.kind.priority().cmp(&other.kind.priority()))
            .then_with(|| self.kind.tie_id().cmp(&other.kind.tie_id()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Receiving,
    Waiting,
    Processing,
}

/// Runtime state of one placed task.
#[derive(Debug, Clone, Copy)]
struct Flight {
    host: u64,
    ready_time: f64,
    receiving: f64,
    /// Queueing before placement plus any wait for a processing slot.
    waiting: f64,
    processing: f64,
    /// Holds one of its host's processing slots.
    reserved: bool,
    phase: Phase,
}

/// A finished run: the report plus every completed task's timing breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub report: MetricsReport,
    pub timings: Vec<TimingRecord>,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    tasks: Vec<Task>,
    hosts: Vec<PhysicalHost>,
    reference: ResourceVector,
    map: PlacementMap,
    vms: Vec<Option<VirtualMachine>>,
    flights: Vec<Option<Flight>>,
    free_slots: Vec<usize>,
    wait_queues: Vec<Vec<(f64, u64)>>,
    heap: BinaryHeap<Reverse<Scheduled>>,
    /// Requests admitted but not yet placed, in arrival order. Retried at
    /// every event until they fit somewhere or outlive the response bound.
    pending: Vec<u64>,
    /// Time of the earliest armed Expire event, so re-arming is idempotent.
    next_expire: f64,
    policy_rng: ChaCha8Rng,
    /// Cumulative traffic weight routed to each host: every placement adds
    /// the task's mean demand fraction of the fleet-average host. The weight
    /// stays with the host that first accepted the request even if
    /// rebalancing later moves the machine, since it measures routing.
    sold: Vec<f64>,
    /// Each host's share of fleet capacity, the fair-share yardstick the
    /// routed weights are compared against.
    fair_weights: Vec<f64>,
    /// Overflow proportion of the routing census at each sample instant.
    overflow_series: Vec<f64>,
    ledger: SlaLedger,
    timings: Vec<TimingRecord>,
    failures: u64,
    open_tasks: usize,
    sample_count: u64,
    util_dim_sum: [f64; N_RESOURCES],
    util_dc_sum: f64,
    energy_joules: f64,
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a SimConfig) -> Self {
        let tasks = generate_workload(cfg);
        let hosts = build_hosts(cfg);
        let reference = reference_capacity(&hosts);
        let n_hosts = hosts.len();
        let n_tasks = tasks.len();
        let fair_weights = hosts
            .iter()
            .map(|h| {
                let cap = h.capacity.as_array();
                let reference = reference.as_array();
                let mut w = 0.0;
                for d in 0..N_RESOURCES {
                    if reference[d] > 0.0 {
                        w += cap[d] / reference[d];
                    }
                }
                w / N_RESOURCES as f64
            })
            .collect();
        let mut sim = Sim {
            cfg,
            hosts,
            reference,
            map: PlacementMap::new(),
            vms: vec![None; n_tasks],
            flights: vec![None; n_tasks],
            free_slots: vec![cfg.vms_per_host; n_hosts],
            wait_queues: vec![Vec::new(); n_hosts],
            heap: BinaryHeap::new(),
            pending: Vec::new(),
            next_expire: f64::INFINITY,
            policy_rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9E37_79B9_7F4A_7C15),
            sold: vec![0.0; n_hosts],
            fair_weights,
            overflow_series: Vec::new(),
            ledger: SlaLedger::new(n_hosts),
            timings: Vec::with_capacity(n_tasks),
            failures: 0,
            open_tasks: n_tasks,
            sample_count: 0,
            util_dim_sum: [0.0; N_RESOURCES],
            util_dc_sum: 0.0,
            energy_joules: 0.0,
            tasks,
        };
        for t in &sim.tasks {
            sim.heap.push(Reverse(Scheduled {
                time: t.arrival_time,
                kind: EventKind::Arrival { task_id: t.id },
            }));
        }
        if n_tasks > 0 {
            sim.schedule(cfg.sample_interval, EventKind::Sample { index: 1 });
            // Only the managing policies keep working after placement; the
            // sequential and random heuristics place and forget.
            if matches!(cfg.policy, PolicyKind::Dralb | PolicyKind::Dhlb) {
                sim.schedule(cfg.sample_interval, EventKind::Rebalance { index: 1 });
            }
        }
        sim
    }

    fn schedule(&mut self, time: f64, kind: EventKind) {
        self.heap.push(Reverse(Scheduled { time, kind }));
    }

    fn run(mut self) -> SimOutput {
        let mut last_time = 0.0;
        while let Some(Reverse(event)) = self.heap.pop() {
            let now = event.time;
            debug_assert!(now >= last_time - 1e-9, "event time went backwards");
            last_time = now;
            match event.kind {
                EventKind::Completion { task_id } => self.handle_completion(task_id, now),
                EventKind::Ready { task_id } => self.handle_ready(task_id, now),
                EventKind::Arrival { task_id } => self.handle_arrival(task_id),
                EventKind::Expire { .. } => self.next_expire = f64::INFINITY,
                EventKind::Rebalance { index } => self.handle_rebalance(index, now),
                EventKind::Sample { index } => self.handle_sample(index),
            }
            if !self.pending.is_empty() {
                let another_arrival_now = self.heap.peek().is_some_and(|Reverse(next)| {
                    next.time == now && matches!(next.kind, EventKind::Arrival { .. })
                });
                if !another_arrival_now {
                    self.flush_batch(now);
                }
            }
        }
        self.finish()
    }

    /// Admit an arriving request to the placement queue, or reject it on the
    /// spot when no host in the fleet could hold it even empty.
    fn handle_arrival(&mut self, task_id: u64) {
        let demand = self.tasks[task_id as usize].demand;
        let fits_somewhere = self.hosts.iter().any(|h| {
            let cap = h.capacity.as_array();
            demand.as_array().iter().zip(cap).all(|(d, c)| *d <= c)
        });
        if fits_somewhere {
            self.pending.push(task_id);
        } else {
            self.failures += 1;
            self.open_tasks -= 1;
        }
    }

    /// Try to place the whole backlog. Requests the policy cannot seat stay
    /// queued for the next event; a request older than the response bound is
    /// dropped as failed, since it could no longer answer in time anyway.
    fn flush_batch(&mut self, now: f64) {
        let deadline = self.cfg.contract.rt_threshold;
        let tasks = &self.tasks;
        let (failures, open) = (&mut self.failures, &mut self.open_tasks);
        self.pending.retain(|&id| {
            // Same arithmetic as the Expire schedule, so the wake-up at
            // exactly this instant is guaranteed to see the task as overdue.
            if now >= tasks[id as usize].arrival_time + deadline {
                *failures += 1;
                *open -= 1;
                false
            } else {
                true
            }
        });
        if self.pending.is_empty() {
            return;
        }
        let batch: Vec<Task> =
            self.pending.iter().map(|&id| self.tasks[id as usize].clone()).collect();
        let decisions: Vec<PlacementDecision> = match self.cfg.policy {
            PolicyKind::Dralb => {
                let mut queues = IntensityQueues::new();
                for t in &batch {
                    queues.enqueue(t.clone());
                }
                let outcome = place_dralb(&mut queues, &self.hosts);
                log::trace!("batch at {now:.3}s: joint score {:.6}", outcome.joint_score);
                outcome.decisions
            }
            PolicyKind::Random => place_random(&batch, &self.hosts, &mut self.policy_rng),
            PolicyKind::Sequential => place_sequential(&batch, &self.hosts),
            PolicyKind::Dhlb => place_dhlb(&batch, &self.hosts, self.cfg.cluster_size),
        };
        let mut placed: Vec<u64> = Vec::new();
        for d in decisions {
            if let Some(host_id) = d.host_id {
                self.deploy(d.task_id, host_id, now);
                placed.push(d.task_id);
            }
        }
        if !placed.is_empty() {
            placed.sort_unstable();
            self.pending.retain(|id| placed.binary_search(id).is_err());
        }
        // Guarantee the queue is revisited no later than its next deadline.
        if let Some((expire_at, task_id)) = self
            .pending
            .iter()
            .map(|&id| (self.tasks[id as usize].arrival_time + deadline, id))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        {
            if expire_at < self.next_expire {
                self.next_expire = expire_at;
                self.schedule(expire_at, EventKind::Expire { task_id });
            }
        }
    }

    fn deploy(&mut self, task_id: u64, host_id: u64, now: f64) {
        let hi = host_id as usize;
        let task = &self.tasks[task_id as usize];
        let mut vm = VirtualMachine::new(task_id, task.demand);
        if let Err(e) = model::place(&mut vm, &mut self.hosts[hi], &mut self.map, task.client_id) {
            log::warn!("task {task_id} rejected by host {host_id} at deployment: {e}");
            self.failures += 1;
            self.open_tasks -= 1;
            return;
        }
        self.sold[hi] += self.traffic_weight(task_id);

        // The deployment copy streams at the host link's line rate; the
        // task's bandwidth demand reserves its steady-state service share.
        let receiving = task.file_size / self.hosts[hi].capacity.bw;
        let ready_time = now + receiving;
        let reserved = if self.free_slots[hi] > 0 {
            self.free_slots[hi] -= 1;
            true
        } else {
            false
        };
        self.vms[task_id as usize] = Some(vm);
        self.flights[task_id as usize] = Some(Flight {
            host: host_id,
            ready_time,
            receiving,
            // Time spent queued before any host could take the request.
            waiting: now - task.arrival_time,
            processing: 0.0,
            reserved,
            phase: Phase::Receiving,
        });
        self.schedule(ready_time, EventKind::Ready { task_id });
    }

    /// A request's traffic weight: its mean demand fraction of the
    /// fleet-average host, so totals are comparable across policies.
    fn traffic_weight(&self, task_id: u64) -> f64 {
        let reference = self.reference.as_array();
        let dem = self.tasks[task_id as usize].demand.as_array();
        let mut weight = 0.0;
        for d in 0..N_RESOURCES {
            if reference[d] > 0.0 {
                weight += dem[d] / reference[d];
            }
        }
        weight / N_RESOURCES as f64
    }

    fn handle_ready(&mut self, task_id: u64, now: f64) {
        let (host, reserved, ready_time) = {
            let f = self.flights[task_id as usize].as_ref().expect("ready task is in flight");
            (f.host as usize, f.reserved, f.ready_time)
        };
        if reserved {
            self.start_processing(task_id, now);
        } else if self.free_slots[host] > 0 {
            self.free_slots[host] -= 1;
            self.flights[task_id as usize].as_mut().unwrap().reserved = true;
            self.start_processing(task_id, now);
        } else {
            self.flights[task_id as usize].as_mut().unwrap().phase = Phase::Waiting;
            self.wait_queues[host].push((ready_time, task_id));
        }
    }

    fn start_processing(&mut self, task_id: u64, now: f64) {
        // The task processes at its reserved CPU rate; admission control
        // guaranteed that rate when the machine was placed.
        let task = &self.tasks[task_id as usize];
        let processing = task.length / task.demand.cpu;
        let f = self.flights[task_id as usize].as_mut().unwrap();
        f.waiting += (now - f.ready_time).max(0.0);
        f.processing = processing;
        f.phase = Phase::Processing;
        self.schedule(now + processing, EventKind::Completion { task_id });
    }

    fn handle_completion(&mut self, task_id: u64, now: f64) {
        let f = self.flights[task_id as usize].take().expect("completing task is in flight");
        let host = f.host as usize;
        let observed_util = self.hosts[host].max_utilization();
        let mut vm = self.vms[task_id as usize].take().expect("completing task has a machine");
        model::remove(&mut vm, &mut self.hosts[host], &mut self.map)
            .expect("completing machine is on its host");
        let task = &self.tasks[task_id as usize];
        let record =
            TimingRecord::new(task_id, task.arrival_time, f.receiving, f.waiting, f.processing);
        let check = check_violation(record.turnaround, observed_util, &self.cfg.contract);
        self.ledger.record(f.host, &check);
        self.timings.push(record);
        self.open_tasks -= 1;
        self.release_slot(host, now);
    }

    /// Hand a freed slot to the longest-waiting task, or bank it.
    fn release_slot(&mut self, host: usize, now: f64) {
        if self.wait_queues[host].is_empty() {
            self.free_slots[host] += 1;
            return;
        }
        let mut best = 0;
        for i in 1..self.wait_queues[host].len() {
            let (t_i, id_i) = self.wait_queues[host][i];
            let (t_b, id_b) = self.wait_queues[host][best];
            if t_i.total_cmp(&t_b).then(id_i.cmp(&id_b)).is_lt() {
                best = i;
            }
        }
        let (_, task_id) = self.wait_queues[host].swap_remove(best);
        self.flights[task_id as usize].as_mut().unwrap().reserved = true;
        self.start_processing(task_id, now);
    }

    fn handle_rebalance(&mut self, index: u64, now: f64) {
        if self.open_tasks == 0 {
            return;
        }
        // The clustered balancer manages each cluster on its own; machines
        // never leave their cluster. The weighted policy works fleet-wide.
        let cluster = match self.cfg.policy {
            PolicyKind::Dhlb => Some(self.cfg.cluster_size.max(1) as u64),
            _ => None,
        };
        let same_scope =
            |a: u64, b: u64| cluster.is_none_or(|size| a / size == b / size);
        if rebalance_needed(&self.hosts, &self.cfg.contract) {
            let moves = plan_rebalance(&self.hosts, &self.cfg.contract, &self.reference);
            for m in moves {
                if same_scope(m.from_host, m.to_host) {
                    self.apply_move(m, now);
                }
            }
        }
        let moves = self.plan_consolidation(&same_scope);
        let planned = moves.len();
        for m in moves {
            self.apply_move(m, now);
        }
        if log::log_enabled!(log::Level::Debug) {
            let active = self.hosts.iter().filter(|h| h.vm_count() > 0).count();
            let vms: usize = self.hosts.iter().map(|h| h.vm_count()).sum();
            log::debug!(
                "rebalance t={now:.1}: {planned} consolidation moves, {active} active hosts, {vms} machines"
            );
        }
        self.schedule(
            (index + 1) as f64 * self.cfg.sample_interval,
            EventKind::Rebalance { index: index + 1 },
        );
    }

    /// Plan the migrations that retire thinly used hosts: drain every host
    /// whose machines all fit on busier ones, densest destination first, so
    /// freed hosts drop to standby. Only full drains are planned, every
    /// migrant needs a processing slot at its destination, and no
    /// destination is pushed over the utilization ceiling.
    fn plan_consolidation(&self, same_scope: &dyn Fn(u64, u64) -> bool) -> Vec<VmMove> {
        let ceiling = self.cfg.contract.ruc_threshold;
        // Donors thinnest first; everything else is a candidate destination.
        let mut order: Vec<usize> = (0..self.hosts.len()).collect();
        order.sort_by(|&a, &b| {
            self.hosts[a]
                .mean_utilization()
                .total_cmp(&self.hosts[b].mean_utilization())
                .then(self.hosts[a].id.cmp(&self.hosts[b].id))
        });
        let mut drained = vec![false; self.hosts.len()];
        let mut receiving = vec![false; self.hosts.len()];
        let mut residual: Vec<ResourceVector> =
            self.hosts.iter().map(PhysicalHost::residual).collect();
        let mut slots = self.free_slots.clone();
        let mut moves = Vec::new();
        for &di in &order {
            let donor = &self.hosts[di];
            if receiving[di] || donor.vm_count() == 0 {
                continue;
            }
            let mut tentative = Vec::new();
            let mut staged = residual.clone();
            let mut staged_slots = slots.clone();
            let mut ok = true;
            'vms: for (vm_id, demand) in donor.vm_demands() {
                // Densest feasible destination first, ties by id.
                let mut dests: Vec<usize> = (0..self.hosts.len())
                    .filter(|&ti| {
                        ti != di
                            && !drained[ti]
                            && self.hosts[ti].vm_count() > 0
                            && same_scope(donor.id, self.hosts[ti].id)
                    })
                    .collect();
                dests.sort_by(|&a, &b| {
                    self.hosts[b]
                        .mean_utilization()
                        .total_cmp(&self.hosts[a].mean_utilization())
                        .then(self.hosts[a].id.cmp(&self.hosts[b].id))
                });
                for ti in dests {
                    if staged_slots[ti] == 0 {
                        continue;
                    }
                    let cap = self.hosts[ti].capacity.as_array();
                    let free = staged[ti].as_array();
                    let dem = demand.as_array();
                    let fits = (0..N_RESOURCES).all(|d| {
                        dem[d] <= free[d]
                            && (cap[d] <= 0.0 || (cap[d] - free[d] + dem[d]) / cap[d] <= ceiling)
                    });
                    if fits {
                        staged[ti] = staged[ti].saturating_sub(demand);
                        staged_slots[ti] -= 1;
                        tentative.push(VmMove {
                            vm_id,
                            from_host: donor.id,
                            to_host: self.hosts[ti].id,
                        });
                        continue 'vms;
                    }
                }
                ok = false;
                break;
            }
            if ok && !tentative.is_empty() {
                residual = staged;
                slots = staged_slots;
                drained[di] = true;
                for m in &tentative {
                    // A host that takes machines this pass must not donate
                    // its own later in the same pass.
                    receiving[m.to_host as usize] = true;
                }
                // Waiting and receiving machines leave first so that freeing
                // a running machine's slot finds the donor's queue empty.
                tentative.sort_by_key(|m| {
                    let rank = match self.flights[m.vm_id as usize].as_ref().map(|f| f.phase) {
                        Some(Phase::Waiting) => 0,
                        Some(Phase::Receiving) => 1,
                        _ => 2,
                    };
                    (rank, m.vm_id)
                });
                moves.extend(tentative);
            }
        }
        moves
    }

    fn apply_move(&mut self, m: VmMove, now: f64) {
        let idx = m.vm_id as usize;
        let Some(flight) = self.flights.get(idx).and_then(|f| f.as_ref()) else { return };
        if flight.host != m.from_host {
            // An earlier move in the same pass beat this plan to it.
            return;
        }
        let (phase, reserved, ready_time) = (flight.phase, flight.reserved, flight.ready_time);
        if phase == Phase::Processing && self.free_slots[m.to_host as usize] == 0 {
            // A running machine keeps running through the move, so the
            // destination must hand it a slot immediately.
            return;
        }
        let from = m.from_host as usize;
        let to = m.to_host as usize;
        let mut vm = self.vms[idx].take().expect("moving machine exists");
        model::remove(&mut vm, &mut self.hosts[from], &mut self.map)
            .expect("moving machine is on its source host");
        if let Err(e) =
            model::place(&mut vm, &mut self.hosts[to], &mut self.map, self.tasks[idx].client_id)
        {
            log::debug!("move of machine {} to host {} skipped: {e}", m.vm_id, m.to_host);
            model::place(&mut vm, &mut self.hosts[from], &mut self.map, self.tasks[idx].client_id)
                .expect("machine fits back where it came from");
            self.vms[idx] = Some(vm);
            return;
        }
        self.vms[idx] = Some(vm);
        self.flights[idx].as_mut().unwrap().host = m.to_host;
        match phase {
            Phase::Receiving => {
                if reserved {
                    self.release_slot(from, now);
                }
                let re = if self.free_slots[to] > 0 {
                    self.free_slots[to] -= 1;
                    true
                } else {
                    false
                };
                self.flights[idx].as_mut().unwrap().reserved = re;
            }
            Phase::Waiting => {
                self.wait_queues[from].retain(|&(_, id)| id != m.vm_id);
                if self.free_slots[to] > 0 {
                    self.free_slots[to] -= 1;
                    self.flights[idx].as_mut().unwrap().reserved = true;
                    self.start_processing(m.vm_id, now);
                } else {
                    self.wait_queues[to].push((ready_time, m.vm_id));
                }
            }
            Phase::Processing => {
                // The completion event and locked rate travel with it; only
                // the occupied capacity changes buildings.
                self.free_slots[to] -= 1;
                self.release_slot(from, now);
            }
        }
    }

    fn handle_sample(&mut self, index: u64) {
        if self.open_tasks == 0 {
            return;
        }
        let snap = metrics::utilization(&self.hosts);
        // Moments with nothing placed anywhere provision no capacity, so
        // they carry no weight in the utilization average.
        if snap.serving_hosts > 0 {
            self.sample_count += 1;
            for d in 0..N_RESOURCES {
                self.util_dim_sum[d] += snap.per_dim[d];
            }
            self.util_dc_sum += snap.dc_average;
        }
        if self.sold.iter().sum::<f64>() > 1e-9 {
            let stats = metrics::traffic_overflow(&self.sold, &self.fair_weights);
            self.overflow_series.push(stats.overflow_proportion);
        }
        self.energy_joules +=
            metrics::total_energy(&metrics::energy(&self.hosts, self.cfg.sample_interval));
        self.schedule(
            (index + 1) as f64 * self.cfg.sample_interval,
            EventKind::Sample { index: index + 1 },
        );
    }

    fn finish(mut self) -> SimOutput {
        let makespan = match metrics::makespan(&self.timings) {
            Ok(m) => m,
            Err(_) => {
                if self.cfg.tasks > 0 {
                    log::warn!("no task completed; makespan reported as 0");
                }
                0.0
            }
        };
        let samples = if self.sample_count > 0 { self.sample_count as f64 } else { 1.0 };
        let utilization_per_dim = self.util_dim_sum.map(|s| s / samples);
        let utilization_dc = self.util_dc_sum / samples;
        // The final census covers every request ever routed, so it is the
        // tightest estimate of each server's long-run traffic percentage; the
        // per-sample series shows how the imbalance evolved on the way there.
        let traffic = metrics::traffic_overflow(&self.sold, &self.fair_weights);
        if self.overflow_series.is_empty() {
            self.overflow_series.push(traffic.overflow_proportion);
        }
        let traffic_overflow_series = std::mem::take(&mut self.overflow_series);
        let report = MetricsReport {
            makespan,
            avg_response_time: metrics::mean_turnaround(&self.timings),
            utilization_per_dim,
            utilization_dc,
            wastage_pct: 100.0 * (1.0 - utilization_dc),
            failures: self.failures,
            sla_violation_rate: self.ledger.violation_rate(),
            penalty_profit: penalty_function(&self.sold, &self.ledger, &self.cfg.contract),
            energy_joules: self.energy_joules,
            traffic,
            traffic_overflow_series,
            tasks_total: self.cfg.tasks as u64,
            tasks_completed: self.timings.len() as u64,
        };
        SimOutput { report, timings: self.timings }
    }
}

/// Run one simulation to quiescence and keep the per-task timing detail.
pub fn run_detailed(cfg: &SimConfig) -> Result<SimOutput, SimError> {
    cfg.validate()?;
    Ok(Sim::new(cfg).run())
}

/// Run one simulation to quiescence.
pub fn run(cfg: &SimConfig) -> Result<MetricsReport, SimError> {
    run_detailed(cfg).map(|out| out.report)
}

/// One replication's result.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRun {
    pub seed: u64,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStat {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl SummaryStat {
    fn over(values: impl Iterator<Item = f64> + Clone) -> SummaryStat {
        let mut n = 0u64;
        let mut sum = 0.0;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values {
            n += 1;
            sum += v;
            min = min.min(v);
            max = max.max(v);
        }
        if n == 0 {
            SummaryStat { mean: 0.0, min: 0.0, max: 0.0 }
        } else {
            SummaryStat { mean: sum / n as f64, min, max }
        }
    }
}

/// Per-seed reports plus mean/min/max over the headline metrics, ordered by
/// seed regardless of execution order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateSummary {
    pub runs: Vec<ReplicateRun>,
    pub makespan: SummaryStat,
    pub avg_response_time: SummaryStat,
    pub utilization_dc: SummaryStat,
    pub wastage_pct: SummaryStat,
    pub failures: SummaryStat,
    pub sla_violation_rate: SummaryStat,
    pub penalty_profit: SummaryStat,
    pub energy_joules: SummaryStat,
    pub traffic_overflow: SummaryStat,
}

/// Run `n_seeds` independent replications with seeds base, base+1, …,
/// optionally capped to a fixed worker count. Results are deterministic and
/// ordered by seed no matter how execution interleaves.
pub fn replicate(
    cfg: &SimConfig,
    n_seeds: u64,
    threads: Option<usize>,
) -> Result<ReplicateSummary, SimError> {
    cfg.validate()?;
    if n_seeds == 0 {
        return Err(invalid("seeds", "must be at least 1").into());
    }
    let configs: Vec<SimConfig> = (0..n_seeds)
        .map(|i| {
            let mut c = cfg.clone();
            c.seed = cfg.seed.wrapping_add(i);
            c
        })
        .collect();
    let execute = || -> Result<Vec<ReplicateRun>, SimError> {
        configs
            .par_iter()
            .map(|c| run(c).map(|report| ReplicateRun { seed: c.seed, report }))
            .collect()
    };
    let runs = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| SimError::ThreadPool(e.to_string()))?
            .install(execute),
        None => execute(),
    }?;
    Ok(summarize(runs))
}

fn summarize(runs: Vec<ReplicateRun>) -> ReplicateSummary {
    fn stat(runs: &[ReplicateRun], f: impl Fn(&MetricsReport) -> f64 + Clone) -> SummaryStat {
        SummaryStat::over(runs.iter().map(move |r| f(&r.report)))
    }
    ReplicateSummary {
        makespan: stat(&runs, |r| r.makespan),
        avg_response_time: stat(&runs, |r| r.avg_response_time),
        utilization_dc: stat(&runs, |r| r.utilization_dc),
        wastage_pct: stat(&runs, |r| r.wastage_pct),
        failures: stat(&runs, |r| r.failures as f64),
        sla_violation_rate: stat(&runs, |r| r.sla_violation_rate),
        penalty_profit: stat(&runs, |r| r.penalty_profit),
        energy_joules: stat(&runs, |r| r.energy_joules),
        traffic_overflow: stat(&runs, |r| r.traffic.overflow_proportion),
        runs,
    }
}

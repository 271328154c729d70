//! Deterministic discrete-event simulator of an IaaS datacenter that places
//! each incoming task's virtual machine under one of four policies and
//! reports how the fleet fared: makespan, response time, utilization and
//! wastage, placement failures, SLA violations and penalty-adjusted profit,
//! energy, and traffic balance.
//!
//! The policies:
//!
//! * `rnd` picks among powered-on hosts uniformly at random.
//! * `seq` takes the first host, in id order, that fits.
//! * `dhlb` picks the least-utilized cluster of hosts, then the host inside
//!   it with the most mean residual headroom.
//! * `dralb` classifies each task by its dominant resource appetite, drains
//!   the four intensity queues round-robin, and sends every task to the host
//!   whose weighted residual score is highest after the placement.
//!
//! Everything is seeded: the same [`engine::SimConfig`] always produces the
//! same [`metrics::MetricsReport`], bit for bit, regardless of thread count.

pub mod classifier;
pub mod engine;
pub mod metrics;
pub mod model;
pub mod schedulers;
pub mod sla;

pub use classifier::{classify, IntensityClass, IntensityQueues, IntensityWeights};
pub use engine::{
    build_hosts, derived_rt_threshold, generate_workload, reference_capacity, replicate, run,
    run_detailed, ConfigError, HostTemplate, ReplicateRun, ReplicateSummary, SimConfig, SimError,
    SimOutput, SummaryStat, WorkloadModel,
};
pub use metrics::{
    energy, makespan, mean_turnaround, total_energy, traffic_overflow, utilization, EnergyRecord,
    EnergyState, MetricsReport, NoCompletions, TimingRecord, TrafficStats, UtilizationSnapshot,
    N_RESOURCES,
};
pub use model::{
    feasible, place, remove, HostState, PhysicalHost, PlacementError, PlacementMap, PowerProfile,
    Resource, ResourceVector, Task, VirtualMachine, EPSILON,
};
pub use schedulers::{
    place_dhlb, place_dralb, place_random, place_sequential, score_host, BatchOutcome,
    PlacementDecision, PolicyKind, UnknownPolicy,
};
pub use sla::{
    check_violation, overloaded, penalty_function, plan_rebalance, rebalance_needed, SlaContract,
    SlaLedger, ViolationCheck, VmMove,
};

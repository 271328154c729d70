//! Placement policies. All four take an immutable snapshot of the host fleet
//! and return one decision per task; the caller applies accepted decisions to
//! the live state. Within a batch each policy tracks its own provisional
//! loads, so later decisions see the space consumed by earlier ones.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{IntensityClass, IntensityQueues, IntensityWeights};
use crate::model::{PhysicalHost, ResourceVector, Task, EPSILON};

/// Which placement policy drives a simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Random,
    Sequential,
    Dhlb,
    Dralb,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] =
        [PolicyKind::Random, PolicyKind::Sequential, PolicyKind::Dhlb, PolicyKind::Dralb];

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Random => "rnd",
            PolicyKind::Sequential => "seq",
            PolicyKind::Dhlb => "dhlb",
            PolicyKind::Dralb => "dralb",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = UnknownPolicy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rnd" => Ok(PolicyKind::Random),
            "seq" => Ok(PolicyKind::Sequential),
            "dhlb" => Ok(PolicyKind::Dhlb),
            "dralb" => Ok(PolicyKind::Dralb),
            other => Err(UnknownPolicy(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown policy {0:?}, expected one of rnd, seq, dhlb, dralb")]
pub struct UnknownPolicy(pub String);

/// Outcome of placing one task. A missing host id means the placement failed;
/// the score is filled in only by the weighted policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementDecision {
    pub task_id: u64,
    pub host_id: Option<u64>,
    pub score: Option<f64>,
}

impl PlacementDecision {
    pub fn failed(&self) -> bool {
        self.host_id.is_none()
    }
}

/// Decisions for one batch plus the product of the chosen per-host scores,
/// kept as a diagnostic of how well the batch as a whole fit.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub decisions: Vec<PlacementDecision>,
    pub joint_score: f64,
}

/// Weighted headroom a host would retain after accepting `demand`.
///
/// For each dimension this is the post-placement residual as a fraction of
/// capacity, blended by the task's intensity weights. Callers must only score
/// hosts that are on and feasible for the demand; the result then lies in
/// [0, 1], higher meaning a more comfortable fit.
pub fn score_host(host: &PhysicalHost, weights: &IntensityWeights, demand: &ResourceVector) -> f64 {
    score_parts(&host.capacity, &host.used(), weights, demand)
}

fn score_parts(
    capacity: &ResourceVector,
    used: &ResourceVector,
    weights: &IntensityWeights,
    demand: &ResourceVector,
) -> f64 {
    let cap = capacity.as_array();
    let use_ = used.as_array();
    let dem = demand.as_array();
    let w = weights.as_array();
    let mut score = 0.0;
    for d in 0..4 {
        if cap[d] > 0.0 {
            score += w[d] * (cap[d] - use_[d] - dem[d]) / cap[d];
        }
    }
    score.clamp(0.0, 1.0)
}

/// Provisional view of one host while a batch is being decided.
#[derive(Debug, Clone)]
struct LoadView {
    id: u64,
    capacity: ResourceVector,
    used: ResourceVector,
}

impl LoadView {
    fn feasible(&self, demand: &ResourceVector) -> bool {
        self.used.add(demand).fits_within(&self.capacity)
    }

    fn score(&self, weights: &IntensityWeights, demand: &ResourceVector) -> f64 {
        score_parts(&self.capacity, &self.used, weights, demand)
    }

    fn mean_utilization(&self) -> f64 {
        let cap = self.capacity.as_array();
        let use_ = self.used.as_array();
        let mut total = 0.0;
        for d in 0..4 {
            if cap[d] > 0.0 {
                total += use_[d] / cap[d];
            }
        }
        total / 4.0
    }

    fn mean_residual_fraction(&self) -> f64 {
        let cap = self.capacity.as_array();
        let use_ = self.used.as_array();
        let mut total = 0.0;
        for d in 0..4 {
            if cap[d] > 0.0 {
                total += (cap[d] - use_[d]).max(0.0) / cap[d];
            }
        }
        total / 4.0
    }

    fn accept(&mut self, demand: &ResourceVector) {
        self.used = self.used.add(demand);
    }
}

/// Snapshot the powered-on hosts in ascending id order.
fn load_views(hosts: &[PhysicalHost]) -> Vec<LoadView> {
    let mut views: Vec<LoadView> = hosts
        .iter()
        .filter(|h| h.is_on())
        .map(|h| LoadView { id: h.id, capacity: h.capacity, used: h.used() })
        .collect();
    views.sort_by_key(|v| v.id);
    views
}

// ── Weighted multi-resource policy ──────────────────────────────────────────

/// Drain the intensity queues in a fixed rotation (cpu, mem, energy, bw), one
/// task per turn, and send each task to the feasible host with the highest
/// weighted-headroom score. Ties go to the lowest host id; a task with no
/// feasible host is marked failed.
pub fn place_dralb(queues: &mut IntensityQueues, hosts: &[PhysicalHost]) -> BatchOutcome {
    let mut views = load_views(hosts);
    let mut decisions = Vec::with_capacity(queues.len());
    let mut joint_score = 1.0;
    while !queues.is_empty() {
        for class in IntensityClass::ALL {
            let Some(task) = queues.pop_front(class) else { continue };
            let mut best: Option<(usize, f64)> = None;
            for (idx, view) in views.iter().enumerate() {
                if !view.feasible(&task.demand) {
                    continue;
                }
                let s = view.score(&task.weights, &task.demand);
                if best.is_none_or(|(_, bs)| s > bs) {
                    best = Some((idx, s));
                }
            }
            match best {
                Some((idx, s)) => {
                    views[idx].accept(&task.demand);
                    joint_score *= s;
                    decisions.push(PlacementDecision {
                        task_id: task.id,
                        host_id: Some(views[idx].id),
                        score: Some(s),
                    });
                }
                None => {
                    decisions.push(PlacementDecision { task_id: task.id, host_id: None, score: None });
                }
            }
        }
    }
    BatchOutcome { decisions, joint_score }
}

// ── Baselines ────────────────────────────────────────────────────────────────

/// Uniformly sample candidate hosts, retrying up to one draw per host in the
/// fleet; the task fails if every draw lands on an infeasible host.
pub fn place_random(
    tasks: &[Task],
    hosts: &[PhysicalHost],
    rng: &mut impl Rng,
) -> Vec<PlacementDecision> {
    let mut views = load_views(hosts);
    let mut decisions = Vec::with_capacity(tasks.len());
    for task in tasks {
        let mut chosen = None;
        if !views.is_empty() {
            for _ in 0..views.len() {
                let idx = rng.random_range(0..views.len());
                if views[idx].feasible(&task.demand) {
                    chosen = Some(idx);
                    break;
                }
            }
        }
        match chosen {
            Some(idx) => {
                views[idx].accept(&task.demand);
                decisions.push(PlacementDecision {
                    task_id: task.id,
                    host_id: Some(views[idx].id),
                    score: None,
                });
            }
            None => decisions.push(PlacementDecision { task_id: task.id, host_id: None, score: None }),
        }
    }
    decisions
}

/// First-fit by ascending host id.
pub fn place_sequential(tasks: &[Task], hosts: &[PhysicalHost]) -> Vec<PlacementDecision> {
    let mut views = load_views(hosts);
    let mut decisions = Vec::with_capacity(tasks.len());
    for task in tasks {
        let chosen = views.iter().position(|v| v.feasible(&task.demand));
        match chosen {
            Some(idx) => {
                views[idx].accept(&task.demand);
                decisions.push(PlacementDecision {
                    task_id: task.id,
                    host_id: Some(views[idx].id),
                    score: None,
                });
            }
            None => decisions.push(PlacementDecision { task_id: task.id, host_id: None, score: None }),
        }
    }
    decisions
}

/// Hierarchical balancing over fixed-size clusters of consecutive hosts.
///
/// For each task the least-utilized cluster is picked first, then the
/// feasible host inside it with the largest unweighted mean residual
/// fraction. The cluster commitment is binding: if the chosen cluster has no
/// feasible host the task fails even when another cluster could take it.
pub fn place_dhlb(
    tasks: &[Task],
    hosts: &[PhysicalHost],
    cluster_size: usize,
) -> Vec<PlacementDecision> {
    assert!(cluster_size > 0, "cluster size must be at least 1");
    let mut views = load_views(hosts);
    let mut decisions = Vec::with_capacity(tasks.len());
    for task in tasks {
        let mut chosen = None;
        if !views.is_empty() {
            let clusters: Vec<&[LoadView]> = views.chunks(cluster_size).collect();
            let mut best_cluster = 0usize;
            let mut best_load = f64::INFINITY;
            for (ci, cluster) in clusters.iter().enumerate() {
                let load =
                    cluster.iter().map(LoadView::mean_utilization).sum::<f64>() / cluster.len() as f64;
                if load < best_load - EPSILON {
                    best_load = load;
                    best_cluster = ci;
                }
            }
            let start = best_cluster * cluster_size;
            let end = (start + cluster_size).min(views.len());
            let mut best_host: Option<(usize, f64)> = None;
            for (offset, view) in views[start..end].iter().enumerate() {
                if !view.feasible(&task.demand) {
                    continue;
                }
                let headroom = view.mean_residual_fraction();
                if best_host.is_none_or(|(_, bh)| headroom > bh) {
                    best_host = Some((start + offset, headroom));
                }
            }
            chosen = best_host.map(|(idx, _)| idx);
        }
        match chosen {
            Some(idx) => {
                views[idx].accept(&task.demand);
                decisions.push(PlacementDecision {
                    task_id: task.id,
                    host_id: Some(views[idx].id),
                    score: None,
                });
            }
            None => decisions.push(PlacementDecision { task_id: task.id, host_id: None, score: None }),
        }
    }
    decisions
}

//! Core datacenter state: four-dimensional resource vectors, tasks, virtual
//! machines, physical hosts and the task-to-host assignment map.
//!
//! Capacity checks are component-wise: a host can accept a machine only if the
//! summed demand of everything it already hosts stays within its capacity on
//! every dimension. All comparisons use an absolute tolerance of [`EPSILON`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for component-wise resource comparisons.
pub const EPSILON: f64 = 1e-9;

/// The four managed resource dimensions, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Resource {
    Cpu,
    Mem,
    Energy,
    Bw,
}

impl Resource {
    /// Canonical dimension order used for tie-breaking and queue rotation.
    pub const ALL: [Resource; 4] = [Resource::Cpu, Resource::Mem, Resource::Energy, Resource::Bw];
}

/// A quantity of each resource dimension: CPU in MIPS, memory in MB, an
/// energy budget in watts and network bandwidth in M/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ResourceVector {
    pub cpu: f64,
    pub mem: f64,
    pub energy: f64,
    pub bw: f64,
}

impl ResourceVector {
    pub const ZERO: ResourceVector = ResourceVector { cpu: 0.0, mem: 0.0, energy: 0.0, bw: 0.0 };

    pub fn new(cpu: f64, mem: f64, energy: f64, bw: f64) -> Self {
        ResourceVector { cpu, mem, energy, bw }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.cpu, self.mem, self.energy, self.bw]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        ResourceVector { cpu: a[0], mem: a[1], energy: a[2], bw: a[3] }
    }

    pub fn get(&self, dim: Resource) -> f64 {
        match dim {
            Resource::Cpu => self.cpu,
            Resource::Mem => self.mem,
            Resource::Energy => self.energy,
            Resource::Bw => self.bw,
        }
    }

    pub fn add(&self, other: &ResourceVector) -> ResourceVector {
        ResourceVector {
            cpu: self.cpu + other.cpu,
            mem: self.mem + other.mem,
            energy: self.energy + other.energy,
            bw: self.bw + other.bw,
        }
    }

    /// Component-wise subtraction clamped at zero, so residuals never go
    /// negative from floating-point noise.
    pub fn saturating_sub(&self, other: &ResourceVector) -> ResourceVector {
        ResourceVector {
            cpu: (self.cpu - other.cpu).max(0.0),
            mem: (self.mem - other.mem).max(0.0),
            energy: (self.energy - other.energy).max(0.0),
            bw: (self.bw - other.bw).max(0.0),
        }
    }

    /// True when every component fits under `bound` within [`EPSILON`].
    pub fn fits_within(&self, bound: &ResourceVector) -> bool {
        self.cpu <= bound.cpu + EPSILON
            && self.mem <= bound.mem + EPSILON
            && self.energy <= bound.energy + EPSILON
            && self.bw <= bound.bw + EPSILON
    }

    pub fn sum(&self) -> f64 {
        self.cpu + self.mem + self.energy + self.bw
    }
}

/// Power draw of a host in its three operating regimes, in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerProfile {
    pub work_w: f64,
    pub idle_w: f64,
    pub standby_w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HostState {
    On,
    Off,
}

/// One client request. Demand is derived from the request attributes when the
/// workload is generated; `weights` record how strongly the request leans on
/// each dimension and sum to one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Task {
    pub id: u64,
    pub client_id: u64,
    pub arrival_time: f64,
    /// Amount of compute requested, in MIPS-seconds of work.
    pub length: f64,
    pub demand: ResourceVector,
    pub file_size: f64,
    pub output_size: f64,
    pub weights: crate::classifier::IntensityWeights,
    /// Response-time bound this request was admitted under.
    pub deadline_rt: f64,
}

/// A deployable machine sized to carry exactly one task's demand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VirtualMachine {
    pub id: u64,
    pub demand: ResourceVector,
    pub host_id: Option<u64>,
}

impl VirtualMachine {
    pub fn new(id: u64, demand: ResourceVector) -> Self {
        VirtualMachine { id, demand, host_id: None }
    }

    pub fn placed(&self) -> bool {
        self.host_id.is_some()
    }
}

/// A physical server with fixed capacity and a set of hosted machines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalHost {
    pub id: u64,
    pub capacity: ResourceVector,
    pub power: PowerProfile,
    pub state: HostState,
    vms: BTreeMap<u64, ResourceVector>,
}

impl PhysicalHost {
    pub fn new(id: u64, capacity: ResourceVector, power: PowerProfile) -> Self {
        PhysicalHost { id, capacity, power, state: HostState::On, vms: BTreeMap::new() }
    }

    pub fn is_on(&self) -> bool {
        self.state == HostState::On
    }

    pub fn vm_count(&self) -> usize {
        self.vms.len()
    }

    pub fn vm_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.vms.keys().copied()
    }

    pub fn vm_demands(&self) -> impl Iterator<Item = (u64, &ResourceVector)> + '_ {
        self.vms.iter().map(|(id, d)| (*id, d))
    }

    pub fn hosts_vm(&self, vm_id: u64) -> bool {
        self.vms.contains_key(&vm_id)
    }

    /// Sum of the demands of every hosted machine.
    pub fn used(&self) -> ResourceVector {
        self.vms
            .values()
            .fold(ResourceVector::ZERO, |acc, d| acc.add(d))
    }

    /// Capacity left over after all hosted machines, clamped at zero.
    pub fn residual(&self) -> ResourceVector {
        self.capacity.saturating_sub(&self.used())
    }

    /// Fraction of capacity in use, per dimension. Zero-capacity dimensions
    /// report zero.
    pub fn utilization(&self) -> [f64; 4] {
        let used = self.used().as_array();
        let cap = self.capacity.as_array();
        let mut out = [0.0; 4];
        for d in 0..4 {
            if cap[d] > 0.0 {
                out[d] = used[d] / cap[d];
            }
        }
        out
    }

    pub fn mean_utilization(&self) -> f64 {
        let u = self.utilization();
        (u[0] + u[1] + u[2] + u[3]) / 4.0
    }

    pub fn max_utilization(&self) -> f64 {
        let u = self.utilization();
        u.iter().fold(0.0_f64, |a, &b| a.max(b))
    }

    pub(crate) fn insert_vm(&mut self, vm_id: u64, demand: ResourceVector) {
        self.vms.insert(vm_id, demand);
    }

    pub(crate) fn take_vm(&mut self, vm_id: u64) -> Option<ResourceVector> {
        self.vms.remove(&vm_id)
    }
}

/// Whether `demand` fits on `host` next to everything it already carries.
///
/// A powered-off host is not a valid placement target and yields an error
/// rather than a plain `false`.
pub fn feasible(host: &PhysicalHost, demand: &ResourceVector) -> Result<bool, PlacementError> {
    if !host.is_on() {
        return Err(PlacementError::HostOff { host: host.id });
    }
    Ok(host.used().add(demand).fits_within(&host.capacity))
}

/// Record of which host serves which task, keyed by task so a task can never
/// be assigned to two hosts at once.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlacementMap {
    by_task: BTreeMap<u64, Assignment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub host_id: u64,
    pub client_id: u64,
}

impl PlacementMap {
    pub fn new() -> Self {
        PlacementMap::default()
    }

    /// Bind a task to a host, replacing any previous binding.
    pub fn assign(&mut self, task_id: u64, host_id: u64, client_id: u64) {
        self.by_task.insert(task_id, Assignment { host_id, client_id });
    }

    pub fn unassign(&mut self, task_id: u64) -> Option<Assignment> {
        self.by_task.remove(&task_id)
    }

    pub fn host_of(&self, task_id: u64) -> Option<u64> {
        self.by_task.get(&task_id).map(|a| a.host_id)
    }

    /// The binary assignment indicator: 1 exactly when this task runs on this
    /// host for this client.
    pub fn is_assigned(&self, task_id: u64, host_id: u64, client_id: u64) -> bool {
        self.by_task.get(&task_id).is_some_and(|a| a.host_id == host_id && a.client_id == client_id)
    }

    pub fn placed_count(&self) -> usize {
        self.by_task.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &Assignment)> + '_ {
        self.by_task.iter().map(|(t, a)| (*t, a))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlacementError {
    #[error("host {host} is powered off")]
    HostOff { host: u64 },
    #[error("demand does not fit in the residual capacity of host {host}")]
    Infeasible { host: u64 },
    #[error("machine {vm} is already placed")]
    AlreadyPlaced { vm: u64 },
    #[error("machine {vm} is not hosted by host {host}")]
    NotHosted { vm: u64, host: u64 },
}

/// Deploy a machine onto a host, updating the machine, the host and the
/// assignment map together. Rejected deployments leave all three untouched;
/// callers count rejections as deployment failures.
pub fn place(
    vm: &mut VirtualMachine,
    host: &mut PhysicalHost,
    map: &mut PlacementMap,
    client_id: u64,
) -> Result<(), PlacementError> {
    if vm.placed() {
        return Err(PlacementError::AlreadyPlaced { vm: vm.id });
    }
    if !feasible(host, &vm.demand)? {
        return Err(PlacementError::Infeasible { host: host.id });
    }
    host.insert_vm(vm.id, vm.demand);
    vm.host_id = Some(host.id);
    map.assign(vm.id, host.id, client_id);
    Ok(())
}

/// Undo a deployment, freeing the machine's demand on its host.
pub fn remove(
    vm: &mut VirtualMachine,
    host: &mut PhysicalHost,
    map: &mut PlacementMap,
) -> Result<(), PlacementError> {
    if host.take_vm(vm.id).is_none() {
        return Err(PlacementError::NotHosted { vm: vm.id, host: host.id });
    }
    vm.host_id = None;
    map.unassign(vm.id);
    Ok(())
}

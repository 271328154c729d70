//! Service-level bookkeeping: per-request violation checks against response
//! time and utilization ceilings, the penalty-adjusted profit function and
//! the planner that moves machines off overloaded hosts.

use serde::{Deserialize, Serialize};

use crate::classifier::classify;
use crate::model::{PhysicalHost, ResourceVector, EPSILON};
use crate::schedulers::score_host;

/// Terms a run is judged against, plus the unit economics of serving.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlaContract {
    /// Ceiling on a request's response time, seconds.
    pub rt_threshold: f64,
    /// Ceiling on host utilization observed when a request completes,
    /// as a fraction of capacity in (0, 1].
    pub ruc_threshold: f64,
    /// Revenue per normalized resource unit sold.
    pub price_per_unit: f64,
    /// Charge per accumulated violation unit.
    pub penalty_per_unit: f64,
    /// Operating cost per normalized resource unit sold.
    pub cost_per_unit: f64,
}

/// Verdict for one completed request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViolationCheck {
    pub violated: bool,
    /// Worst normalized overshoot across the two thresholds; 0 when compliant.
    pub excess: f64,
}

/// Judge one completed request. Both thresholds are strict: sitting exactly
/// on a ceiling is compliant. The excess of a violation is the larger of the
/// two relative overshoots, so a request 2x over the response bound adds 1.0.
pub fn check_violation(observed_rt: f64, observed_util: f64, contract: &SlaContract) -> ViolationCheck {
    let rt_excess = (observed_rt - contract.rt_threshold) / contract.rt_threshold;
    let util_excess = (observed_util - contract.ruc_threshold) / contract.ruc_threshold;
    let excess = rt_excess.max(util_excess);
    if excess > 0.0 {
        ViolationCheck { violated: true, excess }
    } else {
        ViolationCheck { violated: false, excess: 0.0 }
    }
}

/// Running violation tally for a fleet, with per-host attribution of the
/// accumulated excess so the profit function can charge the serving host.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlaLedger {
    pub total_requests: u64,
    pub violated_requests: u64,
    pub violation_units: f64,
    host_units: Vec<f64>,
}

impl SlaLedger {
    pub fn new(host_count: usize) -> Self {
        SlaLedger {
            total_requests: 0,
            violated_requests: 0,
            violation_units: 0.0,
            host_units: vec![0.0; host_count],
        }
    }

    /// Count one completed request served by `host_id`.
    pub fn record(&mut self, host_id: u64, check: &ViolationCheck) {
        self.total_requests += 1;
        if check.violated {
            self.violated_requests += 1;
            self.violation_units += check.excess;
            self.host_units[host_id as usize] += check.excess;
        }
    }

    pub fn host_violation_units(&self) -> &[f64] {
        &self.host_units
    }

    /// Violated over total requests. A ledger that saw no requests reports 0.
    pub fn violation_rate(&self) -> f64 {
        if self.total_requests == 0 {
            log::warn!("violation rate requested before any request completed; reporting 0");
            return 0.0;
        }
        self.violated_requests as f64 / self.total_requests as f64
    }
}

/// Provider profit over the run: per host, revenue on the resource units it
/// sold minus the penalty on its violation units and the serving cost.
///
/// `resources_sold[i]` must be host i's sold units; its length must match the
/// ledger's host count.
pub fn penalty_function(resources_sold: &[f64], ledger: &SlaLedger, contract: &SlaContract) -> f64 {
    assert_eq!(
        resources_sold.len(),
        ledger.host_units.len(),
        "sold-units list and ledger cover different fleets"
    );
    resources_sold
        .iter()
        .zip(&ledger.host_units)
        .map(|(&sold, &units)| {
            contract.price_per_unit * sold
                - (contract.penalty_per_unit * units + contract.cost_per_unit * sold)
        })
        .sum()
}

/// One planned machine migration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VmMove {
    pub vm_id: u64,
    pub from_host: u64,
    pub to_host: u64,
}

/// True when any dimension of a powered-on host is strictly over the
/// utilization ceiling.
pub fn overloaded(host: &PhysicalHost, contract: &SlaContract) -> bool {
    host.is_on() && host.utilization().iter().any(|&u| u > contract.ruc_threshold)
}

/// True when the fleet has at least one overloaded host.
pub fn rebalance_needed(hosts: &[PhysicalHost], contract: &SlaContract) -> bool {
    hosts.iter().any(|h| overloaded(h, contract))
}

/// Plan migrations that pull every overloaded host back under the ceiling
/// where capacity permits.
///
/// Hosts are treated in ascending id order. From each overloaded host the
/// smallest machines (by mean demand fraction of the source's capacity, ties
/// to the lower id) are moved first, each to the non-overloaded host that
/// keeps all dimensions at or below the ceiling and retains the most weighted
/// headroom. Moves are planned against a private copy of the fleet, so the
/// list is consistent as a sequence; the caller applies it. A host whose
/// machines cannot all be rehomed simply stays overloaded.
pub fn plan_rebalance(
    hosts: &[PhysicalHost],
    contract: &SlaContract,
    reference: &ResourceVector,
) -> Vec<VmMove> {
    let mut work: Vec<PhysicalHost> = hosts.to_vec();
    work.sort_by_key(|h| h.id);
    let mut moves = Vec::new();
    for si in 0..work.len() {
        if !work[si].is_on() {
            continue;
        }
        while overloaded(&work[si], contract) {
            let src_cap = work[si].capacity;
            let mut vms: Vec<(u64, ResourceVector)> =
                work[si].vm_demands().map(|(id, d)| (id, *d)).collect();
            vms.sort_by(|a, b| {
                mean_fraction(&a.1, &src_cap)
                    .total_cmp(&mean_fraction(&b.1, &src_cap))
                    .then(a.0.cmp(&b.0))
            });
            let mut moved = false;
            for (vm_id, demand) in vms {
                let (weights, _) = classify(&demand, reference);
                let mut best: Option<(usize, f64)> = None;
                for (ti, target) in work.iter().enumerate() {
                    if ti == si || !target.is_on() || overloaded(target, contract) {
                        continue;
                    }
                    let after = target.used().add(&demand);
                    if !after.fits_within(&target.capacity) {
                        continue;
                    }
                    if !stays_under(&after, &target.capacity, contract.ruc_threshold) {
                        continue;
                    }
                    let s = score_host(target, &weights, &demand);
                    if best.is_none_or(|(_, bs)| s > bs) {
                        best = Some((ti, s));
                    }
                }
                if let Some((ti, _)) = best {
                    work[si].take_vm(vm_id);
                    work[ti].insert_vm(vm_id, demand);
                    moves.push(VmMove { vm_id, from_host: work[si].id, to_host: work[ti].id });
                    moved = true;
                    break;
                }
            }
            if !moved {
                break;
            }
        }
    }
    moves
}

fn mean_fraction(demand: &ResourceVector, capacity: &ResourceVector) -> f64 {
    let d = demand.as_array();
    let c = capacity.as_array();
    let mut total = 0.0;
    for i in 0..4 {
        if c[i] > 0.0 {
            total += d[i] / c[i];
        }
    }
    total / 4.0
}

fn stays_under(used: &ResourceVector, capacity: &ResourceVector, ceiling: f64) -> bool {
    let u = used.as_array();
    let c = capacity.as_array();
    (0..4).all(|i| c[i] <= 0.0 || u[i] / c[i] <= ceiling + EPSILON)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{place, PlacementMap, PowerProfile, VirtualMachine};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn contract() -> SlaContract {
        SlaContract {
            rt_threshold: 10.0,
            ruc_threshold: 0.9,
            price_per_unit: 1.0,
            penalty_per_unit: 0.5,
            cost_per_unit: 0.1,
        }
    }

    const POWER: PowerProfile = PowerProfile { work_w: 250.0, idle_w: 150.0, standby_w: 10.0 };

    fn host_with_vms(id: u64, capacity: ResourceVector, demands: &[(u64, ResourceVector)]) -> PhysicalHost {
        let mut h = PhysicalHost::new(id, capacity, POWER);
        let mut map = PlacementMap::new();
        for &(vm_id, d) in demands {
            let mut vm = VirtualMachine::new(vm_id, d);
            place(&mut vm, &mut h, &mut map, 0).unwrap();
        }
        h
    }

    #[test]
    fn compliant_request_is_not_a_violation() {
        let check = check_violation(5.0, 0.5, &contract());
        assert!(!check.violated);
        assert_eq!(check.excess, 0.0);
    }

    #[test]
    fn response_time_overshoot_is_normalized_by_the_threshold() {
        let check = check_violation(20.0, 0.5, &contract());
        assert!(check.violated);
        assert!((check.excess - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exactly_at_either_threshold_is_compliant() {
        let check = check_violation(10.0, 0.9, &contract());
        assert!(!check.violated);
        assert!(check_violation(10.0 + 1e-6, 0.9, &contract()).violated);
        assert!(check_violation(10.0, 0.9 + 1e-6, &contract()).violated);
    }

    #[test]
    fn excess_takes_the_worse_of_the_two_overshoots() {
        let a = check_violation(20.0, 0.99, &contract());
        assert!((a.excess - 1.0).abs() < 1e-12);
        let b = check_violation(10.5, 1.8, &contract());
        assert!((b.excess - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ledger_attributes_units_to_the_serving_host() {
        let mut ledger = SlaLedger::new(2);
        ledger.record(0, &ViolationCheck { violated: true, excess: 0.25 });
        ledger.record(1, &ViolationCheck { violated: false, excess: 0.0 });
        ledger.record(1, &ViolationCheck { violated: true, excess: 0.5 });
        assert_eq!(ledger.total_requests, 3);
        assert_eq!(ledger.violated_requests, 2);
        assert!((ledger.violation_units - 0.75).abs() < 1e-12);
        assert_eq!(ledger.host_violation_units(), &[0.25, 0.5]);
    }

    #[test]
    fn violation_rate_is_the_violated_fraction() {
        let mut ledger = SlaLedger::new(1);
        for i in 0..400u64 {
            let violated = i < 5;
            ledger.record(0, &ViolationCheck { violated, excess: if violated { 0.1 } else { 0.0 } });
        }
        assert!((ledger.violation_rate() - 0.0125).abs() < 1e-12);
    }

    #[test]
    fn violation_rate_spans_zero_to_one() {
        let mut none = SlaLedger::new(1);
        let mut all = SlaLedger::new(1);
        for _ in 0..7 {
            none.record(0, &ViolationCheck { violated: false, excess: 0.0 });
            all.record(0, &ViolationCheck { violated: true, excess: 0.3 });
        }
        assert_eq!(none.violation_rate(), 0.0);
        assert_eq!(all.violation_rate(), 1.0);
        assert_eq!(SlaLedger::new(1).violation_rate(), 0.0);
    }

    #[test]
    fn profit_matches_direct_substitution() {
        let c = SlaContract {
            rt_threshold: 10.0,
            ruc_threshold: 0.9,
            price_per_unit: 1.0,
            penalty_per_unit: 0.2,
            cost_per_unit: 0.05,
        };
        let mut ledger = SlaLedger::new(1);
        for _ in 0..5 {
            ledger.record(0, &ViolationCheck { violated: true, excess: 1.0 });
        }
        let pf = penalty_function(&[10.0], &ledger, &c);
        assert!((pf - 8.5).abs() < 1e-9);
    }

    #[test]
    fn profit_without_violations_or_cost_is_pure_revenue() {
        let c = SlaContract {
            rt_threshold: 10.0,
            ruc_threshold: 0.9,
            price_per_unit: 2.5,
            penalty_per_unit: 7.0,
            cost_per_unit: 0.0,
        };
        let ledger = SlaLedger::new(3);
        let sold = [4.0, 1.5, 0.5];
        let pf = penalty_function(&sold, &ledger, &c);
        assert!((pf - 2.5 * 6.0).abs() < 1e-9);
    }

    #[test]
    fn profit_is_additive_over_hosts() {
        let c = contract();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.random_range(1..=5usize);
            let sold: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..20.0)).collect();
            let excess: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..3.0)).collect();
            let mut full = SlaLedger::new(n);
            let mut parts = 0.0;
            for i in 0..n {
                full.record(i as u64, &ViolationCheck { violated: true, excess: excess[i] });
                let mut single = SlaLedger::new(1);
                single.record(0, &ViolationCheck { violated: true, excess: excess[i] });
                parts += penalty_function(&sold[i..=i], &single, &c);
            }
            let whole = penalty_function(&sold, &full, &c);
            assert!((whole - parts).abs() < 1e-9);
        }
    }

    #[test]
    fn extra_violation_units_never_increase_profit() {
        let c = contract();
        let sold = [5.0, 5.0];
        let mut base = SlaLedger::new(2);
        base.record(0, &ViolationCheck { violated: true, excess: 0.5 });
        let mut worse = base.clone();
        worse.record(1, &ViolationCheck { violated: true, excess: 0.8 });
        assert!(penalty_function(&sold, &worse, &c) < penalty_function(&sold, &base, &c));
    }

    #[test]
    fn fleet_below_the_ceiling_plans_no_moves() {
        let cap = ResourceVector::new(2000.0, 4000.0, 400.0, 100.0);
        let hosts = vec![
            host_with_vms(0, cap, &[(1, ResourceVector::new(1000.0, 2000.0, 200.0, 50.0))]),
            host_with_vms(1, cap, &[]),
        ];
        let c = contract();
        assert!(!rebalance_needed(&hosts, &c));
        assert!(plan_rebalance(&hosts, &c, &cap).is_empty());
    }

    #[test]
    fn saturated_host_sheds_its_smallest_machine_to_the_empty_twin() {
        let cap = ResourceVector::new(2000.0, 4000.0, 400.0, 100.0);
        let demand = ResourceVector::new(500.0, 200.0, 20.0, 5.0);
        let hosts = vec![
            host_with_vms(0, cap, &[(10, demand), (11, demand), (12, demand), (13, demand)]),
            host_with_vms(1, cap, &[]),
        ];
        let c = contract();
        assert!(rebalance_needed(&hosts, &c));
        let moves = plan_rebalance(&hosts, &c, &cap);
        assert_eq!(moves, vec![VmMove { vm_id: 10, from_host: 0, to_host: 1 }]);
    }

    #[test]
    fn planned_moves_never_create_new_overload_and_shrink_the_overloaded_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let c = contract();
        for _ in 0..30 {
            let n_hosts = rng.random_range(3..=8u64);
            let mut hosts = Vec::new();
            let mut next_vm = 0u64;
            for id in 0..n_hosts {
                let cap = ResourceVector::new(
                    rng.random_range(1000.0..3000.0),
                    rng.random_range(2000.0..6000.0),
                    rng.random_range(200.0..600.0),
                    rng.random_range(50.0..150.0),
                );
                let mut demands = Vec::new();
                let mut used = ResourceVector::ZERO;
                for _ in 0..rng.random_range(0..6) {
                    let residual = cap.saturating_sub(&used);
                    let d = ResourceVector::new(
                        rng.random_range(0.0..=residual.cpu),
                        rng.random_range(0.0..=residual.mem),
                        rng.random_range(0.0..=residual.energy),
                        rng.random_range(0.0..=residual.bw),
                    );
                    used = used.add(&d);
                    demands.push((next_vm, d));
                    next_vm += 1;
                }
                hosts.push(host_with_vms(id, cap, &demands));
            }
            let reference = ResourceVector::new(2000.0, 4000.0, 400.0, 100.0);
            let before: Vec<bool> = hosts.iter().map(|h| overloaded(h, &c)).collect();
            let moves = plan_rebalance(&hosts, &c, &reference);

            let mut after = hosts.clone();
            for m in &moves {
                let from = after.iter().position(|h| h.id == m.from_host).unwrap();
                let demand = after[from].take_vm(m.vm_id).expect("move references a hosted machine");
                let to = after.iter().position(|h| h.id == m.to_host).unwrap();
                after[to].insert_vm(m.vm_id, demand);
            }
            for (i, h) in after.iter().enumerate() {
                assert!(h.used().fits_within(&h.capacity), "capacity violated on host {}", h.id);
                if !before[i] {
                    assert!(!overloaded(h, &c), "host {} became overloaded", h.id);
                }
            }
            let overloaded_before = before.iter().filter(|&&b| b).count();
            let overloaded_after = after.iter().filter(|h| overloaded(h, &c)).count();
            assert!(overloaded_after <= overloaded_before);
        }
    }
}

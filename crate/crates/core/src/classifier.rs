//! Request intensity classification. Each incoming task is labelled by the
//! resource dimension it stresses most, relative to a reference capacity, and
//! parked in one of four queues ordered by how pronounced that lean is.

use serde::{Deserialize, Serialize};

use crate::model::{Resource, ResourceVector, Task};

/// The dominant resource dimension of a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IntensityClass {
    CpuIntensive,
    MemIntensive,
    EnergyIntensive,
    BwIntensive,
}

impl IntensityClass {
    pub const ALL: [IntensityClass; 4] = [
        IntensityClass::CpuIntensive,
        IntensityClass::MemIntensive,
        IntensityClass::EnergyIntensive,
        IntensityClass::BwIntensive,
    ];

    fn index(self) -> usize {
        match self {
            IntensityClass::CpuIntensive => 0,
            IntensityClass::MemIntensive => 1,
            IntensityClass::EnergyIntensive => 2,
            IntensityClass::BwIntensive => 3,
        }
    }
}

/// Normalized per-dimension lean of a request; the four weights sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityWeights {
    pub cpu: f64,
    pub mem: f64,
    pub energy: f64,
    pub bw: f64,
}

impl IntensityWeights {
    pub const UNIFORM: IntensityWeights =
        IntensityWeights { cpu: 0.25, mem: 0.25, energy: 0.25, bw: 0.25 };

    pub fn as_array(&self) -> [f64; 4] {
        [self.cpu, self.mem, self.energy, self.bw]
    }

    pub fn get(&self, dim: Resource) -> f64 {
        match dim {
            Resource::Cpu => self.cpu,
            Resource::Mem => self.mem,
            Resource::Energy => self.energy,
            Resource::Bw => self.bw,
        }
    }

    pub fn sum(&self) -> f64 {
        self.cpu + self.mem + self.energy + self.bw
    }

    /// The strongest dimension and its weight. Ties resolve in canonical
    /// dimension order (cpu, mem, energy, bw).
    pub fn dominant(&self) -> (IntensityClass, f64) {
        let w = self.as_array();
        let mut best = 0;
        for d in 1..4 {
            if w[d] > w[best] {
                best = d;
            }
        }
        (IntensityClass::ALL[best], w[best])
    }
}

/// Label a demand vector against a reference capacity.
///
/// Weights are the per-dimension demand-to-capacity ratios normalized to sum
/// to one. A zero demand gets uniform weights and falls into the CPU class by
/// the canonical tie-break.
pub fn classify(demand: &ResourceVector, reference: &ResourceVector) -> (IntensityWeights, IntensityClass) {
    let d = demand.as_array();
    let r = reference.as_array();
    let mut ratios = [0.0; 4];
    for i in 0..4 {
        if r[i] > 0.0 {
            ratios[i] = d[i] / r[i];
        }
    }
    let total: f64 = ratios.iter().sum();
    let weights = if total > 0.0 {
        IntensityWeights {
            cpu: ratios[0] / total,
            mem: ratios[1] / total,
            energy: ratios[2] / total,
            bw: ratios[3] / total,
        }
    } else {
        IntensityWeights::UNIFORM
    };
    let (class, _) = weights.dominant();
    (weights, class)
}

/// Four per-class queues. Within a queue, tasks sit in descending dominant
/// weight; equal weights fall back to arrival time, then id, so insertion
/// order never matters.
#[derive(Debug, Clone, Default)]
pub struct IntensityQueues {
    queues: [Vec<Task>; 4],
}

impl IntensityQueues {
    pub fn new() -> Self {
        IntensityQueues::default()
    }

    pub fn enqueue(&mut self, task: Task) {
        let (class, weight) = task.weights.dominant();
        let queue = &mut self.queues[class.index()];
        let pos = queue.partition_point(|t| {
            let (_, tw) = t.weights.dominant();
            tw > weight
                || (tw == weight
                    && (t.arrival_time < task.arrival_time
                        || (t.arrival_time == task.arrival_time && t.id < task.id)))
        });
        queue.insert(pos, task);
    }

    pub fn pop_front(&mut self, class: IntensityClass) -> Option<Task> {
        let queue = &mut self.queues[class.index()];
        if queue.is_empty() {
            None
        } else {
            Some(queue.remove(0))
        }
    }

    pub fn len(&self) -> usize {
        self.queues.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.queues.iter().all(Vec::is_empty)
    }

    pub fn class_len(&self, class: IntensityClass) -> usize {
        self.queues[class.index()].len()
    }

    pub fn class_ids(&self, class: IntensityClass) -> Vec<u64> {
        self.queues[class.index()].iter().map(|t| t.id).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ResourceVector;
    use rand::{seq::SliceRandom, Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference() -> ResourceVector {
        ResourceVector::new(1860.0, 4096.0, 500.0, 100.0)
    }

    fn task_with(id: u64, arrival: f64, demand: ResourceVector) -> Task {
        let (weights, _) = classify(&demand, &reference());
        Task {
            id,
            client_id: id,
            arrival_time: arrival,
            length: demand.cpu,
            demand,
            file_size: demand.mem,
            output_size: 30.0,
            weights,
            deadline_rt: 20.0,
        }
    }

    #[test]
    fn half_capacity_cpu_demand_classifies_cpu_intensive() {
        let demand = ResourceVector::new(930.0, 1024.0, 50.0, 10.0);
        let (weights, class) = classify(&demand, &reference());
        // Ratios are 0.5, 0.25, 0.1, 0.1; normalizing by 0.95 gives exact
        // nineteenths.
        assert!((weights.cpu - 10.0 / 19.0).abs() < 1e-12);
        assert!((weights.mem - 5.0 / 19.0).abs() < 1e-12);
        assert!((weights.energy - 2.0 / 19.0).abs() < 1e-12);
        assert!((weights.bw - 2.0 / 19.0).abs() < 1e-12);
        assert_eq!(class, IntensityClass::CpuIntensive);
    }

    #[test]
    fn single_dimension_demand_gets_full_weight() {
        let cases = [
            (ResourceVector::new(100.0, 0.0, 0.0, 0.0), IntensityClass::CpuIntensive),
            (ResourceVector::new(0.0, 100.0, 0.0, 0.0), IntensityClass::MemIntensive),
            (ResourceVector::new(0.0, 0.0, 100.0, 0.0), IntensityClass::EnergyIntensive),
            (ResourceVector::new(0.0, 0.0, 0.0, 10.0), IntensityClass::BwIntensive),
        ];
        for (demand, expected) in cases {
            let (weights, class) = classify(&demand, &reference());
            assert_eq!(class, expected);
            let (_, top) = weights.dominant();
            assert!((top - 1.0).abs() < 1e-12);
            assert!((weights.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_demand_falls_back_to_uniform_cpu() {
        let (weights, class) = classify(&ResourceVector::ZERO, &reference());
        assert_eq!(weights, IntensityWeights::UNIFORM);
        assert_eq!(class, IntensityClass::CpuIntensive);
    }

    #[test]
    fn weights_always_sum_to_one_and_classification_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let demand = ResourceVector::new(
                rng.random_range(0.0..2000.0),
                rng.random_range(0.0..4000.0),
                rng.random_range(0.0..500.0),
                rng.random_range(0.0..100.0),
            );
            let (w, class) = classify(&demand, &reference());
            assert!((w.sum() - 1.0).abs() < 1e-9);
            for scale in [0.125, 3.0, 40.0] {
                let scaled = ResourceVector::new(
                    demand.cpu * scale,
                    demand.mem * scale,
                    demand.energy * scale,
                    demand.bw * scale,
                );
                let (sw, sclass) = classify(&scaled, &reference());
                assert_eq!(class, sclass);
                let (a, b) = (w.as_array(), sw.as_array());
                for d in 0..4 {
                    assert!((a[d] - b[d]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn queue_order_is_independent_of_insertion_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut tasks: Vec<Task> = (0..60)
            .map(|i| {
                let demand = ResourceVector::new(
                    rng.random_range(0.0..2000.0),
                    rng.random_range(0.0..4000.0),
                    rng.random_range(0.0..500.0),
                    rng.random_range(0.0..100.0),
                );
                task_with(i, rng.random_range(0.0..50.0), demand)
            })
            .collect();

        let mut reference_queues = IntensityQueues::new();
        for t in &tasks {
            reference_queues.enqueue(t.clone());
        }
        let expected: Vec<Vec<u64>> =
            IntensityClass::ALL.iter().map(|&c| reference_queues.class_ids(c)).collect();

        for round in 0..5 {
            tasks.shuffle(&mut ChaCha8Rng::seed_from_u64(round));
            let mut queues = IntensityQueues::new();
            for t in &tasks {
                queues.enqueue(t.clone());
            }
            for (i, &class) in IntensityClass::ALL.iter().enumerate() {
                assert_eq!(queues.class_ids(class), expected[i]);
            }
        }
    }

    #[test]
    fn queues_partition_tasks_by_dominant_class() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut queues = IntensityQueues::new();
        let mut n = 0usize;
        for i in 0..200 {
            let demand = ResourceVector::new(
                rng.random_range(0.0..2000.0),
                rng.random_range(0.0..4000.0),
                rng.random_range(0.0..500.0),
                rng.random_range(0.0..100.0),
            );
            let t = task_with(i, i as f64, demand);
            let (expected_class, _) = t.weights.dominant();
            queues.enqueue(t);
            n += 1;
            assert_eq!(queues.len(), n);
            assert!(queues.class_ids(expected_class).len() <= queues.class_len(expected_class));
        }
        let total: usize = IntensityClass::ALL.iter().map(|&c| queues.class_len(c)).sum();
        assert_eq!(total, n);
        // Every queued task's dominant class matches the queue it sits in.
        for &class in &IntensityClass::ALL {
            let mut q = queues.clone();
            while let Some(t) = q.pop_front(class) {
                assert_eq!(t.weights.dominant().0, class);
            }
        }
    }

    #[test]
    fn within_queue_order_is_descending_dominant_weight() {
        let mut queues = IntensityQueues::new();
        // All CPU-intensive with distinct dominant weights.
        let specs = [(1u64, 400.0), (2, 1600.0), (3, 800.0)];
        for (id, cpu) in specs {
            queues.enqueue(task_with(id, 0.0, ResourceVector::new(cpu, 10.0, 1.0, 1.0)));
        }
        let ids = queues.class_ids(IntensityClass::CpuIntensive);
        assert_eq!(ids, vec![2, 3, 1]);
    }

    #[test]
    fn equal_weights_order_by_arrival_then_id() {
        let mut queues = IntensityQueues::new();
        let demand = ResourceVector::new(500.0, 10.0, 1.0, 1.0);
        queues.enqueue(task_with(9, 2.0, demand));
        queues.enqueue(task_with(4, 1.0, demand));
        queues.enqueue(task_with(2, 2.0, demand));
        let ids = queues.class_ids(IntensityClass::CpuIntensive);
        assert_eq!(ids, vec![4, 2, 9]);
    }
}

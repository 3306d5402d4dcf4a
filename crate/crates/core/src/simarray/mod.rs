//! Training-step simulation of a `2^H` accelerator array.
//!
//! One step is lowered to a task graph: per-layer compute on the whole
//! array, and one transfer per (layer, phase, hierarchy level) routed on
//! the topology. The graph runs on a deterministic event scheduler; the
//! makespan is the step time. Energy is accounted analytically from the
//! global and per-node tensor shapes.

mod engine;
mod report;
mod topology;

pub use engine::{Schedule, Span, TaskId};
pub use report::{EnergyBreakdown, Phase, PhaseRecord, SimReport};
pub use topology::{Link, Topology, TopologyKind};

use crate::commcost::{boundary_elems, inter_split, intra_elements, CommCost, Parallelism};
use crate::error::{Error, Result};
use crate::netspec::{infer_shapes, LayerShapes, NetworkModel};
use crate::planner::{leaf_shapes, level_shapes, PlanMatrix};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Accelerator and interconnect constants. Every field has a default, so a
/// partial JSON object overrides only what it names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HardwareConfig {
    /// Per accelerator, FLOP/s.
    pub compute_flops_per_s: f64,
    pub clock_hz: f64,
    /// Per accelerator, bytes/s.
    pub dram_bytes_per_s: f64,
    pub dram_capacity_bytes: u64,
    /// Leaf link rate, bits/s.
    pub link_bits_per_s: f64,
    pub energy_add32_pj: f64,
    pub energy_mult32_pj: f64,
    pub energy_sram32_pj: f64,
    pub energy_dram32_pj: f64,
    /// Energy per 32-bit word moved between accelerators.
    pub energy_remote32_pj: f64,
    /// Operand uses per on-chip buffer access.
    pub sram_reuse: f64,
    pub precision_bytes: u32,
}

impl Default for HardwareConfig {
    fn default() -> Self {
        HardwareConfig {
            compute_flops_per_s: 84.0e9,
            clock_hz: 250.0e6,
            dram_bytes_per_s: 320.0e9,
            dram_capacity_bytes: 8 << 30,
            link_bits_per_s: 1600.0e6,
            energy_add32_pj: 0.9,
            energy_mult32_pj: 3.7,
            energy_sram32_pj: 5.0,
            energy_dram32_pj: 640.0,
            energy_remote32_pj: 640.0,
            sram_reuse: 12.0,
            precision_bytes: 4,
        }
    }
}

impl HardwareConfig {
    pub fn validate(&self) -> Result<()> {
        let reals = [
            ("compute_flops_per_s", self.compute_flops_per_s),
            ("clock_hz", self.clock_hz),
            ("dram_bytes_per_s", self.dram_bytes_per_s),
            ("link_bits_per_s", self.link_bits_per_s),
            ("energy_add32_pj", self.energy_add32_pj),
            ("energy_mult32_pj", self.energy_mult32_pj),
            ("energy_sram32_pj", self.energy_sram32_pj),
            ("energy_dram32_pj", self.energy_dram32_pj),
            ("energy_remote32_pj", self.energy_remote32_pj),
            ("sram_reuse", self.sram_reuse),
        ];
        for (name, v) in reals {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Hardware(format!("{name} must be positive, got {v}")));
            }
        }
        if self.dram_capacity_bytes == 0 || self.precision_bytes == 0 {
            return Err(Error::Hardware(
                "dram_capacity_bytes and precision_bytes must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Defaults overridden by the fields present in `json`.
    pub fn from_json(json: &str) -> Result<Self> {
        let hw: HardwareConfig =
            serde_json::from_str(json).map_err(|e| Error::Hardware(e.to_string()))?;
        hw.validate()?;
        Ok(hw)
    }

    pub fn link_bytes_per_s(&self) -> f64 {
        self.link_bits_per_s / 8.0
    }

    fn word_fraction(&self) -> f64 {
        f64::from(self.precision_bytes) / 4.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Resource {
    Compute,
    Link(Link),
}

/// Per-node residency: weights, gradients and stashed inputs of every
/// layer, the final output, and two error buffers of the largest size.
pub fn residency_bytes(leaf: &LayerShapes) -> u64 {
    let per_layer: u64 = leaf
        .layers
        .iter()
        .map(|l| 2 * l.weight_elems() + l.input_elems())
        .sum();
    let out = leaf.layers.last().map_or(0, |l| l.output_elems());
    let max_e = leaf
        .layers
        .iter()
        .map(|l| l.output_elems())
        .max()
        .unwrap_or(0);
    (per_layer + out + 2 * max_e) * u64::from(leaf.precision_bytes)
}

struct Builder<'a> {
    topo: &'a Topology,
    hw: &'a HardwareConfig,
    sched: Schedule<Resource>,
    records: BTreeMap<(usize, Phase), PhaseRecord>,
}

impl Builder<'_> {
    fn record(&mut self, layer: usize, phase: Phase) -> &mut PhaseRecord {
        self.records
            .entry((layer, phase))
            .or_insert_with(|| PhaseRecord::new(layer, phase))
    }

    fn compute(&mut self, layer: usize, phase: Phase, flops: u64, deps: Vec<TaskId>) -> TaskId {
        let n = self.topo.node_count() as f64;
        let t = flops as f64 / (n * self.hw.compute_flops_per_s);
        let rec = self.record(layer, phase);
        rec.compute_time_s += t;
        rec.flops += flops;
        self.sched.add(t, vec![Resource::Compute], deps)
    }

    /// Exchange of `elements` per group between the two halves of every
    /// group at level `h`.
    fn transfer(
        &mut self,
        layer: usize,
        phase: Phase,
        h: usize,
        elements: u64,
        precision: u32,
        deps: Vec<TaskId>,
    ) -> Result<Option<TaskId>> {
        if elements == 0 {
            return Ok(None);
        }
        let per_group = CommCost::from_elements(elements, precision);
        // Each half sends its share; the pair factor splits evenly.
        let per_direction = per_group.bytes / 2;
        let mut loads: BTreeMap<Link, u64> = BTreeMap::new();
        for g in 0..1usize << h {
            let (x, y) = self.topo.level_groups(h, g);
            for (src, dst) in [(&x, &y), (&y, &x)] {
                for (link, b) in self.topo.route(src, dst, per_direction)? {
                    *loads.entry(link).or_insert(0) += b;
                }
            }
        }
        let leaf = self.hw.link_bytes_per_s();
        let duration = loads
            .iter()
            .map(|(l, &b)| b as f64 / self.topo.link_bytes_per_s(l, leaf))
            .fold(0.0, f64::max);
        let rec = self.record(layer, phase);
        rec.comm_time_s += duration;
        rec.comm_bytes += per_group.bytes << h;
        let resources = loads.into_keys().map(Resource::Link).collect();
        Ok(Some(self.sched.add(duration, resources, deps)))
    }
}

/// Simulates one training step of `model` under `plan`.
pub fn simulate_step(
    model: &NetworkModel,
    plan: &PlanMatrix,
    hw: &HardwareConfig,
    topo: &Topology,
) -> Result<SimReport> {
    hw.validate()?;
    if model.precision_bytes != hw.precision_bytes {
        return Err(Error::PrecisionMismatch {
            model: model.precision_bytes,
            hardware: hw.precision_bytes,
        });
    }
    if plan.levels() != topo.levels {
        return Err(Error::LevelMismatch {
            plan: plan.levels(),
            topology: topo.levels,
        });
    }
    let shapes = infer_shapes(model)?;
    let levels = level_shapes(&shapes, &plan.rows, plan.mode)?;
    let leaf = leaf_shapes(&shapes, &plan.rows)?;
    let needed = residency_bytes(&leaf);
    if needed > hw.dram_capacity_bytes {
        return Err(Error::CapacityOverflow {
            needed,
            capacity: hw.dram_capacity_bytes,
        });
    }

    let n_layers = shapes.len();
    let precision = shapes.precision_bytes;
    let mut b = Builder {
        topo,
        hw,
        sched: Schedule::new(),
        records: BTreeMap::new(),
    };
    let choice = |h: usize, l: usize| plan.rows[h][l];

    // Forward.
    let mut prev_done: Vec<TaskId> = Vec::new();
    for l in 0..n_layers {
        let mut deps = prev_done.clone();
        if l > 0 {
            for (h, s) in levels.iter().enumerate() {
                let boundary = boundary_elems(&s.layers[l - 1], &s.layers[l]);
                let (fwd, _) = inter_split(boundary, choice(h, l - 1), choice(h, l));
                deps.extend(b.transfer(l, Phase::Forward, h, fwd, precision, prev_done.clone())?);
            }
        }
        let c = b.compute(l, Phase::Forward, shapes.layers[l].forward_flops(), deps);
        let mut done = vec![c];
        for (h, s) in levels.iter().enumerate() {
            if choice(h, l) == Parallelism::Mp {
                let e = intra_elements(&s.layers[l], Parallelism::Mp);
                done.extend(b.transfer(l, Phase::Forward, h, e, precision, vec![c])?);
            }
        }
        prev_done = done;
    }

    // Backward and gradient, last layer first. `e_ready` holds what the
    // error arriving at layer l waits for.
    let mut e_ready = prev_done;
    for l in (0..n_layers).rev() {
        let layer = &shapes.layers[l];
        let bwd = b.compute(l, Phase::Backward, layer.backward_flops(), e_ready.clone());
        let grad = b.compute(l, Phase::Gradient, layer.gradient_flops(), e_ready.clone());
        let mut reduce = vec![grad];
        for (h, s) in levels.iter().enumerate() {
            if choice(h, l) == Parallelism::Dp {
                let e = intra_elements(&s.layers[l], Parallelism::Dp);
                reduce.extend(b.transfer(l, Phase::Gradient, h, e, precision, vec![grad])?);
            }
        }
        // SGD apply: one add per weight element. The next layer down starts
        // only after it, so gradient traffic is not hidden behind compute.
        let update = b.compute(l, Phase::Gradient, layer.weight_elems(), reduce);
        let mut next_ready = vec![bwd, update];
        if l > 0 {
            for (h, s) in levels.iter().enumerate() {
                let boundary = boundary_elems(&s.layers[l - 1], &s.layers[l]);
                let (_, e) = inter_split(boundary, choice(h, l - 1), choice(h, l));
                next_ready.extend(b.transfer(l, Phase::Backward, h, e, precision, vec![bwd])?);
            }
        }
        e_ready = next_ready;
    }

    let spans = b.sched.run();
    let step_time_s = Schedule::<Resource>::makespan(&spans);

    let mut records: Vec<PhaseRecord> = b.records.into_values().collect();
    records.sort_by_key(|r| (r.layer, r.phase));
    let comm_bytes: u64 = records.iter().map(|r| r.comm_bytes).sum();
    let flops: u64 = records.iter().map(|r| r.flops).sum();
    let energy = energy(&shapes, &leaf, comm_bytes, hw, topo.node_count());

    Ok(SimReport {
        network: model.name.clone(),
        topology: *topo,
        nodes: topo.node_count(),
        mode: plan.mode,
        batch: model.batch,
        steps: 1,
        step_time_s,
        time_s: step_time_s,
        energy_j: energy.total(),
        energy,
        comm_bytes,
        flops,
        per_layer: records,
    })
}

fn energy(
    shapes: &LayerShapes,
    leaf: &LayerShapes,
    comm_bytes: u64,
    hw: &HardwareConfig,
    nodes: usize,
) -> EnergyBreakdown {
    const PJ: f64 = 1e-12;
    let mut macs = 0u64;
    let mut weights = 0u64;
    for l in &shapes.layers {
        macs += 3 * l.macs();
        weights += l.weight_elems();
    }
    // Half the arithmetic is adds and half multiplies; updates are adds.
    let flop_j = (macs as f64 * (hw.energy_add32_pj + hw.energy_mult32_pj)
        + weights as f64 * hw.energy_add32_pj)
        * PJ;
    // Two operand reads and one accumulate write per MAC, amortized by reuse.
    let sram_j = 3.0 * macs as f64 / hw.sram_reuse * hw.energy_sram32_pj * PJ;
    // Per node and phase: forward reads F_l, W and writes F_{l+1}; backward
    // reads E_{l+1}, W and writes E_l; gradient reads F_l, E_{l+1} and
    // writes dW; the update reads W, dW and writes W.
    let dram_elems: u64 = leaf
        .layers
        .iter()
        .map(|l| 3 * (l.input_elems() + l.output_elems() + l.weight_elems()) + 3 * l.weight_elems())
        .sum::<u64>()
        * nodes as u64;
    let dram_j = dram_elems as f64 * hw.word_fraction() * hw.energy_dram32_pj * PJ;
    let remote_j = comm_bytes as f64 / 4.0 * hw.energy_remote32_pj * PJ;
    EnergyBreakdown {
        flop_j,
        sram_j,
        dram_j,
        remote_j,
    }
}

/// `steps` identical steps.
pub fn simulate_training(
    model: &NetworkModel,
    plan: &PlanMatrix,
    hw: &HardwareConfig,
    topo: &Topology,
    steps: u64,
) -> Result<SimReport> {
    if steps == 0 {
        return Err(Error::ZeroSteps);
    }
    Ok(simulate_step(model, plan, hw, topo)?.repeated(steps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{hierarchical_partition, HierarchyMode};
    use crate::zoo;

    fn run(name: &str, p: Option<Parallelism>, mode: HierarchyMode, topo: Topology) -> SimReport {
        let m = zoo::get(name).unwrap();
        let s = infer_shapes(&m).unwrap();
        let plan = match p {
            Some(p) => PlanMatrix::uniform(&s, topo.levels, p, mode).unwrap(),
            None => hierarchical_partition(&s, topo.levels, mode).unwrap(),
        };
        simulate_step(&m, &plan, &HardwareConfig::default(), &topo).unwrap()
    }

    #[test]
    fn sconv_dp_has_only_gradient_traffic() {
        let r = run(
            "sconv",
            Some(Parallelism::Dp),
            HierarchyMode::PaperLiteral,
            Topology::htree(4),
        );
        assert!(r.comm_bytes > 0);
        for rec in &r.per_layer {
            if rec.phase != Phase::Gradient {
                assert_eq!(rec.comm_bytes, 0, "{rec:?}");
            }
        }
    }

    #[test]
    fn conservation_matches_planner_totals() {
        for mode in [HierarchyMode::PaperLiteral, HierarchyMode::ShapePropagating] {
            for topo in [Topology::htree(3), Topology::torus(3)] {
                let m = zoo::get("lenet-c").unwrap();
                let s = infer_shapes(&m).unwrap();
                let plan = hierarchical_partition(&s, 3, mode).unwrap();
                let r = simulate_step(&m, &plan, &HardwareConfig::default(), &topo).unwrap();
                assert_eq!(r.comm_bytes, plan.total.bytes);
            }
        }
    }

    #[test]
    fn work_is_plan_invariant() {
        let a = run(
            "alexnet",
            Some(Parallelism::Dp),
            HierarchyMode::PaperLiteral,
            Topology::htree(4),
        );
        let b = run(
            "alexnet",
            None,
            HierarchyMode::ShapePropagating,
            Topology::torus(4),
        );
        assert_eq!(a.flops, b.flops);
    }

    #[test]
    fn single_node_has_no_traffic() {
        let r = run(
            "lenet-c",
            None,
            HierarchyMode::PaperLiteral,
            Topology::htree(0),
        );
        assert_eq!(r.comm_bytes, 0);
        let m = zoo::get("lenet-c").unwrap();
        let s = infer_shapes(&m).unwrap();
        let expected = (s.total_flops() as f64
            + s.layers.iter().map(|l| l.weight_elems()).sum::<u64>() as f64)
            / 84.0e9;
        assert!((r.step_time_s - expected).abs() < 1e-12 * expected.max(1.0));
    }

    #[test]
    fn checks_preconditions() {
        let m = zoo::get("lenet-c").unwrap();
        let s = infer_shapes(&m).unwrap();
        let plan = hierarchical_partition(&s, 2, HierarchyMode::PaperLiteral).unwrap();
        let hw = HardwareConfig::default();
        assert_eq!(
            simulate_step(&m, &plan, &hw, &Topology::htree(3)).unwrap_err(),
            Error::LevelMismatch {
                plan: 2,
                topology: 3
            }
        );
        let tiny = HardwareConfig {
            dram_capacity_bytes: 1024,
            ..HardwareConfig::default()
        };
        assert!(matches!(
            simulate_step(&m, &plan, &tiny, &Topology::htree(2)),
            Err(Error::CapacityOverflow { .. })
        ));
        let fp16 = HardwareConfig {
            precision_bytes: 2,
            ..HardwareConfig::default()
        };
        assert!(matches!(
            simulate_step(&m, &plan, &fp16, &Topology::htree(2)),
            Err(Error::PrecisionMismatch { .. })
        ));
        assert_eq!(
            simulate_training(&m, &plan, &hw, &Topology::htree(2), 0).unwrap_err(),
            Error::ZeroSteps
        );
    }

    #[test]
    fn partial_override() {
        let hw = HardwareConfig::from_json(r#"{"link_bits_per_s": 3200e6}"#).unwrap();
        assert_eq!(hw.link_bits_per_s, 3.2e9);
        assert_eq!(hw.energy_add32_pj, 0.9);
        assert!(HardwareConfig::from_json(r#"{"bogus": 1}"#).is_err());
        assert!(HardwareConfig::from_json(r#"{"sram_reuse": 0}"#).is_err());
    }
}

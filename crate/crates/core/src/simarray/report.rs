use super::Topology;
use crate::planner::HierarchyMode;
use serde::{Deserialize, Serialize};
use std::fmt::{self, Write as _};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Forward,
    Backward,
    /// Weight gradient, its reduction and the update.
    Gradient,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Forward => "forward",
            Phase::Backward => "backward",
            Phase::Gradient => "gradient",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub layer: usize,
    pub phase: Phase,
    /// Busy time of the array, ignoring waits.
    pub compute_time_s: f64,
    /// Sum of this phase's transfer durations, ignoring waits.
    pub comm_time_s: f64,
    pub comm_bytes: u64,
    pub flops: u64,
}

impl PhaseRecord {
    pub(crate) fn new(layer: usize, phase: Phase) -> Self {
        PhaseRecord {
            layer,
            phase,
            compute_time_s: 0.0,
            comm_time_s: 0.0,
            comm_bytes: 0,
            flops: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub flop_j: f64,
    pub sram_j: f64,
    pub dram_j: f64,
    pub remote_j: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.flop_j + self.sram_j + self.dram_j + self.remote_j
    }

    fn scaled(self, k: f64) -> Self {
        EnergyBreakdown {
            flop_j: self.flop_j * k,
            sram_j: self.sram_j * k,
            dram_j: self.dram_j * k,
            remote_j: self.remote_j * k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub network: String,
    pub topology: Topology,
    pub nodes: usize,
    pub mode: HierarchyMode,
    pub batch: u64,
    pub steps: u64,
    /// Makespan of one step.
    pub step_time_s: f64,
    /// `step_time_s * steps`; the extensive fields below are totals too.
    pub time_s: f64,
    pub energy_j: f64,
    pub energy: EnergyBreakdown,
    pub comm_bytes: u64,
    pub flops: u64,
    pub per_layer: Vec<PhaseRecord>,
}

impl SimReport {
    pub(crate) fn repeated(mut self, steps: u64) -> SimReport {
        let k = steps as f64;
        self.steps = steps;
        self.time_s = self.step_time_s * k;
        self.energy = self.energy.scaled(k);
        self.energy_j = self.energy.total();
        self.comm_bytes *= steps;
        self.flops *= steps;
        for r in &mut self.per_layer {
            r.compute_time_s *= k;
            r.comm_time_s *= k;
            r.comm_bytes *= steps;
            r.flops *= steps;
        }
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per (layer, phase).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,phase,compute_time_s,comm_time_s,comm_bytes,flops\n");
        for r in &self.per_layer {
            let _ = writeln!(
                out,
                "{},{},{:e},{:e},{},{}",
                r.layer, r.phase, r.compute_time_s, r.comm_time_s, r.comm_bytes, r.flops
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} on {} ({}), batch {}, {} step(s)",
            self.network, self.topology, self.mode, self.batch, self.steps
        );
        let _ = writeln!(out, "step time   {:>14.6} s", self.step_time_s);
        let _ = writeln!(out, "total time  {:>14.6} s", self.time_s);
        let _ = writeln!(out, "energy      {:>14.6} J", self.energy_j);
        let _ = writeln!(out, "comm        {:>14} B", self.comm_bytes);
        let _ = writeln!(out, "flops       {:>14}", self.flops);
        let _ = writeln!(
            out,
            "\n{:>5}  {:<8}  {:>12}  {:>12}  {:>14}",
            "layer", "phase", "compute s", "comm s", "comm B"
        );
        for r in &self.per_layer {
            let _ = writeln!(
                out,
                "{:>5}  {:<8}  {:>12.6}  {:>12.6}  {:>14}",
                r.layer,
                r.phase.to_string(),
                r.compute_time_s,
                r.comm_time_s,
                r.comm_bytes
            );
        }
        out
    }
}

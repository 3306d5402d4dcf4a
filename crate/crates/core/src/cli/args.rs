use crate::planner::HierarchyMode;
use crate::simarray::TopologyKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::fmt;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "layerpar",
    version,
    about = "Layer-wise parallelism planner and accelerator-array simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,

    /// Write output to a file instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    /// Data parallelism everywhere.
    Dp,
    /// Model parallelism everywhere.
    Mp,
    /// Convolutions dp, fully connected layers mp.
    Trick,
    /// The optimized hierarchical plan.
    Hypar,
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Baseline::Dp => "dp",
            Baseline::Mp => "mp",
            Baseline::Trick => "trick",
            Baseline::Hypar => "hypar",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepAxis {
    Nodes,
    Batch,
    Topology,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Nodes => "nodes",
            SweepAxis::Batch => "batch",
            SweepAxis::Topology => "topology",
        })
    }
}

#[derive(Debug, Clone, Args)]
#[group(required = true, multiple = false)]
pub struct Source {
    /// Built-in network name.
    #[arg(long)]
    pub zoo: Option<String>,
    /// Model file.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PlanArgs {
    /// Override the model's batch size.
    #[arg(long)]
    pub batch: Option<u64>,
    /// Hierarchy levels; the array has 2^levels accelerators.
    #[arg(long, default_value_t = 4)]
    pub levels: usize,
    /// paper-literal (alias literal) or shape-prop (alias shape-propagating).
    #[arg(long, default_value = "paper-literal")]
    pub mode: HierarchyMode,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print per-layer tensor shapes.
    Shapes {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        batch: Option<u64>,
    },
    /// Optimize the per-level parallelism matrix.
    Partition {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        plan: PlanArgs,
    },
    /// Exhaustive two-way search (small networks only).
    BruteForce {
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        batch: Option<u64>,
    },
    /// Simulate training steps under one plan.
    Simulate {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        plan: PlanArgs,
        /// Plan file written by `partition --format json`.
        #[arg(long = "plan")]
        plan_file: Option<PathBuf>,
        /// Strategy to simulate when no plan file is given.
        #[arg(long, value_enum, default_value_t = Baseline::Hypar)]
        baseline: Baseline,
        #[arg(long, default_value = "htree")]
        topology: TopologyKind,
        /// Hardware override file (JSON); takes precedence over HYPAR_HW.
        #[arg(long)]
        hw: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        steps: u64,
    },
    /// Simulate several strategies, normalized to data parallelism.
    Compare {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Baseline::Dp, Baseline::Mp, Baseline::Trick, Baseline::Hypar])]
        baselines: Vec<Baseline>,
        #[arg(long, default_value = "htree")]
        topology: TopologyKind,
        #[arg(long)]
        hw: Option<PathBuf>,
    },
    /// Repeat `compare` along one axis and emit CSV.
    Sweep {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long, value_enum)]
        axis: SweepAxis,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Baseline::Dp, Baseline::Hypar])]
        baselines: Vec<Baseline>,
        #[arg(long, default_value = "htree")]
        topology: TopologyKind,
        #[arg(long)]
        hw: Option<PathBuf>,
    },
    /// Built-in networks.
    Zoo {
        #[command(subcommand)]
        action: ZooAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum ZooAction {
    /// Names and depths.
    List,
    /// Model-file text of one network.
    Show { name: String },
}

//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage, 2 invalid input, 3 internal failure.

mod args;

pub use args::{Baseline, Cli, Command, Format, SweepAxis};

use crate::commcost::Parallelism;
use crate::error::Error;
use crate::netspec::{emit_model, infer_shapes, parse_model_bytes, LayerShapes, NetworkModel};
use crate::planner::{
    brute_force, hierarchical_partition, plan_trick, HierarchyMode, PlanFile, PlanMatrix,
};
use crate::simarray::{simulate_step, simulate_training, HardwareConfig, SimReport, Topology};
use crate::zoo;
use args::{PlanArgs, Source};
use clap::Parser;
use rayon::prelude::*;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Name of the environment variable pointing at a hardware override file.
pub const HW_ENV: &str = "HYPAR_HW";

/// First line of every sweep CSV.
pub const SWEEP_HEADER: &str = "# layerpar-sweep v1";

#[derive(Debug)]
enum Failure {
    Usage(String),
    Invalid(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Invalid(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Invalid(m) | Failure::Internal(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

/// Parses `args` and runs the command. `hw_env` is the value of
/// [`HW_ENV`], if set; `--hw` takes precedence over it.
pub fn run<I, T>(args: I, hw_env: Option<PathBuf>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    1
                }
            };
        }
    };
    match execute(cli, hw_env) {
        Ok(Output { text, path }) => {
            let written = match path {
                Some(p) => std::fs::write(&p, text)
                    .map_err(|e| Failure::Invalid(format!("cannot write {}: {e}", p.display()))),
                None => out
                    .write_all(text.as_bytes())
                    .map_err(|e| Failure::Internal(e.to_string())),
            };
            match written {
                Ok(()) => 0,
                Err(f) => report(err, &f),
            }
        }
        Err(f) => report(err, &f),
    }
}

fn report(err: &mut dyn Write, f: &Failure) -> i32 {
    let _ = writeln!(err, "error: {}", f.message());
    f.code()
}

struct Output {
    text: String,
    path: Option<PathBuf>,
}

fn load_model(source: &Source, batch: Option<u64>) -> Outcome<NetworkModel> {
    let model = match (&source.zoo, &source.model) {
        (Some(name), None) => zoo::get(name)?,
        (None, Some(path)) => {
            let bytes = std::fs::read(path)
                .map_err(|e| Failure::Invalid(format!("cannot read {}: {e}", path.display())))?;
            parse_model_bytes(&bytes)
                .map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?
        }
        _ => {
            return Err(Failure::Usage(
                "give exactly one of --zoo or --model".into(),
            ))
        }
    };
    match batch {
        Some(b) => Ok(model.with_batch(b)?),
        None => Ok(model),
    }
}

fn load_hw(flag: Option<&Path>, env: Option<&Path>) -> Outcome<HardwareConfig> {
    match flag.or(env) {
        None => Ok(HardwareConfig::default()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Invalid(format!("cannot read {}: {e}", path.display())))?;
            Ok(HardwareConfig::from_json(&text)?)
        }
    }
}

fn baseline_plan(
    shapes: &LayerShapes,
    levels: usize,
    mode: HierarchyMode,
    b: Baseline,
) -> Outcome<PlanMatrix> {
    Ok(match b {
        Baseline::Dp => PlanMatrix::uniform(shapes, levels, Parallelism::Dp, mode)?,
        Baseline::Mp => PlanMatrix::uniform(shapes, levels, Parallelism::Mp, mode)?,
        Baseline::Trick => plan_trick(shapes, levels, mode)?,
        Baseline::Hypar => hierarchical_partition(shapes, levels, mode)?,
    })
}

fn json_text<T: serde::Serialize>(v: &T) -> Outcome<String> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| Failure::Internal(e.to_string()))
}

fn plan_text(m: &PlanMatrix) -> String {
    let mut s = format!("{} ({}, {} levels)\n", m.network, m.mode, m.levels());
    for (h, bits) in m.row_bits().iter().enumerate() {
        let _ = writeln!(s, "H{}  {bits}", h + 1);
    }
    let _ = writeln!(
        s,
        "total {} elements, {} bytes",
        m.total.elements, m.total.bytes
    );
    s
}

fn execute(cli: Cli, hw_env: Option<PathBuf>) -> Outcome<Output> {
    let path = cli.out.clone();
    let text = match cli.command {
        Command::Shapes { source, batch } => {
            let shapes = infer_shapes(&load_model(&source, batch)?)?;
            match cli.format {
                Format::Json => json_text(&shapes)?,
                _ => shapes_text(&shapes),
            }
        }
        Command::Partition { source, plan } => {
            let model = load_model(&source, plan.batch)?;
            let shapes = infer_shapes(&model)?;
            let m = hierarchical_partition(&shapes, plan.levels, plan.mode)?;
            match cli.format {
                Format::Json => json_text(&m.to_file())?,
                _ => plan_text(&m),
            }
        }
        Command::BruteForce { source, batch } => {
            let shapes = infer_shapes(&load_model(&source, batch)?)?;
            let (cost, row) = brute_force(&shapes)?;
            let m = PlanMatrix::from_rows(&shapes, vec![row], HierarchyMode::PaperLiteral)?;
            debug_assert_eq!(m.total, cost);
            match cli.format {
                Format::Json => json_text(&m.to_file())?,
                _ => plan_text(&m),
            }
        }
        Command::Simulate {
            source,
            plan,
            plan_file,
            baseline,
            topology,
            hw,
            steps,
        } => {
            let model = load_model(&source, plan.batch)?;
            let shapes = infer_shapes(&model)?;
            let hw = load_hw(hw.as_deref(), hw_env.as_deref())?;
            let matrix = match plan_file {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| {
                        Failure::Invalid(format!("cannot read {}: {e}", p.display()))
                    })?;
                    let file: PlanFile = serde_json::from_str(&text)
                        .map_err(|e| Failure::Invalid(format!("{}: {e}", p.display())))?;
                    file.into_matrix(&shapes)?
                }
                None => baseline_plan(&shapes, plan.levels, plan.mode, baseline)?,
            };
            let topo = Topology {
                kind: topology,
                levels: matrix.levels(),
            };
            let r = simulate_training(&model, &matrix, &hw, &topo, steps)?;
            match cli.format {
                Format::Json => r.to_json() + "\n",
                Format::Csv => r.to_csv(),
                Format::Text => r.to_text(),
            }
        }
        Command::Compare {
            source,
            plan,
            baselines,
            topology,
            hw,
        } => {
            let model = load_model(&source, plan.batch)?;
            let hw = load_hw(hw.as_deref(), hw_env.as_deref())?;
            let topo = Topology {
                kind: topology,
                levels: plan.levels,
            };
            let rows = compare(&model, &plan, &baselines, &hw, &topo)?;
            compare_output(&rows, cli.format)?
        }
        Command::Sweep {
            source,
            plan,
            axis,
            values,
            baselines,
            topology,
            hw,
        } => {
            let model = load_model(&source, plan.batch)?;
            let hw = load_hw(hw.as_deref(), hw_env.as_deref())?;
            sweep(&model, &plan, axis, &values, &baselines, topology, &hw)?
        }
        Command::Zoo { action } => match action {
            args::ZooAction::List => {
                let mut s = String::new();
                for e in zoo::list() {
                    let _ = writeln!(s, "{:<8} {:>2} layers", e.name, e.weighted_layer_count);
                }
                s
            }
            args::ZooAction::Show { name } => emit_model(&zoo::get(&name)?),
        },
    };
    Ok(Output { text, path })
}

fn shapes_text(s: &LayerShapes) -> String {
    let mut out = format!("{} batch {}\n", s.network, s.batch);
    let _ = writeln!(
        out,
        "{:>3}  {:<4}  {:>16}  {:>16}  {:>16}  {:>12}  {:>16}",
        "l", "kind", "input", "conv out", "output", "weights", "fwd flops"
    );
    for l in &s.layers {
        let dims = |d: crate::netspec::Dims| format!("{}x{}x{}", d.h, d.w, d.c);
        let kind = match l.kind {
            crate::netspec::LayerKind::Conv => "conv",
            crate::netspec::LayerKind::FullyConnected => "fc",
        };
        let _ = writeln!(
            out,
            "{:>3}  {:<4}  {:>16}  {:>16}  {:>16}  {:>12}  {:>16}",
            l.index,
            kind,
            dims(l.input),
            dims(l.conv_out),
            dims(l.output),
            l.weight_elems(),
            l.forward_flops()
        );
    }
    out
}

/// One compared strategy, normalized to Data Parallelism.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CompareRow {
    pub baseline: Baseline,
    pub rows: Vec<String>,
    pub step_time_s: f64,
    pub energy_j: f64,
    pub comm_bytes: u64,
    pub speedup_vs_dp: f64,
    pub energy_gain_vs_dp: f64,
}

fn simulate_baseline(
    model: &NetworkModel,
    plan: &PlanArgs,
    b: Baseline,
    hw: &HardwareConfig,
    topo: &Topology,
) -> Outcome<(PlanMatrix, SimReport)> {
    let shapes = infer_shapes(model)?;
    let m = baseline_plan(&shapes, topo.levels, plan.mode, b)?;
    let r = simulate_step(model, &m, hw, topo)?;
    Ok((m, r))
}

fn compare(
    model: &NetworkModel,
    plan: &PlanArgs,
    baselines: &[Baseline],
    hw: &HardwareConfig,
    topo: &Topology,
) -> Outcome<Vec<CompareRow>> {
    if baselines.is_empty() {
        return Err(Failure::Usage("select at least one baseline".into()));
    }
    let (_, dp) = simulate_baseline(model, plan, Baseline::Dp, hw, topo)?;
    baselines
        .iter()
        .map(|&b| {
            let (m, r) = simulate_baseline(model, plan, b, hw, topo)?;
            Ok(CompareRow {
                baseline: b,
                rows: m.row_bits(),
                step_time_s: r.step_time_s,
                energy_j: r.energy_j,
                comm_bytes: r.comm_bytes,
                speedup_vs_dp: dp.step_time_s / r.step_time_s,
                energy_gain_vs_dp: dp.energy_j / r.energy_j,
            })
        })
        .collect()
}

fn compare_output(rows: &[CompareRow], format: Format) -> Outcome<String> {
    Ok(match format {
        Format::Json => json_text(&rows)?,
        Format::Csv => {
            let mut s = String::from(
                "baseline,step_time_s,energy_j,comm_bytes,speedup_vs_dp,energy_gain_vs_dp\n",
            );
            for r in rows {
                let _ = writeln!(
                    s,
                    "{},{:e},{:e},{},{:.6},{:.6}",
                    r.baseline,
                    r.step_time_s,
                    r.energy_j,
                    r.comm_bytes,
                    r.speedup_vs_dp,
                    r.energy_gain_vs_dp
                );
            }
            s
        }
        Format::Text => {
            let mut s = format!(
                "{:<8}  {:>12}  {:>12}  {:>16}  {:>8}  {:>8}\n",
                "plan", "step s", "energy J", "comm B", "speedup", "energy"
            );
            for r in rows {
                let _ = writeln!(
                    s,
                    "{:<8}  {:>12.6}  {:>12.4}  {:>16}  {:>7.2}x  {:>7.2}x",
                    r.baseline.to_string(),
                    r.step_time_s,
                    r.energy_j,
                    r.comm_bytes,
                    r.speedup_vs_dp,
                    r.energy_gain_vs_dp
                );
            }
            s
        }
    })
}

/// One point of a sweep.
#[derive(Debug, Clone)]
struct SweepPoint {
    value: String,
    model: NetworkModel,
    topo: Topology,
}

fn sweep(
    model: &NetworkModel,
    plan: &PlanArgs,
    axis: SweepAxis,
    values: &[String],
    baselines: &[Baseline],
    topology: crate::simarray::TopologyKind,
    hw: &HardwareConfig,
) -> Outcome<String> {
    if values.is_empty() {
        return Err(Failure::Usage("--values needs at least one entry".into()));
    }
    if baselines.is_empty() {
        return Err(Failure::Usage("select at least one baseline".into()));
    }
    let base_topo = Topology {
        kind: topology,
        levels: plan.levels,
    };
    let mut points = Vec::with_capacity(values.len());
    for v in values {
        let bad = |what: &str| Failure::Usage(format!("bad {what} value `{v}`"));
        let point = match axis {
            SweepAxis::Nodes => {
                let n: usize = v.parse().map_err(|_| bad("node count"))?;
                if !n.is_power_of_two() {
                    return Err(Failure::Invalid(format!(
                        "node count {n} is not a power of two"
                    )));
                }
                SweepPoint {
                    value: v.clone(),
                    model: model.clone(),
                    topo: Topology {
                        levels: n.trailing_zeros() as usize,
                        ..base_topo
                    },
                }
            }
            SweepAxis::Batch => {
                let b: u64 = v.parse().map_err(|_| bad("batch"))?;
                SweepPoint {
                    value: v.clone(),
                    model: model.with_batch(b)?,
                    topo: base_topo,
                }
            }
            SweepAxis::Topology => SweepPoint {
                value: v.clone(),
                model: model.clone(),
                topo: Topology {
                    kind: v.parse().map_err(Failure::Usage)?,
                    ..base_topo
                },
            },
        };
        points.push(point);
    }
    let rows: Vec<Outcome<String>> = points
        .par_iter()
        .map(|p| {
            let single = simulate_baseline(
                &p.model,
                plan,
                Baseline::Dp,
                hw,
                &Topology {
                    levels: 0,
                    ..p.topo
                },
            )?
            .1;
            let dp = simulate_baseline(&p.model, plan, Baseline::Dp, hw, &p.topo)?.1;
            let mut s = String::new();
            for &b in baselines {
                let r = simulate_baseline(&p.model, plan, b, hw, &p.topo)?.1;
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{:e},{:.6},{:.6},{:e},{}",
                    axis,
                    p.value,
                    b,
                    p.topo.node_count(),
                    p.model.batch,
                    p.topo.kind,
                    r.step_time_s,
                    single.step_time_s / r.step_time_s,
                    dp.step_time_s / r.step_time_s,
                    r.energy_j,
                    r.comm_bytes
                );
            }
            Ok(s)
        })
        .collect();
    let mut out = format!(
        "{SWEEP_HEADER}\n# network {} mode {}\naxis,value,baseline,nodes,batch,topology,step_time_s,speedup_vs_one,speedup_vs_dp,energy_j,comm_bytes\n",
        model.name, plan.mode
    );
    for r in rows {
        out.push_str(&r?);
    }
    Ok(out)
}

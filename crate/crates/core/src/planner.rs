//! Communication-minimal parallelism search.
//!
//! [`partition_two`] runs a layer-wise dynamic program over the two states
//! {dp, mp} for one bipartition. [`hierarchical_partition`] applies it once
//! per hierarchy level of a `2^H` array. [`brute_force`] enumerates all
//! `2^L` plans and serves as the oracle for the dynamic program.

use crate::commcost::{
    boundary_elems, inter_elements, intra_elements, plan_elements, row_bits, CommCost, Parallelism,
};
use crate::error::{Error, Result};
use crate::netspec::{LayerKind, LayerShapes};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Largest network [`brute_force`] accepts.
pub const BRUTE_FORCE_MAX_LAYERS: usize = 24;

/// Deepest hierarchy accepted anywhere (2^20 accelerators).
pub const MAX_LEVELS: usize = 20;

/// How sub-arrays below the top bipartition see the problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum HierarchyMode {
    /// Every level solves the full-size problem; rows come out identical.
    #[default]
    #[serde(rename = "paper-literal")]
    PaperLiteral,
    /// Each level solves the problem held by one half of its parent: dp
    /// layers at half batch, mp layers at half output channels.
    #[serde(rename = "shape-propagating")]
    ShapePropagating,
}

impl HierarchyMode {
    pub fn as_str(self) -> &'static str {
        match self {
            HierarchyMode::PaperLiteral => "paper-literal",
            HierarchyMode::ShapePropagating => "shape-propagating",
        }
    }
}

impl fmt::Display for HierarchyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for HierarchyMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "paper-literal" | "literal" => Ok(HierarchyMode::PaperLiteral),
            "shape-propagating" | "shape-prop" => Ok(HierarchyMode::ShapePropagating),
            other => Err(format!(
                "unknown mode `{other}` (expected paper-literal or shape-prop)"
            )),
        }
    }
}

/// Accumulated minimum cost of every prefix ending in dp or mp, with the
/// predecessor state that achieved it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DpTable {
    pub com_dp: Vec<u64>,
    pub com_mp: Vec<u64>,
    pub from_dp: Vec<Parallelism>,
    pub from_mp: Vec<Parallelism>,
}

impl DpTable {
    pub fn build(shapes: &LayerShapes) -> Result<DpTable> {
        use Parallelism::{Dp, Mp};
        let n = shapes.len();
        if n == 0 {
            return Err(Error::EmptyNetwork);
        }
        let mut t = DpTable {
            com_dp: Vec::with_capacity(n),
            com_mp: Vec::with_capacity(n),
            from_dp: Vec::with_capacity(n),
            from_mp: Vec::with_capacity(n),
        };
        // Layer 0 has no predecessor, so both incoming accumulators are 0
        // and the boundary costs nothing.
        let (mut prev_dp, mut prev_mp) = (0u64, 0u64);
        for (l, layer) in shapes.layers.iter().enumerate() {
            let boundary = match l {
                0 => 0,
                _ => boundary_elems(&shapes.layers[l - 1], layer),
            };
            let inter = |a, b| inter_elements(boundary, a, b);
            let best = |via_dp: u64, via_mp: u64| {
                if via_mp < via_dp {
                    (via_mp, Mp)
                } else {
                    (via_dp, Dp)
                }
            };
            let (dp, dp_from) = best(prev_dp + inter(Dp, Dp), prev_mp + inter(Mp, Dp));
            let (mp, mp_from) = best(prev_dp + inter(Dp, Mp), prev_mp + inter(Mp, Mp));
            let dp = dp + intra_elements(layer, Dp);
            let mp = mp + intra_elements(layer, Mp);
            t.com_dp.push(dp);
            t.com_mp.push(mp);
            t.from_dp.push(dp_from);
            t.from_mp.push(mp_from);
            prev_dp = dp;
            prev_mp = mp;
        }
        Ok(t)
    }

    /// Minimum over both end states, ties to dp.
    pub fn best(&self) -> (u64, Parallelism) {
        let last = self.com_dp.len() - 1;
        if self.com_mp[last] < self.com_dp[last] {
            (self.com_mp[last], Parallelism::Mp)
        } else {
            (self.com_dp[last], Parallelism::Dp)
        }
    }

    /// Walks the back-pointers from the best end state.
    pub fn plan(&self) -> Vec<Parallelism> {
        let n = self.com_dp.len();
        let mut plan = vec![Parallelism::Dp; n];
        let (_, mut state) = self.best();
        for l in (0..n).rev() {
            plan[l] = state;
            state = match state {
                Parallelism::Dp => self.from_dp[l],
                Parallelism::Mp => self.from_mp[l],
            };
        }
        plan
    }
}

/// Communication-minimal plan for one bipartition, in O(L).
pub fn partition_two(shapes: &LayerShapes) -> Result<(CommCost, Vec<Parallelism>)> {
    let table = DpTable::build(shapes)?;
    let (elements, _) = table.best();
    Ok((
        CommCost::from_elements(elements, shapes.precision_bytes),
        table.plan(),
    ))
}

/// Exhaustive minimum over all `2^L` plans. Among equal-cost plans the one
/// with dp at the lowest differing layer wins.
pub fn brute_force(shapes: &LayerShapes) -> Result<(CommCost, Vec<Parallelism>)> {
    let n = shapes.len();
    if n == 0 {
        return Err(Error::EmptyNetwork);
    }
    if n > BRUTE_FORCE_MAX_LAYERS {
        return Err(Error::TooManyLayers {
            max: BRUTE_FORCE_MAX_LAYERS,
            found: n,
        });
    }
    // Layer 0 is the most significant bit, so ascending masks visit plans in
    // lexicographic order and the first strict minimum is the tie winner.
    let plan_of = |mask: u32| -> Vec<Parallelism> {
        (0..n)
            .map(|l| {
                if mask >> (n - 1 - l) & 1 == 1 {
                    Parallelism::Mp
                } else {
                    Parallelism::Dp
                }
            })
            .collect()
    };
    let mut best: Option<(u64, u32)> = None;
    for mask in 0..(1u32 << n) {
        let cost = plan_elements(shapes, &plan_of(mask))?;
        if best.is_none_or(|(c, _)| cost < c) {
            best = Some((cost, mask));
        }
    }
    let (elements, mask) = best.expect("at least one plan");
    Ok((
        CommCost::from_elements(elements, shapes.precision_bytes),
        plan_of(mask),
    ))
}

/// Parallelism for every layer at every level, with its total traffic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanMatrix {
    pub network: String,
    pub mode: HierarchyMode,
    /// `rows[h][l]`; row 0 is the top-level bipartition.
    pub rows: Vec<Vec<Parallelism>>,
    pub total: CommCost,
}

impl PlanMatrix {
    pub fn levels(&self) -> usize {
        self.rows.len()
    }

    pub fn node_count(&self) -> usize {
        1 << self.rows.len()
    }

    /// Builds a matrix from explicit rows and prices it.
    pub fn from_rows(
        shapes: &LayerShapes,
        rows: Vec<Vec<Parallelism>>,
        mode: HierarchyMode,
    ) -> Result<PlanMatrix> {
        let total = hierarchical_cost(shapes, &rows, mode)?;
        Ok(PlanMatrix {
            network: shapes.network.clone(),
            mode,
            rows,
            total,
        })
    }

    /// Data Parallelism (all dp) or Model Parallelism (all mp).
    pub fn uniform(
        shapes: &LayerShapes,
        levels: usize,
        p: Parallelism,
        mode: HierarchyMode,
    ) -> Result<PlanMatrix> {
        Self::from_rows(shapes, vec![vec![p; shapes.len()]; levels], mode)
    }

    /// Recomputes the total and compares it with the stored one.
    pub fn is_consistent(&self, shapes: &LayerShapes) -> Result<bool> {
        Ok(hierarchical_cost(shapes, &self.rows, self.mode)? == self.total)
    }

    /// Rows as bit strings, `0` = dp.
    pub fn row_bits(&self) -> Vec<String> {
        self.rows.iter().map(|r| row_bits(r)).collect()
    }

    pub fn to_file(&self) -> PlanFile {
        PlanFile {
            network: self.network.clone(),
            levels: self.levels(),
            rows: self.rows.clone(),
            total_elements: self.total.elements,
            total_bytes: self.total.bytes,
            mode: self.mode,
        }
    }
}

/// On-disk plan: `{network, levels, rows, total_elements, total_bytes, mode}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanFile {
    pub network: String,
    pub levels: usize,
    pub rows: Vec<Vec<Parallelism>>,
    pub total_elements: u64,
    pub total_bytes: u64,
    pub mode: HierarchyMode,
}

impl PlanFile {
    /// Validates the file against `shapes` and reprices it.
    pub fn into_matrix(self, shapes: &LayerShapes) -> Result<PlanMatrix> {
        if self.rows.len() != self.levels {
            return Err(Error::Invalid(format!(
                "plan declares {} levels but has {} rows",
                self.levels,
                self.rows.len()
            )));
        }
        let m = PlanMatrix::from_rows(shapes, self.rows, self.mode)?;
        if m.total.elements != self.total_elements || m.total.bytes != self.total_bytes {
            return Err(Error::Invalid(format!(
                "plan total {} elements does not match recomputed {}",
                self.total_elements, m.total.elements
            )));
        }
        Ok(m)
    }
}

fn check_levels(levels: usize) -> Result<()> {
    if levels > MAX_LEVELS {
        return Err(Error::Invalid(format!(
            "{levels} hierarchy levels exceeds the supported {MAX_LEVELS}"
        )));
    }
    Ok(())
}

/// The problem each level's bipartition sees, given the rows above it.
pub fn level_shapes(
    shapes: &LayerShapes,
    rows: &[Vec<Parallelism>],
    mode: HierarchyMode,
) -> Result<Vec<LayerShapes>> {
    check_levels(rows.len())?;
    let mut out = Vec::with_capacity(rows.len());
    let mut current = shapes.clone();
    for row in rows {
        if row.len() != shapes.len() {
            return Err(Error::PlanLength {
                expected: shapes.len(),
                found: row.len(),
            });
        }
        let next = match mode {
            HierarchyMode::PaperLiteral => current.clone(),
            HierarchyMode::ShapePropagating => current.split(row)?,
        };
        out.push(std::mem::replace(&mut current, next));
    }
    Ok(out)
}

/// Per-node tensors after every bipartition in `rows` has been applied.
pub fn leaf_shapes(shapes: &LayerShapes, rows: &[Vec<Parallelism>]) -> Result<LayerShapes> {
    check_levels(rows.len())?;
    rows.iter().try_fold(shapes.clone(), |s, row| s.split(row))
}

/// Total traffic of a plan matrix: level `h` has `2^h` groups, each paying
/// the bipartition cost of its own problem.
pub fn hierarchical_cost(
    shapes: &LayerShapes,
    rows: &[Vec<Parallelism>],
    mode: HierarchyMode,
) -> Result<CommCost> {
    let per_level = level_shapes(shapes, rows, mode)?;
    let mut elements = 0u64;
    for (h, (s, row)) in per_level.iter().zip(rows).enumerate() {
        elements += plan_elements(s, row)? << h;
    }
    Ok(CommCost::from_elements(elements, shapes.precision_bytes))
}

/// Recursive bipartition of a `2^levels` array:
/// `com = com_h + 2 * com_n`.
pub fn hierarchical_partition(
    shapes: &LayerShapes,
    levels: usize,
    mode: HierarchyMode,
) -> Result<PlanMatrix> {
    check_levels(levels)?;
    if shapes.is_empty() {
        return Err(Error::EmptyNetwork);
    }
    fn recurse(
        shapes: &LayerShapes,
        levels: usize,
        mode: HierarchyMode,
    ) -> Result<(u64, Vec<Vec<Parallelism>>)> {
        if levels == 0 {
            return Ok((0, Vec::new()));
        }
        let (com_h, row) = partition_two(shapes)?;
        let sub = match mode {
            HierarchyMode::PaperLiteral => shapes.clone(),
            HierarchyMode::ShapePropagating => shapes.split(&row)?,
        };
        // Both halves face the same subproblem.
        let (com_n, mut rows) = recurse(&sub, levels - 1, mode)?;
        rows.insert(0, row);
        Ok((com_h.elements + 2 * com_n, rows))
    }
    let (elements, rows) = recurse(shapes, levels, mode)?;
    Ok(PlanMatrix {
        network: shapes.network.clone(),
        mode,
        rows,
        total: CommCost::from_elements(elements, shapes.precision_bytes),
    })
}

/// Convolutions dp, fully connected layers mp, at every level.
pub fn plan_trick(shapes: &LayerShapes, levels: usize, mode: HierarchyMode) -> Result<PlanMatrix> {
    let row: Vec<Parallelism> = shapes
        .layers
        .iter()
        .map(|l| match l.kind {
            LayerKind::Conv => Parallelism::Dp,
            LayerKind::FullyConnected => Parallelism::Mp,
        })
        .collect();
    PlanMatrix::from_rows(shapes, vec![row; levels], mode)
}

//! Interconnects of a `2^H` accelerator array and their routing.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    /// Binary fat tree; a subtree of `2^k` leaves reaches its parent over a
    /// link of `2^k` times the leaf bandwidth.
    HTree,
    /// 2D grid with wraparound, `2^ceil(H/2)` rows by `2^floor(H/2)` columns.
    Torus,
}

impl std::str::FromStr for TopologyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "htree" | "h-tree" => Ok(TopologyKind::HTree),
            "torus" => Ok(TopologyKind::Torus),
            other => Err(format!(
                "unknown topology `{other}` (expected htree or torus)"
            )),
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TopologyKind::HTree => "htree",
            TopologyKind::Torus => "torus",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Topology {
    pub kind: TopologyKind,
    pub levels: usize,
}

/// One direction of a physical link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Link {
    /// Between the root of the subtree of `2^size_log2` leaves starting at
    /// leaf `index << size_log2` and its parent.
    Tree {
        size_log2: u32,
        index: usize,
        up: bool,
    },
    /// Between grid neighbours.
    Grid { from: usize, to: usize },
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Link::Tree {
                size_log2,
                index,
                up,
            } => write!(
                f,
                "tree[{}x{}]{}",
                1u64 << size_log2,
                index,
                if *up { "^" } else { "v" }
            ),
            Link::Grid { from, to } => write!(f, "grid[{from}->{to}]"),
        }
    }
}

impl Topology {
    pub fn htree(levels: usize) -> Self {
        Topology {
            kind: TopologyKind::HTree,
            levels,
        }
    }

    pub fn torus(levels: usize) -> Self {
        Topology {
            kind: TopologyKind::Torus,
            levels,
        }
    }

    pub fn node_count(&self) -> usize {
        1 << self.levels
    }

    /// `(rows, columns)` of the torus grid.
    pub fn grid(&self) -> (usize, usize) {
        (1 << self.levels.div_ceil(2), 1 << (self.levels / 2))
    }

    /// Bandwidth of `link` in bytes per second, given the leaf link rate.
    pub fn link_bytes_per_s(&self, link: &Link, leaf_bytes_per_s: f64) -> f64 {
        match link {
            Link::Tree { size_log2, .. } => leaf_bytes_per_s * (1u64 << size_log2) as f64,
            Link::Grid { .. } => leaf_bytes_per_s,
        }
    }

    /// The two halves exchanged by group `g` at hierarchy level `h`.
    pub fn level_groups(&self, h: usize, g: usize) -> (Vec<usize>, Vec<usize>) {
        let half = self.node_count() >> (h + 1);
        let base = g * 2 * half;
        (
            (base..base + half).collect(),
            (base + half..base + 2 * half).collect(),
        )
    }

    /// Links carrying `bytes` from `src` to `dst`, with the bytes each
    /// carries. Traffic is spread evenly over the nodes of `src`.
    pub fn route(&self, src: &[usize], dst: &[usize], bytes: u64) -> Result<Vec<(Link, u64)>> {
        let n = self.node_count();
        if src.is_empty() || src.len() != dst.len() {
            return Err(Error::Route(
                "groups must be non-empty and equal in size".into(),
            ));
        }
        if let Some(&bad) = src.iter().chain(dst).find(|&&x| x >= n) {
            return Err(Error::Route(format!("node {bad} outside a {n}-node array")));
        }
        if src.iter().any(|x| dst.contains(x)) {
            return Err(Error::Route("groups overlap".into()));
        }
        let mut loads = BTreeMap::new();
        match self.kind {
            TopologyKind::HTree => self.route_tree(src, dst, bytes, &mut loads)?,
            TopologyKind::Torus => {
                for (i, (&a, &b)) in src.iter().zip(dst).enumerate() {
                    let share = even_share(bytes, src.len(), i);
                    for link in self.grid_path(a, b) {
                        *loads.entry(link).or_insert(0) += share;
                    }
                }
            }
        }
        Ok(loads.into_iter().filter(|&(_, b)| b > 0).collect())
    }

    /// Tree routing between sibling subtrees: up through every link inside
    /// `src` to its root, across the common parent, and down through `dst`.
    fn route_tree(
        &self,
        src: &[usize],
        dst: &[usize],
        bytes: u64,
        loads: &mut BTreeMap<Link, u64>,
    ) -> Result<()> {
        let size = src.len();
        let aligned = |g: &[usize]| {
            let lo = g[0];
            size.is_power_of_two()
                && lo.is_multiple_of(size)
                && g.iter().enumerate().all(|(i, &x)| x == lo + i)
        };
        if !aligned(src) || !aligned(dst) || src[0] / (2 * size) != dst[0] / (2 * size) {
            return Err(Error::Route(
                "tree routing needs two sibling subtrees".into(),
            ));
        }
        let k_max = size.trailing_zeros();
        for (group, up) in [(src, true), (dst, false)] {
            for k in 0..=k_max {
                let sub = 1usize << k;
                let count = size / sub;
                for j in 0..count {
                    let index = group[0] / sub + j;
                    *loads
                        .entry(Link::Tree {
                            size_log2: k,
                            index,
                            up,
                        })
                        .or_insert(0) += even_share(bytes, count, j);
                }
            }
        }
        Ok(())
    }

    fn coords(&self, node: usize) -> (usize, usize) {
        let (_, cols) = self.grid();
        (node / cols, node % cols)
    }

    /// Dimension-order path: rows first, then columns, each along the
    /// shorter way round (ties go in the positive direction).
    pub fn grid_path(&self, from: usize, to: usize) -> Vec<Link> {
        let (rows, cols) = self.grid();
        let (mut r, mut c) = self.coords(from);
        let (tr, tc) = self.coords(to);
        let mut path = Vec::new();
        let step = |pos: usize, target: usize, len: usize| -> Option<usize> {
            if pos == target {
                return None;
            }
            let fwd = (target + len - pos) % len;
            Some(if fwd <= len - fwd {
                (pos + 1) % len
            } else {
                (pos + len - 1) % len
            })
        };
        while let Some(nr) = step(r, tr, rows) {
            path.push(Link::Grid {
                from: r * cols + c,
                to: nr * cols + c,
            });
            r = nr;
        }
        while let Some(nc) = step(c, tc, cols) {
            path.push(Link::Grid {
                from: r * cols + c,
                to: r * cols + nc,
            });
            c = nc;
        }
        path
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.kind, self.node_count())
    }
}

/// Share `i` of `total` split over `parts`, remainder to the first shares.
fn even_share(total: u64, parts: usize, i: usize) -> u64 {
    let parts = parts as u64;
    total / parts + u64::from((i as u64) < total % parts)
}

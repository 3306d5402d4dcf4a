//! Communication model between the two halves of a bipartitioned array.
//!
//! Intra-layer traffic is the partial-sum exchange inside one layer:
//! the gradient dW_l under dp, the forward product under mp. Inter-layer
//! traffic converts layer l-1's output layout (R tensors) into the layout
//! layer l expects (L tensors); the boundary tensors are F_l and E_l.
//!
//! Element counts are the planning unit. Byte counts multiply by the
//! element precision and by [`PAIR_FACTOR`], since both halves fetch the
//! remote share symmetrically.

use crate::error::{Error, Result};
use crate::netspec::{LayerShape, LayerShapes};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::{Add, AddAssign};

/// Both sides of a bipartition fetch the remote share.
pub const PAIR_FACTOR: u64 = 2;

/// Per-layer parallelism choice. `Dp < Mp` so ties resolve to `Dp`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parallelism {
    Dp,
    Mp,
}

impl Parallelism {
    pub const BOTH: [Parallelism; 2] = [Parallelism::Dp, Parallelism::Mp];

    pub fn as_str(self) -> &'static str {
        match self {
            Parallelism::Dp => "dp",
            Parallelism::Mp => "mp",
        }
    }

    /// `0` for dp, `1` for mp.
    pub fn bit(self) -> u8 {
        match self {
            Parallelism::Dp => 0,
            Parallelism::Mp => 1,
        }
    }
}

impl fmt::Display for Parallelism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Parallelism {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "dp" | "0" => Ok(Parallelism::Dp),
            "mp" | "1" => Ok(Parallelism::Mp),
            other => Err(format!("expected dp or mp, found `{other}`")),
        }
    }
}

/// Renders a row as a bit string, `0` = dp, `1` = mp.
pub fn row_bits(row: &[Parallelism]) -> String {
    row.iter().map(|p| char::from(b'0' + p.bit())).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CommCost {
    pub elements: u64,
    pub bytes: u64,
}

impl CommCost {
    pub const ZERO: CommCost = CommCost {
        elements: 0,
        bytes: 0,
    };

    pub fn from_elements(elements: u64, precision_bytes: u32) -> Self {
        CommCost {
            elements,
            bytes: elements * u64::from(precision_bytes) * PAIR_FACTOR,
        }
    }

    pub fn scaled(self, k: u64) -> Self {
        CommCost {
            elements: self.elements * k,
            bytes: self.bytes * k,
        }
    }
}

impl Add for CommCost {
    type Output = CommCost;

    fn add(self, rhs: CommCost) -> CommCost {
        CommCost {
            elements: self.elements + rhs.elements,
            bytes: self.bytes + rhs.bytes,
        }
    }
}

impl AddAssign for CommCost {
    fn add_assign(&mut self, rhs: CommCost) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for CommCost {
    fn sum<I: Iterator<Item = CommCost>>(iter: I) -> CommCost {
        iter.fold(CommCost::ZERO, Add::add)
    }
}

/// Intra-layer elements: dW_l under dp, the forward partial sums under mp.
pub fn intra_elements(layer: &LayerShape, p: Parallelism) -> u64 {
    match p {
        Parallelism::Dp => layer.weight_elems(),
        Parallelism::Mp => layer.partial_sum_elems(),
    }
}

/// Elements of the boundary tensor between `producer` and `consumer`.
///
/// The two sides agree on unsplit shapes. Inside a sub-array they may not
/// (the parent may have halved the producer's channels but the consumer's
/// batch), and the conversion has to cover the larger of the two views.
pub fn boundary_elems(producer: &LayerShape, consumer: &LayerShape) -> u64 {
    producer.output_elems().max(consumer.input_elems())
}

/// Forward (F) and backward (E) shares of converting a boundary tensor of
/// `boundary` elements from the `prev` layout to the `next` layout.
///
/// dp-dp: 0; dp-mp: A(F)/4 + A(E)/4; mp-mp: A(E)/2; mp-dp: A(E)/2.
/// With A(E) == A(F) the three nonzero cases coincide numerically; the
/// terms stay separate so the simulator can place them in the right phase.
pub fn inter_split(boundary: u64, prev: Parallelism, next: Parallelism) -> (u64, u64) {
    let f = boundary;
    let e = f;
    match (prev, next) {
        (Parallelism::Dp, Parallelism::Dp) => (0, 0),
        (Parallelism::Dp, Parallelism::Mp) => {
            // Round the combined quarter terms once so the total matches the
            // half-tensor cases exactly.
            let total = (f + e).div_ceil(4);
            let fwd = total - total / 2;
            (fwd, total / 2)
        }
        (Parallelism::Mp, Parallelism::Mp) | (Parallelism::Mp, Parallelism::Dp) => {
            (0, e.div_ceil(2))
        }
    }
}

pub fn inter_elements(boundary: u64, prev: Parallelism, next: Parallelism) -> u64 {
    let (f, e) = inter_split(boundary, prev, next);
    f + e
}

pub fn intra_cost(shapes: &LayerShapes, l: usize, p: Parallelism) -> Result<CommCost> {
    let layer = shapes.layer(l)?;
    Ok(CommCost::from_elements(
        intra_elements(layer, p),
        shapes.precision_bytes,
    ))
}

/// Conversion cost at the boundary in front of layer `l` (`1 <= l < L`).
pub fn inter_cost(
    shapes: &LayerShapes,
    l: usize,
    prev: Parallelism,
    next: Parallelism,
) -> Result<CommCost> {
    if l == 0 {
        return Err(Error::LayerOutOfRange {
            index: l,
            len: shapes.len(),
        });
    }
    let boundary = boundary_elems(shapes.layer(l - 1)?, shapes.layer(l)?);
    Ok(CommCost::from_elements(
        inter_elements(boundary, prev, next),
        shapes.precision_bytes,
    ))
}

pub(crate) fn plan_elements(shapes: &LayerShapes, plan: &[Parallelism]) -> Result<u64> {
    if plan.len() != shapes.len() {
        return Err(Error::PlanLength {
            expected: shapes.len(),
            found: plan.len(),
        });
    }
    let mut total = 0;
    for (l, (layer, &p)) in shapes.layers.iter().zip(plan).enumerate() {
        total += intra_elements(layer, p);
        if l > 0 {
            let boundary = boundary_elems(&shapes.layers[l - 1], layer);
            total += inter_elements(boundary, plan[l - 1], p);
        }
    }
    Ok(total)
}

/// Total two-way traffic of one bipartition under `plan`.
pub fn plan_cost(shapes: &LayerShapes, plan: &[Parallelism]) -> Result<CommCost> {
    Ok(CommCost::from_elements(
        plan_elements(shapes, plan)?,
        shapes.precision_bytes,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netspec::{infer_shapes, InputDims, LayerSpec, NetworkModel};
    use Parallelism::{Dp, Mp};

    fn shapes(input: (u64, u64, u64), batch: u64, layers: Vec<LayerSpec>) -> LayerShapes {
        let m = NetworkModel::new(
            "t",
            batch,
            InputDims {
                height: input.0,
                width: input.1,
                channels: input.2,
            },
            layers,
        )
        .unwrap();
        infer_shapes(&m).unwrap()
    }

    #[test]
    fn fc_worked_example_bytes() {
        let s = shapes((1, 1, 70), 32, vec![LayerSpec::fc(70, 100)]);
        let dp = intra_cost(&s, 0, Dp).unwrap();
        let mp = intra_cost(&s, 0, Mp).unwrap();
        assert_eq!(
            dp,
            CommCost {
                elements: 7000,
                bytes: 56_000
            }
        );
        assert_eq!(
            mp,
            CommCost {
                elements: 3200,
                bytes: 25_600
            }
        );
    }

    #[test]
    fn conv_worked_example_bytes() {
        let s = shapes((12, 12, 20), 32, vec![LayerSpec::conv(20, 50, 5)]);
        assert_eq!(
            intra_cost(&s, 0, Dp).unwrap(),
            CommCost {
                elements: 25_000,
                bytes: 200_000
            }
        );
        assert_eq!(
            intra_cost(&s, 0, Mp).unwrap(),
            CommCost {
                elements: 102_400,
                bytes: 819_200
            }
        );
    }

    #[test]
    fn index_checks() {
        let s = shapes((1, 1, 4), 2, vec![LayerSpec::fc(4, 4)]);
        assert!(matches!(
            intra_cost(&s, 1, Dp),
            Err(Error::LayerOutOfRange { index: 1, len: 1 })
        ));
        assert!(inter_cost(&s, 0, Dp, Dp).is_err());
        assert!(matches!(
            plan_cost(&s, &[Dp, Dp]),
            Err(Error::PlanLength {
                expected: 1,
                found: 2
            })
        ));
    }

    #[test]
    fn inter_table_on_3200_boundary() {
        // Boundary F_1 = 32 x 100 = 3200 elements.
        let s = shapes(
            (1, 1, 70),
            32,
            vec![LayerSpec::fc(70, 100), LayerSpec::fc(100, 10)],
        );
        assert_eq!(inter_cost(&s, 1, Dp, Dp).unwrap().elements, 0);
        assert_eq!(inter_cost(&s, 1, Dp, Mp).unwrap().elements, 1600);
        assert_eq!(inter_cost(&s, 1, Mp, Mp).unwrap().elements, 1600);
        assert_eq!(inter_cost(&s, 1, Mp, Dp).unwrap().elements, 1600);
        assert_eq!(inter_split(3200, Dp, Mp), (800, 800));
        assert_eq!(inter_split(3200, Mp, Dp), (0, 1600));
    }

    #[test]
    fn odd_boundaries_round_up() {
        let s = shapes((1, 1, 3), 1, vec![LayerSpec::fc(3, 5), LayerSpec::fc(5, 1)]);
        assert_eq!(
            inter_elements(boundary_elems(&s.layers[0], &s.layers[1]), Mp, Dp),
            3
        );
        assert_eq!(
            inter_elements(boundary_elems(&s.layers[0], &s.layers[1]), Dp, Mp),
            3
        );
    }

    #[test]
    fn plan_cost_sums_terms() {
        let s = shapes((1, 1, 8), 4, vec![LayerSpec::fc(8, 6)]);
        assert_eq!(plan_cost(&s, &[Dp]).unwrap().elements, 48);
        let s = shapes((1, 1, 8), 4, vec![LayerSpec::fc(8, 6), LayerSpec::fc(6, 2)]);
        assert_eq!(plan_cost(&s, &[Dp, Dp]).unwrap().elements, 48 + 12);
        // mp, dp: intra 24 + 12, boundary 4 x 6 = 24 -> 12
        assert_eq!(plan_cost(&s, &[Mp, Dp]).unwrap().elements, 24 + 12 + 12);
    }

    #[test]
    fn parse_and_bits() {
        assert_eq!("dp".parse::<Parallelism>().unwrap(), Dp);
        assert_eq!("1".parse::<Parallelism>().unwrap(), Mp);
        assert!("x".parse::<Parallelism>().is_err());
        assert_eq!(row_bits(&[Dp, Dp, Mp, Mp]), "0011");
        assert!(Dp < Mp);
    }
}

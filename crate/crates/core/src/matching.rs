//! Assigns planned blocks to inventory units and works out the 90° rotations
//! that turn a stock block into the planned orientation.

use serde::{Deserialize, Serialize};

use crate::model::{
    close, dims_eq, AssemblyPlan, BlockDescriptor, BlockInventory, ModelError, PlannedBlock, Shape,
};

/// Quarter-turn offsets applied to a staged block before placement.
///
/// Rotations are about the fixed world axes, roll (X) first, then pitch (Y),
/// then yaw (Z). The yaw offset is only non-zero for the two permutations that
/// roll and pitch cannot reach (an X/Y swap takes a quarter turn about Z).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Reorientation {
    pub roll_deg: u16,
    pub pitch_deg: u16,
    pub yaw_offset_deg: u16,
}

impl Reorientation {
    pub fn is_identity(&self) -> bool {
        *self == Reorientation::default()
    }

    /// Axis-aligned extents of a block with `dims` after this reorientation.
    pub fn apply(&self, dims: [f64; 3]) -> [f64; 3] {
        let mut d = dims;
        if self.roll_deg == 90 {
            d = [d[0], d[2], d[1]];
        }
        if self.pitch_deg == 90 {
            d = [d[2], d[1], d[0]];
        }
        if self.yaw_offset_deg == 90 {
            d = [d[1], d[0], d[2]];
        }
        d
    }
}

// Candidate offsets, fewest quarter turns first.
const CANDIDATES: [(u16, u16, u16); 8] = [
    (0, 0, 0),
    (90, 0, 0),
    (0, 90, 0),
    (0, 0, 90),
    (90, 90, 0),
    (90, 0, 90),
    (0, 90, 90),
    (90, 90, 90),
];

pub fn orientation_offsets(
    planned: [f64; 3],
    inventory: [f64; 3],
) -> Result<Reorientation, ModelError> {
    CANDIDATES
        .iter()
        .map(|&(roll_deg, pitch_deg, yaw_offset_deg)| Reorientation {
            roll_deg,
            pitch_deg,
            yaw_offset_deg,
        })
        .find(|r| dims_eq(r.apply(inventory), planned))
        .ok_or(ModelError::NotAPermutation { planned, inventory })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub plan_index: usize,
    pub entry: usize,
    /// Unit index within the entry's quantity.
    pub unit: u32,
    pub reorientation: Reorientation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingBlock {
    pub plan_index: usize,
    #[serde(flatten)]
    pub block: BlockDescriptor,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchResult {
    pub assignments: Vec<Assignment>,
    pub missing: Vec<MissingBlock>,
}

impl MatchResult {
    pub fn is_complete(&self) -> bool {
        self.missing.is_empty()
    }

    pub fn assignment_for(&self, plan_index: usize) -> Option<&Assignment> {
        self.assignments.iter().find(|a| a.plan_index == plan_index)
    }
}

fn is_permutation(a: [f64; 3], b: [f64; 3]) -> bool {
    let mut x = a;
    let mut y = b;
    x.sort_by(|p, q| p.total_cmp(q));
    y.sort_by(|p, q| p.total_cmp(q));
    dims_eq(x, y)
}

/// (diameter, height) a planned cylinder asks for. Lying cylinders are
/// written as (height, diameter, diameter).
fn cylinder_request(dims: [f64; 3]) -> (f64, f64) {
    if close(dims[0], dims[1]) {
        (dims[0], dims[2])
    } else {
        (dims[1], dims[0])
    }
}

pub fn compatible(block: &PlannedBlock, shape: Shape, inv_dims: [f64; 3]) -> bool {
    if block.shape != shape {
        return false;
    }
    match shape {
        Shape::Cuboid => is_permutation(block.dims, inv_dims),
        Shape::Cylinder => {
            let (d, h) = cylinder_request(block.dims);
            close(d, inv_dims[0]) && close(h, inv_dims[2])
        }
    }
}

/// Maximum-cardinality matching of plan blocks onto inventory units using
/// augmenting paths. Anything left unmatched is reported as missing.
pub fn match_blocks(plan: &AssemblyPlan, inv: &BlockInventory) -> MatchResult {
    let units: Vec<(usize, u32)> = inv
        .entries()
        .iter()
        .enumerate()
        .flat_map(|(e, ty)| (0..ty.quantity).map(move |u| (e, u)))
        .collect();
    let adjacency: Vec<Vec<usize>> = plan
        .blocks
        .iter()
        .map(|b| {
            units
                .iter()
                .enumerate()
                .filter(|(_, (e, _))| {
                    let ty = &inv.entries()[*e];
                    compatible(b, ty.shape, ty.dims)
                })
                .map(|(u, _)| u)
                .collect()
        })
        .collect();

    let mut owner: Vec<Option<usize>> = vec![None; units.len()];
    for left in 0..plan.blocks.len() {
        let mut seen = vec![false; units.len()];
        augment(left, &adjacency, &mut owner, &mut seen);
    }

    let mut by_block: Vec<Option<usize>> = vec![None; plan.blocks.len()];
    for (u, o) in owner.iter().enumerate() {
        if let Some(b) = o {
            by_block[*b] = Some(u);
        }
    }

    let mut result = MatchResult::default();
    for (plan_index, unit) in by_block.into_iter().enumerate() {
        let block = &plan.blocks[plan_index];
        match unit {
            Some(u) => {
                let (entry, unit) = units[u];
                let reorientation = orientation_offsets(block.dims, inv.entries()[entry].dims)
                    .expect("compatible blocks are permutations");
                result.assignments.push(Assignment { plan_index, entry, unit, reorientation });
            }
            None => result.missing.push(MissingBlock { plan_index, block: block.descriptor() }),
        }
    }
    result
}

fn augment(
    left: usize,
    adjacency: &[Vec<usize>],
    owner: &mut [Option<usize>],
    seen: &mut [bool],
) -> bool {
    for &u in &adjacency[left] {
        if seen[u] {
            continue;
        }
        seen[u] = true;
        let free = match owner[u] {
            None => true,
            Some(other) => augment(other, adjacency, owner, seen),
        };
        if free {
            owner[u] = Some(left);
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BlockSpec, Color, Pose};

    fn block(shape: Shape, dims: [f64; 3]) -> PlannedBlock {
        PlannedBlock {
            name: "b".into(),
            color: Color::named("green"),
            shape,
            dims,
            pose: Pose::new([0.0, 0.0, dims[2] / 2.0], 0.0),
        }
    }

    fn plan(blocks: Vec<PlannedBlock>) -> AssemblyPlan {
        AssemblyPlan { target: "t".into(), iteration: 0, blocks }
    }

    fn inv(types: &[(Shape, [f64; 3], u32)]) -> BlockInventory {
        BlockInventory::new(
            types
                .iter()
                .map(|&(shape, dims, quantity)| BlockSpec { shape, dims, quantity })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn count_deficit_is_reported() {
        let p = plan(vec![
            block(Shape::Cuboid, [0.02, 0.02, 0.06]),
            block(Shape::Cuboid, [0.02, 0.02, 0.06]),
        ]);
        let m = match_blocks(&p, &inv(&[(Shape::Cuboid, [0.02, 0.02, 0.06], 1)]));
        assert_eq!(m.assignments.len(), 1);
        assert_eq!(m.missing.len(), 1);
        assert_eq!(m.missing[0].block.dims, [0.02, 0.02, 0.06]);
        assert_eq!(m.missing[0].block.shape, Shape::Cuboid);
    }

    #[test]
    fn permuted_block_matches_with_pitch() {
        let p = plan(vec![block(Shape::Cuboid, [0.06, 0.02, 0.02])]);
        let m = match_blocks(&p, &inv(&[(Shape::Cuboid, [0.02, 0.02, 0.06], 1)]));
        assert!(m.is_complete());
        assert_eq!(m.assignments[0].reorientation.pitch_deg, 90);
        assert_eq!(m.assignments[0].reorientation.roll_deg, 0);
    }

    #[test]
    fn empty_plan_is_vacuous() {
        let m = match_blocks(&plan(vec![]), &inv(&[(Shape::Cuboid, [0.02, 0.02, 0.06], 1)]));
        assert!(m.assignments.is_empty());
        assert!(m.missing.is_empty());
    }

    #[test]
    fn matching_beats_greedy() {
        // The first block fits both entries; greedy would take the only unit
        // the second block can use.
        let p = plan(vec![
            block(Shape::Cuboid, [0.04, 0.04, 0.04]),
            block(Shape::Cuboid, [0.04, 0.04, 0.04]),
        ]);
        let i = inv(&[(Shape::Cuboid, [0.04, 0.04, 0.04], 2)]);
        assert!(match_blocks(&p, &i).is_complete());

        let p = plan(vec![
            block(Shape::Cylinder, [0.03, 0.03, 0.06]),
            block(Shape::Cylinder, [0.06, 0.03, 0.03]),
        ]);
        let i = inv(&[(Shape::Cylinder, [0.03, 0.03, 0.06], 2)]);
        let m = match_blocks(&p, &i);
        assert!(m.is_complete());
        assert!(m.assignments[0].reorientation.is_identity());
        assert_eq!(m.assignments[1].reorientation.pitch_deg, 90);
    }

    #[test]
    fn shapes_do_not_cross_match() {
        let p = plan(vec![block(Shape::Cylinder, [0.04, 0.04, 0.04])]);
        let m = match_blocks(&p, &inv(&[(Shape::Cuboid, [0.04, 0.04, 0.04], 3)]));
        assert_eq!(m.missing.len(), 1);
    }

    #[test]
    fn roll_swaps_y_and_z() {
        let r = orientation_offsets([0.02, 0.06, 0.02], [0.02, 0.02, 0.06]).unwrap();
        assert_eq!((r.roll_deg, r.pitch_deg, r.yaw_offset_deg), (90, 0, 0));
    }

    #[test]
    fn identity_and_symmetric_blocks_need_nothing() {
        let r = orientation_offsets([0.02, 0.02, 0.06], [0.02, 0.02, 0.06]).unwrap();
        assert!(r.is_identity());
        let r = orientation_offsets([0.04, 0.04, 0.04], [0.04, 0.04, 0.04]).unwrap();
        assert!(r.is_identity());
    }

    #[test]
    fn pitch_swaps_x_and_z() {
        let r = orientation_offsets([0.06, 0.02, 0.02], [0.02, 0.02, 0.06]).unwrap();
        assert_eq!((r.roll_deg, r.pitch_deg, r.yaw_offset_deg), (0, 90, 0));
    }

    #[test]
    fn non_permutation_is_a_contract_violation() {
        assert!(matches!(
            orientation_offsets([0.02, 0.03, 0.06], [0.02, 0.02, 0.06]),
            Err(ModelError::NotAPermutation { .. })
        ));
    }
}

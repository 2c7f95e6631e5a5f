use std::collections::{BTreeSet, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    block_state, verdict_for, with_offsets, BlockState, BlockStatus, Body, SimError, SimParams,
    Support, Verdict, WorldState,
};
use crate::geometry::Point;
use crate::matching::{match_blocks, Reorientation};
use crate::model::{normalize_yaw, AssemblyPlan, BlockInventory, Pose, Shape};
use crate::sim::staging::initialize_staging;
use crate::validate::WorkspaceConfig;

// Keeps the noise stream independent of the staging stream for the same seed.
const NOISE_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockOutcome {
    pub index: usize,
    pub name: String,
    pub nominal: Pose,
    pub actual: Pose,
    /// Extents after execution; differs from the plan only for toppled blocks.
    pub final_dims: [f64; 3],
    pub status: BlockStatus,
    pub support: Vec<Support>,
    pub reorientation: Reorientation,
    pub pick_position: [f64; 3],
    /// Lying cylinders are modelled by their bounding box and may roll in reality.
    pub rolling_risk: bool,
}

/// Scene snapshot taken after an event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: usize,
    pub caption: String,
    pub blocks: Vec<BlockState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub per_block: Vec<BlockOutcome>,
    pub stable_fraction: f64,
    pub all_placed: bool,
    pub frames: Vec<FrameRecord>,
}

impl ExecutionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Scene after the last event.
    pub fn final_world(&self, workspace: &WorkspaceConfig, params: &SimParams) -> WorldState {
        let blocks = self.frames.last().map(|f| f.blocks.clone()).unwrap_or_default();
        WorldState::with_blocks(workspace.clone(), params.clone(), blocks)
    }
}

/// Runs the plan block by block in the quasi-static world.
///
/// Each block descends onto its (noisy) target, is caught by whatever it hits
/// first, settles down if it was left floating, and topples if its COM is not
/// strictly inside the eroded support polygon. A topple re-tests everything
/// that rested on the moved block.
pub fn execute_plan(
    plan: &AssemblyPlan,
    inv: &BlockInventory,
    workspace: &WorkspaceConfig,
    params: &SimParams,
    seed: u64,
) -> Result<ExecutionReport, SimError> {
    params.check()?;
    let matched = match_blocks(plan, inv);
    if !matched.is_complete() {
        return Err(SimError::MissingBlocks(matched.missing.iter().map(|m| m.block).collect()));
    }
    let staging = initialize_staging(inv, workspace, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ NOISE_STREAM);
    let tol = params.contact_tol_m;
    let mut world = WorldState::new(workspace.clone(), params.clone());
    let mut frames = vec![FrameRecord { index: 0, caption: "initial".into(), blocks: Vec::new() }];
    let mut rolling = Vec::with_capacity(plan.blocks.len());
    let mut nominals = Vec::with_capacity(plan.blocks.len());
    let mut picks = Vec::with_capacity(plan.blocks.len());
    let mut reorients = Vec::with_capacity(plan.blocks.len());

    for (i, planned) in plan.blocks.iter().enumerate() {
        let assignment = matched.assignment_for(i).expect("complete match");
        let reorientation = assignment.reorientation;
        let pick = staging
            .iter()
            .find(|s| s.entry == assignment.entry && s.unit == assignment.unit)
            .map(|s| s.position)
            .unwrap_or_default();
        let nominal = with_offsets(planned.pose, &reorientation);

        let nx: f64 = StandardNormal.sample(&mut rng);
        let ny: f64 = StandardNormal.sample(&mut rng);
        let nyaw: f64 = StandardNormal.sample(&mut rng);
        let body = Body::new(planned.shape, planned.dims);
        let mut xy: Point = [
            nominal.position[0] + params.noise.sigma_xy_m * nx,
            nominal.position[1] + params.noise.sigma_xy_m * ny,
        ];
        let yaw = normalize_yaw(nominal.yaw_deg + params.noise.sigma_yaw_deg * nyaw);
        let mut bottom = nominal.position[2] - body.half_height();

        // Vertical descent: the highest block overlapping the swept footprint
        // above the target bottom stops it.
        let mut status = BlockStatus::Placed;
        let mut struck = None;
        let fp = body.footprint(xy, yaw);
        let obstruction = world
            .blocks
            .iter()
            .filter(|o| o.top() > bottom + tol && fp.overlaps(&o.footprint(), params.min_overlap_area()))
            .max_by(|a, b| a.top().total_cmp(&b.top()).then(b.index.cmp(&a.index)));
        if let Some(o) = obstruction {
            status = BlockStatus::Collided;
            struck = Some(o.index);
            let c = o.xy();
            let away = unit_or_x([xy[0] - c[0], xy[1] - c[1]]);
            xy = [xy[0] + away[0] * tol, xy[1] + away[1] * tol];
            bottom = o.top();
        }

        let mut pose = Pose { position: [xy[0], xy[1], bottom + body.half_height()], yaw_deg: yaw, ..nominal };
        let region = world.support_region(&body, &pose, None);
        if region.is_empty() {
            let fp = body.footprint(xy, yaw);
            let surface = world.highest_surface(&fp, bottom + tol, None).unwrap_or(0.0);
            if status == BlockStatus::Placed && bottom - surface > tol {
                status = BlockStatus::SettledLower;
            }
            bottom = surface;
        } else {
            // Snap onto the contact surface.
            bottom = contact_height(&world, &region.supporters);
        }
        pose.position[2] = bottom + body.half_height();

        let mut state = block_state(i, &planned.name, &planned.color, body, pose, status);
        state.support = world.support_region(&body, &pose, None).supporters;
        world.blocks.push(state);

        let mut events = vec![];
        let verdict = world.is_stable(&body, &pose, Some(i));
        let mut toppled_now = BTreeSet::new();
        if verdict != Verdict::Stable {
            topple(&mut world, i);
            toppled_now.insert(i);
            events.extend(topple_cascade(&mut world, i, &mut toppled_now));
        }
        if let Some(s) = struck {
            events.extend(retest(&mut world, &[s], &mut toppled_now));
        }

        let now = &world.get(i).expect("just placed").status;
        let mut caption = format!("{} block {i}: {}", now.label(), planned.name);
        if status == BlockStatus::Collided && *now == BlockStatus::Toppled {
            caption.push_str(" (after collision)");
        }
        if !events.is_empty() {
            let list: Vec<String> = events.iter().map(|e| e.to_string()).collect();
            caption.push_str(&format!("; toppled {}", list.join(", ")));
        }
        frames.push(FrameRecord { index: frames.len(), caption, blocks: world.blocks.clone() });

        rolling.push(body.lying);
        nominals.push(nominal);
        picks.push(pick);
        reorients.push(reorientation);
    }
    frames.push(FrameRecord { index: frames.len(), caption: "final".into(), blocks: world.blocks.clone() });

    let per_block: Vec<BlockOutcome> = world
        .blocks
        .iter()
        .map(|b| BlockOutcome {
            index: b.index,
            name: b.name.clone(),
            nominal: nominals[b.index],
            actual: b.pose,
            final_dims: b.body.dims,
            status: b.status,
            support: b.support.clone(),
            reorientation: reorients[b.index],
            pick_position: picks[b.index],
            rolling_risk: rolling[b.index],
        })
        .collect();
    let resting = per_block.iter().filter(|b| b.status.is_resting()).count();
    let stable_fraction = if per_block.is_empty() { 0.0 } else { resting as f64 / per_block.len() as f64 };
    Ok(ExecutionReport {
        all_placed: resting == per_block.len(),
        stable_fraction,
        per_block,
        frames,
    })
}

fn unit_or_x(v: Point) -> Point {
    let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
    if n <= 1e-12 {
        [1.0, 0.0]
    } else {
        [v[0] / n, v[1] / n]
    }
}

fn contact_height(world: &WorldState, supporters: &[Support]) -> f64 {
    supporters
        .iter()
        .map(|s| match s {
            Support::Table => 0.0,
            Support::Block(j) => world.get(*j).map_or(0.0, |b| b.top()),
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Lays a block flat beside where it stood, displaced along the overhang.
fn topple(world: &mut WorldState, index: usize) {
    let state = world.get(index).expect("block in world").clone();
    let region = world.support_region(&state.body, &state.pose, Some(index));
    let com = state.xy();
    let reference = region.polygon.center().unwrap_or(com);
    let dir = unit_or_x([com[0] - reference[0], com[1] - reference[1]]);

    let body = flat_body(&state.body);
    let reach = state.body.max_extent() / 2.0;
    let xy = [com[0] + dir[0] * reach, com[1] + dir[1] * reach];
    let yaw = normalize_yaw(dir[1].atan2(dir[0]).to_degrees());
    let fp = body.footprint(xy, yaw);
    let surface = world.highest_surface(&fp, f64::INFINITY, Some(index)).unwrap_or(0.0);
    let pose = Pose {
        position: [xy[0], xy[1], surface + body.half_height()],
        yaw_deg: yaw,
        roll_deg: state.pose.roll_deg,
        pitch_deg: state.pose.pitch_deg,
    };
    let support = world.support_region(&body, &pose, Some(index)).supporters;
    let b = world.get_mut(index).expect("block in world");
    b.body = body;
    b.pose = pose;
    b.status = BlockStatus::Toppled;
    b.support = support;
}

/// Largest face down, long side along the fall direction.
fn flat_body(body: &Body) -> Body {
    match body.shape {
        Shape::Cuboid => {
            let mut d = body.dims;
            d.sort_by(|a, b| b.total_cmp(a));
            Body::new(Shape::Cuboid, d)
        }
        Shape::Cylinder => {
            let (diameter, height) = if body.lying { (body.dims[1], body.dims[0]) } else { (body.dims[0], body.dims[2]) };
            if diameter >= height {
                Body::new(Shape::Cylinder, [diameter, diameter, height])
            } else {
                Body::new(Shape::Cylinder, [height, diameter, diameter])
            }
        }
    }
}

/// Re-tests every block that rested on `moved` until nothing else falls.
/// Returns the blocks that toppled as a consequence, in topple order.
///
/// `toppled` holds blocks that already fell during this execution; they are
/// frozen and never re-tested, so the loop runs at most once per block.
pub fn topple_cascade(world: &mut WorldState, moved: usize, toppled: &mut BTreeSet<usize>) -> Vec<usize> {
    let dependents: Vec<usize> = dependents_of(world, moved);
    retest(world, &dependents, toppled)
}

fn dependents_of(world: &WorldState, moved: usize) -> Vec<usize> {
    world
        .blocks
        .iter()
        .filter(|b| b.index != moved && b.support.contains(&Support::Block(moved)))
        .map(|b| b.index)
        .collect()
}

fn retest(world: &mut WorldState, seeds: &[usize], toppled: &mut BTreeSet<usize>) -> Vec<usize> {
    let mut affected = Vec::new();
    let mut queue: VecDeque<usize> = seeds.iter().copied().collect();
    while let Some(j) = queue.pop_front() {
        if toppled.contains(&j) {
            continue;
        }
        let Some(b) = world.get(j) else { continue };
        let region = world.support_region(&b.body, &b.pose, Some(j));
        let verdict = verdict_for(&region, b.xy(), world.params.stability_margin_m);
        if verdict == Verdict::Stable {
            world.get_mut(j).expect("exists").support = region.supporters;
            continue;
        }
        topple(world, j);
        toppled.insert(j);
        affected.push(j);
        queue.extend(dependents_of(world, j));
    }
    affected
}

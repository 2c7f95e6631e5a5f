//! Quasi-static tabletop stacking.
//!
//! Blocks are placed one at a time and never move unless they topple. A block
//! is stable when its center of mass projects strictly inside its support
//! polygon shrunk by the stability margin.

mod execute;
mod placement;
mod staging;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{convex_hull, ConvexPolygon, Point};
use crate::matching::Reorientation;
use crate::model::{BlockDescriptor, Color, Pose, Shape};
use crate::validate::WorkspaceConfig;

pub use execute::{execute_plan, topple_cascade, BlockOutcome, ExecutionReport, FrameRecord};
pub use placement::placement_correct;
pub use staging::{initialize_staging, StagedUnit};

/// Slack below which the COM counts as on the eroded boundary.
const BOUNDARY_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("plan needs blocks the inventory lacks: {}", list(.0))]
    MissingBlocks(Vec<BlockDescriptor>),
    #[error("staging overflow: no room for {}", list(.0))]
    StagingOverflow(Vec<BlockDescriptor>),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

fn list(blocks: &[BlockDescriptor]) -> String {
    blocks.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    pub sigma_xy_m: f64,
    pub sigma_yaw_deg: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self { sigma_xy_m: 0.002, sigma_yaw_deg: 1.0 }
    }
}

impl NoiseParams {
    pub fn zero() -> Self {
        Self { sigma_xy_m: 0.0, sigma_yaw_deg: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    pub density_kgpm3: f64,
    // Friction is kept for parity with the engine configuration; the
    // quasi-static test does not use it.
    pub lateral_friction: f64,
    pub spinning_friction: f64,
    pub gravity_mps2: f64,
    pub contact_tol_m: f64,
    pub stability_margin_m: f64,
    pub noise: NoiseParams,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            density_kgpm3: 1000.0,
            lateral_friction: 0.5,
            spinning_friction: 0.2,
            gravity_mps2: -9.81,
            contact_tol_m: 1e-4,
            stability_margin_m: 1e-3,
            noise: NoiseParams::default(),
        }
    }
}

impl SimParams {
    pub fn noiseless() -> Self {
        Self { noise: NoiseParams::zero(), ..Self::default() }
    }

    pub fn check(&self) -> Result<(), SimError> {
        let values = [
            self.density_kgpm3,
            self.lateral_friction,
            self.spinning_friction,
            self.contact_tol_m,
            self.stability_margin_m,
            self.noise.sigma_xy_m,
            self.noise.sigma_yaw_deg,
        ];
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(SimError::InvalidParams("parameters must be non-negative".into()));
        }
        Ok(())
    }

    /// Overlap area below which two footprints are only touching.
    fn min_overlap_area(&self) -> f64 {
        self.contact_tol_m * self.contact_tol_m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockStatus {
    Placed,
    SettledLower,
    Toppled,
    Collided,
}

impl BlockStatus {
    pub fn is_resting(self) -> bool {
        matches!(self, BlockStatus::Placed | BlockStatus::SettledLower)
    }

    pub fn label(self) -> &'static str {
        match self {
            BlockStatus::Placed => "placed",
            BlockStatus::SettledLower => "settled_lower",
            BlockStatus::Toppled => "toppled",
            BlockStatus::Collided => "collided",
        }
    }
}

/// What a block rests on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    Table,
    Block(usize),
}

/// Rigid extents of a block, independent of where it is.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Body {
    pub shape: Shape,
    /// Axis-aligned extents in the block frame (before yaw).
    pub dims: [f64; 3],
    /// Cylinder lying with its axis along the block's x axis.
    pub lying: bool,
}

impl Body {
    pub fn new(shape: Shape, dims: [f64; 3]) -> Self {
        let lying = shape == Shape::Cylinder && (dims[0] - dims[1]).abs() > crate::model::DIM_TOL;
        Self { shape, dims, lying }
    }

    pub fn footprint(&self, center: Point, yaw_deg: f64) -> ConvexPolygon {
        if self.shape == Shape::Cylinder && !self.lying {
            ConvexPolygon::disk(center, self.dims[0] / 2.0, 32)
        } else {
            ConvexPolygon::rectangle(center, self.dims[0] / 2.0, self.dims[1] / 2.0, yaw_deg)
        }
    }

    pub fn half_height(&self) -> f64 {
        self.dims[2] / 2.0
    }

    pub fn max_extent(&self) -> f64 {
        self.dims.iter().cloned().fold(0.0, f64::max)
    }
}

/// A block that is currently in the scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockState {
    /// Index in the plan.
    pub index: usize,
    pub name: String,
    pub color: Color,
    pub body: Body,
    pub pose: Pose,
    pub status: BlockStatus,
    pub support: Vec<Support>,
}

impl BlockState {
    pub fn top(&self) -> f64 {
        self.pose.position[2] + self.body.half_height()
    }

    pub fn bottom(&self) -> f64 {
        self.pose.position[2] - self.body.half_height()
    }

    pub fn xy(&self) -> Point {
        [self.pose.position[0], self.pose.position[1]]
    }

    pub fn footprint(&self) -> ConvexPolygon {
        self.body.footprint(self.xy(), self.pose.yaw_deg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Unstable,
    Unsupported,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportRegion {
    pub polygon: ConvexPolygon,
    pub supporters: Vec<Support>,
}

impl SupportRegion {
    pub fn is_empty(&self) -> bool {
        self.supporters.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub workspace: WorkspaceConfig,
    pub params: SimParams,
    pub blocks: Vec<BlockState>,
}

impl WorldState {
    pub fn new(workspace: WorkspaceConfig, params: SimParams) -> Self {
        Self { workspace, params, blocks: Vec::new() }
    }

    pub fn with_blocks(workspace: WorkspaceConfig, params: SimParams, blocks: Vec<BlockState>) -> Self {
        Self { workspace, params, blocks }
    }

    pub fn gravity_mps2(&self) -> f64 {
        self.params.gravity_mps2
    }

    pub fn get(&self, index: usize) -> Option<&BlockState> {
        self.blocks.iter().find(|b| b.index == index)
    }

    fn get_mut(&mut self, index: usize) -> Option<&mut BlockState> {
        self.blocks.iter_mut().find(|b| b.index == index)
    }

    /// Convex hull of the contact patches under a block whose bottom face sits
    /// at `pose.z - half height`. `exclude` skips the block itself.
    pub fn support_region(&self, body: &Body, pose: &Pose, exclude: Option<usize>) -> SupportRegion {
        let tol = self.params.contact_tol_m;
        let min_area = self.params.min_overlap_area();
        let z_b = pose.position[2] - body.half_height();
        let fp = body.footprint([pose.position[0], pose.position[1]], pose.yaw_deg);
        let mut points: Vec<Point> = Vec::new();
        let mut supporters = Vec::new();
        if z_b.abs() <= tol {
            let patch = fp.intersect(&self.workspace.table_polygon());
            if patch.area() > min_area {
                points.extend_from_slice(patch.vertices());
                supporters.push(Support::Table);
            }
        }
        for other in &self.blocks {
            if Some(other.index) == exclude || (other.top() - z_b).abs() > tol {
                continue;
            }
            let patch = fp.intersect(&other.footprint());
            if patch.area() > min_area {
                points.extend_from_slice(patch.vertices());
                supporters.push(Support::Block(other.index));
            }
        }
        SupportRegion { polygon: convex_hull(&points), supporters }
    }

    pub fn is_stable(&self, body: &Body, pose: &Pose, exclude: Option<usize>) -> Verdict {
        let region = self.support_region(body, pose, exclude);
        verdict_for(&region, [pose.position[0], pose.position[1]], self.params.stability_margin_m)
    }

    /// Height of the highest surface under `fp` at or below `ceiling`, along
    /// with whether anything (table included) is there at all.
    fn highest_surface(&self, fp: &ConvexPolygon, ceiling: f64, exclude: Option<usize>) -> Option<f64> {
        let min_area = self.params.min_overlap_area();
        let mut best: Option<f64> = None;
        if fp.overlaps(&self.workspace.table_polygon(), min_area) {
            best = Some(0.0);
        }
        for other in &self.blocks {
            if Some(other.index) == exclude {
                continue;
            }
            let top = other.top();
            if top <= ceiling && fp.overlaps(&other.footprint(), min_area) {
                best = Some(best.map_or(top, |b: f64| b.max(top)));
            }
        }
        best
    }

    /// Checks that resting blocks are supported and do not interpenetrate.
    pub fn check_invariants(&self) -> Result<(), String> {
        let min_area = self.params.min_overlap_area();
        let resting: Vec<&BlockState> = self.blocks.iter().filter(|b| b.status.is_resting()).collect();
        for (i, a) in resting.iter().enumerate() {
            if self.support_region(&a.body, &a.pose, Some(a.index)).is_empty() {
                return Err(format!("block {} levitates", a.index));
            }
            for b in &resting[i + 1..] {
                let vertical = a.top().min(b.top()) - a.bottom().max(b.bottom());
                if vertical > 1e-6 && a.footprint().overlaps(&b.footprint(), min_area) {
                    return Err(format!("blocks {} and {} overlap", a.index, b.index));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn verdict_for(region: &SupportRegion, com: Point, margin: f64) -> Verdict {
    if region.is_empty() {
        return Verdict::Unsupported;
    }
    match region.polygon.interior_depth(com) {
        Some(depth) if depth > margin + BOUNDARY_EPS => Verdict::Stable,
        _ => Verdict::Unstable,
    }
}

pub(crate) fn block_state(
    index: usize,
    name: &str,
    color: &Color,
    body: Body,
    pose: Pose,
    status: BlockStatus,
) -> BlockState {
    BlockState {
        index,
        name: name.to_string(),
        color: color.clone(),
        body,
        pose,
        status,
        support: Vec::new(),
    }
}

/// Reorientation bookkeeping copied onto a pose.
pub(crate) fn with_offsets(mut pose: Pose, r: &Reorientation) -> Pose {
    pose.roll_deg = r.roll_deg;
    pose.pitch_deg = r.pitch_deg;
    pose
}

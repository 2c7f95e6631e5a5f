//! Workspace bounds and plan sanity checks.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::ConvexPolygon;
use crate::model::{AssemblyPlan, PlannedBlock, Shape};

/// Tabletop layout. The table and the assembly region are centered on the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkspaceConfig {
    /// Table extents along x and y.
    pub table_m: [f64; 2],
    /// Side of the square central region reserved for assembly.
    pub assembly_region_m: f64,
    /// Minimum center distance between staged blocks.
    pub min_spacing_m: f64,
}

impl Default for WorkspaceConfig {
    fn default() -> Self {
        Self { table_m: [1.0, 1.0], assembly_region_m: 0.4, min_spacing_m: 0.05 }
    }
}

impl WorkspaceConfig {
    pub fn table_polygon(&self) -> ConvexPolygon {
        ConvexPolygon::rectangle([0.0, 0.0], self.table_m[0] / 2.0, self.table_m[1] / 2.0, 0.0)
    }

    pub fn in_region(&self, x: f64, y: f64) -> bool {
        let h = self.assembly_region_m / 2.0;
        x.abs() <= h && y.abs() <= h
    }

    pub fn on_table(&self, x: f64, y: f64) -> bool {
        x.abs() <= self.table_m[0] / 2.0 && y.abs() <= self.table_m[1] / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    OutsideWorkspace { block: usize },
    OutsideAssemblyRegion { block: usize },
    InterpenetratesTable { block: usize, z: f64, half_height: f64 },
    NonPositiveDims { block: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::OutsideWorkspace { block } => {
                write!(f, "block {block}: center outside workspace")
            }
            Violation::OutsideAssemblyRegion { block } => {
                write!(f, "block {block}: footprint extends outside the assembly region")
            }
            Violation::InterpenetratesTable { block, z, half_height } => write!(
                f,
                "block {block}: interpenetrates table (z = {z:.4} below half-height {half_height:.4})"
            ),
            Violation::NonPositiveDims { block } => {
                write!(f, "block {block}: non-positive dimensions")
            }
        }
    }
}

/// World-frame footprint of a block at its pose.
pub fn footprint(block: &PlannedBlock, position: [f64; 3], yaw_deg: f64) -> ConvexPolygon {
    let center = [position[0], position[1]];
    match block.shape {
        Shape::Cylinder if !block.is_lying_cylinder() => {
            ConvexPolygon::disk(center, block.dims[0] / 2.0, 32)
        }
        _ => ConvexPolygon::rectangle(center, block.dims[0] / 2.0, block.dims[1] / 2.0, yaw_deg),
    }
}

pub fn validate_plan(plan: &AssemblyPlan, workspace: &WorkspaceConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    for (i, b) in plan.blocks.iter().enumerate() {
        if b.dims.iter().any(|d| *d <= 0.0) {
            out.push(Violation::NonPositiveDims { block: i });
            continue;
        }
        let [x, y, z] = b.pose.position;
        if !workspace.on_table(x, y) {
            out.push(Violation::OutsideWorkspace { block: i });
        } else if !footprint(b, b.pose.position, b.pose.yaw_deg)
            .vertices()
            .iter()
            .all(|p| workspace.in_region(p[0], p[1]))
        {
            out.push(Violation::OutsideAssemblyRegion { block: i });
        }
        let half = b.dims[2] / 2.0;
        if z < half - 1e-9 {
            out.push(Violation::InterpenetratesTable { block: i, z, half_height: half });
        }
    }
    out
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::model::{BlockDescriptor, BlockInventory};
use crate::validate::WorkspaceConfig;

const MAX_ATTEMPTS: usize = 10_000;

/// Where an inventory unit waits before it is picked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagedUnit {
    pub entry: usize,
    pub unit: u32,
    pub position: [f64; 3],
}

/// Scatters every inventory unit over the table outside the assembly region.
///
/// Rejection sampling; each unit gets `MAX_ATTEMPTS` tries. Centers keep at
/// least `min_spacing_m` apart, and never closer than the two blocks'
/// bounding radii combined.
pub fn initialize_staging(
    inv: &BlockInventory,
    workspace: &WorkspaceConfig,
    seed: u64,
) -> Result<Vec<StagedUnit>, SimError> {
    let half_region = workspace.assembly_region_m / 2.0;
    let [tx, ty] = workspace.table_m;
    let annulus = tx * ty - workspace.assembly_region_m.powi(2);
    let footprint_total: f64 = inv
        .entries()
        .iter()
        .map(|e| e.dims[0] * e.dims[1] * e.quantity as f64)
        .sum();
    let all_units = || {
        inv.entries()
            .iter()
            .flat_map(|e| {
                (0..e.quantity).map(move |_| BlockDescriptor { shape: e.shape, dims: e.dims })
            })
            .collect::<Vec<_>>()
    };
    if footprint_total > annulus.max(0.0) {
        return Err(SimError::StagingOverflow(all_units()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut staged: Vec<(StagedUnit, f64)> = Vec::new();
    let mut remaining = all_units();
    for (entry, kind) in inv.entries().iter().enumerate() {
        let radius = 0.5 * (kind.dims[0].powi(2) + kind.dims[1].powi(2)).sqrt();
        let lim_x = tx / 2.0 - radius;
        let lim_y = ty / 2.0 - radius;
        if lim_x <= half_region + radius && lim_y <= half_region + radius {
            return Err(SimError::StagingOverflow(remaining));
        }
        for unit in 0..kind.quantity {
            let mut spot = None;
            for _ in 0..MAX_ATTEMPTS {
                let x = rng.random_range(-lim_x..=lim_x);
                let y = rng.random_range(-lim_y..=lim_y);
                if x.abs() <= half_region + radius && y.abs() <= half_region + radius {
                    continue;
                }
                let clear = staged.iter().all(|(s, r)| {
                    let d = ((s.position[0] - x).powi(2) + (s.position[1] - y).powi(2)).sqrt();
                    d >= workspace.min_spacing_m.max(r + radius)
                });
                if clear {
                    spot = Some([x, y]);
                    break;
                }
            }
            let Some([x, y]) = spot else {
                return Err(SimError::StagingOverflow(remaining));
            };
            remaining.remove(0);
            staged.push((
                StagedUnit { entry, unit, position: [x, y, kind.dims[2] / 2.0] },
                radius,
            ));
        }
    }
    Ok(staged.into_iter().map(|(s, _)| s).collect())
}

//! Reference implementations that share no code with the library.
#![allow(dead_code)]

use rand::Rng;

use idfra::model::{AssemblyPlan, BlockInventory, BlockSpec, Color, PlannedBlock, Pose, Shape};
use idfra::sim::{Body, BlockState, BlockStatus, SimParams, Verdict, WorldState};
use idfra::validate::WorkspaceConfig;

const TOL: f64 = 1e-9;

// ---------------------------------------------------------------- rotation

pub type Mat = [[f64; 3]; 3];

pub fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    m
}

fn rot_x(deg: f64) -> Mat {
    let (s, c) = deg.to_radians().sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

fn rot_y(deg: f64) -> Mat {
    let (s, c) = deg.to_radians().sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

fn rot_z(deg: f64) -> Mat {
    let (s, c) = deg.to_radians().sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

/// Fixed-axis X, then Y, then Z: R = Rz * Ry * Rx.
pub fn rotation(roll: f64, pitch: f64, yaw: f64) -> Mat {
    mat_mul(&rot_z(yaw), &mat_mul(&rot_y(pitch), &rot_x(roll)))
}

/// World-frame axis-aligned extents of a box with `dims` rotated by `r`.
pub fn rotated_extents(r: &Mat, dims: [f64; 3]) -> [f64; 3] {
    let mut e = [0.0; 3];
    for (i, row) in r.iter().enumerate() {
        e[i] = row.iter().zip(dims).map(|(m, d)| m.abs() * d).sum();
    }
    e
}

// ---------------------------------------------------------------- matching

fn sorted(mut d: [f64; 3]) -> [f64; 3] {
    d.sort_by(f64::total_cmp);
    d
}

fn near(a: [f64; 3], b: [f64; 3]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= TOL)
}

/// Whether a stock block can be turned into the planned block.
pub fn can_become(plan_shape: Shape, plan_dims: [f64; 3], stock_shape: Shape, stock_dims: [f64; 3]) -> bool {
    if plan_shape != stock_shape {
        return false;
    }
    match plan_shape {
        Shape::Cuboid => near(sorted(plan_dims), sorted(stock_dims)),
        Shape::Cylinder => {
            let [d, _, h] = stock_dims;
            near(plan_dims, [d, d, h]) || near(plan_dims, [h, d, d])
        }
    }
}

/// Maximum number of plan blocks that can be served, by exhaustive search.
pub fn brute_force_max_match(plan: &[(Shape, [f64; 3])], stock: &[(Shape, [f64; 3], u32)]) -> usize {
    fn go(i: usize, plan: &[(Shape, [f64; 3])], stock: &[(Shape, [f64; 3], u32)], left: &mut Vec<u32>) -> usize {
        if i == plan.len() {
            return 0;
        }
        let mut best = go(i + 1, plan, stock, left);
        for (e, (s, d, _)) in stock.iter().enumerate() {
            if left[e] > 0 && can_become(plan[i].0, plan[i].1, *s, *d) {
                left[e] -= 1;
                best = best.max(1 + go(i + 1, plan, stock, left));
                left[e] += 1;
            }
        }
        best
    }
    let mut left: Vec<u32> = stock.iter().map(|s| s.2).collect();
    go(0, plan, stock, &mut left)
}

const SIZES: [f64; 4] = [0.02, 0.04, 0.06, 0.08];

fn rand_cuboid(rng: &mut impl Rng) -> [f64; 3] {
    [SIZES[rng.random_range(0..4)], SIZES[rng.random_range(0..4)], SIZES[rng.random_range(0..4)]]
}

pub fn random_inventory(rng: &mut impl Rng) -> BlockInventory {
    let n = rng.random_range(1..=4);
    let specs = (0..n)
        .map(|_| {
            if rng.random_bool(0.3) {
                let d = SIZES[rng.random_range(0..4)];
                BlockSpec { shape: Shape::Cylinder, dims: [d, d, SIZES[rng.random_range(0..4)]], quantity: rng.random_range(1..=3) }
            } else {
                BlockSpec { shape: Shape::Cuboid, dims: rand_cuboid(rng), quantity: rng.random_range(1..=3) }
            }
        })
        .collect();
    BlockInventory::new(specs).unwrap()
}

pub fn random_plan(rng: &mut impl Rng, inv: &BlockInventory, max_len: usize) -> AssemblyPlan {
    let n = rng.random_range(1..=max_len);
    let blocks = (0..n)
        .map(|i| {
            // Mostly permutations of stock so that matches and shortages both occur.
            let (shape, dims) = if rng.random_bool(0.75) {
                let e = &inv.entries()[rng.random_range(0..inv.entries().len())];
                match e.shape {
                    Shape::Cuboid => {
                        let mut d = e.dims;
                        let p = rng.random_range(0..6);
                        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
                        d = perms[p].map(|k| d[k]);
                        (Shape::Cuboid, d)
                    }
                    Shape::Cylinder => {
                        let [d, _, h] = e.dims;
                        if rng.random_bool(0.5) { (Shape::Cylinder, [d, d, h]) } else { (Shape::Cylinder, [h, d, d]) }
                    }
                }
            } else if rng.random_bool(0.8) {
                (Shape::Cuboid, rand_cuboid(rng))
            } else {
                let d = SIZES[rng.random_range(0..4)];
                (Shape::Cylinder, [d, d, SIZES[rng.random_range(0..4)]])
            };
            PlannedBlock {
                name: format!("b{i}"),
                color: Color::named("green"),
                shape,
                dims,
                pose: Pose::new([0.0, 0.0, dims[2] / 2.0], 0.0),
            }
        })
        .collect();
    AssemblyPlan { target: "oracle".into(), iteration: 0, blocks }
}

// --------------------------------------------------------------- stability

/// Rasterized support test of a block resting on top of `below`.
pub struct RasterVerdict {
    pub stable: bool,
    /// COM depth inside the contact set is within two cells of the margin.
    pub borderline: bool,
}

#[derive(Clone, Copy)]
pub struct Slab {
    pub center: [f64; 2],
    pub half: [f64; 2],
    pub yaw_deg: f64,
}

impl Slab {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let (s, c) = self.yaw_deg.to_radians().sin_cos();
        let d = [p[0] - self.center[0], p[1] - self.center[1]];
        let lx = c * d[0] + s * d[1];
        let ly = -s * d[0] + c * d[1];
        lx.abs() <= self.half[0] && ly.abs() <= self.half[1]
    }

    fn radius(&self) -> f64 {
        self.half[0].hypot(self.half[1])
    }
}

pub const CELL: f64 = 0.0005;

pub fn raster_verdict(top: &Slab, below: &Slab, margin: f64) -> RasterVerdict {
    let r = top.radius() + CELL * 4.0;
    let n = (r / CELL).ceil() as i64;
    let com = top.center;
    let inside = |p: [f64; 2]| top.contains(p) && below.contains(p);
    // Depth: distance from the COM to the nearest cell outside the contact set.
    let mut depth = f64::INFINITY;
    let mut com_in = false;
    for i in -n..=n {
        for j in -n..=n {
            let p = [com[0] + i as f64 * CELL, com[1] + j as f64 * CELL];
            if inside(p) {
                if i == 0 && j == 0 {
                    com_in = true;
                }
            } else {
                depth = depth.min((i as f64 * CELL).hypot(j as f64 * CELL));
            }
        }
    }
    if !com_in {
        // COM itself is off the contact set; depth is effectively zero.
        return RasterVerdict { stable: false, borderline: margin < 2.0 * CELL };
    }
    let depth = depth - CELL / 2.0;
    RasterVerdict { stable: depth > margin, borderline: (depth - margin).abs() <= 2.0 * CELL }
}

/// A stack of 1 to 5 cuboids, each centred somewhere over the one below.
pub fn random_stack(rng: &mut impl Rng) -> Vec<(Slab, f64)> {
    let n = rng.random_range(1..=5);
    let mut out: Vec<(Slab, f64)> = Vec::new();
    for _ in 0..n {
        let half: [f64; 2] = [rng.random_range(0.01..0.05), rng.random_range(0.01..0.05)];
        let height = rng.random_range(0.01..0.04);
        let yaw = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..180.0) };
        let center = match out.last() {
            None => [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)],
            Some((b, _)) => {
                let reach = 1.2 * b.half[0].min(b.half[1]);
                [b.center[0] + rng.random_range(-reach..reach), b.center[1] + rng.random_range(-reach..reach)]
            }
        };
        out.push((Slab { center, half, yaw_deg: yaw }, height));
    }
    out
}

/// World with the stack blocks below `k` resting in place.
pub fn stack_world(stack: &[(Slab, f64)], k: usize, params: &SimParams) -> (WorldState, Body, Pose) {
    let mut z = 0.0;
    let mut blocks = Vec::new();
    let mut last = None;
    for (i, (s, h)) in stack.iter().enumerate().take(k + 1) {
        let body = Body::new(Shape::Cuboid, [2.0 * s.half[0], 2.0 * s.half[1], *h]);
        let pose = Pose::new([s.center[0], s.center[1], z + h / 2.0], s.yaw_deg);
        z += h;
        if i == k {
            last = Some((body, pose));
        } else {
            blocks.push(BlockState {
                index: i,
                name: format!("s{i}"),
                color: Color::named("green"),
                body,
                pose,
                status: BlockStatus::Placed,
                support: Vec::new(),
            });
        }
    }
    let (body, pose) = last.unwrap();
    (WorldState::with_blocks(WorkspaceConfig::default(), params.clone(), blocks), body, pose)
}

pub fn is_engine_stable(v: Verdict) -> bool {
    v == Verdict::Stable
}

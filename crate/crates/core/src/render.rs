//! Software rendering of scenes into PNG frames and animated GIF attempts.
//!
//! Orthographic camera, flat-shaded convex faces, painter's ordering by the
//! depth of each block center along the view direction. No anti-aliasing, so
//! every pixel is one of a small known palette.

use std::io::Cursor;
use std::path::Path;

use image::codecs::gif::{GifEncoder, Repeat};
use image::{Delay, Frame, ImageFormat, Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::convex_hull;
use crate::model::{AssemblyPlan, BlockInventory, Shape};
use crate::sim::{execute_plan, BlockState, ExecutionReport, NoiseParams, SimError, SimParams, WorldState};
use crate::validate::WorkspaceConfig;

pub const GREEN: [u8; 3] = [60, 170, 75];
pub const TABLE_COLOR: [u8; 3] = [196, 180, 158];
const LIGHT: [f64; 3] = [0.3, 0.6, 1.0];
const FRAME_DELAY_MS: u32 = 500;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("camera: {0}")]
    Camera(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("image encoding: {0}")]
    Image(#[from] image::ImageError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    Isometric,
    Front,
    Top,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorMode {
    /// Every block drawn green, as the Judge sees it.
    UniformGreen,
    PlanColors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraSpec {
    pub projection: Projection,
    /// Direction the camera looks along (from the eye into the scene).
    pub view_dir: [f64; 3],
    pub image_px: (u32, u32),
    pub scale_px_per_m: f64,
    pub background: [u8; 3],
    /// World point mapped to the image center.
    pub look_at: [f64; 3],
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self::isometric(45.0, 35.0)
    }
}

impl CameraSpec {
    /// Eye placed at the given azimuth and elevation, looking at the scene.
    pub fn isometric(azimuth_deg: f64, elevation_deg: f64) -> Self {
        let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
        Self {
            projection: Projection::Isometric,
            view_dir: [-el.cos() * az.cos(), -el.cos() * az.sin(), -el.sin()],
            image_px: (640, 480),
            scale_px_per_m: 1000.0,
            background: [235, 235, 242],
            look_at: [0.0, 0.0, 0.08],
        }
    }

    pub fn front() -> Self {
        Self { projection: Projection::Front, view_dir: [0.0, 1.0, 0.0], ..Self::default() }
    }

    pub fn top() -> Self {
        Self { projection: Projection::Top, view_dir: [0.0, 0.0, -1.0], look_at: [0.0, 0.0, 0.0], ..Self::default() }
    }

    pub fn for_projection(projection: Projection) -> Self {
        match projection {
            Projection::Isometric => Self::default(),
            Projection::Front => Self::front(),
            Projection::Top => Self::top(),
        }
    }

    fn basis(&self) -> Result<Basis, RenderError> {
        if !(self.scale_px_per_m.is_finite() && self.scale_px_per_m > 0.0) {
            return Err(RenderError::Camera("scale must be positive".into()));
        }
        if self.image_px.0 == 0 || self.image_px.1 == 0 {
            return Err(RenderError::Camera("image size must be non-zero".into()));
        }
        let f = normalize(self.view_dir).ok_or_else(|| RenderError::Camera("zero view direction".into()))?;
        let right = normalize([f[1], -f[0], 0.0]).unwrap_or([1.0, 0.0, 0.0]);
        let up = cross(right, f);
        Ok(Basis { forward: f, right, up, cam: self.clone() })
    }
}

fn normalize(v: [f64; 3]) -> Option<[f64; 3]> {
    let n = dot(v, v).sqrt();
    (n > 1e-12 && n.is_finite()).then(|| [v[0] / n, v[1] / n, v[2] / n])
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

struct Basis {
    forward: [f64; 3],
    right: [f64; 3],
    up: [f64; 3],
    cam: CameraSpec,
}

impl Basis {
    fn project(&self, p: [f64; 3]) -> [f64; 2] {
        let d = [p[0] - self.cam.look_at[0], p[1] - self.cam.look_at[1], p[2] - self.cam.look_at[2]];
        let (w, h) = self.cam.image_px;
        [
            w as f64 / 2.0 + self.cam.scale_px_per_m * dot(d, self.right),
            h as f64 / 2.0 - self.cam.scale_px_per_m * dot(d, self.up),
        ]
    }

    fn faces_camera(&self, normal: [f64; 3]) -> bool {
        dot(normal, self.forward) < -1e-9
    }
}

pub fn shade(base: [u8; 3], normal: [f64; 3]) -> [u8; 3] {
    let l = normalize(LIGHT).expect("light");
    let k = 0.35 + 0.65 * dot(normal, l).max(0.0);
    base.map(|c| (c as f64 * k).round().clamp(0.0, 255.0) as u8)
}

/// Fills a convex screen-space polygon, sampling at pixel centers.
fn fill_convex(img: &mut RgbImage, pts: &[[f64; 2]], color: [u8; 3]) {
    if pts.len() < 3 {
        return;
    }
    let area: f64 = (0..pts.len())
        .map(|i| {
            let (a, b) = (pts[i], pts[(i + 1) % pts.len()]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum();
    if area.abs() < 1e-9 {
        return;
    }
    let sign = area.signum();
    let (w, h) = img.dimensions();
    let min_x = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min).floor().max(0.0) as u32;
    let max_x = pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max).ceil().min(w as f64) as u32;
    let min_y = pts.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min).floor().max(0.0) as u32;
    let max_y = pts.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max).ceil().min(h as f64) as u32;
    let n = pts.len();
    let stride = w as usize * 3;
    let buf: &mut [u8] = &mut *img;
    for y in min_y..max_y {
        let cy = y as f64 + 0.5;
        // Each edge constrains the pixel-center x to a half line.
        let (mut lo, mut hi) = (min_x as f64, max_x as f64);
        let mut empty = false;
        for i in 0..n {
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            let k = sign * (b[0] - a[0]) * (cy - a[1]);
            let coef = sign * (b[1] - a[1]);
            if coef > 0.0 {
                hi = hi.min(a[0] + k / coef);
            } else if coef < 0.0 {
                lo = lo.max(a[0] + k / coef);
            } else if k < 0.0 {
                empty = true;
                break;
            }
        }
        if empty {
            continue;
        }
        let x0 = ((lo - 0.5).ceil().max(min_x as f64)) as u32;
        let x1 = ((hi - 0.5).floor() + 1.0).min(max_x as f64);
        if x1 <= x0 as f64 {
            continue;
        }
        let x1 = x1 as u32;
        let row = &mut buf[y as usize * stride..(y as usize + 1) * stride];
        for px in row[x0 as usize * 3..x1 as usize * 3].chunks_exact_mut(3) {
            px.copy_from_slice(&color);
        }
    }
}

fn draw_block(img: &mut RgbImage, basis: &Basis, b: &BlockState, base: [u8; 3]) {
    let [cx, cy, cz] = b.pose.position;
    let (s, c) = b.pose.yaw_deg.to_radians().sin_cos();
    let ex = [c, s, 0.0];
    let ey = [-s, c, 0.0];
    let ez = [0.0, 0.0, 1.0];
    let at = |u: f64, v: f64, w: f64| -> [f64; 3] {
        [cx + ex[0] * u + ey[0] * v, cy + ex[1] * u + ey[1] * v, cz + w]
    };
    let [hx, hy, hz] = b.body.dims.map(|d| d / 2.0);
    match b.body.shape {
        Shape::Cuboid => {
            let faces: [([f64; 3], [[f64; 3]; 4]); 6] = [
                (ex, [at(hx, -hy, -hz), at(hx, hy, -hz), at(hx, hy, hz), at(hx, -hy, hz)]),
                (neg(ex), [at(-hx, -hy, -hz), at(-hx, -hy, hz), at(-hx, hy, hz), at(-hx, hy, -hz)]),
                (ey, [at(-hx, hy, -hz), at(-hx, hy, hz), at(hx, hy, hz), at(hx, hy, -hz)]),
                (neg(ey), [at(-hx, -hy, -hz), at(hx, -hy, -hz), at(hx, -hy, hz), at(-hx, -hy, hz)]),
                (ez, [at(-hx, -hy, hz), at(hx, -hy, hz), at(hx, hy, hz), at(-hx, hy, hz)]),
                (neg(ez), [at(-hx, -hy, -hz), at(-hx, hy, -hz), at(hx, hy, -hz), at(hx, -hy, -hz)]),
            ];
            for (normal, corners) in faces {
                if basis.faces_camera(normal) {
                    let pts: Vec<[f64; 2]> = corners.iter().map(|p| basis.project(*p)).collect();
                    fill_convex(img, &pts, shade(base, normal));
                }
            }
        }
        Shape::Cylinder => {
            // Axis and cap radius in world terms.
            let (axis, half_len, radius, u, v) = if b.body.lying {
                (ex, hx, hy, ey, ez)
            } else {
                (ez, hz, hx, ex, ey)
            };
            let ring = |sign: f64| -> Vec<[f64; 3]> {
                (0..32)
                    .map(|k| {
                        let t = std::f64::consts::TAU * k as f64 / 32.0;
                        let (st, ct) = t.sin_cos();
                        [
                            cx + axis[0] * sign * half_len + radius * (u[0] * ct + v[0] * st),
                            cy + axis[1] * sign * half_len + radius * (u[1] * ct + v[1] * st),
                            cz + axis[2] * sign * half_len + radius * (u[2] * ct + v[2] * st),
                        ]
                    })
                    .collect()
            };
            let (top, bottom) = (ring(1.0), ring(-1.0));
            let silhouette: Vec<[f64; 2]> = top.iter().chain(bottom.iter()).map(|p| basis.project(*p)).collect();
            let hull = convex_hull(&silhouette);
            let facing = normalize([-basis.forward[0] + axis[0] * dot(basis.forward, axis),
                -basis.forward[1] + axis[1] * dot(basis.forward, axis),
                -basis.forward[2] + axis[2] * dot(basis.forward, axis)])
            .unwrap_or(u);
            fill_convex(img, hull.vertices(), shade(base, facing));
            let (cap, normal) = if basis.faces_camera(axis) { (top, axis) } else { (bottom, neg(axis)) };
            if basis.faces_camera(normal) {
                let pts: Vec<[f64; 2]> = cap.iter().map(|p| basis.project(*p)).collect();
                fill_convex(img, &pts, shade(base, normal));
            }
        }
    }
}

fn neg(v: [f64; 3]) -> [f64; 3] {
    [-v[0], -v[1], -v[2]]
}

/// Draws the table then every block back to front.
pub fn render_world(world: &WorldState, cam: &CameraSpec, mode: ColorMode) -> Result<RgbImage, RenderError> {
    let basis = cam.basis()?;
    let (w, h) = cam.image_px;
    let mut img = RgbImage::from_pixel(w, h, Rgb(cam.background));
    let [tx, ty] = world.workspace.table_m.map(|t| t / 2.0);
    let up = [0.0, 0.0, 1.0];
    if basis.faces_camera(up) {
        let corners = [[-tx, -ty, 0.0], [tx, -ty, 0.0], [tx, ty, 0.0], [-tx, ty, 0.0]];
        let pts: Vec<[f64; 2]> = corners.iter().map(|p| basis.project(*p)).collect();
        fill_convex(&mut img, &pts, shade(TABLE_COLOR, up));
    }
    let mut order: Vec<&BlockState> = world.blocks.iter().collect();
    order.sort_by(|a, b| {
        dot(b.pose.position, basis.forward)
            .total_cmp(&dot(a.pose.position, basis.forward))
            .then(a.index.cmp(&b.index))
    });
    for b in order {
        let base = match mode {
            ColorMode::UniformGreen => GREEN,
            ColorMode::PlanColors => b.color.rgb(),
        };
        draw_block(&mut img, &basis, b, base);
    }
    Ok(img)
}

/// Rendered attempt: one frame per recorded event.
#[derive(Debug, Clone)]
pub struct FrameSequence {
    pub frames: Vec<RgbImage>,
    pub timestamps: Vec<usize>,
    pub captions: Vec<String>,
}

impl FrameSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn png_frames(&self) -> Result<Vec<Vec<u8>>, RenderError> {
        self.frames.iter().map(encode_png).collect()
    }

    /// GIF89a, 2 frames per second, looping forever.
    pub fn encode_gif(&self) -> Result<Vec<u8>, RenderError> {
        let mut buf = Vec::new();
        {
            let mut enc = GifEncoder::new_with_speed(&mut buf, 10);
            enc.set_repeat(Repeat::Infinite)?;
            for f in &self.frames {
                let rgba = image::DynamicImage::ImageRgb8(f.clone()).to_rgba8();
                enc.encode_frame(Frame::from_parts(rgba, 0, 0, Delay::from_numer_denom_ms(FRAME_DELAY_MS, 1)))?;
            }
        }
        Ok(buf)
    }

    /// Writes `frames/NNN.png` and `attempt.gif` under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), RenderError> {
        let frames_dir = dir.join("frames");
        std::fs::create_dir_all(&frames_dir)?;
        for (i, png) in self.png_frames()?.into_iter().enumerate() {
            std::fs::write(frames_dir.join(format!("{i:03}.png")), png)?;
        }
        std::fs::write(dir.join("attempt.gif"), self.encode_gif()?)?;
        Ok(())
    }
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>, RenderError> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)?;
    Ok(buf.into_inner())
}

pub fn render_sequence(
    report: &ExecutionReport,
    workspace: &WorkspaceConfig,
    cam: &CameraSpec,
    mode: ColorMode,
) -> Result<FrameSequence, RenderError> {
    let mut seq = FrameSequence { frames: Vec::new(), timestamps: Vec::new(), captions: Vec::new() };
    for f in &report.frames {
        let world = WorldState::with_blocks(workspace.clone(), SimParams::default(), f.blocks.clone());
        seq.frames.push(render_world(&world, cam, mode)?);
        seq.timestamps.push(f.index);
        seq.captions.push(f.caption.clone());
    }
    Ok(seq)
}

/// Settles the plan without placement noise and renders it in plan colors.
pub fn render_plan_settled(
    plan: &AssemblyPlan,
    inv: &BlockInventory,
    workspace: &WorkspaceConfig,
    params: &SimParams,
    cam: &CameraSpec,
) -> Result<RgbImage, RenderError> {
    let quiet = SimParams { noise: NoiseParams::zero(), ..params.clone() };
    let report = execute_plan(plan, inv, workspace, &quiet, 0)?;
    render_world(&report.final_world(workspace, &quiet), cam, ColorMode::PlanColors)
}

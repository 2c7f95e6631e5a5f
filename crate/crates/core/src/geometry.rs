//! Small planar toolkit for footprints and support polygons.

pub type Point = [f64; 2];

const EPS: f64 = 1e-12;

/// Convex polygon with counter-clockwise vertices. May be empty or degenerate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvexPolygon {
    vertices: Vec<Point>,
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

impl ConvexPolygon {
    /// Builds from vertices already in counter-clockwise convex order.
    pub fn from_ccw(vertices: Vec<Point>) -> Self {
        Self { vertices }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Axis-aligned rectangle with the given half extents, rotated by `yaw_deg`.
    pub fn rectangle(center: Point, half_x: f64, half_y: f64, yaw_deg: f64) -> Self {
        let (s, c) = yaw_deg.to_radians().sin_cos();
        let corners = [[-half_x, -half_y], [half_x, -half_y], [half_x, half_y], [-half_x, half_y]];
        Self {
            vertices: corners
                .iter()
                .map(|[u, v]| [center[0] + c * u - s * v, center[1] + s * u + c * v])
                .collect(),
        }
    }

    /// Regular n-gon inscribed in the circle.
    pub fn disk(center: Point, radius: f64, sides: usize) -> Self {
        Self {
            vertices: (0..sides)
                .map(|k| {
                    let t = std::f64::consts::TAU * k as f64 / sides as f64;
                    [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
                })
                .collect(),
        }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0.0;
        }
        let mut sum = 0.0;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            sum += a[0] * b[1] - b[0] * a[1];
        }
        0.5 * sum
    }

    /// Vertex average; good enough as a direction reference.
    pub fn center(&self) -> Option<Point> {
        if self.vertices.is_empty() {
            return None;
        }
        let n = self.vertices.len() as f64;
        let (sx, sy) = self
            .vertices
            .iter()
            .fold((0.0, 0.0), |(x, y), p| (x + p[0], y + p[1]));
        Some([sx / n, sy / n])
    }

    pub fn bounds(&self) -> Option<(Point, Point)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), p| {
            ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])])
        }))
    }

    /// Signed distance from `p` to the nearest edge line: positive inside,
    /// negative outside. `None` when the polygon has no interior.
    pub fn interior_depth(&self, p: Point) -> Option<f64> {
        let n = self.vertices.len();
        if n < 3 || self.area() <= EPS * EPS {
            return None;
        }
        let mut depth = f64::INFINITY;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            if len <= EPS {
                continue;
            }
            depth = depth.min(cross(a, b, p) / len);
        }
        Some(depth)
    }

    /// Convex intersection via Sutherland-Hodgman clipping.
    pub fn intersect(&self, clip: &ConvexPolygon) -> ConvexPolygon {
        if self.vertices.len() < 3 || clip.vertices.len() < 3 {
            return ConvexPolygon::empty();
        }
        let mut output = self.vertices.clone();
        let m = clip.vertices.len();
        for i in 0..m {
            if output.is_empty() {
                break;
            }
            let a = clip.vertices[i];
            let b = clip.vertices[(i + 1) % m];
            let input = std::mem::take(&mut output);
            let k = input.len();
            for j in 0..k {
                let cur = input[j];
                let prev = input[(j + k - 1) % k];
                let cur_in = cross(a, b, cur) >= -EPS;
                let prev_in = cross(a, b, prev) >= -EPS;
                if cur_in {
                    if !prev_in {
                        output.extend(segment_line(prev, cur, a, b));
                    }
                    output.push(cur);
                } else if prev_in {
                    output.extend(segment_line(prev, cur, a, b));
                }
            }
        }
        convex_hull(&output)
    }

    /// Whether the two polygons share more than `min_area` of area.
    pub fn overlaps(&self, other: &ConvexPolygon, min_area: f64) -> bool {
        self.intersect(other).area() > min_area
    }
}

fn segment_line(p: Point, q: Point, a: Point, b: Point) -> Option<Point> {
    let dp = cross(a, b, p);
    let dq = cross(a, b, q);
    let denom = dp - dq;
    if denom.abs() <= EPS * EPS {
        return None;
    }
    let t = dp / denom;
    Some([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])])
}

/// Andrew's monotone chain. Collinear and duplicate points are dropped.
pub fn convex_hull(points: &[Point]) -> ConvexPolygon {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup_by(|a, b| (a[0] - b[0]).abs() <= EPS && (a[1] - b[1]).abs() <= EPS);
    if pts.len() < 3 {
        return ConvexPolygon { vertices: pts };
    }
    let mut lower: Vec<Point> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= EPS * EPS {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= EPS * EPS {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    ConvexPolygon { vertices: lower }
}

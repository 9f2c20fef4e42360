//! Parametric rectilinear footprints.
//!
//! A footprint starts as the rectangle `a=(0,0) b=(L,0) c=(L,W) d=(0,W)` with the
//! long side running east–west (+x east, +y north). Each side's middle half is pushed
//! out (positive offset) or notched in (negative offset) by one of the four shape
//! parameters, and the result is scaled about its centroid back to the target area.

use alloc::vec::Vec;
use core::fmt;

/// Largest allowed magnitude of a façade offset, in meters.
pub const OFFSET_LIMIT: f64 = 3.5;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GeometryError {
    /// Offset `index` (0-based) is outside `[-3.5, 3.5]` or not finite.
    OffsetOutOfRange { index: usize, value: f64 },
    TooFewVertices(usize),
    InvalidConfig(&'static str),
}

impl fmt::Display for GeometryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::OffsetOutOfRange { index, value } => write!(
                f,
                "offset x{} = {value} is outside [-{OFFSET_LIMIT}, {OFFSET_LIMIT}]",
                index + 1
            ),
            Self::TooFewVertices(n) => write!(f, "polygon needs at least 3 vertices, got {n}"),
            Self::InvalidConfig(msg) => write!(f, "invalid geometry config: {msg}"),
        }
    }
}

impl core::error::Error for GeometryError {}

/// The four façade offsets in meters: south, east, north, west.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ShapeParams([f64; 4]);

impl ShapeParams {
    pub fn new(x1: f64, x2: f64, x3: f64, x4: f64) -> Result<Self, GeometryError> {
        Self::from_array([x1, x2, x3, x4])
    }

    pub fn from_array(x: [f64; 4]) -> Result<Self, GeometryError> {
        for (index, &value) in x.iter().enumerate() {
            if !(-OFFSET_LIMIT..=OFFSET_LIMIT).contains(&value) {
                return Err(GeometryError::OffsetOutOfRange { index, value });
            }
        }
        Ok(Self(x))
    }

    pub const fn zero() -> Self {
        Self([0.0; 4])
    }

    pub fn as_array(&self) -> [f64; 4] {
        self.0
    }

    /// Offsets of the footprint mirrored about the north–south axis: east and west swap.
    pub fn mirror_ew(&self) -> Self {
        let [x1, x2, x3, x4] = self.0;
        Self([x1, x4, x3, x2])
    }
}

#[cfg(feature = "serde")]
impl<'de> serde::Deserialize<'de> for ShapeParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let x = <[f64; 4]>::deserialize(d)?;
        Self::from_array(x).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GeometryConfig {
    /// Floor area every footprint is normalized to, m².
    pub area_target: f64,
    /// Short side over long side of the base rectangle.
    pub width_to_length: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self { area_target: 990.0, width_to_length: 0.5 }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.area_target.is_finite() && self.area_target > 0.0) {
            return Err(GeometryError::InvalidConfig("area_target must be positive"));
        }
        if !(self.width_to_length.is_finite() && self.width_to_length > 0.0) {
            return Err(GeometryError::InvalidConfig("width_to_length must be positive"));
        }
        Ok(())
    }

    /// East–west side, meters.
    pub fn length(&self) -> f64 {
        libm::sqrt(self.area_target / self.width_to_length)
    }

    /// North–south side, meters.
    pub fn width(&self) -> f64 {
        self.width_to_length * self.length()
    }
}

/// Closed polygon, counter-clockwise, last vertex implicitly joined to the first.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Footprint {
    vertices: Vec<Point>,
}

impl Footprint {
    pub fn from_vertices(vertices: Vec<Point>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::TooFewVertices(vertices.len()));
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    /// Directed edges `(start, end)` in vertex order.
    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn perimeter(&self) -> f64 {
        perimeter(&self.vertices)
    }

    pub fn centroid(&self) -> Point {
        let mut cx = 0.0;
        let mut cy = 0.0;
        let mut twice_area = 0.0;
        for (p, q) in self.edges() {
            let cross = p.x * q.y - q.x * p.y;
            twice_area += cross;
            cx += (p.x + q.x) * cross;
            cy += (p.y + q.y) * cross;
        }
        Point::new(cx / (3.0 * twice_area), cy / (3.0 * twice_area))
    }

    /// `(min, max)` corners of the axis-aligned bounding box.
    pub fn bounds(&self) -> (Point, Point) {
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices[1..] {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }

    pub fn contains(&self, q: Point) -> bool {
        contains_point(&self.vertices, q)
    }

    pub fn is_ccw(&self) -> bool {
        self.area() > 0.0
    }

    /// Every edge is horizontal or vertical and has non-zero length.
    pub fn is_rectilinear(&self) -> bool {
        self.edges()
            .all(|(p, q)| (p.x == q.x) != (p.y == q.y))
    }

    /// No two non-adjacent edges touch and adjacent edges meet only at their shared vertex.
    pub fn is_simple(&self) -> bool {
        let edges: Vec<(Point, Point)> = self.edges().collect();
        let n = edges.len();
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                let (a, b) = edges[i];
                let (c, d) = edges[j];
                if adjacent {
                    // Overlapping collinear neighbours fold back on themselves.
                    let shared = if j == i + 1 { b } else { a };
                    let (u, v) = if j == i + 1 { (a, d) } else { (b, c) };
                    if orient(u, shared, v) == 0.0 && dot_sub(u, shared, v) > 0.0 {
                        return false;
                    }
                } else if segments_touch(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

// (u - s) . (v - s)
fn dot_sub(u: Point, s: Point, v: Point) -> f64 {
    (u.x - s.x) * (v.x - s.x) + (u.y - s.y) * (v.y - s.y)
}

fn on_segment(a: Point, b: Point, q: Point) -> bool {
    orient(a, b, q) == 0.0
        && q.x >= a.x.min(b.x)
        && q.x <= a.x.max(b.x)
        && q.y >= a.y.min(b.y)
        && q.y <= a.y.max(b.y)
}

fn segments_touch(a: Point, b: Point, c: Point, d: Point) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0))
        && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0))
    {
        return true;
    }
    on_segment(a, b, c) || on_segment(a, b, d) || on_segment(c, d, a) || on_segment(c, d, b)
}

fn signed_area(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    let mut sum = 0.0;
    for i in 0..n {
        let p = vertices[i];
        let q = vertices[(i + 1) % n];
        sum += p.x * q.y - q.x * p.y;
    }
    0.5 * sum
}

fn perimeter(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    (0..n)
        .map(|i| {
            let p = vertices[i];
            let q = vertices[(i + 1) % n];
            libm::hypot(q.x - p.x, q.y - p.y)
        })
        .sum()
}

/// Shoelace area; positive for counter-clockwise input.
pub fn polygon_area(vertices: &[Point]) -> Result<f64, GeometryError> {
    if vertices.len() < 3 {
        return Err(GeometryError::TooFewVertices(vertices.len()));
    }
    Ok(signed_area(vertices))
}

pub fn polygon_perimeter(vertices: &[Point]) -> Result<f64, GeometryError> {
    if vertices.len() < 3 {
        return Err(GeometryError::TooFewVertices(vertices.len()));
    }
    Ok(perimeter(vertices))
}

/// Even–odd point-in-polygon test.
///
/// Boundary points count as inside: every edge belongs to the region on its left,
/// which for a counter-clockwise polygon is the interior.
pub fn contains_point(vertices: &[Point], q: Point) -> bool {
    let n = vertices.len();
    let mut inside = false;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        if on_segment(a, b, q) {
            return true;
        }
        if (a.y > q.y) != (b.y > q.y) {
            let x_cross = a.x + (q.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if q.x < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

pub fn base_rectangle(cfg: &GeometryConfig) -> Footprint {
    let l = cfg.length();
    let w = cfg.width();
    Footprint {
        vertices: alloc::vec![
            Point::new(0.0, 0.0),
            Point::new(l, 0.0),
            Point::new(l, w),
            Point::new(0.0, w),
        ],
    }
}

/// The offset polygon before area normalization.
///
/// Side `i` (south a→b, east b→c, north c→d, west d→a) has the stretch between a
/// quarter and three quarters of its length moved along the outward normal by `x_i`.
/// Zero offsets insert no vertices.
pub fn offset_polygon(params: &ShapeParams, cfg: &GeometryConfig) -> Footprint {
    let l = cfg.length();
    let w = cfg.width();
    let corners = [
        Point::new(0.0, 0.0),
        Point::new(l, 0.0),
        Point::new(l, w),
        Point::new(0.0, w),
    ];
    let mut vertices = Vec::with_capacity(20);
    for (side, &offset) in params.0.iter().enumerate() {
        let start = corners[side];
        let end = corners[(side + 1) % 4];
        vertices.push(start);
        if offset == 0.0 {
            continue;
        }
        let dx = end.x - start.x;
        let dy = end.y - start.y;
        let len = libm::hypot(dx, dy);
        // Outward normal of a counter-clockwise edge, snapped to the axis.
        let (nx, ny) = (axis(dy / len), axis(-dx / len));
        let at = |t: f64| Point::new(start.x + t * dx, start.y + t * dy);
        let push = |p: Point| Point::new(p.x + offset * nx, p.y + offset * ny);
        let p1 = at(0.25);
        let p2 = at(0.75);
        vertices.push(p1);
        vertices.push(push(p1));
        vertices.push(push(p2));
        vertices.push(p2);
    }
    Footprint { vertices }
}

fn axis(v: f64) -> f64 {
    if v > 0.5 {
        1.0
    } else if v < -0.5 {
        -1.0
    } else {
        0.0
    }
}

/// Footprint for `params`, uniformly scaled about its centroid to `cfg.area_target`.
pub fn build_footprint(params: &ShapeParams, cfg: &GeometryConfig) -> Footprint {
    build_footprint_with_scale(params, cfg).0
}

/// Like [`build_footprint`] but also returns the applied scale factor.
pub fn build_footprint_with_scale(params: &ShapeParams, cfg: &GeometryConfig) -> (Footprint, f64) {
    if params.0.iter().all(|&x| x == 0.0) {
        return (base_rectangle(cfg), 1.0);
    }
    let raw = offset_polygon(params, cfg);
    let s = libm::sqrt(cfg.area_target / raw.area());
    let c = raw.centroid();
    let vertices = raw
        .vertices
        .iter()
        .map(|v| Point::new(c.x + s * (v.x - c.x), c.y + s * (v.y - c.y)))
        .collect();
    (Footprint { vertices }, s)
}

//! Binary plan images of footprints.
//!
//! All images share one world window so a pixel always covers the same patch of
//! ground; interior pixels are 1 and background 0, row 0 is the northern edge.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::geometry::{Footprint, GeometryConfig, Point};

/// Margin around the base rectangle covered by the default window, meters.
///
/// Scaling about the centroid pushes the most extreme footprint, (-3.5, 3.5, -3.5, -3.5),
/// 5.615 m past the base rectangle, so 5.7 m is the smallest 0.1 m step that holds them all.
pub const WINDOW_MARGIN: f64 = 5.7;
pub const DEFAULT_WIDTH_PX: usize = 48;
pub const DEFAULT_HEIGHT_PX: usize = 30;

#[derive(Clone, Debug, PartialEq)]
pub enum RasterError {
    /// A footprint vertex falls outside the world window.
    OutsideWindow { vertex: usize, x: f64, y: f64 },
}

impl fmt::Display for RasterError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::OutsideWindow { vertex, x, y } => {
                write!(f, "footprint vertex {vertex} at ({x}, {y}) lies outside the raster window")
            }
        }
    }
}

impl core::error::Error for RasterError {}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RasterSpec {
    pub width_px: usize,
    pub height_px: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl RasterSpec {
    /// 48×30 pixels over the base rectangle plus a [`WINDOW_MARGIN`] on every side.
    pub fn for_geometry(cfg: &GeometryConfig) -> Self {
        Self {
            width_px: DEFAULT_WIDTH_PX,
            height_px: DEFAULT_HEIGHT_PX,
            x_min: -WINDOW_MARGIN,
            x_max: cfg.length() + WINDOW_MARGIN,
            y_min: -WINDOW_MARGIN,
            y_max: cfg.width() + WINDOW_MARGIN,
        }
    }

    pub fn pixel_width(&self) -> f64 {
        (self.x_max - self.x_min) / self.width_px as f64
    }

    pub fn pixel_height(&self) -> f64 {
        (self.y_max - self.y_min) / self.height_px as f64
    }

    pub fn pixel_area(&self) -> f64 {
        self.pixel_width() * self.pixel_height()
    }

    /// World coordinates of the center of pixel `(row, col)`.
    pub fn pixel_center(&self, row: usize, col: usize) -> Point {
        Point::new(
            self.x_min + (col as f64 + 0.5) * self.pixel_width(),
            self.y_max - (row as f64 + 0.5) * self.pixel_height(),
        )
    }

    fn contains(&self, p: Point) -> bool {
        p.x > self.x_min && p.x < self.x_max && p.y > self.y_min && p.y < self.y_max
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl BinaryImage {
    pub fn blank(width: usize, height: usize) -> Self {
        Self { width, height, pixels: vec![0; width * height] }
    }

    /// Row-major pixels; returns `None` unless every value is 0 or 1 and the length matches.
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<u8>) -> Option<Self> {
        if pixels.len() != width * height || pixels.iter().any(|&p| p > 1) {
            return None;
        }
        Some(Self { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.pixels[row * self.width + col] = value as u8;
    }

    pub fn interior_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p == 1).count()
    }

    /// Left–right mirror image.
    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for row in out.pixels.chunks_mut(self.width) {
            row.reverse();
        }
        out
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> {
        self.pixels.chunks(self.width)
    }
}

/// Pixel `(r, c)` is interior iff its center lies in the footprint (boundary included).
pub fn rasterize(footprint: &Footprint, spec: &RasterSpec) -> Result<BinaryImage, RasterError> {
    for (vertex, &p) in footprint.vertices().iter().enumerate() {
        if !spec.contains(p) {
            return Err(RasterError::OutsideWindow { vertex, x: p.x, y: p.y });
        }
    }
    let mut img = BinaryImage::blank(spec.width_px, spec.height_px);
    for row in 0..spec.height_px {
        for col in 0..spec.width_px {
            if footprint.contains(spec.pixel_center(row, col)) {
                img.set(row, col, true);
            }
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{base_rectangle, build_footprint, offset_polygon, ShapeParams};
    use proptest::prelude::*;

    fn setup() -> (GeometryConfig, RasterSpec) {
        let g = GeometryConfig::default();
        (g, RasterSpec::for_geometry(&g))
    }

    /// Independent oracle: winding number over pixel centers.
    fn oracle_count(f: &Footprint, spec: &RasterSpec) -> usize {
        let v = f.vertices();
        let mut count = 0;
        for r in 0..spec.height_px {
            for c in 0..spec.width_px {
                let q = spec.pixel_center(r, c);
                let mut winding = 0i32;
                for i in 0..v.len() {
                    let a = v[i];
                    let b = v[(i + 1) % v.len()];
                    let side = (b.x - a.x) * (q.y - a.y) - (q.x - a.x) * (b.y - a.y);
                    if a.y <= q.y {
                        if b.y > q.y && side > 0.0 {
                            winding += 1;
                        }
                    } else if b.y <= q.y && side < 0.0 {
                        winding -= 1;
                    }
                }
                if winding != 0 {
                    count += 1;
                }
            }
        }
        count
    }

    #[test]
    fn base_rectangle_pixel_count_pinned() {
        let (g, spec) = setup();
        let img = rasterize(&base_rectangle(&g), &spec).unwrap();
        let expected = oracle_count(&base_rectangle(&g), &spec);
        assert_eq!(img.interior_count(), expected);
        assert_eq!(img.interior_count(), BASE_RECTANGLE_PIXELS);
    }

    // Frozen from `oracle_count` on the default 990 m² rectangle.
    const BASE_RECTANGLE_PIXELS: usize = 760;

    #[test]
    fn base_rectangle_is_left_right_symmetric() {
        let (g, spec) = setup();
        let img = rasterize(&base_rectangle(&g), &spec).unwrap();
        assert_eq!(img.flip_horizontal(), img);
    }

    #[test]
    fn vertex_outside_window_rejected() {
        let (g, _) = setup();
        let tight = RasterSpec { x_min: 0.5, ..RasterSpec::for_geometry(&g) };
        assert!(matches!(
            rasterize(&base_rectangle(&g), &tight),
            Err(RasterError::OutsideWindow { vertex: 0, .. })
        ));
    }

    #[test]
    fn extreme_shapes_fit_the_window() {
        let (g, spec) = setup();
        for mask in 0..81u32 {
            let mut x = [0.0; 4];
            let mut m = mask;
            for xi in &mut x {
                *xi = [-3.5, 0.0, 3.5][(m % 3) as usize];
                m /= 3;
            }
            let f = build_footprint(&ShapeParams::from_array(x).unwrap(), &g);
            assert!(rasterize(&f, &spec).is_ok(), "{x:?}");
        }
    }

    #[test]
    fn worst_case_excursion_needs_the_wide_margin() {
        let (g, _) = setup();
        let f = build_footprint(&ShapeParams::new(-3.5, 3.5, -3.5, -3.5).unwrap(), &g);
        let (min, max) = f.bounds();
        let reach = (-min.x).max(max.x - g.length()).max(-min.y).max(max.y - g.width());
        assert!(reach > 5.6 && reach < WINDOW_MARGIN, "{reach}");
    }

    #[test]
    fn from_pixels_validates() {
        assert!(BinaryImage::from_pixels(2, 2, alloc::vec![0, 1, 1, 0]).is_some());
        assert!(BinaryImage::from_pixels(2, 2, alloc::vec![0, 2, 1, 0]).is_none());
        assert!(BinaryImage::from_pixels(2, 2, alloc::vec![0, 1, 1]).is_none());
    }

    fn params() -> impl Strategy<Value = ShapeParams> {
        proptest::array::uniform4(-3.5f64..=3.5).prop_map(|x| ShapeParams::from_array(x).unwrap())
    }

    proptest! {
        #[test]
        fn matches_oracle_and_quantization_bound(p in params()) {
            let (g, spec) = setup();
            let f = build_footprint(&p, &g);
            let img = rasterize(&f, &spec).unwrap();
            prop_assert_eq!(img.interior_count(), oracle_count(&f, &spec));
            let max_side = spec.pixel_width().max(spec.pixel_height());
            let err = (img.interior_count() as f64 * spec.pixel_area() - 990.0).abs();
            prop_assert!(err <= 0.75 * f.perimeter() * max_side);
        }

        #[test]
        fn mirror_shape_flips_image(p in params()) {
            let (g, spec) = setup();
            let a = rasterize(&build_footprint(&p, &g), &spec).unwrap();
            let b = rasterize(&build_footprint(&p.mirror_ew(), &g), &spec).unwrap();
            prop_assert_eq!(a.flip_horizontal(), b);
        }

        #[test]
        fn containing_footprint_has_superset_pixels(p in params(), q in params()) {
            let (g, spec) = setup();
            let (a, b) = (p.as_array(), q.as_array());
            let big = ShapeParams::from_array(core::array::from_fn(|i| a[i].max(b[i]))).unwrap();
            let small = ShapeParams::from_array(core::array::from_fn(|i| a[i].min(b[i]))).unwrap();
            let outer = rasterize(&offset_polygon(&big, &g), &spec).unwrap();
            let inner = rasterize(&offset_polygon(&small, &g), &spec).unwrap();
            for (o, i) in outer.pixels().iter().zip(inner.pixels()) {
                prop_assert!(o >= i);
            }
        }
    }
}

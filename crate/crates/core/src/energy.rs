//! Annual heating, cooling and lighting energy of an extruded footprint.
//!
//! The building is a stack of identical floors with a uniform window-to-wall ratio.
//! Walls are cut into patches (at most `patch_width` wide, one per floor), each patch
//! receives direct sun unless it faces away from the sun or the building's own walls
//! block the ray toward it. Each hour is balanced steady-state against fixed heating
//! and cooling setpoints with ideal loads.

use alloc::vec::Vec;
use core::fmt;

use crate::geometry::{Footprint, Point};
use crate::weather::{sun_position, HourRecord, SiteSpec, SunPosition, WeatherSeries};

/// Outward offset of a ray origin so it does not hit its own wall.
const RAY_EPSILON: f64 = 1e-6;
/// Sky view factor of a vertical wall under isotropic diffuse light.
const DIFFUSE_VIEW_FACTOR: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub enum EnergyError {
    SunBelowHorizon { altitude: f64 },
    InvalidConfig(&'static str),
}

impl fmt::Display for EnergyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SunBelowHorizon { altitude } => {
                write!(f, "shading is undefined for a sun at altitude {altitude}°")
            }
            Self::InvalidConfig(msg) => write!(f, "invalid building config: {msg}"),
        }
    }
}

impl core::error::Error for EnergyError {}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BuildingConfig {
    pub floors: u32,
    /// Meters.
    pub floor_height: f64,
    /// Conditioned area per floor, m².
    pub floor_area: f64,
    pub wwr: f64,
    /// W/m²K.
    pub u_wall: f64,
    /// W/m²K.
    pub u_window: f64,
    pub shgc: f64,
    /// °C.
    pub heat_setpoint: f64,
    /// °C.
    pub cool_setpoint: f64,
    /// Equipment and people, W/m² while occupied.
    pub internal_gain_density: f64,
    /// W/m² while occupied, before daylight dimming.
    pub lighting_power_density: f64,
    /// Fraction of lighting power saved when every window is sunlit.
    pub daylight_dimming_max: f64,
    /// Occupied weekday hours cover clock time `[start, end)`.
    pub occupied_start_hour: u32,
    pub occupied_end_hour: u32,
    /// Weekday of January 1st, 0 = Monday.
    pub first_weekday: u32,
    /// Widest patch along a wall, meters.
    pub patch_width: f64,
}

impl Default for BuildingConfig {
    fn default() -> Self {
        Self {
            floors: 7,
            floor_height: 3.4,
            floor_area: 990.0,
            wwr: 0.30,
            u_wall: 0.45,
            u_window: 2.7,
            shgc: 0.7,
            heat_setpoint: 20.0,
            cool_setpoint: 24.0,
            internal_gain_density: 25.0,
            lighting_power_density: 10.0,
            daylight_dimming_max: 0.5,
            occupied_start_hour: 8,
            occupied_end_hour: 18,
            first_weekday: 0,
            patch_width: 4.0,
        }
    }
}

impl BuildingConfig {
    pub fn validate(&self) -> Result<(), EnergyError> {
        let err = |m| Err(EnergyError::InvalidConfig(m));
        if self.floors == 0 || !(self.floor_height > 0.0) || !(self.floor_area > 0.0) {
            return err("floors, floor_height and floor_area must be positive");
        }
        if !(0.0..=1.0).contains(&self.wwr) {
            return err("wwr must lie in [0, 1]");
        }
        if !(self.heat_setpoint < self.cool_setpoint) {
            return err("heat_setpoint must be below cool_setpoint");
        }
        let non_negative = [
            self.u_wall,
            self.u_window,
            self.shgc,
            self.internal_gain_density,
            self.lighting_power_density,
            self.daylight_dimming_max,
        ];
        if non_negative.iter().any(|v| !(*v >= 0.0)) {
            return err("densities, U-values and coefficients must be non-negative");
        }
        if !(self.patch_width > 0.0) {
            return err("patch_width must be positive");
        }
        if self.occupied_start_hour > self.occupied_end_hour || self.occupied_end_hour > 24 {
            return err("occupied hours must satisfy start <= end <= 24");
        }
        Ok(())
    }

    /// Building height, meters.
    pub fn height(&self) -> f64 {
        self.floors as f64 * self.floor_height
    }

    /// Area-weighted envelope U-value, W/m²K.
    pub fn u_envelope(&self) -> f64 {
        self.wwr * self.u_window + (1.0 - self.wwr) * self.u_wall
    }

    pub fn is_occupied(&self, record: &HourRecord) -> bool {
        let weekday = (self.first_weekday + record.day_of_year() - 1) % 7;
        weekday < 5
            && record.hour > self.occupied_start_hour
            && record.hour <= self.occupied_end_hour
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Patch {
    /// Index of the footprint edge the patch lies on.
    pub edge: usize,
    pub floor: u32,
    pub center: (f64, f64, f64),
    /// Outward unit normal in plan, `(east, north)`.
    pub normal: (f64, f64),
    /// m².
    pub area: f64,
}

impl Patch {
    fn plan_center(&self) -> Point {
        Point::new(self.center.0, self.center.1)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnergyBreakdown {
    pub heating_kwh: f64,
    pub cooling_kwh: f64,
    pub lighting_kwh: f64,
    pub total_kwh: f64,
}

impl EnergyBreakdown {
    pub fn new(heating_kwh: f64, cooling_kwh: f64, lighting_kwh: f64) -> Self {
        Self { heating_kwh, cooling_kwh, lighting_kwh, total_kwh: heating_kwh + cooling_kwh + lighting_kwh }
    }
}

/// A wall segment shared by the patches stacked above it.
#[derive(Clone, Copy, Debug)]
struct Segment {
    edge: usize,
    center: Point,
    normal: (f64, f64),
    length: f64,
}

fn segments(f: &Footprint, patch_width: f64) -> Vec<Segment> {
    let mut out = Vec::new();
    for (edge, (a, b)) in f.edges().enumerate() {
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let len = libm::hypot(dx, dy);
        if len == 0.0 {
            continue;
        }
        let n = libm::ceil(len / patch_width).max(1.0) as usize;
        let normal = (dy / len, -dx / len);
        for k in 0..n {
            let t = (k as f64 + 0.5) / n as f64;
            out.push(Segment {
                edge,
                center: Point::new(a.x + t * dx, a.y + t * dy),
                normal,
                length: len / n as f64,
            });
        }
    }
    out
}

/// Wall patches of the extruded footprint, one per segment per floor at mid-floor height.
pub fn facade_patches(f: &Footprint, cfg: &BuildingConfig) -> Vec<Patch> {
    let segs = segments(f, cfg.patch_width);
    let mut out = Vec::with_capacity(segs.len() * cfg.floors as usize);
    for s in &segs {
        for floor in 0..cfg.floors {
            out.push(Patch {
                edge: s.edge,
                floor,
                center: (s.center.x, s.center.y, (floor as f64 + 0.5) * cfg.floor_height),
                normal: s.normal,
                area: s.length * cfg.floor_height,
            });
        }
    }
    out
}

/// Plan distance from `origin` along unit `dir` to the nearest footprint edge, if any.
fn nearest_wall(origin: Point, dir: (f64, f64), f: &Footprint) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (a, b) in f.edges() {
        let ex = b.x - a.x;
        let ey = b.y - a.y;
        let denom = dir.0 * ey - dir.1 * ex;
        if denom == 0.0 {
            continue;
        }
        let wx = a.x - origin.x;
        let wy = a.y - origin.y;
        let t = (wx * ey - wy * ex) / denom;
        let u = (wx * dir.1 - wy * dir.0) / denom;
        if t > 0.0 && (0.0..=1.0).contains(&u) && best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    }
    best
}

fn faces_sun(normal: (f64, f64), sun_dir: (f64, f64)) -> bool {
    normal.0 * sun_dir.0 + normal.1 * sun_dir.1 > 0.0
}

/// Distance to the wall blocking the sun from a segment facing it, `None` if the ray escapes.
fn blocking_distance(center: Point, normal: (f64, f64), sun_dir: (f64, f64), f: &Footprint) -> Option<f64> {
    let origin = Point::new(center.x + RAY_EPSILON * normal.0, center.y + RAY_EPSILON * normal.1);
    nearest_wall(origin, sun_dir, f)
}

fn blocked(distance: Option<f64>, z: f64, tan_alt: f64, height: f64) -> bool {
    distance.is_some_and(|r| height >= z + r * tan_alt)
}

/// Whether the patch receives no direct sun.
///
/// True when the patch faces away from the sun, or when the horizontal ray toward the
/// sun's azimuth meets a wall of the footprint at plan distance `r` with the roof still
/// above the sun ray (`H >= z + r·tan(altitude)`).
pub fn is_shaded(
    patch: &Patch,
    sun: &SunPosition,
    f: &Footprint,
    cfg: &BuildingConfig,
) -> Result<bool, EnergyError> {
    if !(sun.altitude > 0.0) {
        return Err(EnergyError::SunBelowHorizon { altitude: sun.altitude });
    }
    let dir = sun.horizontal_direction();
    if !faces_sun(patch.normal, dir) {
        return Ok(true);
    }
    let r = blocking_distance(patch.plan_center(), patch.normal, dir, f);
    Ok(blocked(r, patch.center.2, libm::tan(sun.altitude.to_radians()), cfg.height()))
}

/// Direct irradiance on the patch ignoring obstructions, W/m².
pub fn incident_unshaded(patch: &Patch, sun: &SunPosition, dni: f64) -> f64 {
    if !(sun.altitude > 0.0) {
        return 0.0;
    }
    let (sx, sy) = sun.horizontal_direction();
    let cos_theta = (patch.normal.0 * sx + patch.normal.1 * sy) * libm::cos(sun.altitude.to_radians());
    dni * cos_theta.max(0.0)
}

/// Direct irradiance on the patch, zero when it is shaded, W/m².
pub fn incident_direct(
    patch: &Patch,
    sun: &SunPosition,
    dni: f64,
    f: &Footprint,
    cfg: &BuildingConfig,
) -> Result<f64, EnergyError> {
    if is_shaded(patch, sun, f, cfg)? {
        Ok(0.0)
    } else {
        Ok(incident_unshaded(patch, sun, dni))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShadingMode {
    /// Walls of the footprint block the sun.
    SelfShading,
    /// Only orientation matters, as for the convex hull.
    Unshaded,
}

/// Loads of one hour, watts.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HourLoads {
    pub solar_gain: f64,
    pub internal_gain: f64,
    pub lighting: f64,
    /// Sunlit, sun-facing share of window area.
    pub daylight_fraction: f64,
    pub heating: f64,
    pub cooling: f64,
}

/// Precomputed wall segments of one footprint under one building config.
#[derive(Clone, Debug)]
pub struct EnergyModel<'a> {
    footprint: &'a Footprint,
    cfg: &'a BuildingConfig,
    segments: Vec<Segment>,
    envelope_ua: f64,
    facade_area: f64,
}

impl<'a> EnergyModel<'a> {
    pub fn new(footprint: &'a Footprint, cfg: &'a BuildingConfig) -> Result<Self, EnergyError> {
        cfg.validate()?;
        let segments = segments(footprint, cfg.patch_width);
        let facade_area = footprint.perimeter() * cfg.height();
        Ok(Self { footprint, cfg, segments, envelope_ua: cfg.u_envelope() * facade_area, facade_area })
    }

    /// Conductance of the whole envelope, W/K.
    pub fn envelope_ua(&self) -> f64 {
        self.envelope_ua
    }

    pub fn hour(&self, record: &HourRecord, site: &SiteSpec, mode: ShadingMode) -> HourLoads {
        let cfg = self.cfg;
        let glazing = cfg.wwr * cfg.shgc;
        let diffuse = DIFFUSE_VIEW_FACTOR * record.dhi;
        let mut solar = diffuse * self.facade_area * glazing;
        let mut sunlit_area = 0.0;
        let sun = sun_position(site, record.day_of_year(), record.mid_hour());
        if sun.altitude > 0.0 {
            let dir = sun.horizontal_direction();
            let tan_alt = libm::tan(sun.altitude.to_radians());
            let cos_alt = libm::cos(sun.altitude.to_radians());
            let height = cfg.height();
            for s in &self.segments {
                if !faces_sun(s.normal, dir) {
                    continue;
                }
                let cos_theta = (s.normal.0 * dir.0 + s.normal.1 * dir.1) * cos_alt;
                let r = match mode {
                    ShadingMode::SelfShading => blocking_distance(s.center, s.normal, dir, self.footprint),
                    ShadingMode::Unshaded => None,
                };
                let patch_area = s.length * cfg.floor_height;
                for floor in 0..cfg.floors {
                    let z = (floor as f64 + 0.5) * cfg.floor_height;
                    if !blocked(r, z, tan_alt, height) {
                        solar += record.dni * cos_theta * patch_area * glazing;
                        sunlit_area += patch_area;
                    }
                }
            }
        }
        let daylight_fraction = (sunlit_area / self.facade_area).clamp(0.0, 1.0);
        let occupied = cfg.is_occupied(record);
        let floor_area = cfg.floor_area * cfg.floors as f64;
        let internal_gain = if occupied { cfg.internal_gain_density * floor_area } else { 0.0 };
        let lighting = if occupied {
            cfg.lighting_power_density * floor_area * (1.0 - cfg.daylight_dimming_max * daylight_fraction)
        } else {
            0.0
        };
        let gains = solar + internal_gain + lighting;
        let t = record.dry_bulb;
        let (heating, cooling) = if t < cfg.heat_setpoint {
            ((self.envelope_ua * (cfg.heat_setpoint - t) - gains).max(0.0), 0.0)
        } else {
            // Above the cooling setpoint conduction adds heat; between setpoints it
            // removes heat relative to the cooling setpoint.
            (0.0, (gains - self.envelope_ua * (cfg.cool_setpoint - t)).max(0.0))
        };
        HourLoads { solar_gain: solar, internal_gain, lighting, daylight_fraction, heating, cooling }
    }

    pub fn annual(&self, weather: &WeatherSeries, mode: ShadingMode) -> EnergyBreakdown {
        let mut heating = 0.0;
        let mut cooling = 0.0;
        let mut lighting = 0.0;
        for r in weather.records() {
            let h = self.hour(r, weather.site(), mode);
            heating += h.heating;
            cooling += h.cooling;
            lighting += h.lighting;
        }
        EnergyBreakdown::new(heating / 1000.0, cooling / 1000.0, lighting / 1000.0)
    }
}

/// Annual ideal-load energy with façade self-shading, kWh.
pub fn annual_energy(
    f: &Footprint,
    weather: &WeatherSeries,
    cfg: &BuildingConfig,
) -> Result<EnergyBreakdown, EnergyError> {
    Ok(EnergyModel::new(f, cfg)?.annual(weather, ShadingMode::SelfShading))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{base_rectangle, build_footprint, GeometryConfig, ShapeParams};
    use crate::weather::{synthesize_weather, SyntheticWeatherConfig, WeatherSource};
    use approx::assert_relative_eq;

    fn sun(altitude: f64, azimuth: f64) -> SunPosition {
        SunPosition { altitude, azimuth, declination: 0.0 }
    }

    fn base() -> Footprint {
        base_rectangle(&GeometryConfig::default())
    }

    /// A U-shape with a 10 m wide, 4 m deep notch in the south façade.
    fn notched() -> Footprint {
        let v = [(0.0, 0.0), (10.0, 0.0), (10.0, 4.0), (20.0, 4.0), (20.0, 0.0), (30.0, 0.0), (30.0, 20.0), (0.0, 20.0)];
        Footprint::from_vertices(v.iter().map(|&(x, y)| Point::new(x, y)).collect()).unwrap()
    }

    fn notch_face_patch() -> Patch {
        Patch { edge: 2, floor: 0, center: (15.0, 4.0, 1.7), normal: (0.0, -1.0), area: 3.4 }
    }

    #[test]
    fn base_rectangle_facade_area() {
        let cfg = BuildingConfig::default();
        let patches = facade_patches(&base(), &cfg);
        let total: f64 = patches.iter().map(|p| p.area).sum();
        assert_relative_eq!(total, 133.491573 * 23.8, epsilon = 1e-3);
        assert_relative_eq!(total, base().perimeter() * cfg.height(), max_relative = 1e-12);
        // recount: 44.50 m sides need 12 segments, 22.25 m sides need 6
        let g = GeometryConfig::default();
        let expected: usize = [g.length(), g.width(), g.length(), g.width()]
            .iter()
            .map(|len| (len / 4.0).ceil() as usize)
            .sum::<usize>()
            * 7;
        assert_eq!(expected, 252);
        assert_eq!(patches.len(), expected);
        assert!(patches.iter().all(|p| p.area > 0.0 && p.center.2 > 0.0 && p.center.2 < 23.8));
    }

    #[test]
    fn unit_square_patches() {
        let cfg = BuildingConfig { floors: 1, floor_height: 1.0, ..Default::default() };
        let sq = base_rectangle(&GeometryConfig { area_target: 1.0, width_to_length: 1.0 });
        let patches = facade_patches(&sq, &cfg);
        assert_eq!(patches.len(), 4);
        assert!(patches.iter().all(|p| p.area == 1.0));
        let normals: Vec<_> = patches.iter().map(|p| p.normal).collect();
        assert_eq!(normals, [(0.0, -1.0), (1.0, 0.0), (0.0, 1.0), (-1.0, 0.0)]);
    }

    #[test]
    fn convex_footprint_never_self_shades() {
        let cfg = BuildingConfig::default();
        let f = base();
        for p in facade_patches(&f, &cfg) {
            for az in [10.0, 95.0, 180.0, 265.0, 350.0] {
                for alt in [2.0, 30.0, 80.0] {
                    let s = sun(alt, az);
                    let facing = faces_sun(p.normal, s.horizontal_direction());
                    assert_eq!(is_shaded(&p, &s, &f, &cfg).unwrap(), !facing);
                }
            }
        }
    }

    #[test]
    fn notch_face_shaded_by_low_grazing_sun() {
        // Ray from (15, 4) toward azimuth 100° meets the notch wall x = 20 at
        // r = 5 / sin(100°) = 5.0771 m; the sun ray rises r·tan(10°) = 0.895 m < 22.1 m.
        let cfg = BuildingConfig::default();
        let f = notched();
        let p = notch_face_patch();
        let dir = sun(10.0, 100.0).horizontal_direction();
        let r = nearest_wall(Point::new(15.0, 4.0 - 1e-6), dir, &f).unwrap();
        assert_relative_eq!(r, 5.0 / 100f64.to_radians().sin(), max_relative = 1e-6);
        assert!(is_shaded(&p, &sun(10.0, 100.0), &f, &cfg).unwrap());
    }

    #[test]
    fn notch_face_clear_under_high_sun() {
        // Same ray; r·tan(85°) = 58.0 m exceeds H - z = 22.1 m.
        let cfg = BuildingConfig::default();
        assert!(!is_shaded(&notch_face_patch(), &sun(85.0, 100.0), &notched(), &cfg).unwrap());
    }

    #[test]
    fn shading_requires_daylight() {
        let cfg = BuildingConfig::default();
        assert!(matches!(
            is_shaded(&notch_face_patch(), &sun(-1.0, 180.0), &notched(), &cfg),
            Err(EnergyError::SunBelowHorizon { .. })
        ));
    }

    #[test]
    fn incidence_examples() {
        let south = Patch { edge: 0, floor: 0, center: (0.0, 0.0, 1.0), normal: (0.0, -1.0), area: 1.0 };
        let east = Patch { normal: (1.0, 0.0), ..south };
        assert_relative_eq!(incident_unshaded(&south, &sun(1e-9, 180.0), 800.0), 800.0, max_relative = 1e-9);
        // sin(180°) is not exactly zero in floating point
        assert!(incident_unshaded(&east, &sun(30.0, 180.0), 800.0).abs() < 1e-9);
        let s = sun(60.0, 135.0);
        assert_relative_eq!(incident_unshaded(&south, &s, 800.0), 282.842712, max_relative = 1e-6);
        let cfg = BuildingConfig::default();
        let f = base();
        assert_relative_eq!(incident_direct(&south, &s, 800.0, &f, &cfg).unwrap(), 282.842712, max_relative = 1e-6);
        assert_eq!(incident_direct(&east, &sun(30.0, 270.0), 800.0, &f, &cfg).unwrap(), 0.0);
    }

    fn constant_weather(dry_bulb: f64) -> WeatherSeries {
        let cfg = SyntheticWeatherConfig {
            annual_mean: dry_bulb,
            annual_amplitude: 0.0,
            diurnal_amplitude: 0.0,
            dni_peak: 0.0,
            diffuse_fraction: 0.0,
        };
        let w = synthesize_weather(&cfg, &SiteSpec::default()).unwrap();
        assert_eq!(w.source(), WeatherSource::Synthetic);
        w
    }

    fn no_gains() -> BuildingConfig {
        BuildingConfig { internal_gain_density: 0.0, lighting_power_density: 0.0, ..Default::default() }
    }

    #[test]
    fn balanced_year_has_no_loads() {
        let e = annual_energy(&base(), &constant_weather(20.0), &no_gains()).unwrap();
        assert_eq!(e, EnergyBreakdown::default());
    }

    #[test]
    fn hot_year_cooling_closed_form() {
        let e = annual_energy(&base(), &constant_weather(35.0), &no_gains()).unwrap();
        let ua = 1.125 * base().perimeter() * 23.8;
        let expected = ua * (35.0 - 24.0) * 8760.0 / 1000.0;
        assert_relative_eq!(e.cooling_kwh, expected, max_relative = 1e-9);
        assert_eq!(e.heating_kwh, 0.0);
        assert_eq!(e.lighting_kwh, 0.0);
    }

    #[test]
    fn cold_year_heating_closed_form() {
        let e = annual_energy(&base(), &constant_weather(5.0), &no_gains()).unwrap();
        let ua = 1.125 * base().perimeter() * 23.8;
        assert_relative_eq!(e.heating_kwh, ua * 15.0 * 8.76, max_relative = 1e-9);
        assert_eq!(e.cooling_kwh, 0.0);
    }

    #[test]
    fn total_is_sum_of_parts() {
        let w = synthesize_weather(&SyntheticWeatherConfig::default(), &SiteSpec::default()).unwrap();
        let f = build_footprint(&ShapeParams::new(-2.0, 1.0, 3.0, -3.5).unwrap(), &GeometryConfig::default());
        let e = annual_energy(&f, &w, &BuildingConfig::default()).unwrap();
        assert_relative_eq!(e.total_kwh, e.heating_kwh + e.cooling_kwh + e.lighting_kwh, max_relative = 1e-12);
        assert!(e.heating_kwh >= 0.0 && e.cooling_kwh >= 0.0 && e.lighting_kwh >= 0.0);
    }

    #[test]
    fn occupancy_schedule() {
        let cfg = BuildingConfig::default();
        let rec = |day, hour| HourRecord { month: 1, day, hour, dry_bulb: 20.0, dni: 0.0, dhi: 0.0 };
        // January 1st is a Monday, the 6th a Saturday.
        assert!(!cfg.is_occupied(&rec(1, 8)));
        assert!(cfg.is_occupied(&rec(1, 9)));
        assert!(cfg.is_occupied(&rec(1, 18)));
        assert!(!cfg.is_occupied(&rec(1, 19)));
        assert!(!cfg.is_occupied(&rec(6, 12)));
        assert!(cfg.is_occupied(&rec(8, 12)));
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = BuildingConfig { heat_setpoint: 25.0, ..Default::default() };
        assert!(EnergyModel::new(&base(), &cfg).is_err());
        let cfg = BuildingConfig { wwr: 1.5, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}

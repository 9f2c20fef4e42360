//! Hourly weather series and solar geometry.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

pub const HOURS_PER_YEAR: usize = 8760;
pub const DAYS_PER_MONTH: [u32; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];

#[derive(Clone, Debug, PartialEq)]
pub enum WeatherError {
    WrongLength { expected: usize, found: usize },
    /// Record `index` does not carry the expected (month, day, hour) stamp.
    OutOfOrder { index: usize, month: u32, day: u32, hour: u32 },
    InvalidRecord { index: usize, reason: &'static str },
    InvalidSite(&'static str),
    InvalidConfig(&'static str),
}

impl fmt::Display for WeatherError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::WrongLength { expected, found } => {
                write!(f, "expected {expected} rows, found {found}")
            }
            Self::OutOfOrder { index, month, day, hour } => write!(
                f,
                "record {index} is stamped {month}/{day} hour {hour}, which breaks the chronological non-leap calendar"
            ),
            Self::InvalidRecord { index, reason } => write!(f, "record {index}: {reason}"),
            Self::InvalidSite(msg) => write!(f, "invalid site: {msg}"),
            Self::InvalidConfig(msg) => write!(f, "invalid synthetic weather config: {msg}"),
        }
    }
}

impl core::error::Error for WeatherError {}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SiteSpec {
    pub name: String,
    /// Degrees north.
    pub latitude: f64,
    /// Degrees east.
    pub longitude: f64,
    pub timezone_offset_hours: f64,
}

impl Default for SiteSpec {
    /// College Station, Texas.
    fn default() -> Self {
        Self {
            name: String::from("College Station TX"),
            latitude: 30.601,
            longitude: -96.314,
            timezone_offset_hours: -6.0,
        }
    }
}

impl SiteSpec {
    pub fn validate(&self) -> Result<(), WeatherError> {
        if !(-90.0..=90.0).contains(&self.latitude) {
            return Err(WeatherError::InvalidSite("latitude outside [-90, 90]"));
        }
        if !(-180.0..=180.0).contains(&self.longitude) {
            return Err(WeatherError::InvalidSite("longitude outside [-180, 180]"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HourRecord {
    pub month: u32,
    pub day: u32,
    /// 1..=24; hour `h` covers clock time `[h-1, h)`.
    pub hour: u32,
    /// Dry-bulb temperature, °C.
    pub dry_bulb: f64,
    /// Direct normal irradiance, W/m².
    pub dni: f64,
    /// Diffuse horizontal irradiance, W/m².
    pub dhi: f64,
}

impl HourRecord {
    pub fn day_of_year(&self) -> u32 {
        day_of_year(self.month, self.day)
    }

    /// Midpoint of the hour in local time, used for the sun position.
    pub fn mid_hour(&self) -> f64 {
        self.hour as f64 - 0.5
    }

    fn check(&self, index: usize) -> Result<(), WeatherError> {
        let bad = |reason| Err(WeatherError::InvalidRecord { index, reason });
        if !(self.dni.is_finite() && self.dni >= 0.0) {
            return bad("direct normal irradiance must be finite and non-negative");
        }
        if !(self.dhi.is_finite() && self.dhi >= 0.0) {
            return bad("diffuse horizontal irradiance must be finite and non-negative");
        }
        if !(-60.0..=60.0).contains(&self.dry_bulb) {
            return bad("dry-bulb temperature outside [-60, 60] °C");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum WeatherSource {
    Epw,
    Synthetic,
}

/// A full non-leap year of hourly records.
#[derive(Clone, Debug, PartialEq)]
pub struct WeatherSeries {
    site: SiteSpec,
    records: Vec<HourRecord>,
    source: WeatherSource,
}

impl WeatherSeries {
    pub fn new(
        site: SiteSpec,
        records: Vec<HourRecord>,
        source: WeatherSource,
    ) -> Result<Self, WeatherError> {
        site.validate()?;
        if records.len() != HOURS_PER_YEAR {
            return Err(WeatherError::WrongLength { expected: HOURS_PER_YEAR, found: records.len() });
        }
        for (index, r) in records.iter().enumerate() {
            let (month, day, hour) = calendar_stamp(index);
            if (r.month, r.day, r.hour) != (month, day, hour) {
                return Err(WeatherError::OutOfOrder {
                    index,
                    month: r.month,
                    day: r.day,
                    hour: r.hour,
                });
            }
            r.check(index)?;
        }
        Ok(Self { site, records, source })
    }

    pub fn site(&self) -> &SiteSpec {
        &self.site
    }

    pub fn records(&self) -> &[HourRecord] {
        &self.records
    }

    pub fn source(&self) -> WeatherSource {
        self.source
    }
}

/// 1-based day of year in a non-leap calendar.
pub fn day_of_year(month: u32, day: u32) -> u32 {
    DAYS_PER_MONTH[..(month as usize - 1)].iter().sum::<u32>() + day
}

/// `(month, day, hour)` of the hour with 0-based `index` in the year.
pub fn calendar_stamp(index: usize) -> (u32, u32, u32) {
    let hour = (index % 24) as u32 + 1;
    let mut day = (index / 24) as u32 + 1;
    let mut month = 1;
    for &len in &DAYS_PER_MONTH {
        if day <= len {
            break;
        }
        day -= len;
        month += 1;
    }
    (month, day, hour)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SunPosition {
    /// Degrees above the horizon.
    pub altitude: f64,
    /// Degrees clockwise from north, in `[0, 360)`.
    pub azimuth: f64,
    pub declination: f64,
}

impl SunPosition {
    /// Unit vector pointing toward the sun in plan, `(east, north)`.
    pub fn horizontal_direction(&self) -> (f64, f64) {
        let az = self.azimuth.to_radians();
        (libm::sin(az), libm::cos(az))
    }
}

/// Cooper declination and the hour-angle altitude/azimuth equations.
///
/// `solar_hour` is local solar time; 12 is solar noon.
pub fn sun_position(site: &SiteSpec, day_of_year: u32, solar_hour: f64) -> SunPosition {
    let declination = 23.45 * libm::sin(2.0 * PI * (284.0 + day_of_year as f64) / 365.0);
    let hour_angle = (15.0 * (solar_hour - 12.0)).to_radians();
    let phi = site.latitude.to_radians();
    let delta = declination.to_radians();
    let sin_alt = libm::sin(phi) * libm::sin(delta)
        + libm::cos(phi) * libm::cos(delta) * libm::cos(hour_angle);
    let altitude = libm::asin(sin_alt.clamp(-1.0, 1.0)).to_degrees();
    let az_from_south = libm::atan2(
        libm::sin(hour_angle),
        libm::cos(hour_angle) * libm::sin(phi) - libm::tan(delta) * libm::cos(phi),
    );
    let mut azimuth = az_from_south.to_degrees() + 180.0;
    if azimuth >= 360.0 {
        azimuth -= 360.0;
    }
    if azimuth < 0.0 {
        azimuth += 360.0;
    }
    SunPosition { altitude, azimuth, declination }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SyntheticWeatherConfig {
    /// Annual mean dry-bulb, °C.
    pub annual_mean: f64,
    /// Half the winter–summer swing, °C.
    pub annual_amplitude: f64,
    /// Half the day–night swing, °C.
    pub diurnal_amplitude: f64,
    /// Direct normal irradiance with the sun at the zenith, W/m².
    pub dni_peak: f64,
    /// Diffuse horizontal as a fraction of direct normal.
    pub diffuse_fraction: f64,
}

impl Default for SyntheticWeatherConfig {
    /// A hot, humid subtropical year.
    fn default() -> Self {
        Self {
            annual_mean: 20.5,
            annual_amplitude: 8.5,
            diurnal_amplitude: 5.5,
            dni_peak: 850.0,
            diffuse_fraction: 0.2,
        }
    }
}

impl SyntheticWeatherConfig {
    pub fn validate(&self) -> Result<(), WeatherError> {
        if !(self.annual_amplitude >= 0.0 && self.diurnal_amplitude >= 0.0) {
            return Err(WeatherError::InvalidConfig("amplitudes must be non-negative"));
        }
        if !(self.dni_peak >= 0.0) {
            return Err(WeatherError::InvalidConfig("dni_peak must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.diffuse_fraction) {
            return Err(WeatherError::InvalidConfig("diffuse_fraction must lie in [0, 1]"));
        }
        if !self.annual_mean.is_finite() {
            return Err(WeatherError::InvalidConfig("annual_mean must be finite"));
        }
        Ok(())
    }
}

/// Deterministic clear-sky year. Clock time equals solar time, so every quantity driven
/// by the sun is symmetric about noon.
pub fn synthesize_weather(
    cfg: &SyntheticWeatherConfig,
    site: &SiteSpec,
) -> Result<WeatherSeries, WeatherError> {
    cfg.validate()?;
    let records = (0..HOURS_PER_YEAR)
        .map(|index| {
            let (month, day, hour) = calendar_stamp(index);
            let doy = (index / 24) as f64 + 1.0;
            let solar_hour = hour as f64 - 0.5;
            let dry_bulb = cfg.annual_mean
                - cfg.annual_amplitude * libm::cos(2.0 * PI * (doy - 15.0) / 365.0)
                + cfg.diurnal_amplitude * libm::cos(2.0 * PI * (solar_hour - 15.0) / 24.0);
            let sun = sun_position(site, doy as u32, solar_hour);
            let dni = if sun.altitude > 0.0 {
                cfg.dni_peak * libm::pow(libm::sin(sun.altitude.to_radians()), 0.6)
            } else {
                0.0
            };
            HourRecord { month, day, hour, dry_bulb, dni, dhi: cfg.diffuse_fraction * dni }
        })
        .collect();
    WeatherSeries::new(site.clone(), records, WeatherSource::Synthetic)
}

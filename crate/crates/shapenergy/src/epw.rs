//! EnergyPlus weather (EPW) files: the three channels the energy model reads.
//!
//! Data rows are comma separated; 1-based fields 2–4 carry month/day/hour, 7 dry-bulb,
//! 15 direct normal and 16 diffuse horizontal irradiance. Latitude, longitude and time
//! zone come from fields 7–9 of the `LOCATION` header line.

use std::fmt::Write as _;

use shapenergy_core::weather::{HourRecord, SiteSpec, WeatherError, WeatherSeries, WeatherSource, HOURS_PER_YEAR};

pub const HEADER_LINES: usize = 8;
const FIELDS: usize = 35;

const DRY_BULB: usize = 7;
const DNI: usize = 15;
const DHI: usize = 16;

/// Missing-value codes from the EPW data dictionary.
const MISSING_DRY_BULB: f64 = 99.9;
const MISSING_IRRADIANCE: f64 = 9999.0;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("line {line}: {kind}")]
pub struct EpwError {
    /// 1-based line in the file.
    pub line: usize,
    pub kind: EpwErrorKind,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EpwErrorKind {
    #[error("file ends inside the {HEADER_LINES}-line header")]
    TruncatedHeader,
    #[error("first line is not a LOCATION record")]
    MissingLocation,
    #[error("expected {expected} rows, found {found}")]
    RowCount { expected: usize, found: usize },
    #[error("expected at least {expected} fields, found {found}")]
    TooFewFields { expected: usize, found: usize },
    #[error("field {field} is not a number: {value:?}")]
    NotNumeric { field: usize, value: String },
    #[error("field {field} holds the missing-value code {value}")]
    MissingValue { field: usize, value: String },
    #[error("{0}")]
    Weather(WeatherError),
}

fn err(line: usize, kind: EpwErrorKind) -> EpwError {
    EpwError { line, kind }
}

fn number<T: std::str::FromStr>(fields: &[&str], field: usize, line: usize) -> Result<T, EpwError> {
    let raw = fields[field - 1].trim();
    raw.parse().map_err(|_| err(line, EpwErrorKind::NotNumeric { field, value: raw.to_string() }))
}

fn measured(fields: &[&str], field: usize, line: usize, missing: f64) -> Result<f64, EpwError> {
    let v: f64 = number(fields, field, line)?;
    if v == missing {
        return Err(err(line, EpwErrorKind::MissingValue { field, value: fields[field - 1].trim().to_string() }));
    }
    Ok(v)
}

fn parse_location(text: &str) -> Result<SiteSpec, EpwError> {
    let fields: Vec<&str> = text.split(',').collect();
    if !fields[0].trim().eq_ignore_ascii_case("LOCATION") {
        return Err(err(1, EpwErrorKind::MissingLocation));
    }
    if fields.len() < 9 {
        return Err(err(1, EpwErrorKind::TooFewFields { expected: 9, found: fields.len() }));
    }
    let name = [fields[1], fields[2], fields[3]]
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty() && *s != "-")
        .collect::<Vec<_>>()
        .join(" ");
    Ok(SiteSpec {
        name,
        latitude: number(&fields, 7, 1)?,
        longitude: number(&fields, 8, 1)?,
        timezone_offset_hours: number(&fields, 9, 1)?,
    })
}

/// Parses an EPW file into a validated 8760-hour series.
pub fn parse_epw(text: &str) -> Result<WeatherSeries, EpwError> {
    let mut lines = text.lines().map(|l| l.trim_end_matches('\r'));
    let mut header = Vec::with_capacity(HEADER_LINES);
    for i in 0..HEADER_LINES {
        match lines.next() {
            Some(l) => header.push(l),
            None => return Err(err(i + 1, EpwErrorKind::TruncatedHeader)),
        }
    }
    let site = parse_location(header[0])?;
    let mut records = Vec::with_capacity(HOURS_PER_YEAR);
    let mut last_line = HEADER_LINES;
    for (offset, row) in lines.enumerate() {
        let line = HEADER_LINES + offset + 1;
        if row.trim().is_empty() {
            continue;
        }
        last_line = line;
        if records.len() == HOURS_PER_YEAR {
            // keep counting so the error reports the real row count
            records.push(HourRecord { month: 0, day: 0, hour: 0, dry_bulb: 0.0, dni: 0.0, dhi: 0.0 });
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() < DHI {
            return Err(err(line, EpwErrorKind::TooFewFields { expected: DHI, found: fields.len() }));
        }
        records.push(HourRecord {
            month: number(&fields, 2, line)?,
            day: number(&fields, 3, line)?,
            hour: number(&fields, 4, line)?,
            dry_bulb: measured(&fields, DRY_BULB, line, MISSING_DRY_BULB)?,
            dni: measured(&fields, DNI, line, MISSING_IRRADIANCE)?,
            dhi: measured(&fields, DHI, line, MISSING_IRRADIANCE)?,
        });
    }
    if records.len() != HOURS_PER_YEAR {
        return Err(err(last_line, EpwErrorKind::RowCount { expected: HOURS_PER_YEAR, found: records.len() }));
    }
    WeatherSeries::new(site, records, WeatherSource::Epw).map_err(|e| {
        let line = match e {
            WeatherError::OutOfOrder { index, .. } | WeatherError::InvalidRecord { index, .. } => {
                HEADER_LINES + index + 1
            }
            _ => 1,
        };
        err(line, EpwErrorKind::Weather(e))
    })
}

/// Writes a minimal but well-formed EPW file. Channels the model does not use carry
/// neutral values or missing-value codes.
pub fn write_epw(series: &WeatherSeries) -> String {
    let site = series.site();
    let name = if site.name.is_empty() { "-" } else { site.name.as_str() };
    let mut out = String::with_capacity(HOURS_PER_YEAR * 120);
    let _ = writeln!(
        out,
        "LOCATION,{},-,-,shapenergy,000000,{},{},{},0.0",
        name.replace(',', " "),
        site.latitude,
        site.longitude,
        site.timezone_offset_hours
    );
    out.push_str("DESIGN CONDITIONS,0\n");
    out.push_str("TYPICAL/EXTREME PERIODS,0\n");
    out.push_str("GROUND TEMPERATURES,0\n");
    out.push_str("HOLIDAYS/DAYLIGHT SAVINGS,No,0,0,0\n");
    out.push_str("COMMENTS 1,written by shapenergy\n");
    out.push_str("COMMENTS 2,\n");
    out.push_str("DATA PERIODS,1,1,Data,Monday,1/1,12/31\n");
    for r in series.records() {
        let _ = write!(
            out,
            "1999,{},{},{},60,?9?9?9?9E0?9?9?9?9?9?9?9?9?9?9?9?9?9?9?9*9*9?9?9?9,{},{},50,101325,0,0,9999,9999,{},{}",
            r.month, r.day, r.hour, r.dry_bulb, r.dry_bulb, r.dni, r.dhi
        );
        // fields 17..=35: illuminance, wind, sky cover and precipitation, all unknown
        for _ in DHI + 1..=FIELDS {
            out.push_str(",999999");
        }
        out.push('\n');
    }
    out
}

//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use shapenergy_core::weather::{calendar_stamp, HOURS_PER_YEAR};

pub const LOCATION: &str = "LOCATION,College Station,TX,USA,TMY3,722445,30.58,-96.36,-6.0,96.0";

/// The first data row of the golden file, as it would appear in a TMY3 export.
pub const FIRST_ROW: &str = "1999,1,1,1,0,A,7.2,5.0,85,101325,0,0,290,120,45,60";

/// Fields 17..=35 of a data row: illuminance, wind, cover, precipitation.
const TAIL: &str = ",0,0,0,0,180,3.1,5,5,16.0,1200,9,999999999,10,0.08,0,88,0.0,0.0,0.0";

pub const HEADER: [&str; 7] = [
    "DESIGN CONDITIONS,0",
    "TYPICAL/EXTREME PERIODS,0",
    "GROUND TEMPERATURES,0",
    "HOLIDAYS/DAYLIGHT SAVINGS,No,0,0,0",
    "COMMENTS 1,constructed test file",
    "COMMENTS 2,",
    "DATA PERIODS,1,1,Data,Monday,1/1,12/31",
];

/// Dry-bulb, DNI and DHI of golden row `index` (0-based); row 0 is [`FIRST_ROW`].
pub fn golden_values(index: usize) -> (f64, f64, f64) {
    if index == 0 {
        return (7.2, 45.0, 60.0);
    }
    let dry = (index % 61) as f64 * 0.5 - 10.0;
    let dni = ((index * 7) % 901) as f64;
    let dhi = ((index * 3) % 211) as f64 + 0.5;
    (dry, dni, dhi)
}

pub fn row(index: usize, dry: impl std::fmt::Display, dni: impl std::fmt::Display, dhi: impl std::fmt::Display) -> String {
    let (m, d, h) = calendar_stamp(index);
    format!("1999,{m},{d},{h},0,A,{dry},5.0,85,101325,0,0,290,120,{dni},{dhi}{TAIL}")
}

/// An EPW file whose data rows come from `make_row(index)`, `n_rows` of them.
pub fn epw_with(n_rows: usize, mut make_row: impl FnMut(usize) -> String) -> String {
    let mut text = String::from(LOCATION);
    text.push('\n');
    for h in HEADER {
        text.push_str(h);
        text.push('\n');
    }
    for i in 0..n_rows {
        text.push_str(&make_row(i));
        text.push('\n');
    }
    text
}

pub fn golden_row(index: usize) -> String {
    if index == 0 {
        return format!("{FIRST_ROW}{TAIL}");
    }
    let (dry, dni, dhi) = golden_values(index);
    row(index, dry, dni, dhi)
}

pub fn golden_epw() -> String {
    epw_with(HOURS_PER_YEAR, golden_row)
}

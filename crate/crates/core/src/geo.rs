//! Fixed-point coordinates and grid cells.
//!
//! Coordinates are integer micro-degrees parsed straight from decimal text.
//! A [`GeoCell`] is a coordinate pair rounded to 4, 3 or 2 decimal digits
//! (roughly 10 m, 100 m and 1000 m).

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MICRO: i64 = 1_000_000;
const MAX_LAT_MICRO: i64 = 90 * MICRO;
const MAX_LON_MICRO: i64 = 180 * MICRO;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeoError {
    #[error("resolution must be 2, 3 or 4 decimal digits, got {0}")]
    BadResolution(u8),
    #[error("coordinate ({lat_micro}, {lon_micro}) outside geographic bounds")]
    OutOfBounds { lat_micro: i64, lon_micro: i64 },
    #[error("coordinate ({lat_micro}, {lon_micro}) is not on the {digits}-digit grid")]
    OffGrid { lat_micro: i64, lon_micro: i64, digits: u8 },
}

/// Number of decimal digits retained after the decimal point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Resolution(u8);

impl Resolution {
    pub const TEN_METERS: Resolution = Resolution(4);
    pub const HUNDRED_METERS: Resolution = Resolution(3);
    pub const KILOMETER: Resolution = Resolution(2);

    pub fn new(digits: u8) -> Result<Self, GeoError> {
        match digits {
            2..=4 => Ok(Resolution(digits)),
            other => Err(GeoError::BadResolution(other)),
        }
    }

    pub fn digits(self) -> u8 {
        self.0
    }

    /// Grid step in micro-degrees.
    pub fn step(self) -> i64 {
        10i64.pow(6 - self.0 as u32)
    }

    pub fn is_coarser_than(self, other: Resolution) -> bool {
        self.0 < other.0
    }
}

impl TryFrom<u8> for Resolution {
    type Error = GeoError;
    fn try_from(d: u8) -> Result<Self, Self::Error> {
        Resolution::new(d)
    }
}

impl From<Resolution> for u8 {
    fn from(r: Resolution) -> u8 {
        r.0
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Rounds micro-degrees to `digits` decimals, ties away from zero.
///
/// Rounding is not composable: rounding to 3 digits and then to 2 can differ
/// from rounding straight to 2 when the 3-digit value lands on a 2-digit tie.
pub fn quantize(coord_micro: i64, resolution: Resolution) -> i64 {
    let step = resolution.step();
    let half = step / 2;
    let magnitude = coord_micro.abs();
    let rounded = (magnitude + half) / step * step;
    if coord_micro < 0 {
        -rounded
    } else {
        rounded
    }
}

/// A grid cell at a given resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GeoCell {
    lat_micro: i64,
    lon_micro: i64,
    resolution: Resolution,
}

impl GeoCell {
    /// Builds a cell from coordinates already on the grid.
    pub fn new(lat_micro: i64, lon_micro: i64, resolution: Resolution) -> Result<Self, GeoError> {
        if lat_micro.abs() > MAX_LAT_MICRO || lon_micro.abs() > MAX_LON_MICRO {
            return Err(GeoError::OutOfBounds { lat_micro, lon_micro });
        }
        let step = resolution.step();
        if lat_micro % step != 0 || lon_micro % step != 0 {
            return Err(GeoError::OffGrid { lat_micro, lon_micro, digits: resolution.digits() });
        }
        Ok(GeoCell { lat_micro, lon_micro, resolution })
    }

    /// Quantizes raw micro-degree coordinates onto the grid.
    pub fn from_raw(lat_micro: i64, lon_micro: i64, resolution: Resolution) -> Result<Self, GeoError> {
        GeoCell::new(quantize(lat_micro, resolution), quantize(lon_micro, resolution), resolution)
    }

    pub fn lat_micro(&self) -> i64 {
        self.lat_micro
    }

    pub fn lon_micro(&self) -> i64 {
        self.lon_micro
    }

    pub fn resolution(&self) -> Resolution {
        self.resolution
    }

    /// Re-quantizes onto a coarser (or equal) grid.
    pub fn coarsen(&self, target: Resolution) -> GeoCell {
        if target >= self.resolution {
            return *self;
        }
        GeoCell {
            lat_micro: quantize(self.lat_micro, target),
            lon_micro: quantize(self.lon_micro, target),
            resolution: target,
        }
    }

    pub fn lat_degrees(&self) -> f64 {
        self.lat_micro as f64 / MICRO as f64
    }

    pub fn lon_degrees(&self) -> f64 {
        self.lon_micro as f64 / MICRO as f64
    }

    /// Latitude as fixed-point text with the cell's digit count, e.g. `40.751`.
    pub fn lat_text(&self) -> String {
        fixed_text(self.lat_micro, self.resolution.digits(), 0)
    }

    pub fn lon_text(&self) -> String {
        fixed_text(self.lon_micro, self.resolution.digits(), 0)
    }

    pub fn grouping_key(&self) -> GroupingKey {
        let d = self.resolution.digits();
        GroupingKey(format!(
            "{}:{}",
            signed_fixed_text(self.lat_micro, d, 2),
            signed_fixed_text(self.lon_micro, d, 3)
        ))
    }
}

/// Same order as the byte order of [`GeoCell::grouping_key`]: the rendered
/// key is fixed width, `+` sorts before `-`, and digits compare by magnitude.
impl Ord for GeoCell {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let rank = |c: &GeoCell| {
            (
                c.resolution,
                c.lat_micro < 0,
                c.lat_micro.unsigned_abs(),
                c.lon_micro < 0,
                c.lon_micro.unsigned_abs(),
            )
        };
        rank(self).cmp(&rank(other))
    }
}

impl PartialOrd for GeoCell {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for GeoCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lat_text(), self.lon_text())
    }
}

/// Canonical textual group identity; ordering is plain byte order of the text.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroupingKey(String);

impl GroupingKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for GroupingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn fixed_text(micro: i64, digits: u8, int_width: usize) -> String {
    let sign = if micro < 0 { "-" } else { "" };
    format!("{sign}{}", unsigned_fixed(micro.unsigned_abs(), digits, int_width))
}

fn signed_fixed_text(micro: i64, digits: u8, int_width: usize) -> String {
    let sign = if micro < 0 { "-" } else { "+" };
    format!("{sign}{}", unsigned_fixed(micro.unsigned_abs(), digits, int_width))
}

fn unsigned_fixed(magnitude: u64, digits: u8, int_width: usize) -> String {
    let int = magnitude / MICRO as u64;
    let frac = (magnitude % MICRO as u64) / 10u64.pow(6 - digits as u32);
    format!("{int:0int_width$}.{frac:0width$}", width = digits as usize)
}

/// Parses a decimal literal into an integer scaled by `10^scale`, rounding
/// extra fractional digits half away from zero. No exponents, no grouping.
pub fn parse_scaled_decimal(text: &str, scale: u32) -> Option<i64> {
    let text = text.trim();
    let (negative, body) = match text.as_bytes().first()? {
        b'-' => (true, &text[1..]),
        b'+' => (false, &text[1..]),
        _ => (false, text),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit()) || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let mut value: i64 = 0;
    for b in int_part.bytes() {
        value = value.checked_mul(10)?.checked_add((b - b'0') as i64)?;
    }
    let frac = frac_part.as_bytes();
    for i in 0..scale as usize {
        let digit = frac.get(i).map_or(0, |b| (b - b'0') as i64);
        value = value.checked_mul(10)?.checked_add(digit)?;
    }
    if frac.get(scale as usize).is_some_and(|&b| b >= b'5') {
        value = value.checked_add(1)?;
    }
    Some(if negative { -value } else { value })
}

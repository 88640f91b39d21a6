//! Time instants, half-open intervals, coalesced interval sets, tiling
//! windows and the quantifiers used to admit an entity into a window.
//!
//! All time is naive local clock seconds since `1970-01-01 00:00:00`. No
//! time-zone or daylight-saving arithmetic is performed anywhere.

use std::fmt;
use std::ops::{Add, Sub};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const TEXT_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemporalError {
    #[error("empty interval [{start}, {end})")]
    EmptyInterval { start: i64, end: i64 },
    #[error("cannot parse timestamp {0:?} (expected YYYY-MM-DD HH:MM:SS)")]
    BadTimestamp(String),
    #[error("window duration must be at least one second, got {0}")]
    BadDuration(i64),
    #[error("instant {0} is outside the supported calendar range")]
    OutOfCalendarRange(i64),
}

/// Seconds since the naive-local epoch.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct TimeInstant(i64);

impl TimeInstant {
    pub const fn from_seconds(seconds: i64) -> Self {
        TimeInstant(seconds)
    }

    pub const fn seconds(self) -> i64 {
        self.0
    }

    /// Parses `YYYY-MM-DD HH:MM:SS`.
    pub fn parse(text: &str) -> Result<Self, TemporalError> {
        let dt = NaiveDateTime::parse_from_str(text.trim(), TEXT_FORMAT)
            .map_err(|_| TemporalError::BadTimestamp(text.to_string()))?;
        Ok(TimeInstant(dt.and_utc().timestamp()))
    }

    fn to_naive(self) -> Result<NaiveDateTime, TemporalError> {
        chrono::DateTime::from_timestamp(self.0, 0)
            .map(|dt| dt.naive_utc())
            .ok_or(TemporalError::OutOfCalendarRange(self.0))
    }

    /// Renders `YYYY-MM-DD HH:MM:SS`. Falls back to raw seconds only for
    /// instants chrono cannot represent.
    pub fn format(self) -> String {
        match self.to_naive() {
            Ok(dt) => dt.format(TEXT_FORMAT).to_string(),
            Err(_) => format!("@{}", self.0),
        }
    }

    /// First second of the calendar month containing this instant.
    pub fn month_start(self) -> Result<TimeInstant, TemporalError> {
        let dt = self.to_naive()?;
        let first = NaiveDate::from_ymd_opt(dt.year(), dt.month(), 1)
            .ok_or(TemporalError::OutOfCalendarRange(self.0))?;
        Ok(TimeInstant(first.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp()))
    }

    /// First second of the calendar month after the one containing this instant.
    pub fn next_month_start(self) -> Result<TimeInstant, TemporalError> {
        let dt = self.to_naive()?;
        let (y, m) = if dt.month() == 12 {
            (dt.year() + 1, 1)
        } else {
            (dt.year(), dt.month() + 1)
        };
        let first =
            NaiveDate::from_ymd_opt(y, m, 1).ok_or(TemporalError::OutOfCalendarRange(self.0))?;
        Ok(TimeInstant(first.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp()))
    }
}

impl fmt::Display for TimeInstant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.format())
    }
}

impl FromStr for TimeInstant {
    type Err = TemporalError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TimeInstant::parse(s)
    }
}

impl Add<i64> for TimeInstant {
    type Output = TimeInstant;
    fn add(self, rhs: i64) -> TimeInstant {
        TimeInstant(self.0 + rhs)
    }
}

impl Sub<i64> for TimeInstant {
    type Output = TimeInstant;
    fn sub(self, rhs: i64) -> TimeInstant {
        TimeInstant(self.0 - rhs)
    }
}

impl Sub for TimeInstant {
    type Output = i64;
    fn sub(self, rhs: TimeInstant) -> i64 {
        self.0 - rhs.0
    }
}

/// Half-open period `[start, end)`; never empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawInterval", into = "RawInterval")]
pub struct Interval {
    start: TimeInstant,
    end: TimeInstant,
}

#[derive(Serialize, Deserialize)]
struct RawInterval {
    start: i64,
    end: i64,
}

impl TryFrom<RawInterval> for Interval {
    type Error = TemporalError;
    fn try_from(raw: RawInterval) -> Result<Self, Self::Error> {
        Interval::from_seconds(raw.start, raw.end)
    }
}

impl From<Interval> for RawInterval {
    fn from(i: Interval) -> Self {
        RawInterval { start: i.start.0, end: i.end.0 }
    }
}

impl Interval {
    pub fn new(start: TimeInstant, end: TimeInstant) -> Result<Self, TemporalError> {
        if start < end {
            Ok(Interval { start, end })
        } else {
            Err(TemporalError::EmptyInterval { start: start.0, end: end.0 })
        }
    }

    pub fn from_seconds(start: i64, end: i64) -> Result<Self, TemporalError> {
        Interval::new(TimeInstant(start), TimeInstant(end))
    }

    pub fn start(&self) -> TimeInstant {
        self.start
    }

    pub fn end(&self) -> TimeInstant {
        self.end
    }

    pub fn length(&self) -> i64 {
        self.end - self.start
    }

    pub fn contains(&self, t: TimeInstant) -> bool {
        self.start <= t && t < self.end
    }

    pub fn covers(&self, other: &Interval) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn overlaps(&self, other: &Interval) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn intersection(&self, other: &Interval) -> Option<Interval> {
        let start = self.start.max(other.start);
        let end = self.end.min(other.end);
        (start < end).then_some(Interval { start, end })
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start.0, self.end.0)
    }
}

/// A canonical, coalesced set of intervals: sorted, disjoint, and with no
/// two members abutting.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct IntervalSet {
    intervals: Vec<Interval>,
}

impl IntervalSet {
    pub fn new() -> Self {
        IntervalSet { intervals: Vec::new() }
    }

    pub fn single(interval: Interval) -> Self {
        IntervalSet { intervals: vec![interval] }
    }

    /// Builds a canonical set from arbitrary (possibly overlapping) intervals.
    pub fn from_intervals<I: IntoIterator<Item = Interval>>(iter: I) -> Self {
        let mut intervals: Vec<Interval> = iter.into_iter().collect();
        intervals.sort_unstable();
        IntervalSet { intervals: coalesce_sorted(intervals) }
    }

    /// Accepts only an already-canonical sequence.
    pub fn from_canonical(intervals: Vec<Interval>) -> Option<Self> {
        let ok = intervals.windows(2).all(|w| w[0].end < w[1].start);
        ok.then_some(IntervalSet { intervals })
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn iter(&self) -> impl Iterator<Item = &Interval> + '_ {
        self.intervals.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn contains(&self, t: TimeInstant) -> bool {
        let idx = self.intervals.partition_point(|i| i.end <= t);
        self.intervals.get(idx).is_some_and(|i| i.contains(t))
    }

    /// True when every instant of `window` is in the set.
    pub fn covers(&self, window: &Interval) -> bool {
        let idx = self.intervals.partition_point(|i| i.end <= window.start);
        self.intervals.get(idx).is_some_and(|i| i.covers(window))
    }

    pub fn total_seconds(&self) -> i64 {
        self.intervals.iter().map(Interval::length).sum()
    }

    /// Smallest single interval containing the whole set.
    pub fn hull(&self) -> Option<Interval> {
        let first = self.intervals.first()?;
        let last = self.intervals.last()?;
        Some(Interval { start: first.start, end: last.end })
    }

    pub fn union(&self, other: &IntervalSet) -> IntervalSet {
        let mut merged = Vec::with_capacity(self.intervals.len() + other.intervals.len());
        let (mut a, mut b) = (self.intervals.iter().peekable(), other.intervals.iter().peekable());
        loop {
            let next = match (a.peek(), b.peek()) {
                (Some(x), Some(y)) if x <= y => a.next(),
                (Some(_), Some(_)) => b.next(),
                (Some(_), None) => a.next(),
                (None, Some(_)) => b.next(),
                (None, None) => break,
            };
            merged.push(*next.unwrap());
        }
        IntervalSet { intervals: coalesce_sorted(merged) }
    }

    pub fn insert(&mut self, interval: Interval) {
        *self = self.union(&IntervalSet::single(interval));
    }

    pub fn intersect_window(&self, window: &Interval) -> IntervalSet {
        let from = self.intervals.partition_point(|i| i.end <= window.start);
        let intervals = self.intervals[from..]
            .iter()
            .take_while(|i| i.start < window.end)
            .filter_map(|i| i.intersection(window))
            .collect();
        IntervalSet { intervals }
    }

    pub fn intersects(&self, window: &Interval) -> bool {
        let idx = self.intervals.partition_point(|i| i.end <= window.start);
        self.intervals.get(idx).is_some_and(|i| i.start < window.end)
    }
}

impl FromIterator<Interval> for IntervalSet {
    fn from_iter<I: IntoIterator<Item = Interval>>(iter: I) -> Self {
        IntervalSet::from_intervals(iter)
    }
}

impl From<Interval> for IntervalSet {
    fn from(interval: Interval) -> Self {
        IntervalSet::single(interval)
    }
}

fn coalesce_sorted(sorted: Vec<Interval>) -> Vec<Interval> {
    let mut out: Vec<Interval> = Vec::with_capacity(sorted.len());
    for next in sorted {
        match out.last_mut() {
            // touching counts: [0,10) and [10,20) become [0,20)
            Some(last) if next.start <= last.end => {
                if next.end > last.end {
                    last.end = next.end;
                }
            }
            _ => out.push(next),
        }
    }
    out
}

pub fn union(a: &IntervalSet, b: &IntervalSet) -> IntervalSet {
    a.union(b)
}

pub fn intersect_window(s: &IntervalSet, w: &Interval) -> IntervalSet {
    s.intersect_window(w)
}

/// Admission rule for an entity into a temporal window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantifier {
    /// Present at some instant of the window.
    #[default]
    Exists,
    /// Present at every instant of the window.
    Always,
    /// Present for a strict majority of the window's seconds.
    Most,
}

impl Quantifier {
    pub const ALL: [Quantifier; 3] = [Quantifier::Exists, Quantifier::Always, Quantifier::Most];

    pub fn evaluate(self, validity: &IntervalSet, window: &Interval) -> bool {
        match self {
            Quantifier::Exists => validity.intersects(window),
            Quantifier::Always => validity.covers(window),
            Quantifier::Most => {
                let covered = validity.intersect_window(window).total_seconds();
                covered > window.length() / 2
            }
        }
    }
}

impl FromStr for Quantifier {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "exists" => Ok(Quantifier::Exists),
            "always" => Ok(Quantifier::Always),
            "most" => Ok(Quantifier::Most),
            other => Err(format!("unknown quantifier {other:?}")),
        }
    }
}

pub fn evaluate_quantifier(q: Quantifier, validity: &IntervalSet, window: &Interval) -> bool {
    q.evaluate(validity, window)
}

/// How the timeline is tiled into windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WindowSpec {
    /// Windows `[origin + k*duration, origin + (k+1)*duration)` for every integer k.
    FixedDuration { duration_seconds: i64, origin: TimeInstant },
    /// Gregorian calendar months of the naive local clock.
    CalendarMonth,
}

impl WindowSpec {
    pub fn fixed(duration_seconds: i64, origin: TimeInstant) -> Result<Self, TemporalError> {
        if duration_seconds < 1 {
            return Err(TemporalError::BadDuration(duration_seconds));
        }
        Ok(WindowSpec::FixedDuration { duration_seconds, origin })
    }

    /// A single window spanning exactly `span`.
    pub fn whole(span: Interval) -> Self {
        WindowSpec::FixedDuration { duration_seconds: span.length(), origin: span.start() }
    }

    /// The tiling window that contains `t`.
    pub fn window_containing(&self, t: TimeInstant) -> Result<Interval, TemporalError> {
        match *self {
            WindowSpec::FixedDuration { duration_seconds, origin } => {
                if duration_seconds < 1 {
                    return Err(TemporalError::BadDuration(duration_seconds));
                }
                let k = (t - origin).div_euclid(duration_seconds);
                let start = origin + k * duration_seconds;
                Ok(Interval { start, end: start + duration_seconds })
            }
            WindowSpec::CalendarMonth => {
                let start = t.month_start()?;
                let end = t.next_month_start()?;
                Ok(Interval { start, end })
            }
        }
    }

    fn following(&self, window: &Interval) -> Result<Interval, TemporalError> {
        self.window_containing(window.end)
    }

    /// Ordered windows that intersect `span`.
    pub fn windows_covering(&self, span: &Interval) -> Result<Vec<Interval>, TemporalError> {
        let mut out = Vec::new();
        let mut w = self.window_containing(span.start)?;
        loop {
            out.push(w);
            if w.end >= span.end {
                break;
            }
            w = self.following(&w)?;
        }
        Ok(out)
    }

    /// Ordered, duplicate-free windows that intersect the set.
    pub fn windows_overlapping(&self, s: &IntervalSet) -> Result<Vec<Interval>, TemporalError> {
        let mut out: Vec<Interval> = Vec::new();
        for interval in s.iter() {
            for w in self.windows_covering(interval)? {
                if out.last().is_none_or(|last| last.start < w.start) {
                    out.push(w);
                }
            }
        }
        Ok(out)
    }
}

pub fn windows_overlapping(s: &IntervalSet, w: &WindowSpec) -> Result<Vec<Interval>, TemporalError> {
    w.windows_overlapping(s)
}

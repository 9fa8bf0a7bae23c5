use std::fmt;

use chrono::{DateTime, Datelike, NaiveDateTime, Utc};

/// Seconds since the Unix epoch, UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(pub i64);

pub const ONE_WEEK_SECS: i64 = 7 * 24 * 3600;

impl Timestamp {
    pub fn epoch_seconds(self) -> i64 {
        self.0
    }

    /// Parses a WARC-Date value (`2009-03-02T11:00:00Z`, fractional seconds allowed).
    pub fn parse_warc_date(s: &str) -> Option<Timestamp> {
        let s = s.trim();
        if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
            return Some(Timestamp(dt.with_timezone(&Utc).timestamp()));
        }
        // Some writers omit the zone designator.
        NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
            .ok()
            .map(|dt| Timestamp(dt.and_utc().timestamp()))
    }

    /// Parses a 14-digit ARC date (`YYYYMMDDHHMMSS`).
    pub fn parse_arc_date(s: &str) -> Option<Timestamp> {
        if s.len() != 14 || !s.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        NaiveDateTime::parse_from_str(s, "%Y%m%d%H%M%S")
            .ok()
            .map(|dt| Timestamp(dt.and_utc().timestamp()))
    }

    pub fn year(self) -> i32 {
        DateTime::<Utc>::from_timestamp(self.0, 0)
            .map(|dt| dt.year())
            .unwrap_or(1970)
    }

    pub fn to_warc_date(self) -> String {
        DateTime::<Utc>::from_timestamp(self.0, 0)
            .map(|dt| dt.format("%Y-%m-%dT%H:%M:%SZ").to_string())
            .unwrap_or_default()
    }

    pub fn to_arc_date(self) -> String {
        DateTime::<Utc>::from_timestamp(self.0, 0)
            .map(|dt| dt.format("%Y%m%d%H%M%S").to_string())
            .unwrap_or_default()
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_warc_date())
    }
}

/// Sorts and counts consecutive gaps accepted by `keep`.
fn count_gaps(times: &[Timestamp], keep: impl Fn(i64) -> bool) -> usize {
    let mut sorted = times.to_vec();
    sorted.sort_unstable();
    sorted.windows(2).filter(|w| keep(w[1].0 - w[0].0)).count()
}

/// Number of consecutive gaps strictly longer than one week.
pub fn gaps_longer_than_week(times: &[Timestamp]) -> usize {
    count_gaps(times, |gap| gap > ONE_WEEK_SECS)
}

/// Number of consecutive gaps of at least one week.
pub fn gaps_at_least_week(times: &[Timestamp]) -> usize {
    count_gaps(times, |gap| gap >= ONE_WEEK_SECS)
}

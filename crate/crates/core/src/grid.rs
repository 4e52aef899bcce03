//! Day and window arithmetic over the trace horizon.

use serde::{Deserialize, Serialize};

use crate::error::GridError;
use crate::model::{is_sentinel, Micros, MICROS_PER_DAY, MICROS_PER_SECOND, SECONDS_PER_DAY};

pub const DEFAULT_WINDOW_SECONDS: u64 = 300;

/// Fixed-length half-open windows anchored at the trace start. Window `w`
/// covers `[origin + w·len, origin + (w+1)·len)`; day `d` covers windows
/// `d·per_day .. (d+1)·per_day`.
///
/// The horizon is the closed interval `[origin, end]`, so a timestamp equal
/// to `end` still maps to a valid window and day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowGrid {
    pub origin: Micros,
    pub end: Micros,
    pub window_micros: Micros,
    pub windows_per_day: u64,
    pub window_count: u64,
    pub day_count: u64,
}

impl WindowGrid {
    pub fn new(origin: Micros, end: Micros, window_seconds: u64) -> Self {
        assert!(end >= origin, "grid end precedes origin");
        assert!(
            window_seconds > 0 && SECONDS_PER_DAY % window_seconds == 0,
            "window length must divide a day"
        );
        let window_micros = window_seconds * MICROS_PER_SECOND;
        let span = end - origin;
        WindowGrid {
            origin,
            end,
            window_micros,
            windows_per_day: SECONDS_PER_DAY / window_seconds,
            window_count: span / window_micros + 1,
            day_count: span / MICROS_PER_DAY + 1,
        }
    }

    /// 300 s windows, 288 per day.
    pub fn five_minute(origin: Micros, end: Micros) -> Self {
        WindowGrid::new(origin, end, DEFAULT_WINDOW_SECONDS)
    }

    pub fn contains(&self, t: Micros) -> bool {
        !is_sentinel(t) && t >= self.origin && t <= self.end
    }

    pub fn window_index(&self, t: Micros) -> Result<u64, GridError> {
        if is_sentinel(t) {
            return Err(GridError::Sentinel(t));
        }
        if t < self.origin || t > self.end {
            return Err(GridError::OutOfRange(t));
        }
        Ok((t - self.origin) / self.window_micros)
    }

    /// Day index of an in-horizon timestamp; `None` for sentinels and
    /// out-of-range times.
    pub fn day_of(&self, t: Micros) -> Option<u64> {
        if self.contains(t) {
            Some((t - self.origin) / MICROS_PER_DAY)
        } else {
            None
        }
    }

    pub fn window_start(&self, w: u64) -> Micros {
        self.origin + w * self.window_micros
    }

    pub fn window_end(&self, w: u64) -> Micros {
        self.window_start(w + 1)
    }

    pub fn day_start(&self, d: u64) -> Micros {
        self.origin + d * MICROS_PER_DAY
    }

    pub fn day_of_window(&self, w: u64) -> u64 {
        w / self.windows_per_day
    }

    /// Windows of day `d` that lie inside the horizon.
    pub fn windows_in_day(&self, d: u64) -> u64 {
        let first = d * self.windows_per_day;
        self.window_count.saturating_sub(first).min(self.windows_per_day)
    }

    pub fn has_partial_last_day(&self) -> bool {
        self.windows_in_day(self.day_count - 1) < self.windows_per_day
    }

    /// Range of windows overlapped by the half-open interval `[start, end)`,
    /// clipped to the horizon. Empty intervals overlap nothing.
    pub fn windows_overlapping(&self, start: Micros, end: Micros) -> std::ops::Range<u64> {
        let start = start.max(self.origin);
        let end = end.min(self.end.saturating_add(1));
        if end <= start {
            return 0..0;
        }
        let first = (start - self.origin) / self.window_micros;
        let last = (end - 1 - self.origin) / self.window_micros;
        first..last + 1
    }

    /// Range of days overlapped by `[start, end)`, clipped to the horizon.
    pub fn days_overlapping(&self, start: Micros, end: Micros) -> std::ops::Range<u64> {
        let start = start.max(self.origin);
        let end = end.min(self.end.saturating_add(1));
        if end <= start {
            return 0..0;
        }
        let first = (start - self.origin) / MICROS_PER_DAY;
        let last = (end - 1 - self.origin) / MICROS_PER_DAY;
        first..last + 1
    }
}

/// Standalone form of [`WindowGrid::window_index`].
pub fn window_index(t: Micros, grid: &WindowGrid) -> Result<u64, GridError> {
    grid.window_index(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AFTER_TRACE;

    const S: Micros = MICROS_PER_SECOND;

    #[test]
    fn window_boundaries() {
        let origin = 600 * S;
        let g = WindowGrid::five_minute(origin, origin + 3 * MICROS_PER_DAY - 1);
        assert_eq!(g.windows_per_day, 288);
        assert_eq!(g.window_count, 3 * 288);
        assert_eq!(g.day_count, 3);
        assert!(!g.has_partial_last_day());
        assert_eq!(g.window_index(origin), Ok(0));
        assert_eq!(g.window_index(origin + 300 * S - 1), Ok(0));
        assert_eq!(g.window_index(origin + 300 * S), Ok(1));
        assert_eq!(g.window_index(origin + 86_400 * S), Ok(288));
        assert_eq!(g.window_index(0), Err(GridError::Sentinel(0)));
        assert_eq!(g.window_index(AFTER_TRACE), Err(GridError::Sentinel(AFTER_TRACE)));
        assert_eq!(g.window_index(origin - 1), Err(GridError::OutOfRange(origin - 1)));
    }

    #[test]
    fn partial_last_day() {
        let g = WindowGrid::five_minute(S, S + MICROS_PER_DAY + 3600 * S);
        assert_eq!(g.day_count, 2);
        assert_eq!(g.windows_in_day(0), 288);
        assert_eq!(g.windows_in_day(1), 13);
        assert!(g.has_partial_last_day());
    }

    #[test]
    fn overlap_ranges() {
        let g = WindowGrid::five_minute(S, S + MICROS_PER_DAY - 1);
        assert_eq!(g.windows_overlapping(S, S + 300 * S), 0..1);
        assert_eq!(g.windows_overlapping(S, S + 300 * S + 1), 0..2);
        assert_eq!(g.windows_overlapping(S + 10, S + 10), 0..0);
        assert_eq!(g.windows_overlapping(0, u64::MAX), 0..288);
        assert_eq!(g.days_overlapping(0, u64::MAX), 0..1);
    }
}

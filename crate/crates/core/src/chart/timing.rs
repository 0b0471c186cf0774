use super::ChartError;

/// Ticks per beat on the editor grid (1/16-beat resolution).
pub const TICK_DIVISION: u32 = 16;

/// Constant-BPM tick grid. Tick `n` sits at `offset_ms + n * tick_interval_ms()`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingGrid {
    bpm: f64,
    offset_ms: i64,
}

impl TimingGrid {
    pub fn new(bpm: f64, offset_ms: i64) -> Result<Self, ChartError> {
        if !(bpm.is_finite() && bpm > 0.0) {
            return Err(ChartError::InvalidBpm(bpm));
        }
        Ok(TimingGrid { bpm, offset_ms })
    }

    pub fn bpm(&self) -> f64 {
        self.bpm
    }

    pub fn offset_ms(&self) -> i64 {
        self.offset_ms
    }

    pub fn tick_interval_ms(&self) -> f64 {
        60_000.0 / (self.bpm * TICK_DIVISION as f64)
    }

    /// Exact (fractional) time of tick `n`.
    pub fn tick_time(&self, n: i64) -> f64 {
        self.offset_ms as f64 + n as f64 * self.tick_interval_ms()
    }

    /// Index of the tick nearest to `time_ms`; ties go to the earlier tick.
    pub fn nearest_tick(&self, time_ms: f64) -> i64 {
        let x = (time_ms - self.offset_ms as f64) / self.tick_interval_ms();
        (x - 0.5).ceil() as i64
    }

    /// Tick time rounded to whole milliseconds (half up).
    pub fn tick_ms(&self, n: i64) -> i64 {
        (self.tick_time(n) + 0.5).floor() as i64
    }

    /// Nearest tick that also lies in `[0, duration_ms]`, or `None` if the
    /// range contains no tick.
    pub fn snap_within(&self, time_ms: i64, duration_ms: u64) -> Option<u64> {
        let mut n = self.nearest_tick(time_ms as f64);
        let end = duration_ms as i64;
        while self.tick_ms(n) < 0 {
            n += 1;
        }
        while self.tick_ms(n) > end {
            n -= 1;
        }
        let t = self.tick_ms(n);
        (0..=end).contains(&t).then_some(t as u64)
    }
}

/// Snaps a time to the nearest 1/16-beat tick, in whole milliseconds.
pub fn snap_to_tick(time_ms: i64, grid: &TimingGrid) -> i64 {
    grid.tick_ms(grid.nearest_tick(time_ms as f64))
}

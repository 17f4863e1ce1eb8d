//! Monotonic time sources. Budgets are measured through this trait so tests
//! can swap the wall clock for a deterministic one.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

pub trait Clock: Send + Sync {
    /// Time elapsed since an arbitrary fixed origin.
    fn now(&self) -> Duration;
}

#[derive(Debug, Clone)]
pub struct WallClock {
    origin: Instant,
}

impl WallClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }
}

/// Advances by a fixed tick on every reading.
#[derive(Debug)]
pub struct LogicalClock {
    ticks: AtomicU64,
    tick: Duration,
}

impl LogicalClock {
    pub fn new(tick: Duration) -> Self {
        Self {
            ticks: AtomicU64::new(0),
            tick,
        }
    }
}

impl Clock for LogicalClock {
    fn now(&self) -> Duration {
        let t = self.ticks.fetch_add(1, Ordering::Relaxed);
        self.tick.saturating_mul(t.min(u32::MAX as u64) as u32)
    }
}

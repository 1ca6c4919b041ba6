//! Time sources for budgets.
//!
//! The core never reads a wall clock itself. Callers hand in a [`Clock`];
//! the default [`NoClock`] never advances, which makes every wall-time
//! budget infinite and leaves only count budgets in effect.

use core::time::Duration;

pub trait Clock {
    /// Time elapsed since some fixed origin.
    fn now(&self) -> Duration;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now(&self) -> Duration {
        Duration::ZERO
    }
}

/// A point in time after which work should stop.
#[derive(Clone, Copy)]
pub struct Deadline<'c> {
    clock: &'c dyn Clock,
    end: Option<Duration>,
}

impl<'c> Deadline<'c> {
    pub fn never(clock: &'c dyn Clock) -> Self {
        Deadline { clock, end: None }
    }

    pub fn after(clock: &'c dyn Clock, budget: Duration) -> Self {
        Deadline {
            clock,
            end: Some(clock.now().saturating_add(budget)),
        }
    }

    /// Shrink to `budget` from now, keeping the earlier of the two ends.
    pub fn within(&self, budget: Option<Duration>) -> Self {
        match budget {
            None => *self,
            Some(b) => {
                let candidate = self.clock.now().saturating_add(b);
                let end = match self.end {
                    Some(e) if e < candidate => e,
                    _ => candidate,
                };
                Deadline {
                    clock: self.clock,
                    end: Some(end),
                }
            }
        }
    }

    pub fn expired(&self) -> bool {
        match self.end {
            None => false,
            Some(end) => self.clock.now() >= end,
        }
    }

    pub fn clock(&self) -> &'c dyn Clock {
        self.clock
    }
}

impl core::fmt::Debug for Deadline<'_> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Deadline").field("end", &self.end).finish()
    }
}

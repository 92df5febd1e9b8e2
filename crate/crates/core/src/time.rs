//! Simulation clock.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

/// A duration in integer microseconds.
pub type Micros = u64;

pub const MS: Micros = 1_000;
pub const SEC: Micros = 1_000_000;

/// Microseconds since simulation start.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * MS)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    /// Elapsed time since `earlier`, saturating at zero.
    pub fn since(self, earlier: SimTime) -> Micros {
        self.0.saturating_sub(earlier.0)
    }
}

impl Add<Micros> for SimTime {
    type Output = SimTime;

    fn add(self, rhs: Micros) -> SimTime {
        SimTime(self.0.saturating_add(rhs))
    }
}

impl AddAssign<Micros> for SimTime {
    fn add_assign(&mut self, rhs: Micros) {
        self.0 = self.0.saturating_add(rhs);
    }
}

impl Sub for SimTime {
    type Output = Micros;

    fn sub(self, rhs: SimTime) -> Micros {
        self.since(rhs)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let us = self.0;
        if us.is_multiple_of(SEC) {
            write!(f, "{}s", us / SEC)
        } else if us.is_multiple_of(MS) {
            write!(f, "{}ms", us / MS)
        } else {
            write!(f, "{}us", us)
        }
    }
}

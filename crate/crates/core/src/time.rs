//! Timestamps and clocks.
//!
//! All runtime timing is kept in integer microseconds so that virtual-clock
//! runs are exact and reproducible. Values cross into `f64` seconds only at
//! the metric and serialization boundary.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};
use std::time::{Duration, Instant};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A point or span on a monotonic clock, in whole microseconds.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Micros(pub u64);

impl Micros {
    pub const ZERO: Micros = Micros(0);
    pub const MAX: Micros = Micros(u64::MAX);

    /// Rounds a non-negative number of seconds to the nearest microsecond.
    /// Negative and NaN inputs map to zero.
    pub fn from_secs_f64(secs: f64) -> Micros {
        if secs.is_nan() || secs <= 0.0 {
            return Micros::ZERO;
        }
        let us = (secs * 1e6).round();
        if us >= u64::MAX as f64 {
            Micros::MAX
        } else {
            Micros(us as u64)
        }
    }

    pub fn is_zero(&self) -> bool {
        self.0 == 0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_sub(self, rhs: Micros) -> Micros {
        Micros(self.0.saturating_sub(rhs.0))
    }

    pub fn as_duration(self) -> Duration {
        Duration::from_micros(self.0)
    }
}

impl Add for Micros {
    type Output = Micros;
    fn add(self, rhs: Micros) -> Micros {
        Micros(self.0.saturating_add(rhs.0))
    }
}

impl AddAssign for Micros {
    fn add_assign(&mut self, rhs: Micros) {
        *self = *self + rhs;
    }
}

impl Sub for Micros {
    type Output = Micros;
    fn sub(self, rhs: Micros) -> Micros {
        self.saturating_sub(rhs)
    }
}

impl fmt::Display for Micros {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

// Serialized as decimal seconds. Parsing rounds to the nearest microsecond,
// so any value written by `Serialize` reads back identically.
impl Serialize for Micros {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.as_secs_f64())
    }
}

impl<'de> Deserialize<'de> for Micros {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let secs = f64::deserialize(deserializer)?;
        if !secs.is_finite() || secs < 0.0 {
            return Err(serde::de::Error::custom(format!(
                "timestamp must be a finite non-negative number of seconds, got {secs}"
            )));
        }
        Ok(Micros::from_secs_f64(secs))
    }
}

/// Source of monotonic timestamps for one episode.
pub trait Clock {
    fn now(&self) -> Micros;
}

/// Wall-clock monotonic time measured from the instant the clock was created.
#[derive(Copy, Clone, Debug)]
pub struct MonotonicClock {
    origin: Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        MonotonicClock {
            origin: Instant::now(),
        }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now(&self) -> Micros {
        Micros(self.origin.elapsed().as_micros() as u64)
    }
}

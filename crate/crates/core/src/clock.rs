//! Wall-clock abstraction so multi-day audit schedules can run instantly in tests.

use std::sync::Mutex;
use std::time::Duration;

use chrono::{DateTime, Utc};

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
    fn sleep(&self, duration: Duration);

    /// Sleeps until `deadline`; returns immediately if it has passed.
    fn sleep_until(&self, deadline: DateTime<Utc>) {
        if let Ok(remaining) = (deadline - self.now()).to_std() {
            if !remaining.is_zero() {
                self.sleep(remaining);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }

    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// A clock whose `sleep` advances time without blocking.
#[derive(Debug)]
pub struct VirtualClock {
    now: Mutex<DateTime<Utc>>,
}

impl VirtualClock {
    pub fn starting_at(start: DateTime<Utc>) -> Self {
        VirtualClock {
            now: Mutex::new(start),
        }
    }

    pub fn advance(&self, duration: Duration) {
        let mut now = self.now.lock().expect("clock lock");
        *now += chrono::Duration::from_std(duration).expect("duration in range");
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.now.lock().expect("clock lock")
    }

    fn sleep(&self, duration: Duration) {
        self.advance(duration);
    }
}

impl<C: Clock + ?Sized> Clock for &C {
    fn now(&self) -> DateTime<Utc> {
        (**self).now()
    }

    fn sleep(&self, duration: Duration) {
        (**self).sleep(duration)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn virtual_sleep_advances() {
        let start = Utc.with_ymd_and_hms(2012, 4, 1, 0, 0, 0).unwrap();
        let clock = VirtualClock::starting_at(start);
        clock.sleep(Duration::from_secs(48 * 3600));
        assert_eq!(clock.now(), start + chrono::Duration::hours(48));
        clock.sleep_until(start);
        assert_eq!(clock.now(), start + chrono::Duration::hours(48));
        clock.sleep_until(start + chrono::Duration::hours(50));
        assert_eq!(clock.now(), start + chrono::Duration::hours(50));
    }
}

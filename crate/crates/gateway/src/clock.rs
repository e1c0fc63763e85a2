//! Time source shared by retries, rate limiting and latency measurement.

use std::time::{Duration, Instant};

use async_trait::async_trait;
use chrono::{DateTime, TimeZone, Utc};
use parking_lot::Mutex;

#[async_trait]
pub trait Clock: Send + Sync {
    /// Monotonic time since the clock was created.
    fn now(&self) -> Duration;
    fn wall(&self) -> DateTime<Utc>;
    async fn sleep(&self, d: Duration);
}

#[derive(Debug)]
pub struct SystemClock {
    start: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock {
            start: Instant::now(),
        }
    }
}

#[async_trait]
impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.start.elapsed()
    }

    fn wall(&self) -> DateTime<Utc> {
        Utc::now()
    }

    async fn sleep(&self, d: Duration) {
        tokio::time::sleep(d).await;
    }
}

/// Deterministic clock: time moves only when someone sleeps, and sleeping
/// returns immediately after advancing.
#[derive(Debug)]
pub struct VirtualClock {
    base: DateTime<Utc>,
    now: Mutex<Duration>,
    sleeps: Mutex<Vec<Duration>>,
}

impl VirtualClock {
    pub fn new(base: DateTime<Utc>) -> Self {
        VirtualClock {
            base,
            now: Mutex::new(Duration::ZERO),
            sleeps: Mutex::new(Vec::new()),
        }
    }

    pub fn advance(&self, d: Duration) {
        *self.now.lock() += d;
    }

    /// Every requested sleep duration, in call order.
    pub fn sleeps(&self) -> Vec<Duration> {
        self.sleeps.lock().clone()
    }
}

impl Default for VirtualClock {
    fn default() -> Self {
        VirtualClock::new(Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap())
    }
}

#[async_trait]
impl Clock for VirtualClock {
    fn now(&self) -> Duration {
        *self.now.lock()
    }

    fn wall(&self) -> DateTime<Utc> {
        self.base + chrono::Duration::from_std(self.now()).expect("virtual time in range")
    }

    async fn sleep(&self, d: Duration) {
        self.sleeps.lock().push(d);
        let target = self.now() + d;
        {
            let mut now = self.now.lock();
            if *now < target {
                *now = target;
            }
        }
        tokio::task::yield_now().await;
    }
}

pub fn rfc3339(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

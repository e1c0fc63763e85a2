//! Sliding-window request limiter: at most `requests` grants in any
//! window of `window` length.

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;

use crate::clock::Clock;

pub struct RateLimiter {
    requests: usize,
    window: Duration,
    clock: Arc<dyn Clock>,
    granted: Mutex<VecDeque<Duration>>,
}

impl RateLimiter {
    pub fn new(requests: u32, window: Duration, clock: Arc<dyn Clock>) -> Self {
        assert!(requests > 0 && !window.is_zero(), "empty rate limit");
        RateLimiter {
            requests: requests as usize,
            window,
            clock,
            granted: Mutex::new(VecDeque::new()),
        }
    }

    /// Wait until a slot is free, then take it. Returns the grant time.
    pub async fn acquire(&self) -> Duration {
        loop {
            let wait = {
                let mut granted = self.granted.lock();
                let now = self.clock.now().max(granted.back().copied().unwrap_or_default());
                while granted
                    .front()
                    .is_some_and(|t| now.saturating_sub(*t) >= self.window)
                {
                    granted.pop_front();
                }
                if granted.len() < self.requests {
                    granted.push_back(now);
                    return now;
                }
                *granted.front().expect("full window") + self.window - now
            };
            self.clock.sleep(wait).await;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::VirtualClock;

    fn max_in_window(grants: &[Duration], window: Duration) -> usize {
        grants
            .iter()
            .map(|start| {
                grants
                    .iter()
                    .filter(|t| **t >= *start && **t < *start + window)
                    .count()
            })
            .max()
            .unwrap_or(0)
    }

    #[tokio::test]
    async fn sequential_never_exceeds_limit() {
        let clock = Arc::new(VirtualClock::default());
        let window = Duration::from_secs(60);
        let limiter = RateLimiter::new(10, window, clock.clone());
        let mut grants = Vec::new();
        for i in 0..35 {
            if i % 7 == 0 {
                clock.advance(Duration::from_secs(13));
            }
            grants.push(limiter.acquire().await);
        }
        assert_eq!(max_in_window(&grants, window), 10);
        assert!(grants.windows(2).all(|w| w[0] <= w[1]));
    }

    #[tokio::test(flavor = "multi_thread", worker_threads = 4)]
    async fn concurrent_never_exceeds_limit() {
        let clock = Arc::new(VirtualClock::default());
        let window = Duration::from_secs(10);
        let limiter = Arc::new(RateLimiter::new(3, window, clock.clone()));
        let mut handles = Vec::new();
        for _ in 0..24 {
            let l = limiter.clone();
            handles.push(tokio::spawn(async move { l.acquire().await }));
        }
        let mut grants = Vec::new();
        for h in handles {
            grants.push(h.await.unwrap());
        }
        grants.sort();
        assert_eq!(grants.len(), 24);
        assert!(max_in_window(&grants, window) <= 3);
    }
}

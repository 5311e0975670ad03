//! Token-bucket admission control shared by every caller of a gateway.

use std::sync::Mutex;
use std::time::{Duration, Instant};

#[derive(Debug)]
struct Bucket {
    tokens: f64,
    last: Instant,
}

#[derive(Debug)]
pub struct TokenBucket {
    capacity: f64,
    per_second: f64,
    state: Mutex<Bucket>,
}

impl TokenBucket {
    /// `requests_per_minute` sustained, bursts of up to `burst` back-to-back calls.
    pub fn new(requests_per_minute: u32, burst: u32) -> Self {
        let capacity = f64::from(burst.max(1));
        TokenBucket {
            capacity,
            per_second: f64::from(requests_per_minute.max(1)) / 60.0,
            state: Mutex::new(Bucket { tokens: capacity, last: Instant::now() }),
        }
    }

    /// Takes a token at `now`, or reports how long until one is available.
    pub fn try_acquire_at(&self, now: Instant) -> Result<(), Duration> {
        let mut b = self.state.lock().unwrap();
        let elapsed = now.saturating_duration_since(b.last).as_secs_f64();
        b.tokens = (b.tokens + elapsed * self.per_second).min(self.capacity);
        b.last = b.last.max(now);
        if b.tokens >= 1.0 {
            b.tokens -= 1.0;
            Ok(())
        } else {
            Err(Duration::from_secs_f64((1.0 - b.tokens) / self.per_second))
        }
    }

    /// Blocks until a token is available.
    pub fn acquire(&self) {
        while let Err(wait) = self.try_acquire_at(Instant::now()) {
            std::thread::sleep(wait);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn burst_then_throttle() {
        let bucket = TokenBucket::new(60, 2);
        let t0 = Instant::now();
        assert!(bucket.try_acquire_at(t0).is_ok());
        assert!(bucket.try_acquire_at(t0).is_ok());
        let wait = bucket.try_acquire_at(t0).unwrap_err();
        assert!((wait.as_secs_f64() - 1.0).abs() < 1e-6);
        assert!(bucket.try_acquire_at(t0 + Duration::from_millis(1000)).is_ok());
        assert!(bucket.try_acquire_at(t0 + Duration::from_millis(1000)).is_err());
    }

    #[test]
    fn refill_is_capped() {
        let bucket = TokenBucket::new(600, 3);
        let later = Instant::now() + Duration::from_secs(3600);
        let admitted = (0..10).filter(|_| bucket.try_acquire_at(later).is_ok()).count();
        assert_eq!(admitted, 3);
    }
}

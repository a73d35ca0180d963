//! Global request throttling: a token bucket for requests per minute and a
//! cap on requests in flight.

use std::sync::{Condvar, Mutex};
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
    pub fn per_minute(requests: u32) -> Self {
        let capacity = f64::from(requests.max(1));
        Self {
            capacity,
            per_second: capacity / 60.0,
            state: Mutex::new(Bucket {
                tokens: capacity,
                last: Instant::now(),
            }),
        }
    }

    /// Takes one token, sleeping until one is available.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut bucket = self.state.lock().expect("bucket");
                let now = Instant::now();
                let elapsed = now.duration_since(bucket.last).as_secs_f64();
                bucket.tokens = (bucket.tokens + elapsed * self.per_second).min(self.capacity);
                bucket.last = now;
                if bucket.tokens >= 1.0 {
                    bucket.tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - bucket.tokens) / self.per_second)
            };
            std::thread::sleep(wait);
        }
    }
}

#[derive(Debug)]
pub struct InFlightBudget {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a> {
    budget: &'a InFlightBudget,
}

impl InFlightBudget {
    pub fn new(limit: usize) -> Self {
        Self {
            limit: limit.max(1),
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut active = self.active.lock().expect("budget");
        while *active >= self.limit {
            active = self.freed.wait(active).expect("budget");
        }
        *active += 1;
        Permit { budget: self }
    }

    pub fn active(&self) -> usize {
        *self.active.lock().expect("budget")
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.budget.active.lock().expect("budget") -= 1;
        self.budget.freed.notify_one();
    }
}

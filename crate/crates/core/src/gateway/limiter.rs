use std::sync::{Condvar, Mutex};

/// Counting semaphore bounding concurrent backend requests.
#[derive(Debug)]
pub struct Limiter {
    limit: usize,
    in_use: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a> {
    limiter: &'a Limiter,
}

impl Limiter {
    pub fn new(limit: usize) -> Self {
        Self {
            limit: limit.max(1),
            in_use: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut in_use = self.in_use.lock().unwrap();
        while *in_use >= self.limit {
            in_use = self.freed.wait(in_use).unwrap();
        }
        *in_use += 1;
        Permit { limiter: self }
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut in_use = self.limiter.in_use.lock().unwrap();
        *in_use -= 1;
        self.limiter.freed.notify_one();
    }
}

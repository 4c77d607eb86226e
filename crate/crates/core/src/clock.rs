//! Poisson clocks running in local time.
//!
//! Each clock carries marks of a rate-`rate` Poisson process on its own local
//! time axis. Local time advances at an integer speed (the number of active
//! particles the clock serves) that the caller updates as the state changes.
//! Firing times in real time are kept in a binary heap; stale entries are
//! skipped using per-clock version numbers.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::rng::{exponential, RngStream};

#[derive(Clone, Debug)]
struct Clock {
    rng: RngStream,
    local: f64,
    last_real: f64,
    speed: u32,
    next_mark: f64,
    version: u64,
}

#[derive(Clone, Copy, Debug)]
struct Pending {
    time: f64,
    key: usize,
    version: u64,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.key.cmp(&other.key))
            .then(self.version.cmp(&other.version))
    }
}

#[derive(Clone, Debug)]
pub struct LocalClocks {
    rate: f64,
    clocks: Vec<Clock>,
    heap: BinaryHeap<Reverse<Pending>>,
}

impl LocalClocks {
    pub fn new(rate: f64) -> Self {
        LocalClocks {
            rate,
            clocks: Vec::new(),
            heap: BinaryHeap::new(),
        }
    }

    /// Registers a clock at speed zero and returns its key.
    pub fn add(&mut self, mut rng: RngStream) -> usize {
        let first = exponential(&mut rng, self.rate);
        self.clocks.push(Clock {
            rng,
            local: 0.0,
            last_real: 0.0,
            speed: 0,
            next_mark: first,
            version: 0,
        });
        self.clocks.len() - 1
    }

    pub fn len(&self) -> usize {
        self.clocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clocks.is_empty()
    }

    pub fn speed(&self, key: usize) -> u32 {
        self.clocks[key].speed
    }

    /// Local time of a clock at real time `now`.
    pub fn local_time(&self, key: usize, now: f64) -> f64 {
        let c = &self.clocks[key];
        c.local + c.speed as f64 * (now - c.last_real)
    }

    fn schedule(&mut self, key: usize) {
        let c = &mut self.clocks[key];
        c.version += 1;
        if c.speed > 0 {
            let time = c.last_real + (c.next_mark - c.local) / c.speed as f64;
            self.heap.push(Reverse(Pending {
                time,
                key,
                version: c.version,
            }));
        }
    }

    /// Changes the speed of a clock at real time `now`.
    pub fn set_speed(&mut self, key: usize, speed: u32, now: f64) {
        let c = &mut self.clocks[key];
        if c.speed == speed {
            return;
        }
        c.local += c.speed as f64 * (now - c.last_real);
        c.last_real = now;
        c.speed = speed;
        self.schedule(key);
    }

    /// Pops the next firing at or before `horizon`, advancing that clock past
    /// its mark. The clock keeps its speed; callers update it afterwards.
    pub fn next_firing(&mut self, horizon: f64) -> Option<(f64, usize)> {
        while let Some(Reverse(p)) = self.heap.peek().copied() {
            if p.version != self.clocks[p.key].version {
                self.heap.pop();
                continue;
            }
            if p.time > horizon {
                return None;
            }
            self.heap.pop();
            let rate = self.rate;
            let c = &mut self.clocks[p.key];
            c.local = c.next_mark;
            c.last_real = p.time;
            c.next_mark += exponential(&mut c.rng, rate);
            self.schedule(p.key);
            return Some((p.time, p.key));
        }
        None
    }

    /// True if no clock is running.
    pub fn all_stopped(&self) -> bool {
        self.clocks.iter().all(|c| c.speed == 0)
    }
}

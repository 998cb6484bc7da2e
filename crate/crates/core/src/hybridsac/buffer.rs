use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numgrad::Prng;
use crate::policykit::HybridAction;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: HybridAction,
    pub r: f64,
    pub s_next: Vec<f64>,
    /// True terminal; time-limit truncation is stored as `false`.
    pub done: bool,
}

impl Transition {
    pub fn is_finite(&self) -> bool {
        self.r.is_finite()
            && self.s.iter().chain(&self.s_next).all(|v| v.is_finite())
            && self.a.continuous.iter().flatten().all(|v| v.is_finite())
    }
}

/// Fixed-capacity FIFO ring with uniform sampling (with replacement).
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay buffer capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            items: Vec::new(),
            next: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends, evicting the oldest item once full.
    pub fn push(&mut self, t: Transition) -> Result<()> {
        if !t.is_finite() {
            return Err(Error::Training("refusing to store a non-finite transition".into()));
        }
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
        Ok(())
    }

    /// Items from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity { 0 } else { self.next };
        self.items[split..].iter().chain(&self.items[..split])
    }

    pub fn sample_indices(&self, n: usize, rng: &mut Prng) -> Vec<usize> {
        (0..n).map(|_| rng.below(self.items.len())).collect()
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    pub fn sample(&self, n: usize, rng: &mut Prng) -> Result<Vec<&Transition>> {
        if self.items.is_empty() {
            return Err(Error::Training("cannot sample from an empty replay buffer".into()));
        }
        Ok(self.sample_indices(n, rng).into_iter().map(|i| &self.items[i]).collect())
    }
}

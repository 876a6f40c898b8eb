use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// One stored experience. `next_inputs` holds the network inputs of every
/// candidate action in the next state; empty marks a terminal transition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub input: Vec<f64>,
    pub reward: f64,
    pub next_inputs: Vec<Vec<f64>>,
}

impl Transition {
    pub fn new(input: Vec<f64>, reward: f64, next_inputs: Vec<Vec<f64>>) -> Self {
        Self {
            input,
            reward,
            next_inputs,
        }
    }
}

/// Bounded FIFO experience memory.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(4096)),
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Up to `batch_size` distinct transitions chosen uniformly.
    pub fn sample<R: Rng>(&self, batch_size: usize, rng: &mut R) -> Vec<&Transition> {
        let k = batch_size.min(self.items.len());
        rand::seq::index::sample(rng, self.items.len(), k)
            .into_iter()
            .map(|i| &self.items[i])
            .collect()
    }
}

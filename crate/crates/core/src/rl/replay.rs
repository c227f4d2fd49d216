//! Prioritized experience replay over a sum tree.
//!
//! Leaves hold priorities raised to the prioritization exponent; internal
//! nodes are recomputed as the sum of their children on every update, so the
//! root always equals the tree-order sum of the leaves exactly.

use rand::Rng;

use crate::error::{CoreError, Result};

/// One interaction step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    /// Negative offloading latency, seconds.
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Array-backed sum tree with `2·capacity − 1` nodes; leaves start at
/// `capacity − 1`.
#[derive(Debug, Clone)]
pub struct SumTree {
    capacity: usize,
    tree: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1);
        Self {
            capacity,
            tree: vec![0.0; 2 * capacity - 1],
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total(&self) -> f64 {
        self.tree[0]
    }

    pub fn leaf(&self, idx: usize) -> f64 {
        self.tree[idx + self.capacity - 1]
    }

    /// Set a leaf and recompute every ancestor as left + right.
    pub fn set(&mut self, idx: usize, value: f64) {
        debug_assert!(idx < self.capacity);
        let mut i = idx + self.capacity - 1;
        self.tree[i] = value;
        while i > 0 {
            i = (i - 1) / 2;
            self.tree[i] = self.tree[2 * i + 1] + self.tree[2 * i + 2];
        }
    }

    /// Leaf index holding the cumulative position `s` in [0, total).
    pub fn find(&self, s: f64) -> usize {
        let mut s = s;
        let mut i = 0usize;
        while i < self.capacity - 1 {
            let left = 2 * i + 1;
            let right = left + 1;
            if s <= self.tree[left] || self.tree[right] == 0.0 {
                i = left;
            } else {
                s -= self.tree[left];
                i = right;
            }
        }
        i - (self.capacity - 1)
    }

    /// Rebuild the parent layers from the leaves into a fresh tree. Used as
    /// the exactness oracle: a correctly maintained tree equals its rebuild
    /// bit for bit.
    pub fn rebuilt(&self) -> SumTree {
        let mut fresh = SumTree::new(self.capacity);
        fresh.tree[self.capacity - 1..].copy_from_slice(&self.tree[self.capacity - 1..]);
        for i in (0..self.capacity - 1).rev() {
            fresh.tree[i] = fresh.tree[2 * i + 1] + fresh.tree[2 * i + 2];
        }
        fresh
    }

    pub fn nodes(&self) -> &[f64] {
        &self.tree
    }
}

/// Replay buffer with proportional prioritization and importance weights.
#[derive(Debug, Clone)]
pub struct PrioritizedReplay {
    capacity: usize,
    /// Prioritization exponent applied to stored priorities.
    pub alpha: f64,
    /// Importance-sampling exponent annealed from `beta_start` to 1.
    pub beta_start: f64,
    pub beta_anneal_steps: u64,
    /// Added to |TD error| when priorities are refreshed.
    pub priority_floor: f64,
    tree: SumTree,
    data: Vec<Transition>,
    write: usize,
    len: usize,
    max_priority: f64,
}

impl Default for PrioritizedReplay {
    fn default() -> Self {
        Self::new(50_000)
    }
}

impl PrioritizedReplay {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1);
        Self {
            capacity,
            alpha: 0.6,
            beta_start: 0.4,
            beta_anneal_steps: 20_000,
            priority_floor: 1e-3,
            tree: SumTree::new(capacity),
            data: Vec::with_capacity(capacity.min(4096)),
            write: 0,
            len: 0,
            max_priority: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, idx: usize) -> &Transition {
        &self.data[idx]
    }

    pub fn raw_priority(&self, idx: usize) -> f64 {
        self.tree.leaf(idx).powf(1.0 / self.alpha)
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    /// Importance exponent after `train_steps` steps of annealing.
    pub fn beta_at(&self, train_steps: u64) -> f64 {
        if self.beta_anneal_steps == 0 {
            return 1.0;
        }
        let frac = (train_steps as f64 / self.beta_anneal_steps as f64).min(1.0);
        self.beta_start + (1.0 - self.beta_start) * frac
    }

    /// Insert with the running maximum priority (1 when empty); evicts the
    /// oldest entry when full.
    pub fn store(&mut self, t: Transition) {
        let idx = self.write;
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[idx] = t;
        }
        let p = self.max_priority;
        self.tree.set(idx, p.powf(self.alpha));
        self.write = (self.write + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
    }

    /// Refresh a sampled item's priority (callers pass |TD| + floor).
    pub fn update_priority(&mut self, idx: usize, priority: f64) {
        debug_assert!(priority > 0.0);
        self.max_priority = self.max_priority.max(priority);
        self.tree.set(idx, priority.powf(self.alpha));
    }

    /// Stratified proportional sampling.
    ///
    /// Returns indices and importance weights `(len·P(i))^{−β}` normalized by
    /// the batch maximum.
    pub fn sample<R: Rng>(
        &self,
        batch_size: usize,
        beta: f64,
        rng: &mut R,
    ) -> Result<(Vec<usize>, Vec<f64>)> {
        if self.len < batch_size {
            return Err(CoreError::NotReady {
                have: self.len,
                need: batch_size,
            });
        }
        let total = self.tree.total();
        debug_assert!(total > 0.0);
        let segment = total / batch_size as f64;
        let mut indices = Vec::with_capacity(batch_size);
        let mut weights = Vec::with_capacity(batch_size);
        for k in 0..batch_size {
            let s = (k as f64 + rng.gen::<f64>()) * segment;
            let idx = self.tree.find(s.min(total * (1.0 - 1e-12)));
            let p = self.tree.leaf(idx) / total;
            indices.push(idx);
            weights.push((self.len as f64 * p).powf(-beta));
        }
        let max_w = weights.iter().cloned().fold(f64::MIN, f64::max);
        for w in &mut weights {
            *w /= max_w;
        }
        Ok((indices, weights))
    }
}

//! Twin transition buffers for independence sampling, and plain uniform
//! sampling from a single buffer.

use std::collections::VecDeque;

use rand::Rng;
use thiserror::Error;

use crate::linalg::{Matrix, Vector};
use crate::mdp::Transition;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("buffers not ready: warmup or batch size not met")]
pub struct NotReady;

/// Which buffer receives a transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Routing {
    /// Odd episodes go to `B1`, even episodes to `B2`.
    EpisodeParity,
    /// Alternate the collecting buffer every `window` inserted transitions
    /// (for continuing tasks).
    Window(usize),
}

/// Running sums of `rho phi (gamma phi' - phi)^T` and `rho phi r`.
#[derive(Debug, Clone)]
pub struct Aggregate {
    pub sum_a: Matrix,
    pub sum_b: Vector,
    pub count: usize,
}

impl Aggregate {
    pub fn new(d: usize) -> Self {
        Self { sum_a: Matrix::zeros(d, d), sum_b: Vector::zeros(d), count: 0 }
    }

    pub fn add(&mut self, t: &Transition) {
        self.accumulate(t, 1.0);
        self.count += 1;
    }

    pub fn remove(&mut self, t: &Transition) {
        self.accumulate(t, -1.0);
        self.count -= 1;
    }

    fn accumulate(&mut self, t: &Transition, sign: f64) {
        let g = t.td_gradient();
        self.sum_a.ger(sign * t.rho, &t.phi, &g, 1.0);
        self.sum_b.axpy(sign * t.rho * t.reward, &t.phi, 1.0);
    }

    /// Sample averages `(A~, b~)`, or `None` while empty.
    pub fn mean(&self) -> Option<(Matrix, Vector)> {
        if self.count == 0 {
            return None;
        }
        let n = self.count as f64;
        Some((&self.sum_a / n, &self.sum_b / n))
    }
}

#[derive(Debug, Clone)]
struct Store {
    items: VecDeque<Transition>,
    agg: Aggregate,
}

impl Store {
    fn new(d: usize) -> Self {
        Self { items: VecDeque::new(), agg: Aggregate::new(d) }
    }

    fn push(&mut self, t: Transition, capacity: Option<usize>) {
        self.agg.add(&t);
        self.items.push_back(t);
        if let Some(cap) = capacity {
            while self.items.len() > cap {
                let old = self.items.pop_front().expect("non-empty");
                self.agg.remove(&old);
            }
        }
    }
}

/// Two episode-disjoint transition stores.
#[derive(Debug, Clone)]
pub struct TwinBuffers {
    b1: Store,
    b2: Store,
    warmup: usize,
    routing: Routing,
    capacity: Option<usize>,
    inserted: usize,
}

/// One mini-batch from each buffer.
#[derive(Debug, Clone)]
pub struct BatchPair<'a> {
    pub batch1: Vec<&'a Transition>,
    pub batch2: Vec<&'a Transition>,
}

impl TwinBuffers {
    pub fn new(dim: usize, warmup: usize) -> Self {
        Self {
            b1: Store::new(dim),
            b2: Store::new(dim),
            warmup,
            routing: Routing::EpisodeParity,
            capacity: None,
            inserted: 0,
        }
    }

    pub fn with_routing(mut self, routing: Routing) -> Self {
        self.routing = routing;
        self
    }

    /// FIFO cap per buffer; unbounded by default.
    pub fn with_capacity(mut self, capacity: Option<usize>) -> Self {
        self.capacity = capacity;
        self
    }

    pub fn warmup(&self) -> usize {
        self.warmup
    }

    pub fn insert(&mut self, t: Transition) {
        let first = match self.routing {
            Routing::EpisodeParity => t.episode_idx % 2 == 1,
            Routing::Window(w) => (self.inserted / w.max(1)) % 2 == 0,
        };
        self.inserted += 1;
        if first {
            self.b1.push(t, self.capacity);
        } else {
            self.b2.push(t, self.capacity);
        }
    }

    pub fn b1(&self) -> &VecDeque<Transition> {
        &self.b1.items
    }

    pub fn b2(&self) -> &VecDeque<Transition> {
        &self.b2.items
    }

    pub fn len1(&self) -> usize {
        self.b1.items.len()
    }

    pub fn len2(&self) -> usize {
        self.b2.items.len()
    }

    pub fn aggregate1(&self) -> &Aggregate {
        &self.b1.agg
    }

    pub fn aggregate2(&self) -> &Aggregate {
        &self.b2.agg
    }

    /// Both buffers strictly exceed the warmup size.
    pub fn is_warm(&self) -> bool {
        self.len1() > self.warmup && self.len2() > self.warmup
    }

    /// Uniform with-replacement batches, `m1` from `B1` and `m2` from `B2`.
    pub fn sample_pair<R: Rng + ?Sized>(
        &self,
        m1: usize,
        m2: usize,
        rng: &mut R,
    ) -> Result<BatchPair<'_>, NotReady> {
        if !self.is_warm() || self.len1() < m1 || self.len2() < m2 {
            return Err(NotReady);
        }
        let batch1 = draw(&self.b1.items, m1, rng);
        let batch2 = draw(&self.b2.items, m2, rng);
        Ok(BatchPair { batch1, batch2 })
    }
}

fn draw<'a, R: Rng + ?Sized>(items: &'a VecDeque<Transition>, m: usize, rng: &mut R) -> Vec<&'a Transition> {
    (0..m).map(|_| &items[rng.random_range(0..items.len())]).collect()
}

/// Uniform with-replacement batch from a single buffer.
pub fn sample_uniform<'a, R: Rng + ?Sized>(
    buffer: &'a [Transition],
    m: usize,
    rng: &mut R,
) -> Result<Vec<&'a Transition>, NotReady> {
    if buffer.is_empty() || buffer.len() < m {
        return Err(NotReady);
    }
    Ok((0..m).map(|_| &buffer[rng.random_range(0..buffer.len())]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(ep: u64, r: f64) -> Transition {
        Transition {
            phi: Vector::from_element(1, 1.0),
            phi_next: Vector::zeros(1),
            reward: r,
            rho: 1.0,
            discount: 0.9,
            episode_idx: ep,
            state: 0,
            next_state: 1,
        }
    }

    #[test]
    fn parity_routing() {
        let mut b = TwinBuffers::new(1, 0);
        b.insert(tr(1, 0.0));
        b.insert(tr(1, 0.0));
        b.insert(tr(2, 0.0));
        assert_eq!((b.len1(), b.len2()), (2, 1));
        let mut b = TwinBuffers::new(1, 0);
        for ep in 1..=10 {
            b.insert(tr(ep, 0.0));
        }
        assert_eq!((b.len1(), b.len2()), (5, 5));
    }

    #[test]
    fn warmup_is_strict() {
        let mut b = TwinBuffers::new(1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..3 {
            b.insert(tr(1, 0.0));
        }
        b.insert(tr(2, 0.0));
        b.insert(tr(2, 0.0));
        assert_eq!(b.sample_pair(1, 1, &mut rng).err(), Some(NotReady));
        b.insert(tr(2, 0.0));
        let pair = b.sample_pair(1, 1, &mut rng).unwrap();
        assert_ne!(pair.batch1[0].episode_idx, pair.batch2[0].episode_idx);
    }

    #[test]
    fn window_routing_alternates() {
        let mut b = TwinBuffers::new(1, 0).with_routing(Routing::Window(3));
        for _ in 0..9 {
            b.insert(tr(0, 0.0));
        }
        assert_eq!((b.len1(), b.len2()), (6, 3));
    }

    #[test]
    fn capacity_evicts_and_keeps_sums() {
        let mut b = TwinBuffers::new(1, 0).with_capacity(Some(2));
        for r in [1.0, 2.0, 3.0] {
            b.insert(tr(1, r));
        }
        assert_eq!(b.len1(), 2);
        let (_, mean_b) = b.aggregate1().mean().unwrap();
        assert!((mean_b[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn uniform_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_uniform(&[], 1, &mut rng).err(), Some(NotReady));
        let one = [tr(0, 5.0)];
        assert_eq!(sample_uniform(&one, 1, &mut rng).unwrap()[0], &one[0]);
    }
}

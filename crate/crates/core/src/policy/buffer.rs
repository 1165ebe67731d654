use serde::{Deserialize, Serialize};

use crate::rng::Rng;

/// One observed or hallucinated step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
}

/// Replay storage with optional FIFO eviction.
///
/// Slots are overwritten in insertion order once `capacity` is reached, so
/// [`TransitionBuffer::as_slice`] is in storage order, not arrival order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TransitionBuffer {
    items: Vec<Transition>,
    capacity: Option<usize>,
    next: usize,
}

impl TransitionBuffer {
    pub fn new(capacity: Option<usize>) -> Self {
        assert!(capacity != Some(0), "a replay buffer needs room for at least one transition");
        TransitionBuffer { items: Vec::new(), capacity, next: 0 }
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        match self.capacity {
            Some(cap) if self.items.len() == cap => {
                self.items[self.next] = t;
                self.next = (self.next + 1) % cap;
            }
            _ => self.items.push(t),
        }
    }

    pub fn extend(&mut self, ts: impl IntoIterator<Item = Transition>) {
        for t in ts {
            self.push(t);
        }
    }

    pub fn clear(&mut self) {
        self.items.clear();
        self.next = 0;
    }

    pub fn as_slice(&self) -> &[Transition] {
        &self.items
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// Transitions from oldest to newest.
    pub fn iter_fifo(&self) -> impl Iterator<Item = &Transition> {
        self.items[self.next..].iter().chain(&self.items[..self.next])
    }

    /// `n` uniform draws with replacement.
    pub fn sample_indices(&self, n: usize, rng: &mut Rng) -> Vec<usize> {
        assert!(!self.is_empty(), "sampling from an empty buffer");
        (0..n).map(|_| rng.below(self.items.len())).collect()
    }

    pub fn sample(&self, n: usize, rng: &mut Rng) -> Vec<&Transition> {
        self.sample_indices(n, rng).into_iter().map(|i| &self.items[i]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(r: f64) -> Transition {
        Transition { state: vec![r], action: vec![], next_state: vec![r], reward: r, terminal: false }
    }

    #[test]
    fn fifo_eviction_at_capacity() {
        let mut b = TransitionBuffer::new(Some(3));
        for i in 0..5 {
            b.push(t(i as f64));
        }
        assert_eq!(b.len(), 3);
        let order: Vec<f64> = b.iter_fifo().map(|x| x.reward).collect();
        assert_eq!(order, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn unbounded_buffer_keeps_everything() {
        let mut b = TransitionBuffer::new(None);
        b.extend((0..100).map(|i| t(i as f64)));
        assert_eq!(b.len(), 100);
        assert_eq!(b.get(99).reward, 99.0);
        b.clear();
        assert!(b.is_empty());
    }

    #[test]
    fn sampling_is_seeded() {
        let mut b = TransitionBuffer::new(None);
        b.extend((0..10).map(|i| t(i as f64)));
        let a = b.sample_indices(20, &mut Rng::seed_from(3));
        let c = b.sample_indices(20, &mut Rng::seed_from(3));
        assert_eq!(a, c);
        assert!(a.iter().all(|&i| i < 10));
    }
}

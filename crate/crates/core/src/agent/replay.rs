use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One local experience of a UAV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    /// Pre-projection actor output (noise included).
    pub raw_action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity FIFO ring sampled uniformly without replacement.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    items: Vec<T>,
    capacity: usize,
    cursor: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            cursor: 0,
        }
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

    pub fn store(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.cursor] = item;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Vec<&T>> {
        if batch_size > self.items.len() || batch_size == 0 {
            return Err(Error::InsufficientBuffer {
                requested: batch_size,
                size: self.items.len(),
            });
        }
        Ok(index::sample(rng, self.items.len(), batch_size)
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }

    /// Items from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        let split = if self.items.len() < self.capacity { 0 } else { self.cursor };
        self.items[split..].iter().chain(&self.items[..split])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn ring_evicts_oldest() {
        let mut b = ReplayBuffer::new(2);
        for i in 1..=3 {
            b.store(i);
        }
        assert_eq!(b.len(), 2);
        assert_eq!(b.iter().copied().collect::<Vec<_>>(), vec![2, 3]);
    }

    #[test]
    fn full_sample_is_permutation() {
        let mut b = ReplayBuffer::new(8);
        (0..8).for_each(|i| b.store(i));
        let mut got: Vec<i32> = b.sample(8, &mut rng::stream(1, "r")).unwrap().into_iter().copied().collect();
        got.sort();
        assert_eq!(got, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn insufficient_buffer() {
        let mut b = ReplayBuffer::new(8);
        b.store(1);
        assert!(matches!(
            b.sample(2, &mut rng::stream(1, "r")),
            Err(Error::InsufficientBuffer { requested: 2, size: 1 })
        ));
    }

    #[test]
    fn single_draws_are_uniform() {
        let mut b = ReplayBuffer::new(10);
        (0..10).for_each(|i| b.store(i));
        let mut r = rng::stream(2, "r");
        let n = 100_000;
        let mut counts = [0usize; 10];
        for _ in 0..n {
            counts[*b.sample(1, &mut r).unwrap()[0]] += 1;
        }
        let expected = n as f64 / 10.0;
        let sigma = (n as f64 * 0.1 * 0.9).sqrt();
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        for c in counts {
            assert!((c as f64 - expected).abs() < 3.0 * sigma, "{counts:?}");
        }
        // 9 degrees of freedom, 0.999 quantile
        assert!(chi2 < 27.88, "chi2 {chi2}");
    }
}

use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;

/// Bounded FIFO replay memory.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: VecDeque<T>,
    pushed: u64,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity),
            pushed: 0,
        }
    }

    /// Appends, evicting the oldest item when full.
    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
        self.pushed += 1;
    }

    pub fn extend(&mut self, items: impl IntoIterator<Item = T>) {
        for i in items {
            self.push(i);
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

    /// Total number of items ever pushed.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    /// `n` distinct items chosen uniformly (fewer if the buffer is smaller).
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<&T> {
        let n = n.min(self.items.len());
        index::sample(rng, self.items.len(), n)
            .into_iter()
            .map(|i| &self.items[i])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sampling_is_without_replacement() {
        let mut b = ReplayBuffer::new(50);
        b.extend(0..50);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s: Vec<i32> = b.sample(50, &mut rng).into_iter().copied().collect();
        s.sort();
        assert_eq!(s, (0..50).collect::<Vec<_>>());
        assert_eq!(b.sample(80, &mut rng).len(), 50);
    }

    proptest! {
        #[test]
        fn eviction_is_fifo(capacity in 1usize..64, pushes in 0usize..300) {
            let mut b = ReplayBuffer::new(capacity);
            for i in 0..pushes {
                b.push(i);
                prop_assert!(b.len() <= capacity);
            }
            let kept: Vec<usize> = b.iter().copied().collect();
            let expect: Vec<usize> = (pushes.saturating_sub(capacity)..pushes).collect();
            prop_assert_eq!(kept, expect);
        }
    }
}

use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;

use crate::maze::Observation;

/// One replay entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Observation,
    pub option: usize,
    pub action: usize,
    pub reward: f64,
    pub next_observation: Observation,
    /// The goal was reached; horizon cut-offs are not terminal.
    pub terminal: bool,
    /// Option that a hand-set plan makes active in the next state. When set,
    /// the critic target follows it instead of the learned termination.
    pub next_option: Option<usize>,
}

/// Fixed-capacity FIFO replay memory.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            items: VecDeque::with_capacity(capacity),
            capacity,
        }
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

    pub fn push(&mut self, transition: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(transition);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// `batch_size` distinct entries chosen uniformly, or `None` while the
    /// buffer holds fewer than `batch_size`.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Option<Vec<&Transition>> {
        if batch_size == 0 || self.items.len() < batch_size {
            return None;
        }
        Some(
            index::sample(rng, self.items.len(), batch_size)
                .into_iter()
                .map(|i| &self.items[i])
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(tag: usize) -> Transition {
        Transition {
            observation: Observation(vec![tag as f64]),
            option: 0,
            action: tag % 8,
            reward: -0.01,
            next_observation: Observation(vec![tag as f64 + 1.0]),
            terminal: false,
            next_option: None,
        }
    }

    #[test]
    fn sampling_needs_a_full_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut buf = ReplayBuffer::new(100);
        for i in 0..31 {
            buf.push(t(i));
        }
        assert!(buf.sample(32, &mut rng).is_none());
        buf.push(t(31));
        let batch = buf.sample(32, &mut rng).unwrap();
        assert_eq!(batch.len(), 32);
    }

    #[test]
    fn sampling_is_roughly_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut buf = ReplayBuffer::new(10);
        for i in 0..10 {
            buf.push(t(i));
        }
        let mut counts = [0usize; 10];
        let draws = 20_000;
        for _ in 0..draws {
            for item in buf.sample(1, &mut rng).unwrap() {
                counts[item.observation.0[0] as usize] += 1;
            }
        }
        let expected = draws as f64 / 10.0;
        let sigma = (draws as f64 * 0.1 * 0.9).sqrt();
        for c in counts {
            assert!((c as f64 - expected).abs() < 4.0 * sigma, "{counts:?}");
        }
    }

    proptest! {
        #[test]
        fn keeps_the_most_recent(capacity in 1usize..50, inserts in 0usize..200) {
            let mut buf = ReplayBuffer::new(capacity);
            for i in 0..inserts {
                buf.push(t(i));
            }
            prop_assert_eq!(buf.len(), inserts.min(capacity));
            let kept: Vec<usize> = buf.iter().map(|x| x.observation.0[0] as usize).collect();
            let want: Vec<usize> = (inserts.saturating_sub(capacity)..inserts).collect();
            prop_assert_eq!(kept, want);
        }
    }
}

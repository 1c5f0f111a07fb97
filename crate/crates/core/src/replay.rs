//! Fixed-capacity ring of transitions with uniform mini-batch sampling.

use ndarray::{Array1, Array2};
use rand::seq::index;
use rand::Rng;

use crate::error::{ensure_len, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    /// One entry per agent; a single entry for single-agent learners.
    pub reward_local: Vec<f64>,
    pub reward_global: f64,
    pub next_state: Vec<f64>,
}

/// A sampled mini-batch laid out row-per-transition.
#[derive(Debug, Clone)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards_local: Array2<f64>,
    pub rewards_global: Array1<f64>,
    pub next_states: Array2<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn from_transitions(items: &[&Transition]) -> Self {
        let rows = items.len();
        let dim = |f: fn(&Transition) -> usize| items.first().map_or(0, |t| f(t));
        let (sd, ad, rd) = (dim(|t| t.state.len()), dim(|t| t.action.len()), dim(|t| t.reward_local.len()));
        let mut states = Array2::zeros((rows, sd));
        let mut actions = Array2::zeros((rows, ad));
        let mut rewards_local = Array2::zeros((rows, rd));
        let mut next_states = Array2::zeros((rows, sd));
        let mut rewards_global = Array1::zeros(rows);
        for (i, t) in items.iter().enumerate() {
            states.row_mut(i).assign(&ndarray::ArrayView1::from(&t.state[..]));
            actions.row_mut(i).assign(&ndarray::ArrayView1::from(&t.action[..]));
            rewards_local.row_mut(i).assign(&ndarray::ArrayView1::from(&t.reward_local[..]));
            next_states.row_mut(i).assign(&ndarray::ArrayView1::from(&t.next_state[..]));
            rewards_global[i] = t.reward_global;
        }
        Self { states, actions, rewards_local, rewards_global, next_states }
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    /// Slot the next push writes once the ring is full.
    head: usize,
    dims: Option<(usize, usize, usize)>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: Vec::new(), head: 0, dims: None }
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

    pub fn push(&mut self, t: Transition) -> Result<()> {
        let dims = (t.state.len(), t.action.len(), t.reward_local.len());
        match self.dims {
            Some((s, a, r)) => {
                ensure_len(s, t.state.len())?;
                ensure_len(s, t.next_state.len())?;
                ensure_len(a, t.action.len())?;
                ensure_len(r, t.reward_local.len())?;
            }
            None => {
                ensure_len(dims.0, t.next_state.len())?;
                self.dims = Some(dims);
            }
        }
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
        Ok(())
    }

    /// The `i`-th stored transition counting from the oldest.
    pub fn get(&self, i: usize) -> Option<&Transition> {
        if i >= self.items.len() {
            return None;
        }
        let start = if self.items.len() < self.capacity { 0 } else { self.head };
        self.items.get((start + i) % self.items.len())
    }

    /// Draws `batch` distinct transitions uniformly. Requires more than `batch` stored.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        if self.items.len() <= batch {
            return Err(Error::InsufficientSamples { size: self.items.len(), batch });
        }
        Ok(index::sample(rng, self.items.len(), batch).into_iter().map(|i| &self.items[i]).collect())
    }

    pub fn sample_batch<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Batch> {
        Ok(Batch::from_transitions(&self.sample(batch, rng)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Domain, Stream};
    use proptest::prelude::*;

    fn t(v: f64) -> Transition {
        Transition { state: vec![v], action: vec![v], reward_local: vec![v], reward_global: v, next_state: vec![v] }
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut buf = ReplayBuffer::new(2);
        for v in [1.0, 2.0, 3.0] {
            buf.push(t(v)).unwrap();
        }
        assert_eq!(buf.len(), 2);
        assert_eq!(buf.get(0).unwrap().reward_global, 2.0);
        assert_eq!(buf.get(1).unwrap().reward_global, 3.0);
        assert!(buf.get(2).is_none());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut buf = ReplayBuffer::new(4);
        buf.push(t(1.0)).unwrap();
        let mut bad = t(2.0);
        bad.state.push(0.0);
        assert!(buf.push(bad).is_err());
    }

    #[test]
    fn sample_guard_and_distinctness() {
        let mut buf = ReplayBuffer::new(100);
        let mut rng = stream_rng(0, Domain::Train, Stream::Replay);
        for v in 0..64 {
            buf.push(t(v as f64)).unwrap();
        }
        assert!(matches!(buf.sample(64, &mut rng), Err(Error::InsufficientSamples { .. })));
        buf.push(t(64.0)).unwrap();
        let s = buf.sample(64, &mut rng).unwrap();
        let mut seen: Vec<i64> = s.iter().map(|x| x.reward_global as i64).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 64);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let mut buf = ReplayBuffer::new(100);
        for v in 0..80 {
            buf.push(t(v as f64)).unwrap();
        }
        let a: Vec<f64> = buf.sample(16, &mut stream_rng(5, Domain::Train, Stream::Replay)).unwrap().iter().map(|x| x.reward_global).collect();
        let b: Vec<f64> = buf.sample(16, &mut stream_rng(5, Domain::Train, Stream::Replay)).unwrap().iter().map(|x| x.reward_global).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_frequency_is_uniform() {
        let mut buf = ReplayBuffer::new(10);
        for v in 0..10 {
            buf.push(t(v as f64)).unwrap();
        }
        let mut rng = stream_rng(9, Domain::Train, Stream::Replay);
        let mut counts = [0usize; 10];
        let rounds = 20_000;
        for _ in 0..rounds {
            for x in buf.sample(3, &mut rng).unwrap() {
                counts[x.reward_global as usize] += 1;
            }
        }
        let expected = rounds as f64 * 3.0 / 10.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 9 degrees of freedom, 0.999 quantile ~ 27.9
        assert!(chi2 < 27.9, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn batch_layout() {
        let mut buf = ReplayBuffer::new(10);
        for v in 0..5 {
            buf.push(Transition { state: vec![v as f64, 1.0], action: vec![2.0], reward_local: vec![0.5, 0.25], reward_global: 0.375, next_state: vec![0.0, 0.0] }).unwrap();
        }
        let b = buf.sample_batch(4, &mut stream_rng(1, Domain::Train, Stream::Replay)).unwrap();
        assert_eq!(b.states.dim(), (4, 2));
        assert_eq!(b.actions.dim(), (4, 1));
        assert_eq!(b.rewards_local.dim(), (4, 2));
        assert_eq!(b.rewards_global.len(), 4);
    }

    proptest! {
        #[test]
        fn size_tracks_pushes(cap in 1usize..20, n in 0usize..60, seed in 0u64..100) {
            let mut buf = ReplayBuffer::new(cap);
            for v in 0..n {
                buf.push(t(v as f64)).unwrap();
            }
            prop_assert_eq!(buf.len(), n.min(cap));
            if n > cap {
                prop_assert_eq!(buf.get(0).unwrap().reward_global, (n - cap) as f64);
            }
            if buf.len() > 1 {
                let k = buf.len() - 1;
                let mut rng = stream_rng(seed, Domain::Train, Stream::Replay);
                for x in buf.sample(k, &mut rng).unwrap() {
                    let v = x.reward_global as usize;
                    prop_assert!(v < n && v >= n - buf.len());
                }
            }
        }
    }
}

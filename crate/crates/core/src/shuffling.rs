//! Sampling engines: per-epoch random permutations, a single shared
//! permutation, and with-replacement draws, plus minibatch grouping.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{Purpose, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplingPolicy {
    /// Fresh permutation every epoch.
    #[default]
    #[serde(alias = "rr_every_epoch")]
    ShuffleEveryEpoch,
    /// One permutation drawn before training and reused.
    #[serde(alias = "rr_once")]
    ShuffleOnce,
    /// Independent uniform indices.
    WithReplacement,
}

/// Uniform random permutation of `0..n` by Fisher–Yates.
pub fn draw_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        p.swap(i, j);
    }
    p
}

/// `b` i.i.d. uniform indices from `0..n`.
pub fn draw_with_replacement<R: Rng + ?Sized>(n: usize, b: usize, rng: &mut R) -> Vec<usize> {
    (0..b).map(|_| rng.random_range(0..n)).collect()
}

/// The permutation used for the whole run under `shuffle_once`.
pub fn one_shot_permutation(stream: &RngStream, client: usize, n: usize) -> Vec<usize> {
    draw_permutation(n, &mut stream.rng(Purpose::Permutation, client, 0, 0))
}

/// Sample order of `client` in `epoch`. For `with_replacement` this is `n`
/// independent draws.
pub fn epoch_order(stream: &RngStream, policy: SamplingPolicy, client: usize, epoch: usize, n: usize) -> Vec<usize> {
    match policy {
        SamplingPolicy::ShuffleEveryEpoch => {
            draw_permutation(n, &mut stream.rng(Purpose::Permutation, client, epoch, 0))
        }
        SamplingPolicy::ShuffleOnce => one_shot_permutation(stream, client, n),
        SamplingPolicy::WithReplacement => {
            draw_with_replacement(n, n, &mut stream.rng(Purpose::Sampling, client, epoch, 0))
        }
    }
}

/// `max(1, ⌊fraction · n⌋)`.
pub fn batch_size_from_fraction(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).floor() as usize).clamp(1, n.max(1))
}

/// An index order split into `⌊len / b⌋` consecutive blocks of exactly `b`.
/// Trailing indices that do not fill a block are dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchSchedule {
    pub batch_size: usize,
    pub order: Vec<usize>,
}

impl BatchSchedule {
    pub fn new(order: Vec<usize>, batch_size: usize) -> Self {
        assert!(batch_size >= 1, "batch size must be positive");
        Self { batch_size, order }
    }

    pub fn num_steps(&self) -> usize {
        self.order.len() / self.batch_size
    }

    pub fn batch(&self, step: usize) -> &[usize] {
        &self.order[step * self.batch_size..(step + 1) * self.batch_size]
    }

    pub fn batches(&self) -> impl Iterator<Item = &[usize]> {
        self.order.chunks_exact(self.batch_size)
    }
}

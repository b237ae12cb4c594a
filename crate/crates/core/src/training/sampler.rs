use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seeded epoch sampler: each epoch visits every index exactly once in a
/// fresh shuffled order, split into batches (the last one may be short).
#[derive(Debug, Clone)]
pub struct Sampler {
    len: usize,
    batch_size: usize,
    epochs: usize,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    pos: usize,
    epoch: usize,
}

impl Sampler {
    pub fn new(len: usize, batch_size: usize, epochs: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut rng);
        Self {
            len,
            batch_size: batch_size.max(1),
            epochs,
            rng,
            order,
            pos: 0,
            epoch: 0,
        }
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.len.div_ceil(self.batch_size)
    }

    pub fn total_batches(&self) -> usize {
        self.batches_per_epoch() * self.epochs
    }

    /// Zero-based epoch of the next batch.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn next_batch(&mut self) -> Option<Vec<usize>> {
        if self.len == 0 || self.epoch >= self.epochs {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.len);
        let batch = self.order[self.pos..end].to_vec();
        self.pos = end;
        if self.pos == self.len {
            self.epoch += 1;
            self.pos = 0;
            self.order.shuffle(&mut self.rng);
        }
        Some(batch)
    }
}

//! Per-epoch shuffled batching with a resumable RNG stream.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::error::DataError;
use numcore::rng::{self, RngCursor};

pub const BATCHER_STREAM_LABEL: &str = "batcher";

/// Yields index batches, reshuffled uniformly each epoch from a dedicated
/// RNG stream. Training drops a short final batch (stable batch statistics);
/// evaluation keeps it.
#[derive(Debug, Clone)]
pub struct Batcher {
    n_items: usize,
    batch_size: usize,
    drop_short: bool,
    master_seed: u64,
    rng: ChaCha8Rng,
}

impl Batcher {
    pub fn new(
        n_items: usize,
        batch_size: usize,
        drop_short: bool,
        master_seed: u64,
    ) -> Result<Self, DataError> {
        if batch_size < 2 {
            return Err(DataError::Config {
                key: "batch_size".to_string(),
                detail: format!("must be >= 2, got {batch_size}"),
            });
        }
        if n_items < batch_size && drop_short {
            return Err(DataError::TooShort {
                needed: batch_size,
                got: n_items,
            });
        }
        Ok(Batcher {
            n_items,
            batch_size,
            drop_short,
            master_seed,
            rng: rng::derive_rng(master_seed, BATCHER_STREAM_LABEL),
        })
    }

    pub fn batches_per_epoch(&self) -> usize {
        if self.drop_short {
            self.n_items / self.batch_size
        } else {
            self.n_items.div_ceil(self.batch_size)
        }
    }

    /// One epoch of index batches.
    pub fn next_epoch(&mut self) -> Vec<Vec<usize>> {
        let mut indices: Vec<usize> = (0..self.n_items).collect();
        indices.shuffle(&mut self.rng);
        let mut out = Vec::with_capacity(self.batches_per_epoch());
        for chunk in indices.chunks(self.batch_size) {
            if chunk.len() < self.batch_size && self.drop_short {
                break;
            }
            out.push(chunk.to_vec());
        }
        out
    }

    /// RNG position for checkpoint manifests.
    pub fn cursor(&self) -> RngCursor {
        rng::cursor(&self.rng)
    }

    pub fn restore_cursor(&mut self, cursor: RngCursor) {
        self.rng = rng::restore(self.master_seed, cursor);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_multiple_gives_full_batches() {
        let mut b = Batcher::new(4096, 2048, true, 7).unwrap();
        let epoch = b.next_epoch();
        assert_eq!(epoch.len(), 2);
        assert!(epoch.iter().all(|batch| batch.len() == 2048));
    }

    #[test]
    fn short_final_batch_dropped_in_training() {
        let mut b = Batcher::new(5000, 2048, true, 7).unwrap();
        let epoch = b.next_epoch();
        assert_eq!(epoch.len(), 2);
    }

    #[test]
    fn short_final_batch_kept_in_evaluation() {
        let mut b = Batcher::new(5000, 2048, false, 7).unwrap();
        let epoch = b.next_epoch();
        assert_eq!(epoch.len(), 3);
        assert_eq!(epoch[2].len(), 5000 - 2 * 2048);
    }

    #[test]
    fn same_seed_same_composition() {
        let mut a = Batcher::new(999, 64, true, 11).unwrap();
        let mut b = Batcher::new(999, 64, true, 11).unwrap();
        assert_eq!(a.next_epoch(), b.next_epoch());
        assert_eq!(a.next_epoch(), b.next_epoch());
    }

    #[test]
    fn epochs_cover_every_index_when_keeping_short() {
        let mut b = Batcher::new(100, 32, false, 3).unwrap();
        let mut seen: Vec<usize> = b.next_epoch().into_iter().flatten().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn batch_size_one_rejected() {
        assert!(Batcher::new(10, 1, true, 0).is_err());
    }

    #[test]
    fn cursor_resume_reproduces_epochs() {
        let mut a = Batcher::new(500, 64, true, 5).unwrap();
        a.next_epoch();
        let cur = a.cursor();
        let upcoming = a.next_epoch();
        let mut b = Batcher::new(500, 64, true, 5).unwrap();
        b.restore_cursor(cur);
        assert_eq!(b.next_epoch(), upcoming);
    }
}

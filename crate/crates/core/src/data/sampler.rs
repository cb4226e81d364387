use std::collections::BTreeMap;

use rand::seq::{index, IndexedRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A PK mini-batch: `identities_per_batch` identities, each with exactly
/// `instances_per_identity` entries. `indices` point into the sample list the
/// sampler was built from, grouped by identity in ascending identity order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub identities_per_batch: usize,
    pub instances_per_identity: usize,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Draws one PK batch from samples labelled `identities` (one label per sample).
///
/// Identities with fewer than `q` samples contribute all of them plus draws
/// with replacement to fill the quota.
pub fn sample_pk_batch<R: Rng + ?Sized>(
    by_identity: &BTreeMap<u32, Vec<usize>>,
    p: usize,
    q: usize,
    rng: &mut R,
) -> Result<Batch> {
    if p == 0 || q == 0 {
        return Err(Error::Config(format!("PK batch needs P, Q ≥ 1, got P={p} Q={q}")));
    }
    if by_identity.len() < p {
        return Err(Error::Degenerate(format!(
            "{} identities available, batch needs {p}",
            by_identity.len()
        )));
    }
    let keys: Vec<u32> = by_identity.keys().copied().collect();
    let mut chosen: Vec<usize> = index::sample(rng, keys.len(), p).into_vec();
    chosen.sort_unstable();

    let mut indices = Vec::with_capacity(p * q);
    for k in chosen {
        let pool = &by_identity[&keys[k]];
        if pool.len() >= q {
            let mut picks = index::sample(rng, pool.len(), q).into_vec();
            picks.sort_unstable();
            indices.extend(picks.into_iter().map(|i| pool[i]));
        } else {
            indices.extend_from_slice(pool);
            for _ in pool.len()..q {
                indices.push(*pool.choose(rng).expect("identity pools are non-empty"));
            }
        }
    }
    Ok(Batch {
        indices,
        identities_per_batch: p,
        instances_per_identity: q,
    })
}

/// Identity-balanced sampler holding its own deterministic RNG stream.
#[derive(Debug, Clone)]
pub struct PkSampler {
    by_identity: BTreeMap<u32, Vec<usize>>,
    rng: ChaCha8Rng,
}

impl PkSampler {
    /// `identities[i]` is the identity of sample `i`.
    pub fn new(identities: &[u32], seed: u64) -> Self {
        let mut by_identity: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &id) in identities.iter().enumerate() {
            by_identity.entry(id).or_default().push(i);
        }
        Self {
            by_identity,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn num_identities(&self) -> usize {
        self.by_identity.len()
    }

    pub fn next_batch(&mut self, p: usize, q: usize) -> Result<Batch> {
        sample_pk_batch(&self.by_identity, p, q, &mut self.rng)
    }
}

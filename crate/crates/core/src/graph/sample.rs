use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Graph;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Neighbors drawn for one node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborSample {
    pub center: usize,
    pub sampled: Vec<usize>,
    pub seed: u64,
}

/// Uniform draw without replacement of `min(k, deg(v))` neighbors of `v`.
/// An isolated node yields an empty sample.
pub fn sample_neighbors<T: Scalar>(g: &Graph<T>, v: usize, k: usize, seed: u64) -> Result<NeighborSample> {
    if v >= g.node_count() {
        return Err(Error::contract(format!("node {v} out of range")));
    }
    if k == 0 {
        return Err(Error::contract("sample size must be at least 1"));
    }
    let nbrs = g.neighbors(v);
    let sampled = if k >= nbrs.len() {
        nbrs.to_vec()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::index::sample(&mut rng, nbrs.len(), k)
            .into_iter()
            .map(|i| nbrs[i])
            .collect()
    };
    Ok(NeighborSample {
        center: v,
        sampled,
        seed,
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-(epoch, node) sampling seed mixed from a base seed.
pub fn derive_seed(base: u64, epoch: u64, node: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ epoch) ^ node)
}

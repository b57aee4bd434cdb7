use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::ImageRecord;
use crate::error::{Error, Result};
use crate::graph::derive_seed;
use crate::{Graph, Matrix};

const LOW: u8 = 64;
const HIGH: u8 = 191;

/// Periodic box blur of radius `r` along both axes.
fn box_blur(v: &[f64], size: usize, r: usize) -> Vec<f64> {
    let pass = |src: &[f64], horizontal: bool| {
        let mut out = vec![0.0; src.len()];
        for a in 0..size {
            for b in 0..size {
                let mut acc = 0.0;
                for d in 0..=2 * r {
                    let o = (b + size * (r + 1) + d - r) % size;
                    acc += if horizontal { src[a * size + o] } else { src[o * size + a] };
                }
                let idx = if horizontal { a * size + b } else { b * size + a };
                out[idx] = acc / (2 * r + 1) as f64;
            }
        }
        out
    };
    pass(&pass(v, true), false)
}

fn texture(size: usize, radius: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..size * size).map(|_| rng.sample(StandardNormal)).collect();
    let smooth = box_blur(&noise, size, radius);
    let mut sorted = smooth.clone();
    sorted.sort_by(f64::total_cmp);
    let threshold = sorted[sorted.len() / 2];
    smooth.iter().map(|&v| if v >= threshold { HIGH } else { LOW }).collect()
}

/// Two-class grayscale textures: class 0 is coarse blobs (smoothing radius
/// `size / 4`), class 1 fine grain (radius 1). Both are thresholded at their
/// median so half the pixels are bright and class means coincide.
///
/// Records alternate between classes, `n_per_class` of each.
pub fn synth_texture_dataset(n_per_class: usize, size: usize, seed: u64) -> Result<Vec<ImageRecord>> {
    if size < 16 {
        return Err(Error::contract(format!("texture size must be at least 16, got {size}")));
    }
    let mut out = Vec::with_capacity(2 * n_per_class);
    for i in 0..n_per_class {
        for (class, radius) in [(0usize, size / 4), (1, 1)] {
            let pixels = texture(size, radius, derive_seed(seed, class as u64, i as u64));
            out.push(ImageRecord::raw(format!("tex{class}-{i:05}"), class, size, size, 1, pixels)?);
        }
    }
    Ok(out)
}

/// Stochastic block model parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub blocks: usize,
    pub nodes_per_block: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub feature_shift: f64,
    pub seed: u64,
}

impl Default for SbmSpec {
    fn default() -> Self {
        Self {
            blocks: 2,
            nodes_per_block: 50,
            p_in: 0.3,
            p_out: 0.02,
            feature_dim: 4,
            feature_shift: 0.5,
            seed: 0,
        }
    }
}

impl SbmSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.p_out && self.p_out < self.p_in && self.p_in <= 1.0) {
            return Err(Error::contract(format!(
                "need 0 <= p_out < p_in <= 1, got p_in={} p_out={}",
                self.p_in, self.p_out
            )));
        }
        if self.blocks == 0 || self.nodes_per_block == 0 {
            return Err(Error::contract("SBM needs at least one block and one node per block"));
        }
        if self.feature_dim < self.blocks {
            return Err(Error::contract("feature_dim must be at least the block count"));
        }
        if !self.feature_shift.is_finite() {
            return Err(Error::NonFinite("feature_shift"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SbmGraph {
    /// Graph with node features attached.
    pub graph: Graph,
    pub labels: Vec<usize>,
}

/// Samples an SBM graph. Features are standard normal noise plus
/// `feature_shift` on the coordinate of the node's block.
pub fn synth_sbm_graph(spec: &SbmSpec) -> Result<SbmGraph> {
    spec.validate()?;
    let n = spec.blocks * spec.nodes_per_block;
    let labels: Vec<usize> = (0..n).map(|v| v / spec.nodes_per_block).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] { spec.p_in } else { spec.p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let mut features = Matrix::zeros(n, spec.feature_dim);
    for v in 0..n {
        for j in 0..spec.feature_dim {
            let noise: f64 = rng.sample(StandardNormal);
            features[(v, j)] = noise + if j == labels[v] { spec.feature_shift } else { 0.0 };
        }
    }
    Ok(SbmGraph {
        graph: Graph::new(n, edges)?.with_features(features)?,
        labels,
    })
}

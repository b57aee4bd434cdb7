use rand::Rng;

use super::{check_rows, GraphLayer};
use crate::error::{Error, Result};
use crate::graph::{derive_seed, sample_neighbors, Graph};
use crate::linalg::Matrix;
use crate::nn::{glorot_uniform, Activation, BackwardResult, Dense, Layer};
use crate::scalar::Scalar;

/// Symmetric neighbor aggregator.
#[derive(Clone, Debug, PartialEq)]
pub enum Aggregator<T> {
    /// Arithmetic mean of the sampled neighbor rows.
    Mean,
    /// Elementwise max of `relu(h_u·W_pool + b_pool)` over sampled neighbors.
    Pooling(Dense<T>),
}

/// `σ(concat(h_v, agg(h_u : u ∈ S(v))) · W)`, with `S(v)` a uniform sample
/// of at most `sample_size` neighbors drawn from
/// `derive_seed(seed, epoch, v)`. Isolated nodes aggregate to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphSageLayer<T> {
    pub weight: Matrix<T>,
    pub aggregator: Aggregator<T>,
    pub activation: Activation,
    sample_size: usize,
    seed: u64,
    epoch: u64,
}

struct SageForward<T> {
    samples: Vec<Vec<usize>>,
    pooled_pre: Option<Matrix<T>>,
    transformed: Option<Matrix<T>>,
    argmax: Vec<Vec<usize>>,
    concat: Matrix<T>,
    pre: Matrix<T>,
    out: Matrix<T>,
}

impl<T: Scalar> GraphSageLayer<T> {
    /// `pool_dim = None` selects the mean aggregator.
    pub fn new<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        pool_dim: Option<usize>,
        sample_size: usize,
        seed: u64,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if sample_size == 0 {
            return Err(Error::contract("GraphSage sample size must be at least 1"));
        }
        let (aggregator, agg_dim) = match pool_dim {
            None => (Aggregator::Mean, in_dim),
            Some(p) => (Aggregator::Pooling(Dense::new(in_dim, p, rng)), p),
        };
        Ok(Self {
            weight: glorot_uniform(in_dim + agg_dim, out_dim, in_dim + agg_dim, out_dim, rng),
            aggregator,
            activation,
            sample_size,
            seed,
            epoch: 0,
        })
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    pub fn set_epoch(&mut self, epoch: u64) {
        self.epoch = epoch;
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    fn in_dim(&self) -> usize {
        let agg_dim = match &self.aggregator {
            Aggregator::Mean => (self.weight.rows()) / 2,
            Aggregator::Pooling(d) => d.out_dim(),
        };
        self.weight.rows() - agg_dim
    }

    /// Neighbor lists used for the current epoch.
    pub fn samples(&self, g: &Graph<T>) -> Result<Vec<Vec<usize>>> {
        (0..g.node_count())
            .map(|v| {
                let seed = derive_seed(self.seed, self.epoch, v as u64);
                Ok(sample_neighbors(g, v, self.sample_size, seed)?.sampled)
            })
            .collect()
    }

    /// Aggregates over explicit neighbor lists.
    pub fn aggregate(&self, h: &Matrix<T>, samples: &[Vec<usize>]) -> Result<Matrix<T>> {
        Ok(self.aggregate_inner(h, samples)?.0)
    }

    #[allow(clippy::type_complexity)]
    fn aggregate_inner(
        &self,
        h: &Matrix<T>,
        samples: &[Vec<usize>],
    ) -> Result<(Matrix<T>, Option<Matrix<T>>, Option<Matrix<T>>, Vec<Vec<usize>>)> {
        let n = h.rows();
        match &self.aggregator {
            Aggregator::Mean => {
                let mut agg = Matrix::zeros(n, h.cols());
                for (v, s) in samples.iter().enumerate() {
                    if s.is_empty() {
                        continue;
                    }
                    let inv = T::one() / T::lit(s.len() as f64);
                    let row = agg.row_mut(v);
                    for &u in s {
                        for (a, &x) in row.iter_mut().zip(h.row(u)) {
                            *a += x;
                        }
                    }
                    row.iter_mut().for_each(|a| *a *= inv);
                }
                Ok((agg, None, None, Vec::new()))
            }
            Aggregator::Pooling(dense) => {
                let pre = dense.forward(h)?;
                let transformed = Activation::Relu.forward(&pre);
                let p = dense.out_dim();
                let mut agg = Matrix::zeros(n, p);
                let mut argmax = Vec::with_capacity(n);
                for (v, s) in samples.iter().enumerate() {
                    let mut best = vec![usize::MAX; p];
                    if !s.is_empty() {
                        // ties resolve to the lowest node index so the choice
                        // does not depend on sample order
                        let mut sorted = s.clone();
                        sorted.sort_unstable();
                        best.iter_mut().for_each(|b| *b = sorted[0]);
                        for j in 0..p {
                            for &u in &sorted {
                                if transformed[(u, j)] > transformed[(best[j], j)] {
                                    best[j] = u;
                                }
                            }
                            agg[(v, j)] = transformed[(best[j], j)];
                        }
                    }
                    argmax.push(best);
                }
                Ok((agg, Some(pre), Some(transformed), argmax))
            }
        }
    }

    fn run(&self, g: &Graph<T>, h: &Matrix<T>) -> Result<SageForward<T>> {
        check_rows(g, h, "graphsage")?;
        if h.cols() != self.in_dim() {
            return Err(Error::Shape {
                op: "graphsage",
                left: h.shape(),
                right: self.weight.shape(),
            });
        }
        let samples = self.samples(g)?;
        let (agg, pooled_pre, transformed, argmax) = self.aggregate_inner(h, &samples)?;
        let concat = Matrix::hstack(&[h, &agg])?;
        let pre = concat.matmul(&self.weight)?;
        let out = self.activation.forward(&pre);
        Ok(SageForward {
            samples,
            pooled_pre,
            transformed,
            argmax,
            concat,
            pre,
            out,
        })
    }
}

impl<T: Scalar> GraphLayer<T> for GraphSageLayer<T> {
    type Input = Matrix<T>;

    fn forward(&self, g: &Graph<T>, h: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(self.run(g, h)?.out)
    }

    fn backward(&self, g: &Graph<T>, h: &Matrix<T>, grad: &Matrix<T>) -> Result<BackwardResult<T, Matrix<T>>> {
        let f = self.run(g, h)?;
        let d = h.cols();
        let g_pre = self.activation.backward(&f.pre, &f.out, grad);
        let g_w = f.concat.t_matmul(&g_pre)?;
        let g_concat = g_pre.matmul_t(&self.weight)?;
        let mut g_h = g_concat.columns(0..d);
        let g_agg = g_concat.columns(d..g_concat.cols());
        let mut grads = vec![g_w];
        match &self.aggregator {
            Aggregator::Mean => {
                for (v, s) in f.samples.iter().enumerate() {
                    if s.is_empty() {
                        continue;
                    }
                    let inv = T::one() / T::lit(s.len() as f64);
                    for &u in s {
                        for j in 0..d {
                            g_h[(u, j)] += g_agg[(v, j)] * inv;
                        }
                    }
                }
            }
            Aggregator::Pooling(dense) => {
                let pre = f.pooled_pre.as_ref().expect("pooling cache");
                let transformed = f.transformed.as_ref().expect("pooling cache");
                let mut g_transformed = Matrix::zeros(transformed.rows(), transformed.cols());
                for (v, best) in f.argmax.iter().enumerate() {
                    if f.samples[v].is_empty() {
                        continue;
                    }
                    for (j, &u) in best.iter().enumerate() {
                        g_transformed[(u, j)] += g_agg[(v, j)];
                    }
                }
                let g_pool_pre = Activation::Relu.backward(pre, transformed, &g_transformed);
                let pooled = dense.backward(h, &g_pool_pre)?;
                g_h.add_scaled(&pooled.input_grad, T::one())?;
                grads.extend(pooled.param_grads);
            }
        }
        BackwardResult::new(h, &self.params(), g_h, grads)
    }

    fn param_names(&self) -> Vec<&'static str> {
        match self.aggregator {
            Aggregator::Mean => vec!["weight"],
            Aggregator::Pooling(_) => vec!["weight", "pool_weight", "pool_bias"],
        }
    }

    fn params(&self) -> Vec<&Matrix<T>> {
        let mut p = vec![&self.weight];
        if let Aggregator::Pooling(d) = &self.aggregator {
            p.extend([&d.weight, &d.bias]);
        }
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix<T>> {
        let mut p = vec![&mut self.weight];
        if let Aggregator::Pooling(d) = &mut self.aggregator {
            p.extend([&mut d.weight, &mut d.bias]);
        }
        p
    }
}

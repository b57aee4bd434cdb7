use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::normalized_adjacency;
use crate::linalg::row_softmax;
use crate::nn::glorot_uniform;
use crate::params::ParamRegistry;
use crate::training::{cross_entropy, one_hot, Trainable};
use crate::{Graph, Matrix};

/// Two GCN layers over a fixed graph for transductive node classification:
/// `softmax(Â · relu(Â·X·W₁) · W₂)`. Samples are node indices.
///
/// `Â·X` is computed once and the second propagation is applied to the
/// narrow `H₁·W₂`, so a step costs `O(N·hidden)` beyond the fixed `O(N²·K)`.
#[derive(Clone, Debug)]
pub struct GcnNodeClassifier {
    a_norm: Matrix,
    smoothed: Matrix,
    pub w1: Matrix,
    pub w2: Matrix,
}

struct Pass {
    pre: Matrix,
    hidden: Matrix,
    logits: Matrix,
}

impl GcnNodeClassifier {
    /// `graph` must carry node features.
    pub fn new(graph: &Graph, hidden: usize, classes: usize, seed: u64) -> Result<Self> {
        let features = graph
            .features()
            .ok_or_else(|| Error::contract("node classification needs node features"))?;
        let a_norm = normalized_adjacency(graph);
        let d = features.cols();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            smoothed: a_norm.matmul(features)?,
            a_norm,
            w1: glorot_uniform(d, hidden, d, hidden, &mut rng),
            w2: glorot_uniform(hidden, classes, hidden, classes, &mut rng),
        })
    }

    fn pass(&self) -> Result<Pass> {
        let pre = self.smoothed.matmul(&self.w1)?;
        let hidden = pre.map(|v| v.max(0.0));
        let logits = self.a_norm.matmul(&hidden.matmul(&self.w2)?)?;
        Ok(Pass { pre, hidden, logits })
    }

    fn check_nodes(&self, batch: &[&usize]) -> Result<Vec<usize>> {
        let n = self.a_norm.rows();
        batch
            .iter()
            .map(|&&v| {
                if v < n {
                    Ok(v)
                } else {
                    Err(Error::contract(format!("node {v} out of range for {n} nodes")))
                }
            })
            .collect()
    }
}

impl Trainable for GcnNodeClassifier {
    type Sample = usize;

    fn classes(&self) -> usize {
        self.w2.cols()
    }

    fn predict(&self, batch: &[&usize]) -> Result<Matrix> {
        let nodes = self.check_nodes(batch)?;
        Ok(row_softmax(&self.pass()?.logits.select_rows(&nodes)))
    }

    fn gradients(&mut self, batch: &[&usize], labels: &[usize], _epoch: usize) -> Result<(f64, ParamRegistry)> {
        let nodes = self.check_nodes(batch)?;
        let f = self.pass()?;
        let probs = row_softmax(&f.logits.select_rows(&nodes));
        let ce = cross_entropy(&probs, &one_hot(labels, self.classes())?)?;
        let mut g_logits = Matrix::zeros(f.logits.rows(), f.logits.cols());
        for (r, &v) in nodes.iter().enumerate() {
            for (d, &s) in g_logits.row_mut(v).iter_mut().zip(ce.logit_grad.row(r)) {
                *d += s;
            }
        }
        // Â is symmetric
        let g_u = self.a_norm.matmul(&g_logits)?;
        let g_w2 = f.hidden.t_matmul(&g_u)?;
        let mut g_pre = g_u.matmul_t(&self.w2)?;
        g_pre
            .as_mut_slice()
            .iter_mut()
            .zip(f.pre.as_slice())
            .for_each(|(g, &p)| {
                if p <= 0.0 {
                    *g = 0.0;
                }
            });
        let g_w1 = self.smoothed.t_matmul(&g_pre)?;
        let mut grads = ParamRegistry::new();
        grads.insert("gcn1.weight", g_w1)?;
        grads.insert("gcn2.weight", g_w2)?;
        Ok((ce.loss, grads))
    }

    fn parameters(&self) -> ParamRegistry {
        let mut p = ParamRegistry::new();
        p.insert("gcn1.weight", self.w1.clone()).expect("distinct names");
        p.insert("gcn2.weight", self.w2.clone()).expect("distinct names");
        p
    }

    fn set_parameters(&mut self, params: &ParamRegistry) -> Result<()> {
        self.parameters().check_layout(params)?;
        self.w1 = params.get("gcn1.weight").ok_or(Error::StaleCache)?.clone();
        self.w2 = params.get("gcn2.weight").ok_or(Error::StaleCache)?.clone();
        Ok(())
    }
}

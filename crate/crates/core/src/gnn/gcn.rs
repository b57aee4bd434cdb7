use rand::Rng;

use super::{check_rows, GraphLayer};
use crate::error::Result;
use crate::graph::{normalized_adjacency, Graph};
use crate::linalg::Matrix;
use crate::nn::{glorot_uniform, Activation, BackwardResult};
use crate::scalar::Scalar;

/// `σ(Â_norm · H · W)` with the renormalized adjacency of the graph.
#[derive(Clone, Debug, PartialEq)]
pub struct GcnLayer<T> {
    pub weight: Matrix<T>,
    pub activation: Activation,
}

impl<T: Scalar> GcnLayer<T> {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut R) -> Self {
        Self {
            weight: glorot_uniform(in_dim, out_dim, in_dim, out_dim, rng),
            activation,
        }
    }

    /// Forward pass against a precomputed propagation operator. Returns the
    /// smoothed input `Â·H`, the pre-activation and the output.
    pub fn forward_with_operator(&self, a_norm: &Matrix<T>, h: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>, Matrix<T>)> {
        let smoothed = a_norm.matmul(h)?;
        let pre = smoothed.matmul(&self.weight)?;
        let out = self.activation.forward(&pre);
        Ok((smoothed, pre, out))
    }

    /// Gradients `(∂H, ∂W)` given the cached forward values.
    pub fn backward_with_operator(
        &self,
        a_norm: &Matrix<T>,
        smoothed: &Matrix<T>,
        pre: &Matrix<T>,
        out: &Matrix<T>,
        g: &Matrix<T>,
    ) -> Result<(Matrix<T>, Matrix<T>)> {
        let g_pre = self.activation.backward(pre, out, g);
        let g_w = smoothed.t_matmul(&g_pre)?;
        // Â is symmetric, so Âᵀ·G = Â·G
        let g_h = a_norm.matmul(&g_pre.matmul_t(&self.weight)?)?;
        Ok((g_h, g_w))
    }
}

impl<T: Scalar> GraphLayer<T> for GcnLayer<T> {
    type Input = Matrix<T>;

    fn forward(&self, g: &Graph<T>, h: &Matrix<T>) -> Result<Matrix<T>> {
        check_rows(g, h, "gcn_forward")?;
        Ok(self.forward_with_operator(&normalized_adjacency(g), h)?.2)
    }

    fn backward(&self, g: &Graph<T>, h: &Matrix<T>, grad: &Matrix<T>) -> Result<BackwardResult<T, Matrix<T>>> {
        check_rows(g, h, "gcn_backward")?;
        let a = normalized_adjacency(g);
        let (smoothed, pre, out) = self.forward_with_operator(&a, h)?;
        let (g_h, g_w) = self.backward_with_operator(&a, &smoothed, &pre, &out, grad)?;
        BackwardResult::new(h, &[&self.weight], g_h, vec![g_w])
    }

    fn param_names(&self) -> Vec<&'static str> {
        vec!["weight"]
    }

    fn params(&self) -> Vec<&Matrix<T>> {
        vec![&self.weight]
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix<T>> {
        vec![&mut self.weight]
    }
}

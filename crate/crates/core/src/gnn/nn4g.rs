use rand::Rng;

use super::{check_rows, GraphLayer};
use crate::error::{Error, Result};
use crate::graph::{adjacency_matrix, Graph};
use crate::linalg::Matrix;
use crate::nn::{glorot_uniform, Activation, BackwardResult};
use crate::scalar::Scalar;

/// `h_v = f(x_v·Θ_self + (Σ_{u∈N(v)} h_prev,u)·Θ_nbr)` over the raw,
/// unnormalized adjacency. The first layer is fed `h_prev = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Nn4gLayer<T> {
    pub theta_self: Matrix<T>,
    pub theta_nbr: Matrix<T>,
    pub activation: Activation,
}

impl<T: Scalar> Nn4gLayer<T> {
    pub fn new<R: Rng + ?Sized>(
        in_dim: usize,
        prev_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        Self {
            theta_self: glorot_uniform(in_dim, out_dim, in_dim, out_dim, rng),
            theta_nbr: glorot_uniform(prev_dim, out_dim, prev_dim, out_dim, rng),
            activation,
        }
    }

    fn pre_activation(&self, a: &Matrix<T>, x: &Matrix<T>, h_prev: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>)> {
        let neighbor_sum = a.matmul(h_prev)?;
        let pre = x.matmul(&self.theta_self)?.add(&neighbor_sum.matmul(&self.theta_nbr)?)?;
        Ok((neighbor_sum, pre))
    }

    fn check(&self, g: &Graph<T>, x: &Matrix<T>, h_prev: &Matrix<T>) -> Result<()> {
        check_rows(g, x, "nn4g")?;
        check_rows(g, h_prev, "nn4g")?;
        if x.cols() != self.theta_self.rows() || h_prev.cols() != self.theta_nbr.rows() {
            return Err(Error::Shape {
                op: "nn4g",
                left: (x.cols(), h_prev.cols()),
                right: (self.theta_self.rows(), self.theta_nbr.rows()),
            });
        }
        Ok(())
    }
}

impl<T: Scalar> GraphLayer<T> for Nn4gLayer<T> {
    type Input = (Matrix<T>, Matrix<T>);

    fn forward(&self, g: &Graph<T>, (x, h_prev): &Self::Input) -> Result<Matrix<T>> {
        self.check(g, x, h_prev)?;
        let (_, pre) = self.pre_activation(&adjacency_matrix(g), x, h_prev)?;
        Ok(self.activation.forward(&pre))
    }

    fn backward(&self, g: &Graph<T>, input: &Self::Input, grad: &Matrix<T>) -> Result<BackwardResult<T, Self::Input>> {
        let (x, h_prev) = input;
        self.check(g, x, h_prev)?;
        let a = adjacency_matrix(g);
        let (neighbor_sum, pre) = self.pre_activation(&a, x, h_prev)?;
        let out = self.activation.forward(&pre);
        let g_pre = self.activation.backward(&pre, &out, grad);
        let g_self = x.t_matmul(&g_pre)?;
        let g_nbr = neighbor_sum.t_matmul(&g_pre)?;
        let g_x = g_pre.matmul_t(&self.theta_self)?;
        let g_h = a.matmul(&g_pre.matmul_t(&self.theta_nbr)?)?;
        BackwardResult::new(input, &self.params(), (g_x, g_h), vec![g_self, g_nbr])
    }

    fn param_names(&self) -> Vec<&'static str> {
        vec!["theta_self", "theta_nbr"]
    }

    fn params(&self) -> Vec<&Matrix<T>> {
        vec![&self.theta_self, &self.theta_nbr]
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix<T>> {
        vec![&mut self.theta_self, &mut self.theta_nbr]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::testing::*;
    use crate::gnn::OnGraph;
    use crate::nn::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_state_ignores_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = Nn4gLayer::<f64>::new(3, 2, 4, Activation::Relu, &mut rng);
        let x = random_matrix(5, 3, 2);
        let h0 = Matrix::zeros(5, 2);
        let with_edges = layer.forward(&random_graph(5, 0.6, 3), &(x.clone(), h0.clone())).unwrap();
        let expected = Activation::Relu.forward(&x.matmul(&layer.theta_self).unwrap());
        assert_eq!(with_edges, expected);
        assert_eq!(layer.forward(&Graph::empty(5), &(x, h0)).unwrap(), expected);
    }

    #[test]
    fn star_centre_sums_leaves() {
        let g = Graph::new(4, [(0, 1), (0, 2), (0, 3)]).unwrap();
        let layer = Nn4gLayer {
            theta_self: Matrix::zeros(1, 1),
            theta_nbr: Matrix::filled(1, 1, 1.0),
            activation: Activation::Identity,
        };
        let mut h = Matrix::filled(4, 1, 1.0);
        h[(0, 0)] = 0.0;
        let out = layer.forward(&g, &(Matrix::zeros(4, 1), h)).unwrap();
        assert_eq!(out[(0, 0)], 3.0);
    }

    #[test]
    fn regular_graph_scales_aggregate_by_degree() {
        // cycle (2-regular) vs perfect matching (1-regular), constant state
        let cycle = Graph::new(6, (0..6).map(|i| (i, (i + 1) % 6))).unwrap();
        let matching = Graph::new(6, [(0, 1), (2, 3), (4, 5)]).unwrap();
        let layer = Nn4gLayer {
            theta_self: Matrix::zeros(1, 2),
            theta_nbr: Matrix::from_rows(&[[0.7, -1.3]]).unwrap(),
            activation: Activation::Identity,
        };
        let input = (Matrix::zeros(6, 1), Matrix::filled(6, 1, 0.5));
        let two = layer.forward(&cycle, &input).unwrap();
        let one = layer.forward(&matching, &input).unwrap();
        assert_eq!(two, one.scale(2.0));
    }

    #[test]
    fn finite_differences() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_graph(6, 0.5, seed);
            let layer = Nn4gLayer::new(3, 2, 3, Activation::Sigmoid, &mut rng);
            let input = (random_matrix(6, 3, seed + 1), random_matrix(6, 2, seed + 2));
            let err = grad_check(&OnGraph::new(layer, &g), &input, 1e-5).unwrap();
            assert!(err <= 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn permutation_equivariance() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_graph(8, 0.4, seed);
            let layer = Nn4gLayer::new(3, 2, 2, Activation::Relu, &mut rng);
            let (x, h) = (random_matrix(8, 3, seed), random_matrix(8, 2, seed + 50));
            let perm = permutation(8, seed + 9);
            let out = layer.forward(&g, &(x.clone(), h.clone())).unwrap();
            let out_perm = layer
                .forward(&g.relabel(&perm).unwrap(), &(permute_rows(&x, &perm), permute_rows(&h, &perm)))
                .unwrap();
            assert!(out_perm.sub(&permute_rows(&out, &perm)).unwrap().max_abs() <= 1e-10);
        }
    }

    #[test]
    fn shape_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let layer = Nn4gLayer::<f64>::new(3, 2, 2, Activation::Relu, &mut rng);
        let g = Graph::empty(4);
        assert!(layer.forward(&g, &(Matrix::zeros(4, 3), Matrix::zeros(3, 2))).is_err());
        assert!(layer.forward(&g, &(Matrix::zeros(4, 2), Matrix::zeros(4, 2))).is_err());
    }
}

use rand::Rng;

use super::{glorot_uniform, BackwardResult, Layer};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Affine map `y = x·W + b`, with `b` broadcast over rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weight: Matrix<T>,
    pub bias: Matrix<T>,
}

impl<T: Scalar> Dense<T> {
    /// Glorot-uniform weights, zero bias.
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        Self {
            weight: glorot_uniform(in_dim, out_dim, in_dim, out_dim, rng),
            bias: Matrix::zeros(1, out_dim),
        }
    }

    pub fn from_params(weight: Matrix<T>, bias: Matrix<T>) -> Result<Self> {
        if bias.shape() != (1, weight.cols()) {
            return Err(Error::Shape {
                op: "Dense::from_params",
                left: weight.shape(),
                right: bias.shape(),
            });
        }
        Ok(Self { weight, bias })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }
}

impl<T: Scalar> Layer<T> for Dense<T> {
    type Input = Matrix<T>;
    type Output = Matrix<T>;

    fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        x.matmul(&self.weight)?.add_row(&self.bias)
    }

    fn backward(&self, x: &Matrix<T>, g: &Matrix<T>) -> Result<BackwardResult<T, Matrix<T>>> {
        if g.shape() != (x.rows(), self.out_dim()) {
            return Err(Error::Shape {
                op: "Dense::backward",
                left: (x.rows(), self.out_dim()),
                right: g.shape(),
            });
        }
        let input_grad = g.matmul_t(&self.weight)?;
        let weight_grad = x.t_matmul(g)?;
        BackwardResult::new(x, &self.params(), input_grad, vec![weight_grad, g.sum_rows()])
    }

    fn param_names(&self) -> Vec<&'static str> {
        vec!["weight", "bias"]
    }

    fn params(&self) -> Vec<&Matrix<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_weights_pass_input_through() {
        let layer = Dense::from_params(Matrix::<f64>::identity(3), Matrix::zeros(1, 3)).unwrap();
        let x = Matrix::from_rows(&[[1.0, -2.0, 3.0], [0.5, 0.0, 4.0]]).unwrap();
        assert_eq!(layer.forward(&x).unwrap(), x);
    }

    #[test]
    fn ones_upstream_gives_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = Dense::<f64>::new(2, 2, &mut rng);
        let x = Matrix::filled(1, 2, 1.0);
        let r = layer.backward(&x, &Matrix::filled(1, 2, 1.0)).unwrap();
        assert_eq!(r.param_grads[0], Matrix::filled(2, 2, 1.0));
        assert_eq!(r.param_grads[1], Matrix::filled(1, 2, 1.0));
    }

    #[test]
    fn finite_differences() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut layer = Dense::<f64>::new(4, 3, &mut rng);
            layer.bias = Matrix::from_fn(1, 3, |_, c| 0.1 * c as f64);
            let x = Matrix::from_fn(5, 4, |r, c| ((r * 4 + c) as f64 * 0.37).sin());
            assert!(grad_check(&layer, &x, 1e-5).unwrap() <= 1e-4);
        }
    }

    #[test]
    fn shape_mismatch() {
        let layer = Dense::from_params(Matrix::<f64>::zeros(3, 2), Matrix::zeros(1, 2)).unwrap();
        assert!(layer.forward(&Matrix::zeros(1, 2)).is_err());
        assert!(Dense::from_params(Matrix::<f64>::zeros(3, 2), Matrix::zeros(1, 3)).is_err());
    }
}

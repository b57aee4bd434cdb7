use super::{BackwardResult, Layer};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Elementwise nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Sigmoid => T::one() / (T::one() + (-x).exp()),
            Activation::Identity => x,
        }
    }

    /// `∂y/∂x · g` given pre-activation `x` and activation `y`. The ReLU
    /// subgradient at exactly 0 is 0.
    #[inline]
    pub fn derivative<T: Scalar>(self, x: T, y: T, g: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    g
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => g * y * (T::one() - y),
            Activation::Identity => g,
        }
    }

    pub fn forward<T: Scalar>(self, x: &Matrix<T>) -> Matrix<T> {
        x.map(|v| self.apply(v))
    }

    pub fn backward<T: Scalar>(self, x: &Matrix<T>, y: &Matrix<T>, g: &Matrix<T>) -> Matrix<T> {
        let data = x
            .as_slice()
            .iter()
            .zip(y.as_slice())
            .zip(g.as_slice())
            .map(|((&x, &y), &g)| self.derivative(x, y, g))
            .collect();
        Matrix::new(x.rows(), x.cols(), data).expect("shape preserved")
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "relu" => Some(Self::Relu),
            "sigmoid" => Some(Self::Sigmoid),
            "identity" => Some(Self::Identity),
            _ => None,
        }
    }
}

/// An activation as a parameter-free layer.
#[derive(Clone, Copy, Debug)]
pub struct ActivationLayer(pub Activation);

impl<T: Scalar> Layer<T> for ActivationLayer {
    type Input = Matrix<T>;
    type Output = Matrix<T>;

    fn forward(&self, input: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(self.0.forward(input))
    }

    fn backward(&self, input: &Matrix<T>, grad_output: &Matrix<T>) -> Result<BackwardResult<T, Matrix<T>>> {
        let y = self.0.forward(input);
        BackwardResult::new(input, &[], self.0.backward(input, &y, grad_output), Vec::new())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relu_and_sigmoid_values() {
        let x = Matrix::from_rows(&[[-1.0, 0.0, 2.0]]).unwrap();
        assert_eq!(Activation::Relu.forward(&x).as_slice(), &[0.0, 0.0, 2.0]);
        assert_eq!(Activation::Sigmoid.apply(0.0), 0.5);
        let g = Matrix::filled(1, 3, 1.0);
        let y = Activation::Relu.forward(&x);
        assert_eq!(Activation::Relu.backward(&x, &y, &g).as_slice(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn finite_differences_away_from_kink() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Matrix::from_fn(3, 4, |_, _| {
                let v: f64 = rng.random_range(0.001..2.0);
                if rng.random_bool(0.5) {
                    v
                } else {
                    -v
                }
            });
            for act in [Activation::Relu, Activation::Sigmoid, Activation::Identity] {
                let err = grad_check(&ActivationLayer(act), &x, 1e-5).unwrap();
                assert!(err <= 1e-4, "{act:?}: {err}");
            }
        }
    }
}

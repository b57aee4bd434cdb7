//! Neural layers with explicit forward and backward passes.
//!
//! Every layer is a pure function of `(params, input)`: `backward` takes the
//! forward input again rather than relying on hidden state, so layers can be
//! shared read-only across threads and checked against finite differences.

mod activation;
mod attention;
mod conv;
mod dense;
mod feature_map;
mod fusion;
mod gradcheck;
mod pool;
mod ppm;

pub use activation::{Activation, ActivationLayer};
pub use attention::MultiHeadAttention;
pub use conv::Conv2d;
pub use dense::Dense;
pub use feature_map::{upsample_nearest, upsample_nearest_backward, FeatureMap};
pub use fusion::{weighted_fusion, weighted_fusion_backward, SideFusion};
pub use gradcheck::{grad_check, grad_check_detailed, GradCheckReport};
pub use pool::MaxPool2d;
pub use ppm::PyramidPooling;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Flat coordinate view over the values a layer consumes or produces, used
/// to perturb inputs and to check gradient shapes.
pub trait Flat<T> {
    fn flat_len(&self) -> usize;
    fn flat_get(&self, i: usize) -> T;
    fn flat_set(&mut self, i: usize, value: T);
    /// Shape signature; two values with equal signatures are interchangeable.
    fn dims(&self) -> Vec<usize>;
}

impl<T: Scalar> Flat<T> for Matrix<T> {
    fn flat_len(&self) -> usize {
        self.as_slice().len()
    }
    fn flat_get(&self, i: usize) -> T {
        self.as_slice()[i]
    }
    fn flat_set(&mut self, i: usize, value: T) {
        self.as_mut_slice()[i] = value;
    }
    fn dims(&self) -> Vec<usize> {
        vec![self.rows(), self.cols()]
    }
}

impl<T: Scalar> Flat<T> for FeatureMap<T> {
    fn flat_len(&self) -> usize {
        self.as_slice().len()
    }
    fn flat_get(&self, i: usize) -> T {
        self.as_slice()[i]
    }
    fn flat_set(&mut self, i: usize, value: T) {
        self.as_mut_slice()[i] = value;
    }
    fn dims(&self) -> Vec<usize> {
        let (c, h, w) = self.shape();
        vec![c, h, w]
    }
}

impl<T, A: Flat<T>, B: Flat<T>> Flat<T> for (A, B) {
    fn flat_len(&self) -> usize {
        self.0.flat_len() + self.1.flat_len()
    }
    fn flat_get(&self, i: usize) -> T {
        let n = self.0.flat_len();
        if i < n {
            self.0.flat_get(i)
        } else {
            self.1.flat_get(i - n)
        }
    }
    fn flat_set(&mut self, i: usize, value: T) {
        let n = self.0.flat_len();
        if i < n {
            self.0.flat_set(i, value)
        } else {
            self.1.flat_set(i - n, value)
        }
    }
    fn dims(&self) -> Vec<usize> {
        let mut d = self.0.dims();
        d.push(usize::MAX);
        d.extend(self.1.dims());
        d
    }
}

impl<T, A: Flat<T>, B: Flat<T>, C: Flat<T>> Flat<T> for (A, B, C) {
    fn flat_len(&self) -> usize {
        self.0.flat_len() + self.1.flat_len() + self.2.flat_len()
    }
    fn flat_get(&self, i: usize) -> T {
        let (n0, n1) = (self.0.flat_len(), self.1.flat_len());
        if i < n0 {
            self.0.flat_get(i)
        } else if i < n0 + n1 {
            self.1.flat_get(i - n0)
        } else {
            self.2.flat_get(i - n0 - n1)
        }
    }
    fn flat_set(&mut self, i: usize, value: T) {
        let (n0, n1) = (self.0.flat_len(), self.1.flat_len());
        if i < n0 {
            self.0.flat_set(i, value)
        } else if i < n0 + n1 {
            self.1.flat_set(i - n0, value)
        } else {
            self.2.flat_set(i - n0 - n1, value)
        }
    }
    fn dims(&self) -> Vec<usize> {
        let mut d = self.0.dims();
        d.push(usize::MAX);
        d.extend(self.1.dims());
        d.push(usize::MAX);
        d.extend(self.2.dims());
        d
    }
}

/// Gradients returned by a backward pass.
#[derive(Clone, Debug)]
pub struct BackwardResult<T, I> {
    /// Same shape as the forward input.
    pub input_grad: I,
    /// One gradient per parameter, in [`Layer::params`] order.
    pub param_grads: Vec<Matrix<T>>,
}

impl<T: Scalar, I: Flat<T>> BackwardResult<T, I> {
    pub fn new(input: &I, params: &[&Matrix<T>], input_grad: I, param_grads: Vec<Matrix<T>>) -> Result<Self> {
        if input.dims() != input_grad.dims() {
            return Err(Error::contract(format!(
                "input gradient dims {:?} differ from input dims {:?}",
                input_grad.dims(),
                input.dims()
            )));
        }
        if params.len() != param_grads.len() {
            return Err(Error::contract("parameter gradient count differs from parameter count"));
        }
        for (p, g) in params.iter().zip(&param_grads) {
            if p.shape() != g.shape() {
                return Err(Error::Shape {
                    op: "BackwardResult::new",
                    left: p.shape(),
                    right: g.shape(),
                });
            }
        }
        Ok(Self {
            input_grad,
            param_grads,
        })
    }
}

/// A differentiable transform with named parameters.
pub trait Layer<T: Scalar> {
    type Input: Flat<T> + Clone;
    type Output: Flat<T> + Clone;

    fn forward(&self, input: &Self::Input) -> Result<Self::Output>;

    fn backward(&self, input: &Self::Input, grad_output: &Self::Output) -> Result<BackwardResult<T, Self::Input>>;

    /// Parameter names, stable per layer kind.
    fn param_names(&self) -> Vec<&'static str> {
        Vec::new()
    }

    fn params(&self) -> Vec<&Matrix<T>> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix<T>> {
        Vec::new()
    }
}

/// Uniform initialization in `±√(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Scalar, R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Matrix<T> {
    let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| T::lit(rng.random_range(-limit..=limit)))
}

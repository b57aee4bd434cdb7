//! Graph layers: renormalized GCN propagation, NN4G and GraphSage.

mod gcn;
mod nn4g;
mod sage;

pub use gcn::GcnLayer;
pub use nn4g::Nn4gLayer;
pub use sage::{Aggregator, GraphSageLayer};

use crate::error::Result;
use crate::graph::Graph;
use crate::linalg::Matrix;
use crate::nn::{BackwardResult, Flat, Layer};
use crate::scalar::Scalar;

/// A layer whose forward pass reads a fixed graph alongside its input.
pub trait GraphLayer<T: Scalar> {
    type Input: Flat<T> + Clone;

    fn forward(&self, g: &Graph<T>, input: &Self::Input) -> Result<Matrix<T>>;

    fn backward(&self, g: &Graph<T>, input: &Self::Input, grad_output: &Matrix<T>)
        -> Result<BackwardResult<T, Self::Input>>;

    fn param_names(&self) -> Vec<&'static str>;

    fn params(&self) -> Vec<&Matrix<T>>;

    fn params_mut(&mut self) -> Vec<&mut Matrix<T>>;
}

/// Binds a [`GraphLayer`] to one graph, making it an ordinary [`Layer`].
#[derive(Clone, Debug)]
pub struct OnGraph<'g, L, T> {
    pub layer: L,
    pub graph: &'g Graph<T>,
}

impl<'g, L, T> OnGraph<'g, L, T> {
    pub fn new(layer: L, graph: &'g Graph<T>) -> Self {
        Self { layer, graph }
    }
}

impl<L: GraphLayer<T>, T: Scalar> Layer<T> for OnGraph<'_, L, T> {
    type Input = L::Input;
    type Output = Matrix<T>;

    fn forward(&self, input: &Self::Input) -> Result<Matrix<T>> {
        self.layer.forward(self.graph, input)
    }

    fn backward(&self, input: &Self::Input, grad_output: &Matrix<T>) -> Result<BackwardResult<T, Self::Input>> {
        self.layer.backward(self.graph, input, grad_output)
    }

    fn param_names(&self) -> Vec<&'static str> {
        self.layer.param_names()
    }

    fn params(&self) -> Vec<&Matrix<T>> {
        self.layer.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix<T>> {
        self.layer.params_mut()
    }
}

fn check_rows<T: Scalar>(g: &Graph<T>, m: &Matrix<T>, op: &'static str) -> Result<()> {
    if m.rows() != g.node_count() {
        return Err(crate::Error::Shape {
            op,
            left: (g.node_count(), 0),
            right: m.shape(),
        });
    }
    Ok(())
}

//! Finite-difference audit of every layer and of the full MSF-CNN model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gnn::{GcnLayer, GraphSageLayer, Nn4gLayer, OnGraph};
use crate::model::{MsfCnnConfig, MsfCnnModel};
use crate::training::Trainable;
use crate::nn::{
    grad_check_detailed, Activation, BackwardResult, Conv2d, Dense, GradCheckReport, Layer, MaxPool2d,
    MultiHeadAttention, PyramidPooling, SideFusion,
};
use crate::{FeatureMap, Graph, Matrix};

pub const LAYER_THRESHOLD: f64 = 1e-4;
pub const END_TO_END_THRESHOLD: f64 = 1e-3;
pub const EPSILON: f64 = 1e-5;
pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// Checks selectable by name.
pub const CHECKS: [&str; 10] = [
    "dense",
    "conv2d",
    "maxpool",
    "attention",
    "side_fusion",
    "ppm",
    "gcn",
    "nn4g",
    "graphsage",
    "msf_cnn",
];

/// Name of the planted-bug fixture added by `inject_bug`.
pub const INJECTED: &str = "dense_injected_bug";

/// Worst result of one check across seeds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditRow {
    pub name: String,
    pub max_rel_error: f64,
    pub threshold: f64,
    pub passed: bool,
    pub seeds: usize,
    pub coordinates: usize,
    /// Coordinates excluded for straddling a relu or max-pool kink.
    pub skipped: usize,
    pub worst: String,
}

fn matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn feature_map(c: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> FeatureMap {
    FeatureMap::from_fn(c, h, w, |_, _, _| rng.random_range(-1.0..1.0))
}

fn graph(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Graph::new(n, edges).expect("valid edges")
}

/// Dense layer whose weight gradient is doubled.
#[derive(Clone, Debug)]
struct DoubledWeightGrad(Dense<f64>);

impl Layer<f64> for DoubledWeightGrad {
    type Input = Matrix;
    type Output = Matrix;

    fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.0.forward(x)
    }

    fn backward(&self, x: &Matrix, g: &Matrix) -> Result<BackwardResult<f64, Matrix>> {
        let mut b = self.0.backward(x, g)?;
        b.param_grads[0] = b.param_grads[0].scale(2.0);
        Ok(b)
    }

    fn param_names(&self) -> Vec<&'static str> {
        self.0.param_names()
    }

    fn params(&self) -> Vec<&Matrix> {
        self.0.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.0.params_mut()
    }
}

/// Small MSF-CNN instance used by the end-to-end check.
pub fn end_to_end_config() -> MsfCnnConfig {
    MsfCnnConfig {
        image_size: 16,
        conv_channels: vec![4; 4],
        gnn_hidden: 8,
        knn_k: 3,
        ..MsfCnnConfig::default()
    }
}

/// End-to-end check on six random 16×16 images.
///
/// Biases are redrawn from `U(-0.1, 0.1)` first: with the all-zero bias
/// initialization, any all-zero input patch puts a pre-activation exactly on
/// the relu kink, where central differences average two one-sided slopes.
pub fn check_msf_cnn(seed: u64) -> Result<GradCheckReport> {
    let config = end_to_end_config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = MsfCnnModel::new(config.clone(), seed)?;
    let mut params = model.parameters();
    for (name, value) in params.iter_mut() {
        if name.ends_with("bias") {
            value.as_mut_slice().iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
        }
    }
    model.set_parameters(&params)?;
    let images: Vec<FeatureMap> = (0..6)
        .map(|_| FeatureMap::from_fn(1, config.image_size, config.image_size, |_, _, _| rng.random()))
        .collect();
    let labels: Vec<usize> = (0..6).map(|i| i % config.classes).collect();
    let refs: Vec<&FeatureMap> = images.iter().collect();
    model.gradient_check(&refs, &labels, EPSILON)
}

fn check_one(name: &str, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rng = &mut rng;
    match name {
        "dense" => {
            let layer = Dense::new(5, 4, rng);
            grad_check_detailed(&layer, &matrix(3, 5, rng), EPSILON)
        }
        INJECTED => {
            let layer = DoubledWeightGrad(Dense::new(5, 4, rng));
            grad_check_detailed(&layer, &matrix(3, 5, rng), EPSILON)
        }
        "conv2d" => {
            let layer = Conv2d::new(2, 3, 3, rng)?;
            grad_check_detailed(&layer, &feature_map(2, 6, 6, rng), EPSILON)
        }
        "maxpool" => grad_check_detailed(&MaxPool2d::new(2)?, &feature_map(2, 6, 6, rng), EPSILON),
        "attention" => {
            let layer = MultiHeadAttention::new((4, 3, 5), 8, 4, 2, rng)?;
            let input = (matrix(3, 4, rng), matrix(5, 3, rng), matrix(5, 5, rng));
            grad_check_detailed(&layer, &input, EPSILON)
        }
        "side_fusion" => {
            let input = (feature_map(2, 3, 3, rng), feature_map(2, 6, 6, rng));
            grad_check_detailed(&SideFusion::new(0.6)?, &input, EPSILON)
        }
        "ppm" => grad_check_detailed(&PyramidPooling::new(vec![1, 2, 3])?, &feature_map(2, 6, 5, rng), EPSILON),
        "gcn" => {
            let g = graph(8, 0.4, rng);
            let layer = OnGraph::new(GcnLayer::new(4, 3, Activation::Relu, rng), &g);
            grad_check_detailed(&layer, &matrix(8, 4, rng), EPSILON)
        }
        "nn4g" => {
            let g = graph(8, 0.4, rng);
            let layer = OnGraph::new(Nn4gLayer::new(3, 4, 3, Activation::Sigmoid, rng), &g);
            grad_check_detailed(&layer, &(matrix(8, 3, rng), matrix(8, 4, rng)), EPSILON)
        }
        "graphsage" => {
            let g = graph(8, 0.4, rng);
            let sample = g.max_degree().max(1);
            let mean = OnGraph::new(GraphSageLayer::new(4, 3, None, sample, seed, Activation::Sigmoid, rng)?, &g);
            let pool = OnGraph::new(GraphSageLayer::new(4, 3, Some(5), sample, seed, Activation::Sigmoid, rng)?, &g);
            let h = matrix(8, 4, rng);
            let a = grad_check_detailed(&mean, &h, EPSILON)?;
            let b = grad_check_detailed(&pool, &h, EPSILON)?;
            Ok(if b.max_rel_error > a.max_rel_error {
                GradCheckReport {
                    coordinates: a.coordinates + b.coordinates,
                    ..b
                }
            } else {
                GradCheckReport {
                    coordinates: a.coordinates + b.coordinates,
                    ..a
                }
            })
        }
        "msf_cnn" => check_msf_cnn(seed),
        other => Err(Error::config("scope", format!("unknown check {other:?}"))),
    }
}

/// Runs the checks selected by `scope` (`"all"` or one name from
/// [`CHECKS`]) over `seeds`, adding the planted-bug fixture when
/// `inject_bug` is set.
pub fn run_audit(scope: &str, inject_bug: bool, seeds: &[u64]) -> Result<Vec<AuditRow>> {
    let mut names: Vec<&str> = match scope {
        "all" => CHECKS.to_vec(),
        s if CHECKS.contains(&s) => vec![s],
        s => {
            return Err(Error::config(
                "scope",
                format!("unknown check {s:?}; expected all or one of {}", CHECKS.join(", ")),
            ))
        }
    };
    if inject_bug {
        names.push(INJECTED);
    }
    names
        .into_iter()
        .map(|name| {
            let threshold = if name == "msf_cnn" { END_TO_END_THRESHOLD } else { LAYER_THRESHOLD };
            let mut row = AuditRow {
                name: name.to_string(),
                max_rel_error: 0.0,
                threshold,
                passed: true,
                seeds: seeds.len(),
                coordinates: 0,
                skipped: 0,
                worst: String::new(),
            };
            for &seed in seeds {
                let r = check_one(name, seed)?;
                row.coordinates += r.coordinates;
                row.skipped += r.skipped;
                if r.max_rel_error >= row.max_rel_error {
                    row.max_rel_error = r.max_rel_error;
                    row.worst = format!("seed {seed}: {}", r.worst);
                }
            }
            row.passed = row.max_rel_error <= threshold;
            Ok(row)
        })
        .collect()
}

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{GnnKind, MsfCnnConfig, CONV_LAYERS, POOL_WINDOW};
use crate::error::{Error, Result};
use crate::gnn::{GcnLayer, GraphLayer, GraphSageLayer};
use crate::graph::{derive_seed, knn_similarity_graph, normalized_adjacency};
use crate::linalg::row_softmax;
use crate::nn::{
    weighted_fusion, weighted_fusion_backward, Activation, Conv2d, Dense, GradCheckReport, Layer, MaxPool2d,
    PyramidPooling,
};
use crate::params::ParamRegistry;
use crate::training::{cross_entropy, one_hot, Trainable};
use crate::{FeatureMap, Graph, Matrix};

/// Graph layers applied to the per-batch patient graph.
#[derive(Clone, Debug)]
pub enum GnnStack {
    Gcn(Vec<GcnLayer<f64>>),
    Sage(Vec<GraphSageLayer<f64>>),
}

/// Multi-scale fused CNN features, a per-batch kNN graph over images,
/// graph layers and a softmax head.
#[derive(Debug)]
pub struct MsfCnnModel {
    config: MsfCnnConfig,
    convs: Vec<Conv2d<f64>>,
    ppm: Option<PyramidPooling>,
    gnn: GnnStack,
    head: Dense<f64>,
    fusion_calls: AtomicUsize,
}

impl Clone for MsfCnnModel {
    fn clone(&self) -> Self {
        Self {
            config: self.config.clone(),
            convs: self.convs.clone(),
            ppm: self.ppm.clone(),
            gnn: self.gnn.clone(),
            head: self.head.clone(),
            fusion_calls: AtomicUsize::new(self.fusion_invocations()),
        }
    }
}

#[derive(Clone, Debug)]
struct ImageCache {
    input: FeatureMap,
    conv_pre: Vec<FeatureMap>,
    relu: Vec<FeatureMap>,
    pool_arg: Vec<Option<Vec<usize>>>,
    stage_out: Vec<FeatureMap>,
    fused: FeatureMap,
    top_shape: (usize, usize, usize),
}

/// Intermediate values of a batch forward pass.
#[derive(Clone, Debug)]
pub struct BatchCache {
    images: Vec<ImageCache>,
    /// One fused feature row per image.
    pub features: Matrix,
    /// The kNN graph built over `features`.
    pub graph: Graph,
    a_norm: Matrix,
    gnn_inputs: Vec<Matrix>,
    gcn_steps: Vec<(Matrix, Matrix, Matrix)>,
    hidden: Matrix,
    pub logits: Matrix,
    pub probs: Matrix,
}

impl BatchCache {
    /// Fingerprint of every relu sign and max-pool winner in the pass. Two
    /// parameter points with equal patterns lie in the same linear piece of
    /// the piecewise-smooth network.
    pub fn activation_pattern(&self) -> u64 {
        let mut h = DefaultHasher::new();
        let positive = |m: &[f64], h: &mut DefaultHasher| m.iter().for_each(|&v| (v > 0.0).hash(h));
        for img in &self.images {
            img.relu.iter().for_each(|r| positive(r.as_slice(), &mut h));
            img.pool_arg.hash(&mut h);
        }
        self.gcn_steps.iter().for_each(|(_, _, o)| positive(o.as_slice(), &mut h));
        self.gnn_inputs.iter().skip(1).for_each(|m| positive(m.as_slice(), &mut h));
        positive(self.hidden.as_slice(), &mut h);
        h.finish()
    }
}

const POOL: MaxPool2d = MaxPool2d { window: POOL_WINDOW };

impl MsfCnnModel {
    /// Builds a model with parameters drawn deterministically from `seed`.
    pub fn new(config: MsfCnnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut convs = Vec::with_capacity(CONV_LAYERS);
        let mut in_c = config.in_channels;
        for &out_c in &config.conv_channels {
            convs.push(Conv2d::new(in_c, out_c, config.kernel, &mut rng)?);
            in_c = out_c;
        }
        let ppm = if config.ppm_levels.is_empty() {
            None
        } else {
            Some(PyramidPooling::new(config.ppm_levels.clone())?)
        };
        let mut dim = config.feature_dim();
        let gnn = match config.gnn_kind {
            GnnKind::Gcn => GnnStack::Gcn(
                (0..config.gnn_layers)
                    .map(|_| {
                        let l = GcnLayer::new(dim, config.gnn_hidden, Activation::Relu, &mut rng);
                        dim = config.gnn_hidden;
                        l
                    })
                    .collect(),
            ),
            GnnKind::GraphSage => GnnStack::Sage(
                (0..config.gnn_layers)
                    .map(|i| {
                        let sample_seed = derive_seed(seed, 1, i as u64);
                        let l = GraphSageLayer::new(
                            dim,
                            config.gnn_hidden,
                            None,
                            config.sage_sample_size,
                            sample_seed,
                            Activation::Relu,
                            &mut rng,
                        );
                        dim = config.gnn_hidden;
                        l
                    })
                    .collect::<Result<_>>()?,
            ),
        };
        let head = Dense::new(config.gnn_hidden, config.classes, &mut rng);
        Ok(Self {
            config,
            convs,
            ppm,
            gnn,
            head,
            fusion_calls: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &MsfCnnConfig {
        &self.config
    }

    /// How many times the fusion module has run.
    pub fn fusion_invocations(&self) -> usize {
        self.fusion_calls.load(Ordering::Relaxed)
    }

    fn named_params(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (i, conv) in self.convs.iter().enumerate() {
            for (n, p) in conv.param_names().into_iter().zip(conv.params()) {
                out.push((format!("conv{}.{n}", i + 1), p));
            }
        }
        match &self.gnn {
            GnnStack::Gcn(layers) => {
                for (i, l) in layers.iter().enumerate() {
                    for (n, p) in l.param_names().into_iter().zip(l.params()) {
                        out.push((format!("gnn{}.{n}", i + 1), p));
                    }
                }
            }
            GnnStack::Sage(layers) => {
                for (i, l) in layers.iter().enumerate() {
                    for (n, p) in l.param_names().into_iter().zip(l.params()) {
                        out.push((format!("gnn{}.{n}", i + 1), p));
                    }
                }
            }
        }
        for (n, p) in self.head.param_names().into_iter().zip(self.head.params()) {
            out.push((format!("head.{n}"), p));
        }
        out
    }

    fn params_mut_ordered(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = Vec::new();
        for conv in &mut self.convs {
            out.extend(conv.params_mut());
        }
        match &mut self.gnn {
            GnnStack::Gcn(layers) => layers.iter_mut().for_each(|l| out.extend(l.params_mut())),
            GnnStack::Sage(layers) => layers.iter_mut().for_each(|l| out.extend(l.params_mut())),
        }
        out.extend(self.head.params_mut());
        out
    }

    fn check_image(&self, x: &FeatureMap) -> Result<()> {
        let s = self.config.image_size;
        let want = (self.config.in_channels, s, s);
        if x.shape() != want {
            return Err(Error::contract(format!(
                "image of shape {:?} does not match the configured {want:?}",
                x.shape()
            )));
        }
        Ok(())
    }

    fn forward_image(&self, x: &FeatureMap) -> Result<(Vec<f64>, ImageCache)> {
        self.check_image(x)?;
        let mut conv_pre = Vec::with_capacity(CONV_LAYERS);
        let mut relu = Vec::with_capacity(CONV_LAYERS);
        let mut pool_arg = Vec::with_capacity(CONV_LAYERS);
        let mut stage_out: Vec<FeatureMap> = Vec::with_capacity(CONV_LAYERS);
        for (i, conv) in self.convs.iter().enumerate() {
            let input = if i == 0 { x } else { &stage_out[i - 1] };
            let pre = conv.forward(input)?;
            let r = pre.map(|v| v.max(0.0));
            let (out, arg) = if self.config.pool_positions.contains(&i) {
                let (o, a) = POOL.forward_with_argmax(&r)?;
                (o, Some(a))
            } else {
                (r.clone(), None)
            };
            conv_pre.push(pre);
            relu.push(r);
            pool_arg.push(arg);
            stage_out.push(out);
        }
        let taps = self.config.tap_stages();
        let fused = if taps.len() == 1 {
            stage_out[taps[0]].clone()
        } else {
            self.fusion_calls.fetch_add(1, Ordering::Relaxed);
            let maps: Vec<&FeatureMap> = taps.iter().map(|&t| &stage_out[t]).collect();
            weighted_fusion(&maps, &self.config.fusion_weights)?
        };
        let top = match &self.ppm {
            Some(ppm) => ppm.forward(&fused)?,
            None => fused.clone(),
        };
        let features = top.channel_means();
        Ok((
            features,
            ImageCache {
                input: x.clone(),
                conv_pre,
                relu,
                pool_arg,
                stage_out,
                fused,
                top_shape: top.shape(),
            },
        ))
    }

    /// Gradients `(weight, bias)` of every convolution for one image.
    fn backward_image(&self, cache: &ImageCache, g_feat: &[f64]) -> Result<Vec<(Matrix, Matrix)>> {
        let (c, h, w) = cache.top_shape;
        let inv = 1.0 / (h * w) as f64;
        let g_top = FeatureMap::from_fn(c, h, w, |ch, _, _| g_feat[ch] * inv);
        let g_fused = match &self.ppm {
            Some(ppm) => ppm.backward(&cache.fused, &g_top)?.input_grad,
            None => g_top,
        };
        let taps = self.config.tap_stages();
        let mut g_stage: Vec<Option<FeatureMap>> = vec![None; CONV_LAYERS];
        if taps.len() == 1 {
            g_stage[taps[0]] = Some(g_fused);
        } else {
            let shapes: Vec<_> = taps.iter().map(|&t| cache.stage_out[t].shape()).collect();
            for (&t, g) in taps.iter().zip(weighted_fusion_backward(&shapes, &self.config.fusion_weights, &g_fused)) {
                g_stage[t] = Some(g);
            }
        }
        let mut grads = vec![(Matrix::zeros(0, 0), Matrix::zeros(0, 0)); CONV_LAYERS];
        let mut carry: Option<FeatureMap> = None;
        for i in (0..CONV_LAYERS).rev() {
            let g = match (g_stage[i].take(), carry.take()) {
                (Some(mut a), Some(b)) => {
                    a.as_mut_slice().iter_mut().zip(b.as_slice()).for_each(|(x, y)| *x += y);
                    a
                }
                (Some(a), None) | (None, Some(a)) => a,
                (None, None) => return Err(Error::contract("no gradient reaches the deepest stage")),
            };
            let g_relu = match &cache.pool_arg[i] {
                Some(arg) => POOL.backward_from_argmax(cache.relu[i].shape(), arg, &g),
                None => g,
            };
            let mut g_pre = g_relu;
            g_pre
                .as_mut_slice()
                .iter_mut()
                .zip(cache.conv_pre[i].as_slice())
                .for_each(|(gv, &p)| {
                    if p <= 0.0 {
                        *gv = 0.0;
                    }
                });
            let input = if i == 0 { &cache.input } else { &cache.stage_out[i - 1] };
            let back = self.convs[i].backward(input, &g_pre)?;
            let mut pg = back.param_grads.into_iter();
            grads[i] = (pg.next().unwrap(), pg.next().unwrap());
            carry = Some(back.input_grad);
        }
        Ok(grads)
    }

    /// One fused, globally pooled feature row per image.
    pub fn extract_features(&self, batch: &[&FeatureMap]) -> Result<Matrix> {
        let rows = batch
            .par_iter()
            .map(|x| self.forward_image(x).map(|(f, _)| f))
            .collect::<Result<Vec<_>>>()?;
        Matrix::from_rows(&rows)
    }

    pub fn forward_batch(&self, batch: &[&FeatureMap]) -> Result<BatchCache> {
        if batch.len() < self.config.knn_k + 1 {
            return Err(Error::contract(format!(
                "batch of {} is too small for knn_k = {}",
                batch.len(),
                self.config.knn_k
            )));
        }
        let per_image = batch
            .par_iter()
            .map(|x| self.forward_image(x))
            .collect::<Result<Vec<_>>>()?;
        let (rows, images): (Vec<Vec<f64>>, Vec<ImageCache>) = per_image.into_iter().unzip();
        let features = Matrix::from_rows(&rows)?;
        let graph = knn_similarity_graph(&features, self.config.knn_k)?;
        let a_norm = normalized_adjacency(&graph);
        let mut h = features.clone();
        let mut gnn_inputs = Vec::new();
        let mut gcn_steps = Vec::new();
        match &self.gnn {
            GnnStack::Gcn(layers) => {
                for l in layers {
                    let (s, p, o) = l.forward_with_operator(&a_norm, &h)?;
                    h = o.clone();
                    gcn_steps.push((s, p, o));
                }
            }
            GnnStack::Sage(layers) => {
                for l in layers {
                    let next = l.forward(&graph, &h)?;
                    gnn_inputs.push(std::mem::replace(&mut h, next));
                }
            }
        }
        let logits = self.head.forward(&h)?;
        let probs = row_softmax(&logits);
        Ok(BatchCache {
            images,
            features,
            graph,
            a_norm,
            gnn_inputs,
            gcn_steps,
            hidden: h,
            logits,
            probs,
        })
    }

    /// Parameter gradients given the loss gradient at the logits.
    pub fn backward(&self, cache: &BatchCache, logit_grad: &Matrix) -> Result<ParamRegistry> {
        if logit_grad.shape() != cache.logits.shape() {
            return Err(Error::StaleCache);
        }
        let head = self.head.backward(&cache.hidden, logit_grad)?;
        let mut g = head.input_grad;
        let mut gnn_grads: Vec<Vec<Matrix>> = Vec::new();
        match &self.gnn {
            GnnStack::Gcn(layers) => {
                if cache.gcn_steps.len() != layers.len() {
                    return Err(Error::StaleCache);
                }
                for (l, (s, p, o)) in layers.iter().zip(&cache.gcn_steps).rev() {
                    let (g_h, g_w) = l.backward_with_operator(&cache.a_norm, s, p, o, &g)?;
                    gnn_grads.push(vec![g_w]);
                    g = g_h;
                }
            }
            GnnStack::Sage(layers) => {
                if cache.gnn_inputs.len() != layers.len() {
                    return Err(Error::StaleCache);
                }
                for (l, input) in layers.iter().zip(&cache.gnn_inputs).rev() {
                    let b = l.backward(&cache.graph, input, &g)?;
                    gnn_grads.push(b.param_grads);
                    g = b.input_grad;
                }
            }
        }
        gnn_grads.reverse();
        let per_image = cache
            .images
            .par_iter()
            .enumerate()
            .map(|(i, img)| self.backward_image(img, g.row(i)))
            .collect::<Result<Vec<_>>>()?;
        let mut conv_grads: Vec<(Matrix, Matrix)> =
            self.convs.iter().map(|c| (Matrix::zeros(c.weight.rows(), c.weight.cols()), Matrix::zeros(1, c.out_channels()))).collect();
        for img in &per_image {
            for ((acc_w, acc_b), (w, b)) in conv_grads.iter_mut().zip(img) {
                acc_w.add_scaled(w, 1.0)?;
                acc_b.add_scaled(b, 1.0)?;
            }
        }
        let mut values: Vec<Matrix> = Vec::new();
        for (w, b) in conv_grads {
            values.push(w);
            values.push(b);
        }
        values.extend(gnn_grads.into_iter().flatten());
        values.extend(head.param_grads);
        let mut reg = ParamRegistry::new();
        for ((name, p), v) in self.named_params().into_iter().zip(values) {
            if p.shape() != v.shape() {
                return Err(Error::Shape {
                    op: "gradient registry",
                    left: p.shape(),
                    right: v.shape(),
                });
            }
            reg.insert(name, v)?;
        }
        Ok(reg)
    }

    /// Mean cross-entropy of a batch.
    pub fn loss(&self, batch: &[&FeatureMap], labels: &[usize]) -> Result<f64> {
        let cache = self.forward_batch(batch)?;
        Ok(cross_entropy(&cache.probs, &one_hot(labels, self.config.classes)?)?.loss)
    }

    /// Central-difference check of [`backward`](Self::backward) over every
    /// parameter coordinate of the mean cross-entropy. Fails if any
    /// perturbation changes the kNN edge set, since the graph is treated as
    /// constant. Coordinates whose perturbation flips a relu or a max-pool
    /// winner straddle a kink and are counted in `skipped` instead.
    pub fn gradient_check(&self, batch: &[&FeatureMap], labels: &[usize], epsilon: f64) -> Result<GradCheckReport> {
        let targets = one_hot(labels, self.config.classes)?;
        let cache = self.forward_batch(batch)?;
        let edges: Vec<(usize, usize)> = cache.graph.edges().collect();
        let pattern = cache.activation_pattern();
        let ce = cross_entropy(&cache.probs, &targets)?;
        let analytic = self.backward(&cache, &ce.logit_grad)?;
        let base = self.parameters();
        let mut probe = self.clone();
        let mut report = GradCheckReport {
            max_rel_error: 0.0,
            worst: String::new(),
            coordinates: 0,
            skipped: 0,
        };
        for ((name, values), (_, grad)) in base.iter().zip(analytic.iter()) {
            for i in 0..values.as_slice().len() {
                let mut eval = |delta: f64| -> Result<Option<f64>> {
                    let mut p = base.clone();
                    p.get_mut(name).expect("own parameter").as_mut_slice()[i] += delta;
                    probe.set_parameters(&p)?;
                    let c = probe.forward_batch(batch)?;
                    if !c.graph.edges().eq(edges.iter().copied()) {
                        return Err(Error::contract(format!("perturbing {name}[{i}] changed the kNN graph")));
                    }
                    if c.activation_pattern() != pattern {
                        return Ok(None);
                    }
                    Ok(Some(cross_entropy(&c.probs, &targets)?.loss))
                };
                let (Some(plus), Some(minus)) = (eval(epsilon)?, eval(-epsilon)?) else {
                    report.skipped += 1;
                    continue;
                };
                let numeric = (plus - minus) / (2.0 * epsilon);
                let a = grad.as_slice()[i];
                let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
                report.coordinates += 1;
                if err > report.max_rel_error || report.worst.is_empty() {
                    report.max_rel_error = err;
                    report.worst = format!("{name}[{i}] (analytic {a:e}, numeric {numeric:e})");
                }
            }
        }
        Ok(report)
    }

    fn set_sampling_epoch(&mut self, epoch: u64) {
        if let GnnStack::Sage(layers) = &mut self.gnn {
            layers.iter_mut().for_each(|l| l.set_epoch(epoch));
        }
    }
}

impl Trainable for MsfCnnModel {
    type Sample = FeatureMap;

    fn classes(&self) -> usize {
        self.config.classes
    }

    fn min_batch(&self) -> usize {
        self.config.knn_k + 1
    }

    fn predict(&self, batch: &[&FeatureMap]) -> Result<Matrix> {
        Ok(self.forward_batch(batch)?.probs)
    }

    /// GraphSage layers sample with the training epoch here and fall back
    /// to epoch 0 for prediction.
    fn gradients(&mut self, batch: &[&FeatureMap], labels: &[usize], epoch: usize) -> Result<(f64, ParamRegistry)> {
        self.set_sampling_epoch(epoch as u64);
        let result = (|| {
            let cache = self.forward_batch(batch)?;
            let ce = cross_entropy(&cache.probs, &one_hot(labels, self.config.classes)?)?;
            Ok((ce.loss, self.backward(&cache, &ce.logit_grad)?))
        })();
        self.set_sampling_epoch(0);
        result
    }

    fn parameters(&self) -> ParamRegistry {
        let mut reg = ParamRegistry::new();
        for (name, p) in self.named_params() {
            reg.insert(name, p.clone()).expect("parameter names are unique");
        }
        reg
    }

    fn set_parameters(&mut self, params: &ParamRegistry) -> Result<()> {
        self.parameters().check_layout(params)?;
        for (dst, (_, src)) in self.params_mut_ordered().into_iter().zip(params.iter()) {
            dst.as_mut_slice().copy_from_slice(src.as_slice());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::nn::weighted_fusion;

    fn small_config() -> MsfCnnConfig {
        MsfCnnConfig {
            image_size: 16,
            conv_channels: vec![4; 4],
            gnn_hidden: 6,
            knn_k: 2,
            ..MsfCnnConfig::default()
        }
    }

    fn images(n: usize, c: &MsfCnnConfig, seed: u64) -> Vec<FeatureMap> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| FeatureMap::from_fn(c.in_channels, c.image_size, c.image_size, |_, _, _| rng.random()))
            .collect()
    }

    fn refs(v: &[FeatureMap]) -> Vec<&FeatureMap> {
        v.iter().collect()
    }

    #[test]
    fn parameter_count_matches_closed_form() {
        let c = MsfCnnConfig::default();
        let m = MsfCnnModel::new(c.clone(), 0).unwrap();
        let mut expect = 0;
        let mut in_c = c.in_channels;
        for &out_c in &c.conv_channels {
            expect += out_c * in_c * c.kernel * c.kernel + out_c;
            in_c = out_c;
        }
        let d = c.conv_channels[3] * (1 + c.ppm_levels.len());
        expect += d * c.gnn_hidden + (c.gnn_layers - 1) * c.gnn_hidden * c.gnn_hidden;
        expect += c.gnn_hidden * c.classes + c.classes;
        assert_eq!(m.parameters().scalar_count(), expect);
        let names: Vec<String> = m.parameters().names().map(String::from).collect();
        assert_eq!(names.first().unwrap(), "conv1.weight");
        assert_eq!(names.last().unwrap(), "head.bias");
    }

    #[test]
    fn graphsage_variant_builds() {
        let c = MsfCnnConfig {
            gnn_kind: GnnKind::GraphSage,
            ..small_config()
        };
        let mut m = MsfCnnModel::new(c.clone(), 1).unwrap();
        let imgs = images(5, &c, 2);
        let (loss, grads) = m.gradients(&refs(&imgs), &[0, 1, 0, 1, 1], 3).unwrap();
        assert!(loss.is_finite());
        m.parameters().check_layout(&grads).unwrap();
        assert!(grads.get("gnn2.weight").is_some());
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = MsfCnnModel::new(MsfCnnConfig::default(), 9).unwrap().parameters();
        let b = MsfCnnModel::new(MsfCnnConfig::default(), 9).unwrap().parameters();
        let c = MsfCnnModel::new(MsfCnnConfig::default(), 10).unwrap().parameters();
        for (((name, x), (_, y)), (_, z)) in a.iter().zip(b.iter()).zip(c.iter()) {
            assert_eq!(x, y);
            if name.ends_with("weight") {
                assert_ne!(x, z);
            }
        }
    }

    #[test]
    fn plain_model_never_fuses() {
        let c = small_config();
        let imgs = images(4, &c, 1);
        let plain = MsfCnnModel::new(c.plain(), 0).unwrap();
        plain.forward_batch(&refs(&imgs)).unwrap();
        assert_eq!(plain.fusion_invocations(), 0);
        let full = MsfCnnModel::new(c, 0).unwrap();
        full.forward_batch(&refs(&imgs)).unwrap();
        assert_eq!(full.fusion_invocations(), 4);
    }

    #[test]
    fn deep_only_weights_match_plain_features() {
        let c = small_config();
        let imgs = images(3, &c, 4);
        let deep_only = MsfCnnModel::new(
            MsfCnnConfig {
                fusion_weights: vec![1.0, 0.0],
                ..c.clone()
            },
            5,
        )
        .unwrap();
        let plain = MsfCnnModel::new(c.plain(), 5).unwrap();
        let a = deep_only.extract_features(&refs(&imgs)).unwrap();
        let b = plain.extract_features(&refs(&imgs)).unwrap();
        assert!(a.sub(&b).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn zero_image_zero_bias_gives_zero_features() {
        let c = small_config();
        let mut m = MsfCnnModel::new(c.clone(), 3).unwrap();
        let mut p = m.parameters();
        for (name, v) in p.iter_mut() {
            if name.starts_with("conv") && name.ends_with("bias") {
                v.as_mut_slice().fill(0.0);
            }
        }
        m.set_parameters(&p).unwrap();
        let zero = FeatureMap::zeros(1, 16, 16);
        let f = m.extract_features(&[&zero]).unwrap();
        assert!(f.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_contract() {
        let c = small_config();
        let m = MsfCnnModel::new(c.clone(), 0).unwrap();
        let imgs = images(5, &c, 8);
        let out = m.forward_batch(&refs(&imgs)).unwrap();
        assert_eq!(out.probs.shape(), (5, 2));
        for r in 0..5 {
            assert!((out.probs.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let again = m.forward_batch(&refs(&imgs)).unwrap();
        assert_eq!(out.probs, again.probs);
        assert!(m.forward_batch(&refs(&imgs[..2])).is_err());
        let wrong = FeatureMap::zeros(1, 8, 8);
        assert!(m.extract_features(&[&wrong]).is_err());
    }

    #[test]
    fn batch_permutation_permutes_rows() {
        let c = small_config();
        let m = MsfCnnModel::new(c.clone(), 2).unwrap();
        let imgs = images(6, &c, 11);
        let perm = [3usize, 0, 5, 1, 4, 2];
        let permuted: Vec<&FeatureMap> = perm.iter().map(|&i| &imgs[i]).collect();
        let a = m.forward_batch(&refs(&imgs)).unwrap().probs;
        let b = m.forward_batch(&permuted).unwrap().probs;
        for (r, &i) in perm.iter().enumerate() {
            for k in 0..2 {
                assert!((b[(r, k)] - a[(i, k)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stale_cache_rejected() {
        let c = small_config();
        let m = MsfCnnModel::new(c.clone(), 0).unwrap();
        let imgs = images(4, &c, 1);
        let cache = m.forward_batch(&refs(&imgs)).unwrap();
        assert!(matches!(m.backward(&cache, &Matrix::zeros(3, 2)), Err(Error::StaleCache)));
    }

    #[test]
    fn fusion_is_linear_in_its_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = FeatureMap::from_fn(2, 4, 4, |_, _, _| rng.random::<f64>());
        let b = FeatureMap::from_fn(2, 8, 8, |_, _, _| rng.random::<f64>());
        let f1 = weighted_fusion(&[&a, &b], &[0.6, 0.4]).unwrap();
        let f2 = weighted_fusion(&[&a.map(|v| 2.0 * v), &b.map(|v| 2.0 * v)], &[0.6, 0.4]).unwrap();
        for (x, y) in f1.as_slice().iter().zip(f2.as_slice()) {
            assert!((2.0 * x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn logit_gradient_is_p_minus_y() {
        let c = small_config();
        let m = MsfCnnModel::new(c.clone(), 0).unwrap();
        let imgs = images(3, &c, 1);
        let cache = m.forward_batch(&refs(&imgs)).unwrap();
        let labels = [1, 0, 1];
        let ce = cross_entropy(&cache.probs, &one_hot(&labels, 2).unwrap()).unwrap();
        let grads = m.backward(&cache, &ce.logit_grad).unwrap();
        // the head bias gradient is the column sum of (p - y) / N
        let bias = grads.get("head.bias").unwrap();
        for k in 0..2 {
            let expect: f64 = (0..3)
                .map(|r| (cache.probs[(r, k)] - (labels[r] == k) as u8 as f64) / 3.0)
                .sum();
            assert!((bias[(0, k)] - expect).abs() < 1e-15);
        }
    }
}

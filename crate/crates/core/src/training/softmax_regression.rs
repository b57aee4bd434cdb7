use rand::Rng;

use super::{cross_entropy, one_hot, Trainable};
use crate::error::{Error, Result};
use crate::linalg::row_softmax;
use crate::nn::{Dense, Layer};
use crate::params::ParamRegistry;
use crate::Matrix;

/// Linear softmax classifier over fixed-width feature vectors.
#[derive(Clone, Debug)]
pub struct SoftmaxRegression {
    pub dense: Dense<f64>,
}

impl SoftmaxRegression {
    pub fn new<R: Rng + ?Sized>(features: usize, classes: usize, rng: &mut R) -> Self {
        Self {
            dense: Dense::new(features, classes, rng),
        }
    }

    fn stack(&self, batch: &[&Vec<f64>]) -> Result<Matrix> {
        Matrix::from_rows(batch)
    }
}

impl Trainable for SoftmaxRegression {
    type Sample = Vec<f64>;

    fn classes(&self) -> usize {
        self.dense.out_dim()
    }

    fn predict(&self, batch: &[&Vec<f64>]) -> Result<Matrix> {
        Ok(row_softmax(&self.dense.forward(&self.stack(batch)?)?))
    }

    fn gradients(&mut self, batch: &[&Vec<f64>], labels: &[usize], _epoch: usize) -> Result<(f64, ParamRegistry)> {
        let x = self.stack(batch)?;
        let probs = row_softmax(&self.dense.forward(&x)?);
        let ce = cross_entropy(&probs, &one_hot(labels, self.classes())?)?;
        let back = self.dense.backward(&x, &ce.logit_grad)?;
        let mut grads = ParamRegistry::new();
        for (name, g) in self.dense.param_names().into_iter().zip(back.param_grads) {
            grads.insert(name, g)?;
        }
        Ok((ce.loss, grads))
    }

    fn parameters(&self) -> ParamRegistry {
        let mut p = ParamRegistry::new();
        for (name, m) in self.dense.param_names().into_iter().zip(self.dense.params()) {
            p.insert(name, m.clone()).expect("distinct names");
        }
        p
    }

    fn set_parameters(&mut self, params: &ParamRegistry) -> Result<()> {
        self.parameters().check_layout(params)?;
        let w = params.get("weight").ok_or(Error::StaleCache)?.clone();
        let b = params.get("bias").ok_or(Error::StaleCache)?.clone();
        self.dense = Dense::from_params(w, b)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    use super::*;
    use crate::training::{evaluate, fit, accuracy, train_loop, Dataset, SplitSpec, TrainConfig};

    fn blobs(n: usize, seed: u64) -> Dataset<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let mut samples = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let centre = if c == 0 { -2.0 } else { 2.0 };
            samples.push(vec![centre + noise.sample(&mut rng), centre + noise.sample(&mut rng)]);
            labels.push(c);
        }
        Dataset::new(samples, labels, 2).unwrap()
    }

    fn config(epochs: usize) -> TrainConfig {
        TrainConfig {
            lr_initial: 0.1,
            lr_final: 0.01,
            decay_epoch: epochs / 2,
            epochs,
            batch_size: 32,
            seed: 3,
        }
    }

    #[test]
    fn separable_data_is_learned() {
        let data = blobs(200, 1);
        let mut model = SoftmaxRegression::new(2, 2, &mut ChaCha8Rng::seed_from_u64(0));
        let run = train_loop(&mut model, &data, &config(30), &SplitSpec::default(), &mut |_| Ok(())).unwrap();
        let probs = evaluate(&model, &data, &run.split.test, 32).unwrap();
        let labels: Vec<usize> = run.split.test.iter().map(|&i| data.labels[i]).collect();
        assert!(accuracy(&probs, &labels) >= 0.95);
        assert!(run.logs.last().unwrap().mean_loss < run.logs[0].mean_loss);
    }

    #[test]
    fn training_is_deterministic() {
        let data = blobs(100, 2);
        let idx: Vec<usize> = (0..100).collect();
        let run = || {
            let mut m = SoftmaxRegression::new(2, 2, &mut ChaCha8Rng::seed_from_u64(5));
            let logs = fit(&mut m, &data, &idx, &config(5), &mut |_| Ok(())).unwrap();
            (logs, m.parameters())
        };
        let (a, pa) = run();
        let (b, pb) = run();
        assert_eq!(a, b);
        for ((_, x), (_, y)) in pa.iter().zip(pb.iter()) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn logs_one_entry_per_epoch_with_schedule() {
        let data = blobs(40, 4);
        let idx: Vec<usize> = (0..40).collect();
        let mut m = SoftmaxRegression::new(2, 2, &mut ChaCha8Rng::seed_from_u64(5));
        let mut seen = 0;
        let logs = fit(&mut m, &data, &idx, &config(4), &mut |_| {
            seen += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, 4);
        assert_eq!(logs.iter().map(|l| l.lr).collect::<Vec<_>>(), vec![0.1, 0.1, 0.01, 0.01]);
        let json = serde_json::to_value(&logs[0]).unwrap();
        for key in ["epoch", "loss", "acc", "lr"] {
            assert!(json.get(key).is_some());
        }
    }

    #[test]
    fn rejects_bad_labels() {
        assert!(Dataset::new(vec![vec![0.0]], vec![2], 2).is_err());
        assert!(Dataset::new(vec![vec![0.0]], vec![], 2).is_err());
    }
}

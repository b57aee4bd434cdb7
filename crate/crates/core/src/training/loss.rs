use crate::error::{Error, Result};
use crate::Matrix;

/// Probabilities are clamped below at this value before taking the log.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct CrossEntropy {
    /// Mean over the batch.
    pub loss: f64,
    /// Gradient of `loss` with respect to the softmax logits: `(p − y) / N`.
    pub logit_grad: Matrix,
}

/// One-hot rows for class indices.
pub fn one_hot(labels: &[usize], classes: usize) -> Result<Matrix> {
    let mut m = Matrix::zeros(labels.len(), classes);
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::contract(format!("label {l} out of range for {classes} classes")));
        }
        m[(i, l)] = 1.0;
    }
    Ok(m)
}

/// Batch-mean cross-entropy of softmax outputs against one-hot targets.
pub fn cross_entropy(probs: &Matrix, labels: &Matrix) -> Result<CrossEntropy> {
    if probs.shape() != labels.shape() {
        return Err(Error::Shape {
            op: "cross_entropy",
            left: probs.shape(),
            right: labels.shape(),
        });
    }
    let n = probs.rows();
    if n == 0 {
        return Err(Error::contract("cross-entropy of an empty batch"));
    }
    let mut total = 0.0;
    for r in 0..n {
        let p = probs.row(r);
        let y = labels.row(r);
        if (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::contract(format!("probability row {r} does not sum to 1")));
        }
        let ones = y.iter().filter(|&&v| v == 1.0).count();
        if ones != 1 || y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::contract(format!("label row {r} is not one-hot")));
        }
        for (&pk, &yk) in p.iter().zip(y) {
            if yk == 1.0 {
                total -= pk.max(PROBABILITY_FLOOR).ln();
            }
        }
    }
    let logit_grad = probs.sub(labels)?.scale(1.0 / n as f64);
    Ok(CrossEntropy {
        loss: total / n as f64,
        logit_grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::row_softmax;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let y = one_hot(&[1, 0], 3).unwrap();
        assert_eq!(cross_entropy(&y, &y).unwrap().loss, 0.0);
    }

    #[test]
    fn uniform_prediction() {
        let p = Matrix::filled(2, 4, 0.25);
        let y = one_hot(&[3, 0], 4).unwrap();
        let ce = cross_entropy(&p, &y).unwrap();
        assert!((ce.loss - 4f64.ln()).abs() < 1e-15);
        assert!((ce.loss - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn confident_wrong_prediction_is_clamped() {
        let p = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        let y = one_hot(&[1], 2).unwrap();
        let ce = cross_entropy(&p, &y).unwrap();
        assert!((ce.loss + PROBABILITY_FLOOR.ln()).abs() < 1e-9);
    }

    #[test]
    fn logit_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let logits = Matrix::from_fn(4, 3, |_, _| rng.random_range(-2.0..2.0));
        let y = one_hot(&[0, 2, 1, 2], 3).unwrap();
        let loss = |z: &Matrix| cross_entropy(&row_softmax(z), &y).unwrap().loss;
        let analytic = cross_entropy(&row_softmax(&logits), &y).unwrap().logit_grad;
        let eps = 1e-5;
        for i in 0..logits.as_slice().len() {
            let mut plus = logits.clone();
            plus.as_mut_slice()[i] += eps;
            let mut minus = logits.clone();
            minus.as_mut_slice()[i] -= eps;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * eps);
            let a = analytic.as_slice()[i];
            assert!((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8) < 1e-6);
        }
    }

    #[test]
    fn input_validation() {
        let p = Matrix::filled(1, 2, 0.5);
        assert!(cross_entropy(&p, &Matrix::filled(1, 2, 0.5)).is_err());
        assert!(cross_entropy(&p, &Matrix::zeros(1, 3)).is_err());
        assert!(cross_entropy(&Matrix::filled(1, 2, 0.6), &one_hot(&[0], 2).unwrap()).is_err());
        assert!(one_hot(&[2], 2).is_err());
    }
}

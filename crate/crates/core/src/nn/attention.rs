use rand::Rng;

use super::{glorot_uniform, BackwardResult, Layer};
use crate::error::{Error, Result};
use crate::linalg::{row_softmax, Matrix};
use crate::scalar::Scalar;

/// Multi-head scaled dot-product attention.
///
/// `headᵢ = softmax(Qᵢ Kᵢᵀ / √d_head) Vᵢ` with `Qᵢ = (q·W_Q)[:, slice i]`
/// (likewise for K and V); output is `concat(heads) · W_O`.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiHeadAttention<T> {
    pub w_q: Matrix<T>,
    pub w_k: Matrix<T>,
    pub w_v: Matrix<T>,
    pub w_o: Matrix<T>,
    heads: usize,
}

struct Projections<T> {
    qp: Matrix<T>,
    kp: Matrix<T>,
    vp: Matrix<T>,
    weights: Vec<Matrix<T>>,
    concat: Matrix<T>,
}

impl<T: Scalar> MultiHeadAttention<T> {
    /// `q`/`k`/`v` rows have widths `d_q`/`d_k`/`d_v`; the model width
    /// `d_model` must be divisible by `heads`.
    pub fn new<R: Rng + ?Sized>(
        dims: (usize, usize, usize),
        d_model: usize,
        d_out: usize,
        heads: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let (d_q, d_k, d_v) = dims;
        Self::from_params(
            glorot_uniform(d_q, d_model, d_q, d_model, rng),
            glorot_uniform(d_k, d_model, d_k, d_model, rng),
            glorot_uniform(d_v, d_model, d_v, d_model, rng),
            glorot_uniform(d_model, d_out, d_model, d_out, rng),
            heads,
        )
    }

    pub fn from_params(w_q: Matrix<T>, w_k: Matrix<T>, w_v: Matrix<T>, w_o: Matrix<T>, heads: usize) -> Result<Self> {
        let d_model = w_q.cols();
        if heads == 0 || !d_model.is_multiple_of(heads) {
            return Err(Error::contract(format!("model width {d_model} not divisible by {heads} heads")));
        }
        if w_k.cols() != d_model || w_v.cols() != d_model || w_o.rows() != d_model {
            return Err(Error::contract("attention projection widths disagree"));
        }
        Ok(Self {
            w_q,
            w_k,
            w_v,
            w_o,
            heads,
        })
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    fn head_dim(&self) -> usize {
        self.w_q.cols() / self.heads
    }

    fn project(&self, q: &Matrix<T>, k: &Matrix<T>, v: &Matrix<T>) -> Result<Projections<T>> {
        if k.rows() != v.rows() {
            return Err(Error::Shape {
                op: "attention keys/values",
                left: k.shape(),
                right: v.shape(),
            });
        }
        let qp = q.matmul(&self.w_q)?;
        let kp = k.matmul(&self.w_k)?;
        let vp = v.matmul(&self.w_v)?;
        let dh = self.head_dim();
        let scale = T::one() / T::lit(dh as f64).sqrt();
        let mut concat = Matrix::zeros(q.rows(), self.w_q.cols());
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = h * dh..(h + 1) * dh;
            let scores = qp.columns(cols.clone()).matmul_t(&kp.columns(cols.clone()))?.scale(scale);
            let p = row_softmax(&scores);
            concat.set_columns(h * dh, &p.matmul(&vp.columns(cols))?)?;
            weights.push(p);
        }
        Ok(Projections {
            qp,
            kp,
            vp,
            weights,
            concat,
        })
    }

    /// Per-head attention weight matrices (`n_q × n_k`, rows sum to 1).
    pub fn attention_weights(&self, q: &Matrix<T>, k: &Matrix<T>, v: &Matrix<T>) -> Result<Vec<Matrix<T>>> {
        Ok(self.project(q, k, v)?.weights)
    }
}

impl<T: Scalar> Layer<T> for MultiHeadAttention<T> {
    type Input = (Matrix<T>, Matrix<T>, Matrix<T>);
    type Output = Matrix<T>;

    fn forward(&self, (q, k, v): &Self::Input) -> Result<Matrix<T>> {
        self.project(q, k, v)?.concat.matmul(&self.w_o)
    }

    fn backward(&self, input: &Self::Input, g: &Matrix<T>) -> Result<BackwardResult<T, Self::Input>> {
        let (q, k, v) = input;
        let p = self.project(q, k, v)?;
        let g_wo = p.concat.t_matmul(g)?;
        let g_concat = g.matmul_t(&self.w_o)?;
        let dh = self.head_dim();
        let scale = T::one() / T::lit(dh as f64).sqrt();
        let mut g_qp = Matrix::zeros(p.qp.rows(), p.qp.cols());
        let mut g_kp = Matrix::zeros(p.kp.rows(), p.kp.cols());
        let mut g_vp = Matrix::zeros(p.vp.rows(), p.vp.cols());
        for (h, weights) in p.weights.iter().enumerate() {
            let cols = h * dh..(h + 1) * dh;
            let g_head = g_concat.columns(cols.clone());
            let qh = p.qp.columns(cols.clone());
            let kh = p.kp.columns(cols.clone());
            let vh = p.vp.columns(cols);
            let g_weights = g_head.matmul_t(&vh)?;
            g_vp.set_columns(h * dh, &weights.t_matmul(&g_head)?)?;
            // softmax Jacobian applied row by row
            let mut g_scores = Matrix::zeros(weights.rows(), weights.cols());
            for r in 0..weights.rows() {
                let pr = weights.row(r);
                let gr = g_weights.row(r);
                let dot: T = pr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                for (c, out) in g_scores.row_mut(r).iter_mut().enumerate() {
                    *out = pr[c] * (gr[c] - dot) * scale;
                }
            }
            g_qp.set_columns(h * dh, &g_scores.matmul(&kh)?)?;
            g_kp.set_columns(h * dh, &g_scores.t_matmul(&qh)?)?;
        }
        let grads = vec![q.t_matmul(&g_qp)?, k.t_matmul(&g_kp)?, v.t_matmul(&g_vp)?, g_wo];
        let input_grad = (g_qp.matmul_t(&self.w_q)?, g_kp.matmul_t(&self.w_k)?, g_vp.matmul_t(&self.w_v)?);
        BackwardResult::new(input, &self.params(), input_grad, grads)
    }

    fn param_names(&self) -> Vec<&'static str> {
        vec!["w_q", "w_k", "w_v", "w_o"]
    }

    fn params(&self) -> Vec<&Matrix<T>> {
        vec![&self.w_q, &self.w_k, &self.w_v, &self.w_o]
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix<T>> {
        vec![&mut self.w_q, &mut self.w_k, &mut self.w_v, &mut self.w_o]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn single_key_returns_its_value() {
        let id = Matrix::<f64>::identity(3);
        let att = MultiHeadAttention::from_params(id.clone(), id.clone(), id.clone(), id, 1).unwrap();
        let q = Matrix::from_rows(&[[0.3, -1.0, 2.0], [5.0, 1.0, 0.0]]).unwrap();
        let k = Matrix::from_rows(&[[1.0, 1.0, 1.0]]).unwrap();
        let v = Matrix::from_rows(&[[7.0, -2.0, 0.5]]).unwrap();
        let out = att.forward(&(q, k, v.clone())).unwrap();
        assert_eq!(out.row(0), v.row(0));
        assert_eq!(out.row(1), v.row(0));
    }

    #[test]
    fn key_value_permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let att = MultiHeadAttention::<f64>::new((4, 4, 4), 6, 3, 2, &mut rng).unwrap();
        let q = random(3, 4, &mut rng);
        let k = random(5, 4, &mut rng);
        let v = random(5, 4, &mut rng);
        let perm = [3, 0, 4, 1, 2];
        let a = att.forward(&(q.clone(), k.clone(), v.clone())).unwrap();
        let b = att.forward(&(q, k.select_rows(&perm), v.select_rows(&perm))).unwrap();
        assert!(a.sub(&b).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn weights_are_stochastic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let att = MultiHeadAttention::<f64>::new((4, 4, 4), 8, 4, 4, &mut rng).unwrap();
        let q = random(3, 4, &mut rng).scale(30.0);
        let k = random(6, 4, &mut rng).scale(30.0);
        for w in att.attention_weights(&q, &k, &k).unwrap() {
            for r in 0..w.rows() {
                assert!((w.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_head_identity_output_is_plain_attention() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (wq, wk, wv) = (random(4, 4, &mut rng), random(4, 4, &mut rng), random(4, 4, &mut rng));
        let att = MultiHeadAttention::from_params(wq.clone(), wk.clone(), wv.clone(), Matrix::identity(4), 1).unwrap();
        let x = random(5, 4, &mut rng);
        let out = att.forward(&(x.clone(), x.clone(), x.clone())).unwrap();
        let scores = x.matmul(&wq).unwrap().matmul_t(&x.matmul(&wk).unwrap()).unwrap().scale(0.5);
        let expected = row_softmax(&scores).matmul(&x.matmul(&wv).unwrap()).unwrap();
        assert!(out.sub(&expected).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn finite_differences() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let att = MultiHeadAttention::<f64>::new((3, 4, 2), 4, 3, 2, &mut rng).unwrap();
            let input = (random(3, 3, &mut rng), random(3, 4, &mut rng), random(3, 2, &mut rng));
            let err = grad_check(&att, &input, 1e-5).unwrap();
            assert!(err <= 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn indivisible_width_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(MultiHeadAttention::<f64>::new((2, 2, 2), 5, 2, 2, &mut rng).is_err());
    }
}

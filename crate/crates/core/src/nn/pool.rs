use super::{BackwardResult, FeatureMap, Layer};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Non-overlapping max pooling. Ties go to the first maximum in row-major
/// window order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaxPool2d {
    pub window: usize,
}

impl MaxPool2d {
    pub fn new(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::contract("pooling window must be positive"));
        }
        Ok(Self { window })
    }

    fn check<T: Scalar>(&self, x: &FeatureMap<T>) -> Result<()> {
        if !x.height().is_multiple_of(self.window) || !x.width().is_multiple_of(self.window) {
            return Err(Error::contract(format!(
                "pooling window {} does not divide {}x{}",
                self.window,
                x.height(),
                x.width()
            )));
        }
        Ok(())
    }

    /// Pooled map plus, for each output cell, the flat input index it came from.
    pub fn forward_with_argmax<T: Scalar>(&self, x: &FeatureMap<T>) -> Result<(FeatureMap<T>, Vec<usize>)> {
        self.check(x)?;
        let (c, h, w) = x.shape();
        let s = self.window;
        let (oh, ow) = (h / s, w / s);
        let mut out = FeatureMap::zeros(c, oh, ow);
        let mut arg = Vec::with_capacity(c * oh * ow);
        let data = x.as_slice();
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = (ch * h + oy * s) * w + ox * s;
                    for dy in 0..s {
                        for dx in 0..s {
                            let i = (ch * h + oy * s + dy) * w + ox * s + dx;
                            if data[i] > data[best] {
                                best = i;
                            }
                        }
                    }
                    out.set(ch, oy, ox, data[best]);
                    arg.push(best);
                }
            }
        }
        Ok((out, arg))
    }

    pub fn backward_from_argmax<T: Scalar>(
        &self,
        input_shape: (usize, usize, usize),
        argmax: &[usize],
        g: &FeatureMap<T>,
    ) -> FeatureMap<T> {
        let (c, h, w) = input_shape;
        let mut gx = FeatureMap::zeros(c, h, w);
        for (&i, &gv) in argmax.iter().zip(g.as_slice()) {
            gx.as_mut_slice()[i] += gv;
        }
        gx
    }
}

impl<T: Scalar> Layer<T> for MaxPool2d {
    type Input = FeatureMap<T>;
    type Output = FeatureMap<T>;

    fn forward(&self, x: &FeatureMap<T>) -> Result<FeatureMap<T>> {
        Ok(self.forward_with_argmax(x)?.0)
    }

    fn backward(&self, x: &FeatureMap<T>, g: &FeatureMap<T>) -> Result<BackwardResult<T, FeatureMap<T>>> {
        let (out, arg) = self.forward_with_argmax(x)?;
        if out.shape() != g.shape() {
            return Err(Error::contract("pooling output gradient has the wrong shape"));
        }
        BackwardResult::new(x, &[], self.backward_from_argmax(x.shape(), &arg, g), Vec::new())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_by_two() {
        let x = FeatureMap::new(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let pool = MaxPool2d::new(2).unwrap();
        assert_eq!(pool.forward(&x).unwrap().as_slice(), &[4.0]);
    }

    #[test]
    fn constant_input_routes_to_top_left() {
        let x = FeatureMap::from_fn(1, 4, 4, |_, _, _| 3.0);
        let pool = MaxPool2d::new(2).unwrap();
        assert_eq!(pool.forward(&x).unwrap().as_slice(), &[3.0; 4]);
        let g = FeatureMap::from_fn(1, 2, 2, |_, _, _| 1.0);
        let r = pool.backward(&x, &g).unwrap();
        let expected: Vec<f64> = (0..16).map(|i| if (i / 4) % 2 == 0 && i % 2 == 0 { 1.0 } else { 0.0 }).collect();
        assert_eq!(r.input_grad.as_slice(), expected.as_slice());
    }

    #[test]
    fn finite_differences_without_ties() {
        for seed in 0..5 {
            // distinct values spaced far beyond epsilon
            let mut values: Vec<f64> = (0..2 * 6 * 6).map(|i| i as f64 * 0.01).collect();
            values.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let x = FeatureMap::new(2, 6, 6, values).unwrap();
            assert!(grad_check(&MaxPool2d::new(2).unwrap(), &x, 1e-5).unwrap() <= 1e-4);
        }
    }

    #[test]
    fn indivisible_dims_rejected() {
        let pool = MaxPool2d::new(2).unwrap();
        assert!(pool.forward(&FeatureMap::<f64>::zeros(1, 3, 4)).is_err());
    }
}

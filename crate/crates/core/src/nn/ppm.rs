use super::{BackwardResult, FeatureMap, Layer};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Pyramid pooling: for each level `n`, adaptive average pooling to `n × n`
/// followed by nearest upsampling back to the input size. The pooled
/// branches are appended to the input channels, so the output has
/// `C · (1 + levels)` channels.
///
/// Bin `i` of `n` along an axis of length `L` covers
/// `[⌊i·L/n⌋, ⌈(i+1)·L/n⌉)`; pixel `p` reads back from bin `⌊p·n/L⌋`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PyramidPooling {
    levels: Vec<usize>,
}

fn bin(i: usize, n: usize, len: usize) -> (usize, usize) {
    (i * len / n, ((i + 1) * len).div_ceil(n))
}

impl PyramidPooling {
    pub fn new(levels: Vec<usize>) -> Result<Self> {
        if levels.is_empty() || levels.contains(&0) {
            return Err(Error::contract("pyramid pooling needs at least one positive level"));
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn output_channels(&self, input_channels: usize) -> usize {
        input_channels * (1 + self.levels.len())
    }

    fn pooled<T: Scalar>(x: &FeatureMap<T>, n: usize) -> Vec<T> {
        let (c, h, w) = x.shape();
        let mut out = Vec::with_capacity(c * n * n);
        for ch in 0..c {
            for by in 0..n {
                let (y0, y1) = bin(by, n, h);
                for bx in 0..n {
                    let (x0, x1) = bin(bx, n, w);
                    let mut s = T::zero();
                    for y in y0..y1 {
                        for xx in x0..x1 {
                            s += x.get(ch, y, xx);
                        }
                    }
                    out.push(s / T::lit(((y1 - y0) * (x1 - x0)) as f64));
                }
            }
        }
        out
    }
}

impl<T: Scalar> Layer<T> for PyramidPooling {
    type Input = FeatureMap<T>;
    type Output = FeatureMap<T>;

    fn forward(&self, x: &FeatureMap<T>) -> Result<FeatureMap<T>> {
        let (c, h, w) = x.shape();
        let mut out = FeatureMap::zeros(self.output_channels(c), h, w);
        out.as_mut_slice()[..c * h * w].copy_from_slice(x.as_slice());
        for (li, &n) in self.levels.iter().enumerate() {
            let pooled = Self::pooled(x, n);
            for ch in 0..c {
                for y in 0..h {
                    let by = y * n / h;
                    for xx in 0..w {
                        let bx = xx * n / w;
                        out.set((li + 1) * c + ch, y, xx, pooled[(ch * n + by) * n + bx]);
                    }
                }
            }
        }
        Ok(out)
    }

    fn backward(&self, x: &FeatureMap<T>, g: &FeatureMap<T>) -> Result<BackwardResult<T, FeatureMap<T>>> {
        let (c, h, w) = x.shape();
        if g.shape() != (self.output_channels(c), h, w) {
            return Err(Error::contract("pyramid pooling output gradient has the wrong shape"));
        }
        let mut gx = FeatureMap::new(c, h, w, g.as_slice()[..c * h * w].to_vec())?;
        for (li, &n) in self.levels.iter().enumerate() {
            // gradient of each pooled cell: sum over the pixels reading it
            let mut gp = vec![T::zero(); c * n * n];
            for ch in 0..c {
                for y in 0..h {
                    let by = y * n / h;
                    for xx in 0..w {
                        let bx = xx * n / w;
                        gp[(ch * n + by) * n + bx] += g.get((li + 1) * c + ch, y, xx);
                    }
                }
            }
            for ch in 0..c {
                for by in 0..n {
                    let (y0, y1) = bin(by, n, h);
                    for bx in 0..n {
                        let (x0, x1) = bin(bx, n, w);
                        let share = gp[(ch * n + by) * n + bx] / T::lit(((y1 - y0) * (x1 - x0)) as f64);
                        for y in y0..y1 {
                            for xx in x0..x1 {
                                gx.add_at(ch, y, xx, share);
                            }
                        }
                    }
                }
            }
        }
        BackwardResult::new(x, &[], gx, Vec::new())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;

    #[test]
    fn global_level_of_constant_image() {
        let x = FeatureMap::from_fn(2, 4, 4, |_, _, _| 1.5);
        let out = PyramidPooling::new(vec![1]).unwrap().forward(&x).unwrap();
        assert_eq!(out.channels(), 4);
        assert!(out.as_slice().iter().all(|&v| v == 1.5));
    }

    #[test]
    fn channel_count() {
        let ppm = PyramidPooling::new(vec![1, 2]).unwrap();
        let out = ppm.forward(&FeatureMap::<f64>::zeros(4, 6, 6)).unwrap();
        assert_eq!(out.shape(), (12, 6, 6));
    }

    #[test]
    fn adaptive_bins_cover_uneven_sizes() {
        // 5 pixels into 2 bins: [0,3) and [2,5)
        assert_eq!(bin(0, 2, 5), (0, 3));
        assert_eq!(bin(1, 2, 5), (2, 5));
        let x = FeatureMap::from_fn(1, 1, 5, |_, _, x| x as f64);
        let out = PyramidPooling::new(vec![1]).unwrap().forward(&x).unwrap();
        assert_eq!(out.channel(1), &[2.0; 5]);
    }

    #[test]
    fn finite_differences() {
        for seed in 0..5 {
            let x = FeatureMap::from_fn(2, 5, 6, |c, y, x| ((seed * 13 + c * 30 + y * 6 + x) as f64 * 0.43).sin());
            let err = grad_check(&PyramidPooling::new(vec![1, 2, 3]).unwrap(), &x, 1e-5).unwrap();
            assert!(err <= 1e-4);
        }
    }

    #[test]
    fn empty_levels_rejected() {
        assert!(PyramidPooling::new(vec![]).is_err());
    }
}

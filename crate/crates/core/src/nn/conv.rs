use rand::Rng;

use super::{glorot_uniform, BackwardResult, FeatureMap, Layer};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Stride-1 "same" cross-correlation with an odd square kernel.
///
/// `weight` is `out_channels × (in_channels · k · k)`, each row laid out as
/// `[channel][dy][dx]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d<T> {
    pub weight: Matrix<T>,
    pub bias: Matrix<T>,
    in_channels: usize,
    kernel: usize,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new<R: Rng + ?Sized>(in_channels: usize, out_channels: usize, kernel: usize, rng: &mut R) -> Result<Self> {
        let fan = kernel * kernel;
        let weight = glorot_uniform(out_channels, in_channels * fan, in_channels * fan, out_channels * fan, rng);
        Self::from_params(weight, Matrix::zeros(1, out_channels), in_channels, kernel)
    }

    pub fn from_params(weight: Matrix<T>, bias: Matrix<T>, in_channels: usize, kernel: usize) -> Result<Self> {
        if kernel.is_multiple_of(2) {
            return Err(Error::contract(format!("convolution kernel must be odd, got {kernel}")));
        }
        if weight.cols() != in_channels * kernel * kernel || bias.shape() != (1, weight.rows()) {
            return Err(Error::Shape {
                op: "Conv2d::from_params",
                left: weight.shape(),
                right: bias.shape(),
            });
        }
        Ok(Self {
            weight,
            bias,
            in_channels,
            kernel,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.weight.rows()
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    fn check_input(&self, x: &FeatureMap<T>) -> Result<()> {
        if x.channels() != self.in_channels {
            return Err(Error::contract(format!(
                "convolution expects {} input channels, got {}",
                self.in_channels,
                x.channels()
            )));
        }
        Ok(())
    }

    /// Visits every (output pixel, input pixel) pairing of one kernel tap,
    /// clipped to the zero-padded border.
    #[inline]
    fn tap_ranges(&self, dy: usize, dx: usize, h: usize, w: usize) -> ((usize, usize), (usize, usize)) {
        let pad = self.kernel / 2;
        let range = |d: usize, n: usize| {
            // output y is valid when 0 <= y + d - pad < n
            let lo = pad.saturating_sub(d);
            let hi = (n + pad).saturating_sub(d).min(n);
            (lo, hi)
        };
        (range(dy, h), range(dx, w))
    }
}

impl<T: Scalar> Layer<T> for Conv2d<T> {
    type Input = FeatureMap<T>;
    type Output = FeatureMap<T>;

    fn forward(&self, x: &FeatureMap<T>) -> Result<FeatureMap<T>> {
        self.check_input(x)?;
        let (_, h, w) = x.shape();
        let k = self.kernel;
        let pad = k / 2;
        let mut out = FeatureMap::zeros(self.out_channels(), h, w);
        for o in 0..self.out_channels() {
            let b = self.bias[(0, o)];
            let wrow = self.weight.row(o);
            let dst = out.channel_mut(o);
            dst.iter_mut().for_each(|v| *v = b);
            for c in 0..self.in_channels {
                let src = x.channel(c);
                for dy in 0..k {
                    for dx in 0..k {
                        let wv = wrow[(c * k + dy) * k + dx];
                        if wv == T::zero() {
                            continue;
                        }
                        let ((y0, y1), (x0, x1)) = self.tap_ranges(dy, dx, h, w);
                        for y in y0..y1 {
                            let sy = y + dy - pad;
                            let drow = &mut dst[y * w + x0..y * w + x1];
                            let srow = &src[sy * w + x0 + dx - pad..sy * w + x1 + dx - pad];
                            for (d, &s) in drow.iter_mut().zip(srow) {
                                *d += wv * s;
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    fn backward(&self, x: &FeatureMap<T>, g: &FeatureMap<T>) -> Result<BackwardResult<T, FeatureMap<T>>> {
        self.check_input(x)?;
        let (_, h, w) = x.shape();
        if g.shape() != (self.out_channels(), h, w) {
            return Err(Error::contract("convolution output gradient has the wrong shape"));
        }
        let k = self.kernel;
        let pad = k / 2;
        let mut gx = FeatureMap::zeros(self.in_channels, h, w);
        let mut gw = Matrix::zeros(self.weight.rows(), self.weight.cols());
        let mut gb = Matrix::zeros(1, self.out_channels());
        for o in 0..self.out_channels() {
            let go = g.channel(o);
            gb[(0, o)] = go.iter().copied().sum();
            for c in 0..self.in_channels {
                let src = x.channel(c);
                for dy in 0..k {
                    for dx in 0..k {
                        let idx = (c * k + dy) * k + dx;
                        let wv = self.weight[(o, idx)];
                        let ((y0, y1), (x0, x1)) = self.tap_ranges(dy, dx, h, w);
                        let mut acc = T::zero();
                        let gxc = gx.channel_mut(c);
                        for y in y0..y1 {
                            let sy = y + dy - pad;
                            let grow = &go[y * w + x0..y * w + x1];
                            let s0 = sy * w + x0 + dx - pad;
                            let srow = &src[s0..s0 + (x1 - x0)];
                            for (&gv, &s) in grow.iter().zip(srow) {
                                acc += gv * s;
                            }
                            for (d, &gv) in gxc[s0..s0 + (x1 - x0)].iter_mut().zip(grow) {
                                *d += wv * gv;
                            }
                        }
                        gw[(o, idx)] = acc;
                    }
                }
            }
        }
        BackwardResult::new(x, &self.params(), gx, vec![gw, gb])
    }

    fn param_names(&self) -> Vec<&'static str> {
        vec!["weight", "bias"]
    }

    fn params(&self) -> Vec<&Matrix<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Channel-major `channels × height × width` activation volume.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::contract(format!(
                "feature map {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![T::zero(); channels * height * width],
        }
    }

    pub fn from_fn(channels: usize, height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: T) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    #[inline]
    pub fn add_at(&mut self, c: usize, y: usize, x: usize, v: T) {
        self.data[(c * self.height + y) * self.width + x] += v;
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [T] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    /// Mean of each channel.
    pub fn channel_means(&self) -> Vec<T> {
        let n = T::lit((self.height * self.width) as f64);
        (0..self.channels).map(|c| self.channel(c).iter().copied().sum::<T>() / n).collect()
    }

    /// Stacks the channels of `parts` (all sharing spatial size).
    pub fn concat_channels(parts: &[&Self]) -> Result<Self> {
        let (h, w) = parts.first().map_or((0, 0), |p| (p.height, p.width));
        if parts.iter().any(|p| p.height != h || p.width != w) {
            return Err(Error::contract("channel concatenation needs equal spatial size"));
        }
        let channels = parts.iter().map(|p| p.channels).sum();
        let mut data = Vec::with_capacity(channels * h * w);
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(Self {
            channels,
            height: h,
            width: w,
            data,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[inline]
fn nearest(dst: usize, dst_len: usize, src_len: usize) -> usize {
    dst * src_len / dst_len
}

/// Nearest-neighbor resampling to `height × width`.
pub fn upsample_nearest<T: Scalar>(fm: &FeatureMap<T>, height: usize, width: usize) -> FeatureMap<T> {
    if (fm.height, fm.width) == (height, width) {
        return fm.clone();
    }
    FeatureMap::from_fn(fm.channels, height, width, |c, y, x| {
        fm.get(c, nearest(y, height, fm.height), nearest(x, width, fm.width))
    })
}

/// Adjoint of [`upsample_nearest`]: sums each output gradient into its source.
pub fn upsample_nearest_backward<T: Scalar>(grad: &FeatureMap<T>, height: usize, width: usize) -> FeatureMap<T> {
    if (grad.height, grad.width) == (height, width) {
        return grad.clone();
    }
    let mut out = FeatureMap::zeros(grad.channels, height, width);
    for c in 0..grad.channels {
        for y in 0..grad.height {
            let sy = nearest(y, grad.height, height);
            for x in 0..grad.width {
                out.add_at(c, sy, nearest(x, grad.width, width), grad.get(c, y, x));
            }
        }
    }
    out
}

use super::{upsample_nearest, upsample_nearest_backward, BackwardResult, FeatureMap, Layer};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `Σ wᵢ · up(Fᵢ)`, where every map is nearest-upsampled to the size of the
/// largest one. All maps must share a channel count.
pub fn weighted_fusion<T: Scalar>(maps: &[&FeatureMap<T>], weights: &[T]) -> Result<FeatureMap<T>> {
    let (c, h, w) = fusion_target(maps, weights)?;
    let mut out = FeatureMap::zeros(c, h, w);
    for (m, &wt) in maps.iter().zip(weights) {
        let up = upsample_nearest(m, h, w);
        for (o, &v) in out.as_mut_slice().iter_mut().zip(up.as_slice()) {
            *o += wt * v;
        }
    }
    Ok(out)
}

/// Gradient of [`weighted_fusion`] with respect to each input map.
pub fn weighted_fusion_backward<T: Scalar>(
    shapes: &[(usize, usize, usize)],
    weights: &[T],
    g: &FeatureMap<T>,
) -> Vec<FeatureMap<T>> {
    shapes
        .iter()
        .zip(weights)
        .map(|(&(_, h, w), &wt)| upsample_nearest_backward(&g.map(|v| v * wt), h, w))
        .collect()
}

fn fusion_target<T: Scalar>(maps: &[&FeatureMap<T>], weights: &[T]) -> Result<(usize, usize, usize)> {
    if maps.is_empty() || maps.len() != weights.len() {
        return Err(Error::contract("fusion needs one weight per map"));
    }
    let c = maps[0].channels();
    let h = maps.iter().map(|m| m.height()).max().unwrap_or(0);
    let w = maps.iter().map(|m| m.width()).max().unwrap_or(0);
    for m in maps {
        if m.channels() != c {
            return Err(Error::contract(format!("fusion channel mismatch: {} vs {c}", m.channels())));
        }
        if h % m.height() != 0 || w % m.width() != 0 {
            return Err(Error::contract(format!(
                "map {}x{} cannot be upsampled onto {h}x{w}",
                m.height(),
                m.width()
            )));
        }
    }
    Ok((c, h, w))
}

/// Convex blend `α · F_deep + (1 − α) · F_shallow`. The deep map may be
/// spatially smaller; it is nearest-upsampled first.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SideFusion<T> {
    alpha: T,
}

impl<T: Scalar> SideFusion<T> {
    pub fn new(alpha: T) -> Result<Self> {
        if !(alpha >= T::zero() && alpha <= T::one()) {
            return Err(Error::contract(format!("fusion weight {alpha} outside [0, 1]")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    fn check(&self, deep: &FeatureMap<T>, shallow: &FeatureMap<T>) -> Result<()> {
        if deep.channels() != shallow.channels()
            || deep.height() > shallow.height()
            || deep.width() > shallow.width()
            || !shallow.height().is_multiple_of(deep.height())
            || !shallow.width().is_multiple_of(deep.width())
        {
            return Err(Error::contract(format!(
                "cannot align deep map {:?} with shallow map {:?}",
                deep.shape(),
                shallow.shape()
            )));
        }
        Ok(())
    }
}

impl<T: Scalar> Layer<T> for SideFusion<T> {
    type Input = (FeatureMap<T>, FeatureMap<T>);
    type Output = FeatureMap<T>;

    fn forward(&self, (deep, shallow): &Self::Input) -> Result<FeatureMap<T>> {
        self.check(deep, shallow)?;
        let up = upsample_nearest(deep, shallow.height(), shallow.width());
        let beta = T::one() - self.alpha;
        let data = up
            .as_slice()
            .iter()
            .zip(shallow.as_slice())
            .map(|(&d, &s)| self.alpha * d + beta * s)
            .collect();
        FeatureMap::new(shallow.channels(), shallow.height(), shallow.width(), data)
    }

    fn backward(&self, input: &Self::Input, g: &FeatureMap<T>) -> Result<BackwardResult<T, Self::Input>> {
        let (deep, shallow) = input;
        self.check(deep, shallow)?;
        if g.shape() != shallow.shape() {
            return Err(Error::contract("fusion output gradient has the wrong shape"));
        }
        let g_deep = upsample_nearest_backward(&g.map(|v| v * self.alpha), deep.height(), deep.width());
        let beta = T::one() - self.alpha;
        let g_shallow = g.map(|v| v * beta);
        BackwardResult::new(input, &[], (g_deep, g_shallow), Vec::new())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;

    fn maps(seed: usize) -> (FeatureMap<f64>, FeatureMap<f64>) {
        let deep = FeatureMap::from_fn(2, 2, 2, |c, y, x| ((seed + c * 4 + y * 2 + x) as f64 * 0.7).sin());
        let shallow = FeatureMap::from_fn(2, 4, 4, |c, y, x| ((seed + c * 16 + y * 4 + x) as f64 * 0.3).cos());
        (deep, shallow)
    }

    #[test]
    fn default_weights_blend() {
        let f = SideFusion::<f64>::new(0.6).unwrap();
        let deep = FeatureMap::from_fn(1, 2, 2, |_, _, _| 1.0);
        let shallow = FeatureMap::zeros(1, 2, 2);
        let out = f.forward(&(deep, shallow)).unwrap();
        assert!(out.as_slice().iter().all(|&v| (v - 0.6).abs() < 1e-15));
    }

    #[test]
    fn extreme_weights_are_exact() {
        let (deep, shallow) = maps(1);
        let up = upsample_nearest(&deep, 4, 4);
        let one = SideFusion::new(1.0).unwrap().forward(&(deep.clone(), shallow.clone())).unwrap();
        assert_eq!(one, up);
        let zero = SideFusion::new(0.0).unwrap().forward(&(deep, shallow.clone())).unwrap();
        assert_eq!(zero, shallow);
    }

    #[test]
    fn gradients_scale_by_weight() {
        let f = SideFusion::<f64>::new(0.6).unwrap();
        let input = (FeatureMap::zeros(1, 2, 2), FeatureMap::zeros(1, 2, 2));
        let g = FeatureMap::from_fn(1, 2, 2, |_, _, _| 1.0);
        let r = f.backward(&input, &g).unwrap();
        assert!(r.input_grad.0.as_slice().iter().all(|&v| (v - 0.6).abs() < 1e-15));
        assert!(r.input_grad.1.as_slice().iter().all(|&v| (v - 0.4).abs() < 1e-15));
    }

    #[test]
    fn linear_in_inputs() {
        let f = SideFusion::<f64>::new(0.6).unwrap();
        let (deep, shallow) = maps(2);
        let once = f.forward(&(deep.clone(), shallow.clone())).unwrap();
        let twice = f.forward(&(deep.map(|v| 2.0 * v), shallow.map(|v| 2.0 * v))).unwrap();
        for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
            assert!((2.0 * a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn finite_differences() {
        for seed in 0..5 {
            let err = grad_check(&SideFusion::new(0.6).unwrap(), &maps(seed), 1e-5).unwrap();
            assert!(err <= 1e-4);
        }
    }

    #[test]
    fn invalid_weight_or_alignment() {
        assert!(SideFusion::new(1.5).is_err());
        assert!(SideFusion::new(-0.1).is_err());
        let f = SideFusion::new(0.5).unwrap();
        assert!(f.forward(&(FeatureMap::zeros(1, 2, 2), FeatureMap::zeros(2, 2, 2))).is_err());
        assert!(f.forward(&(FeatureMap::zeros(1, 4, 4), FeatureMap::zeros(1, 2, 2))).is_err());
    }

    #[test]
    fn weighted_fusion_matches_side_fusion() {
        let (deep, shallow) = maps(3);
        let a = weighted_fusion(&[&deep, &shallow], &[0.6, 0.4]).unwrap();
        let b = SideFusion::new(0.6).unwrap().forward(&(deep, shallow)).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() < 1e-15);
        }
    }
}

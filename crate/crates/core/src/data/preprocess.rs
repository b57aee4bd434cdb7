use serde::{Deserialize, Serialize};

use super::{ImageRecord, Pixels};
use crate::error::{Error, Result};

/// Output range of [`normalize`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormRange {
    /// `[0, 1]`
    #[default]
    Unit,
    /// `[-1, 1]`
    Symmetric,
}

impl NormRange {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "unit" => Some(Self::Unit),
            "symmetric" => Some(Self::Symmetric),
            _ => None,
        }
    }

    pub fn bounds(self) -> (f64, f64) {
        match self {
            Self::Unit => (0.0, 1.0),
            Self::Symmetric => (-1.0, 1.0),
        }
    }
}

fn sample_value(img: &ImageRecord, i: usize) -> f64 {
    match &img.pixels {
        Pixels::Raw(p) => p[i] as f64,
        Pixels::Processed(p) => p[i],
    }
}

/// Bilinear resampling with half-pixel centres, before any quantization.
pub fn resize_real(img: &ImageRecord, height: usize, width: usize) -> Result<Vec<f64>> {
    if height == 0 || width == 0 {
        return Err(Error::contract("resize target must be positive"));
    }
    if img.height == 0 || img.width == 0 {
        return Err(Error::contract(format!("image {} has a zero dimension", img.id)));
    }
    let coord = |dst: usize, dst_len: usize, src_len: usize| {
        let s = ((dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5).clamp(0.0, (src_len - 1) as f64);
        let lo = s.floor() as usize;
        (lo, (lo + 1).min(src_len - 1), s - lo as f64)
    };
    let c = img.channels;
    let mut out = Vec::with_capacity(height * width * c);
    for y in 0..height {
        let (y0, y1, fy) = coord(y, height, img.height);
        for x in 0..width {
            let (x0, x1, fx) = coord(x, width, img.width);
            for ch in 0..c {
                let v = |yy, xx| sample_value(img, img.index(yy, xx, ch));
                let top = v(y0, x0) * (1.0 - fx) + v(y0, x1) * fx;
                let bottom = v(y1, x0) * (1.0 - fx) + v(y1, x1) * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Ok(out)
}

/// Bilinear resize to exactly `height × width`; raw images are rounded back
/// to 8 bits.
pub fn resize(img: &ImageRecord, height: usize, width: usize) -> Result<ImageRecord> {
    let values = resize_real(img, height, width)?;
    let pixels = match img.pixels {
        Pixels::Raw(_) => Pixels::Raw(values.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect()),
        Pixels::Processed(_) => Pixels::Processed(values),
    };
    Ok(ImageRecord {
        height,
        width,
        pixels,
        ..img.clone()
    })
}

/// Per-channel CDF remap; constant channels are left unchanged.
pub fn histogram_equalize(img: &ImageRecord) -> Result<ImageRecord> {
    let px = img.raw_pixels()?;
    let c = img.channels;
    let n = img.height * img.width;
    let mut out = px.to_vec();
    for ch in 0..c {
        let mut hist = [0usize; 256];
        for i in 0..n {
            hist[px[i * c + ch] as usize] += 1;
        }
        let mut cdf = [0usize; 256];
        let mut acc = 0;
        for (v, &h) in hist.iter().enumerate() {
            acc += h;
            cdf[v] = acc;
        }
        let cdf_min = hist.iter().zip(&cdf).find(|(&h, _)| h > 0).map(|(_, &c)| c).unwrap_or(0);
        if cdf_min == n {
            continue;
        }
        let denom = (n - cdf_min) as f64;
        let lut: Vec<u8> = cdf
            .iter()
            .map(|&cv| (255.0 * cv.saturating_sub(cdf_min) as f64 / denom).round() as u8)
            .collect();
        for i in 0..n {
            out[i * c + ch] = lut[px[i * c + ch] as usize];
        }
    }
    Ok(ImageRecord {
        pixels: Pixels::Raw(out),
        ..img.clone()
    })
}

/// Median over a `window × window` neighbourhood with replicated borders.
pub fn median_denoise(img: &ImageRecord, window: usize) -> Result<ImageRecord> {
    if window.is_multiple_of(2) {
        return Err(Error::contract(format!("median window must be odd, got {window}")));
    }
    let px = img.raw_pixels()?;
    let r = (window / 2) as isize;
    let (h, w, c) = (img.height as isize, img.width as isize, img.channels);
    let mut out = vec![0u8; px.len()];
    let mut buf = Vec::with_capacity(window * window);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                buf.clear();
                for dy in -r..=r {
                    let yy = (y + dy).clamp(0, h - 1) as usize;
                    for dx in -r..=r {
                        let xx = (x + dx).clamp(0, w - 1) as usize;
                        buf.push(px[img.index(yy, xx, ch)]);
                    }
                }
                let mid = buf.len() / 2;
                out[img.index(y as usize, x as usize, ch)] = *buf.select_nth_unstable(mid).1;
            }
        }
    }
    Ok(ImageRecord {
        pixels: Pixels::Raw(out),
        ..img.clone()
    })
}

/// Maps 8-bit values linearly onto `range`.
pub fn normalize(img: &ImageRecord, range: NormRange) -> Result<ImageRecord> {
    let px = img.raw_pixels()?;
    let values = px
        .iter()
        .map(|&v| match range {
            NormRange::Unit => v as f64 / 255.0,
            NormRange::Symmetric => v as f64 / 127.5 - 1.0,
        })
        .collect();
    Ok(ImageRecord {
        pixels: Pixels::Processed(values),
        ..img.clone()
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub height: usize,
    pub width: usize,
    pub range: NormRange,
    pub denoise_window: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            height: 32,
            width: 32,
            range: NormRange::Unit,
            denoise_window: 3,
        }
    }
}

/// Resize, equalize, denoise, normalize.
pub fn preprocess(img: &ImageRecord, config: &PreprocessConfig) -> Result<ImageRecord> {
    let resized = resize(img, config.height, config.width)?;
    let equalized = histogram_equalize(&resized)?;
    let denoised = median_denoise(&equalized, config.denoise_window)?;
    normalize(&denoised, config.range)
}

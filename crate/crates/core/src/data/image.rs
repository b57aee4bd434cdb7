use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::FeatureMap;

pub const IMG8_MAGIC: &[u8; 4] = b"IMG8";

/// Pixel storage in height × width × channels order.
#[derive(Clone, Debug, PartialEq)]
pub enum Pixels {
    Raw(Vec<u8>),
    /// Normalized reals.
    Processed(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    pub label: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: Pixels,
}

impl ImageRecord {
    pub fn raw(id: impl Into<String>, label: usize, height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::contract("image dimensions must be positive"));
        }
        if data.len() != height * width * channels {
            return Err(Error::contract(format!(
                "{} pixel values for a {height}x{width}x{channels} image",
                data.len()
            )));
        }
        Ok(Self {
            id: id.into(),
            label,
            height,
            width,
            channels,
            pixels: Pixels::Raw(data),
        })
    }

    pub fn raw_pixels(&self) -> Result<&[u8]> {
        match &self.pixels {
            Pixels::Raw(p) => Ok(p),
            Pixels::Processed(_) => Err(Error::contract(format!("image {} is already normalized", self.id))),
        }
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    /// Channel-major real tensor; raw values are mapped to `[0, 1]`.
    pub fn to_feature_map(&self) -> FeatureMap {
        let value = |i: usize| match &self.pixels {
            Pixels::Raw(p) => p[i] as f64 / 255.0,
            Pixels::Processed(p) => p[i],
        };
        FeatureMap::from_fn(self.channels, self.height, self.width, |c, y, x| value(self.index(y, x, c)))
    }
}

/// Parses the raw planar format: `IMG8`, height and width as little-endian
/// u32, then one full plane per channel.
pub fn read_img8(bytes: &[u8]) -> std::result::Result<(usize, usize, usize, Vec<u8>), String> {
    if bytes.len() < 12 || &bytes[..4] != IMG8_MAGIC {
        return Err("missing IMG8 header".into());
    }
    let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let plane = h * w;
    let body = &bytes[12..];
    if plane == 0 || body.is_empty() || !body.len().is_multiple_of(plane) {
        return Err(format!("{} data bytes do not form {h}x{w} planes", body.len()));
    }
    let channels = body.len() / plane;
    let mut hwc = vec![0u8; body.len()];
    for c in 0..channels {
        for i in 0..plane {
            hwc[i * channels + c] = body[c * plane + i];
        }
    }
    Ok((h, w, channels, hwc))
}

/// Encodes a raw record in the planar format read by [`read_img8`].
pub fn write_img8(img: &ImageRecord) -> Result<Vec<u8>> {
    let px = img.raw_pixels()?;
    let plane = img.height * img.width;
    let mut out = Vec::with_capacity(12 + px.len());
    out.extend_from_slice(IMG8_MAGIC);
    out.extend_from_slice(&(img.height as u32).to_le_bytes());
    out.extend_from_slice(&(img.width as u32).to_le_bytes());
    for c in 0..img.channels {
        out.extend((0..plane).map(|i| px[i * img.channels + c]));
    }
    Ok(out)
}

/// Reads an `.img8` or 8-bit PNG file.
pub fn read_image(path: &Path, id: &str, label: usize) -> Result<ImageRecord> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(IMG8_MAGIC) {
        let (h, w, c, data) = read_img8(&bytes).map_err(|m| Error::format(path, m))?;
        return ImageRecord::raw(id, label, h, w, c, data);
    }
    let decoded = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let (channels, data) = match decoded {
        image::DynamicImage::ImageLuma8(b) => (1, b.into_raw()),
        other => (3, other.into_rgb8().into_raw()),
    };
    ImageRecord::raw(id, label, h, w, channels, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn img8_round_trip_is_bit_exact() {
        let data: Vec<u8> = (0..2 * 3 * 2).map(|i| (i * 17) as u8).collect();
        let img = ImageRecord::raw("a", 0, 2, 3, 2, data).unwrap();
        let bytes = write_img8(&img).unwrap();
        assert_eq!(&bytes[..4], b"IMG8");
        assert_eq!(bytes.len(), 12 + 12);
        // first plane holds channel 0
        assert_eq!(bytes[12], 0);
        assert_eq!(bytes[13], 34);
        let (h, w, c, back) = read_img8(&bytes).unwrap();
        assert_eq!((h, w, c), (2, 3, 2));
        assert_eq!(back, img.raw_pixels().unwrap());
    }

    #[test]
    fn img8_rejects_bad_input() {
        assert!(read_img8(b"IMG").is_err());
        assert!(read_img8(b"PNG8\x01\0\0\0\x01\0\0\0\x05").is_err());
        assert!(read_img8(b"IMG8\x02\0\0\0\x02\0\0\0\x05").is_err());
    }

    #[test]
    fn png_and_img8_files_load() {
        let dir = tempfile::tempdir().unwrap();
        let gray = image::GrayImage::from_fn(4, 3, |x, y| image::Luma([(x * 10 + y) as u8]));
        let png = dir.path().join("a.png");
        gray.save(&png).unwrap();
        let rec = read_image(&png, "a", 1).unwrap();
        assert_eq!((rec.height, rec.width, rec.channels), (3, 4, 1));
        assert_eq!(rec.raw_pixels().unwrap()[rec.index(2, 3, 0)], 32);

        let raw = dir.path().join("b.img8");
        std::fs::write(&raw, write_img8(&rec).unwrap()).unwrap();
        assert_eq!(read_image(&raw, "a", 1).unwrap(), rec);
    }

    #[test]
    fn feature_map_is_channel_major() {
        let img = ImageRecord::raw("x", 0, 1, 2, 2, vec![0, 255, 51, 102]).unwrap();
        let fm = img.to_feature_map();
        assert_eq!(fm.shape(), (2, 1, 2));
        assert_eq!(fm.channel(0), &[0.0, 0.2]);
        assert_eq!(fm.channel(1), &[1.0, 0.4]);
    }
}

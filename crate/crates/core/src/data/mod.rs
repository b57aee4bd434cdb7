//! Image records, preprocessing, dataset loading and synthetic generators.

mod image;
mod loader;
mod preprocess;
mod synth;

pub use image::{read_image, read_img8, write_img8, ImageRecord, Pixels, IMG8_MAGIC};
pub use loader::{load_isic_layout, DatasetManifest, ManifestRecord};
pub use preprocess::{
    histogram_equalize, median_denoise, normalize, preprocess, resize, resize_real, NormRange, PreprocessConfig,
};
pub use synth::{synth_sbm_graph, synth_texture_dataset, SbmGraph, SbmSpec};

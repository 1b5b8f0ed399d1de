//! Paired datasets on disk, scale pyramids and input degradation.
//!
//! Layout: `root/{split}/{source,target}/<id>.{ppm,png}`. Images are held as
//! `[1, 3, H, W]` tensors scaled to `[-1, 1]`.

mod dataset;
pub mod image_io;
mod pyramid;
pub mod synthetic;

pub use dataset::{epoch_order, load_dataset, Dataset, DatasetManifest, ManifestEntry, PairedSample};
pub use image_io::{
    decode_ppm, denormalize, encode_ppm, normalize, read_image, to_byte, write_png, write_ppm, RgbImage,
};
pub use pyramid::{ablation_degrade, flip_horizontal, make_pyramid, ScalePyramid};

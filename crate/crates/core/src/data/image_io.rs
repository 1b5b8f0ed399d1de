use std::fs;
use std::path::Path;

use crate::tensor::{Shape, Tensor};
use crate::{Error, Real, Result};

/// 8-bit RGB image, row-major, channels interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || pixels.len() != height * width * 3 {
            return Err(Error::invalid(
                "rgb_image",
                format!("{} bytes for a {height}x{width} RGB image", pixels.len()),
            ));
        }
        Ok(RgbImage { height, width, pixels })
    }

    pub fn filled(height: usize, width: usize, rgb: [u8; 3]) -> Self {
        let pixels = rgb.iter().copied().cycle().take(height * width * 3).collect();
        RgbImage { height, width, pixels }
    }

    pub fn get(&self, y: usize, x: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn put(&mut self, y: usize, x: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }
}

/// `x / 127.5 − 1`, as a `[1, 3, H, W]` tensor.
pub fn normalize(image: &RgbImage) -> Tensor {
    let plane = image.height * image.width;
    let mut data = vec![0.0; 3 * plane];
    for (p, px) in image.pixels.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * plane + p] = px[c] as Real / 127.5 - 1.0;
        }
    }
    Tensor::from_vec(Shape::new(1, 3, image.height, image.width), data).expect("non-empty image")
}

/// Inverse of [`normalize`] for batch item 0, clamped to `[0, 255]` and
/// rounded half up.
pub fn denormalize(t: &Tensor) -> Result<RgbImage> {
    let s = t.shape();
    if s.c != 3 {
        return Err(Error::invalid("denormalize", format!("expected 3 channels, got {s}")));
    }
    let plane = s.plane();
    let mut pixels = vec![0u8; 3 * plane];
    for p in 0..plane {
        for c in 0..3 {
            pixels[p * 3 + c] = to_byte(t.data()[c * plane + p]);
        }
    }
    RgbImage::new(s.h, s.w, pixels)
}

pub fn to_byte(x: Real) -> u8 {
    let v = ((x as f64 + 1.0) * 127.5).clamp(0.0, 255.0);
    (v + 0.5).floor() as u8
}

pub fn read_image(path: &Path) -> Result<RgbImage> {
    let image_err = |msg: String| Error::Image {
        path: path.to_path_buf(),
        msg,
    };
    let bytes = fs::read(path).map_err(|e| image_err(e.to_string()))?;
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("ppm") => decode_ppm(&bytes).map_err(image_err),
        Some("png") => {
            let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
                .map_err(|e| image_err(e.to_string()))?
                .to_rgb8();
            let (w, h) = img.dimensions();
            RgbImage::new(h as usize, w as usize, img.into_raw()).map_err(|e| image_err(e.to_string()))
        }
        _ => Err(image_err("unsupported extension (expected .ppm or .png)".into())),
    }
}

pub fn write_ppm(path: &Path, image: &RgbImage) -> Result<()> {
    fs::write(path, encode_ppm(image))?;
    Ok(())
}

pub fn write_png(path: &Path, image: &RgbImage) -> Result<()> {
    image::save_buffer(
        path,
        &image.pixels,
        image.width as u32,
        image.height as u32,
        image::ExtendedColorType::Rgb8,
    )
    .map_err(|e| Error::Image {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

pub fn encode_ppm(image: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend_from_slice(&image.pixels);
    out
}

/// Binary PPM with maxval 255; `#` comments are allowed in the header.
pub fn decode_ppm(bytes: &[u8]) -> std::result::Result<RgbImage, String> {
    let mut pos = 0;
    let mut token = || -> std::result::Result<String, String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated PPM header".into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P6" {
        return Err("not a binary PPM (magic must be P6)".into());
    }
    let mut number = |what: &str| -> std::result::Result<usize, String> {
        let t = token()?;
        t.parse().map_err(|_| format!("bad {what} `{t}` in PPM header"))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if maxval != 255 {
        return Err(format!("maxval {maxval} unsupported (only 255)"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let data = bytes.get(pos + 1..).unwrap_or(&[]);
    let need = width * height * 3;
    if width == 0 || height == 0 || data.len() < need {
        return Err(format!(
            "raster has {} bytes, {width}x{height} needs {need}",
            data.len()
        ));
    }
    Ok(RgbImage {
        height,
        width,
        pixels: data[..need].to_vec(),
    })
}

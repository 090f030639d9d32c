//! 8-bit image files and their tensor form (`[0,255]` ↔ `[−1,1]`).

use std::path::Path;

use image::{GrayImage, RgbImage};

use crate::error::{Error, Result};
use crate::gated::MaskImage;
use crate::tensor::Tensor;

fn image_err(path: &Path, e: image::ImageError) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        source: e,
    }
}

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path).map_err(|e| image_err(path, e))?.to_rgb8())
}

pub fn write_rgb(path: &Path, img: &RgbImage) -> Result<()> {
    img.save(path).map_err(|e| image_err(path, e))
}

/// 255 = valid, 0 = hole; any other gray level is rejected.
pub fn read_mask(path: &Path) -> Result<MaskImage> {
    let g = image::open(path).map_err(|e| image_err(path, e))?.to_luma8();
    MaskImage::from_gray_u8(g.height() as usize, g.width() as usize, g.as_raw())
}

pub fn write_mask(path: &Path, mask: &MaskImage) -> Result<()> {
    let g = GrayImage::from_raw(mask.width() as u32, mask.height() as u32, mask.to_gray_u8())
        .expect("buffer matches mask size");
    g.save(path).map_err(|e| image_err(path, e))
}

/// `[1,3,H,W]` with `v ↦ v/127.5 − 1`.
pub fn rgb_to_tensor(img: &RgbImage) -> Tensor {
    let (w, h) = (img.width() as usize, img.height() as usize);
    Tensor::from_fn(&[1, 3, h, w], |i| {
        let (c, rest) = (i / (h * w), i % (h * w));
        img.get_pixel((rest % w) as u32, (rest / w) as u32)[c] as f64 / 127.5 - 1.0
    })
}

/// Batch item `index` of a `[B,3,H,W]` tensor, `v ↦ round((v+1)·127.5)` clamped.
pub fn tensor_to_rgb(t: &Tensor, index: usize) -> Result<RgbImage> {
    let [b, c, h, w] = t.dims4()?;
    if c != 3 || index >= b {
        return Err(Error::shape(format!("cannot read image {index} from {:?}", t.shape())));
    }
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        image::Rgb(std::array::from_fn(|k| {
            let v = t.at4(index, k, y as usize, x as usize);
            ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
        }))
    }))
}

/// Area-style resampling for photographs.
pub fn resize_rgb(img: &RgbImage, width: usize, height: usize) -> RgbImage {
    if img.width() as usize == width && img.height() as usize == height {
        return img.clone();
    }
    image::imageops::resize(img, width as u32, height as u32, image::imageops::FilterType::Triangle)
}

/// Sorted list of `.png`/`.ppm`/`.pgm` files in `dir`.
pub fn list_images(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("png" | "ppm" | "pgm")) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

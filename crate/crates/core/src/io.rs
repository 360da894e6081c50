//! Lossless PNG I/O for frames, masks and sprites.

use std::path::Path;

use image::{ColorType, ImageEncoder};

use crate::error::{Error, Result};
use crate::raster::{RasterImage, RasterMask, RgbaImage};

/// What a PNG decoded into: three channels become an image, one a mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Raster {
    Image(RasterImage),
    Mask(RasterMask),
}

fn decode(path: &Path) -> Result<image::DynamicImage> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        ));
    }
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn load_raster(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let img = decode(path)?;
    let (w, h) = (img.width(), img.height());
    match img.color() {
        ColorType::Rgb8 => Ok(Raster::Image(RasterImage::from_vec(
            w,
            h,
            img.into_rgb8().into_raw(),
        )?)),
        ColorType::L8 => Ok(Raster::Mask(RasterMask::from_vec(
            w,
            h,
            img.into_luma8().into_raw(),
        )?)),
        other => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: format!("{other:?}; expected 8-bit RGB or 8-bit gray"),
        }),
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    match load_raster(path)? {
        Raster::Image(i) => Ok(i),
        Raster::Mask(_) => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: "single-channel file where an RGB frame was expected".into(),
        }),
    }
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<RasterMask> {
    let path = path.as_ref();
    match load_raster(path)? {
        Raster::Mask(m) => Ok(m),
        Raster::Image(_) => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: "RGB file where a single-channel mask was expected".into(),
        }),
    }
}

pub fn load_rgba(path: impl AsRef<Path>) -> Result<RgbaImage> {
    let path = path.as_ref();
    let img = decode(path)?;
    match img.color() {
        ColorType::Rgba8 => {
            let (w, h) = (img.width(), img.height());
            RgbaImage::from_vec(w, h, img.into_rgba8().into_raw())
        }
        other => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: format!("{other:?}; sprites must be 8-bit RGBA"),
        }),
    }
}

/// Width and height from the file header without decoding pixels.
pub fn image_dimensions(path: impl AsRef<Path>) -> Result<(u32, u32)> {
    let path = path.as_ref();
    image::image_dimensions(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })
}

fn write_png(
    path: &Path,
    w: u32,
    h: u32,
    data: &[u8],
    color: image::ExtendedColorType,
) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut buf = Vec::new();
    image::codecs::png::PngEncoder::new(&mut buf)
        .write_image(data, w, h, color)
        .map_err(|e| Error::Encode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn save_image(img: &RasterImage, path: impl AsRef<Path>) -> Result<()> {
    write_png(
        path.as_ref(),
        img.width(),
        img.height(),
        img.data(),
        image::ExtendedColorType::Rgb8,
    )
}

pub fn save_mask(mask: &RasterMask, path: impl AsRef<Path>) -> Result<()> {
    write_png(
        path.as_ref(),
        mask.width(),
        mask.height(),
        mask.data(),
        image::ExtendedColorType::L8,
    )
}

pub fn save_rgba(img: &RgbaImage, path: impl AsRef<Path>) -> Result<()> {
    write_png(
        path.as_ref(),
        img.width(),
        img.height(),
        img.data(),
        image::ExtendedColorType::Rgba8,
    )
}

pub fn save_raster(raster: &Raster, path: impl AsRef<Path>) -> Result<()> {
    match raster {
        Raster::Image(i) => save_image(i, path),
        Raster::Mask(m) => save_mask(m, path),
    }
}

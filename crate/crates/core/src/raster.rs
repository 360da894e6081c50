//! Raster types shared by every stage.
//!
//! Coordinates have their origin at the top-left corner, x grows rightward and
//! y downward. Masks use 255 for "positive" (lane or occluder, depending on
//! context) and 0 for background.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MASK_ON: u8 = 255;
pub const MASK_OFF: u8 = 0;

/// 8-bit RGB image, row-major, three interleaved samples per pixel.
#[derive(Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

/// 8-bit single-channel mask, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct RasterMask {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

/// 8-bit RGBA raster; only used for occluder sprites.
#[derive(Clone, PartialEq, Eq)]
pub struct RgbaImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

fn check_dims(width: u32, height: u32, len: usize, channels: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidRaster(format!(
            "dimensions must be positive, got {width}x{height}"
        )));
    }
    let expected = width as usize * height as usize * channels;
    if len != expected {
        return Err(Error::InvalidRaster(format!(
            "{width}x{height}x{channels} needs {expected} samples, got {len}"
        )));
    }
    Ok(())
}

macro_rules! raster_common {
    ($ty:ident, $channels:expr) => {
        impl $ty {
            pub const CHANNELS: usize = $channels;

            pub fn from_vec(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
                check_dims(width, height, data.len(), $channels)?;
                Ok(Self {
                    width,
                    height,
                    data,
                })
            }

            /// Panics on zero dimensions.
            pub fn filled(width: u32, height: u32, value: [u8; $channels]) -> Self {
                assert!(
                    width > 0 && height > 0,
                    "raster dimensions must be positive"
                );
                let data = value
                    .iter()
                    .copied()
                    .cycle()
                    .take(width as usize * height as usize * $channels)
                    .collect();
                Self {
                    width,
                    height,
                    data,
                }
            }

            pub fn width(&self) -> u32 {
                self.width
            }

            pub fn height(&self) -> u32 {
                self.height
            }

            pub fn size(&self) -> (u32, u32) {
                (self.width, self.height)
            }

            pub fn data(&self) -> &[u8] {
                &self.data
            }

            pub fn data_mut(&mut self) -> &mut [u8] {
                &mut self.data
            }

            pub fn into_vec(self) -> Vec<u8> {
                self.data
            }

            #[inline]
            pub fn index(&self, x: u32, y: u32) -> usize {
                (y as usize * self.width as usize + x as usize) * $channels
            }

            pub fn same_size<T: HasSize>(&self, other: &T) -> Result<()> {
                if self.size() != other.dims() {
                    return Err(Error::dims(self.size(), other.dims()));
                }
                Ok(())
            }
        }

        impl HasSize for $ty {
            fn dims(&self) -> (u32, u32) {
                (self.width, self.height)
            }
        }

        impl std::fmt::Debug for $ty {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.debug_struct(stringify!($ty))
                    .field("width", &self.width)
                    .field("height", &self.height)
                    .finish_non_exhaustive()
            }
        }
    };
}

pub trait HasSize {
    fn dims(&self) -> (u32, u32);
}

raster_common!(RasterImage, 3);
raster_common!(RasterMask, 1);
raster_common!(RgbaImage, 4);

impl RasterImage {
    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = self.index(x, y);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, px: [u8; 3]) {
        let i = self.index(x, y);
        self.data[i..i + 3].copy_from_slice(&px);
    }

    /// ITU-R BT.601 luma as a float per pixel.
    pub fn luma(&self) -> Vec<f32> {
        self.data
            .chunks_exact(3)
            .map(|p| 0.299 * f32::from(p[0]) + 0.587 * f32::from(p[1]) + 0.114 * f32::from(p[2]))
            .collect()
    }

    /// Gray-level view of a mask, used for panels and external nodes.
    pub fn from_mask(mask: &RasterMask) -> Self {
        let data = mask.data.iter().flat_map(|&v| [v, v, v]).collect();
        Self {
            width: mask.width,
            height: mask.height,
            data,
        }
    }
}

impl RasterMask {
    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn is_on(&self, x: u32, y: u32) -> bool {
        self.get(x, y) == MASK_ON
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: u8) {
        let w = self.width as usize;
        self.data[y as usize * w + x as usize] = v;
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self::filled(width, height, [MASK_OFF])
    }

    pub fn count_on(&self) -> usize {
        self.data.iter().filter(|&&v| v == MASK_ON).count()
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == MASK_ON || v == MASK_OFF)
    }

    pub fn ensure_binary(&self) -> Result<()> {
        match self.data.iter().find(|&&v| v != MASK_ON && v != MASK_OFF) {
            Some(&v) => Err(Error::NonBinaryMask(v)),
            None => Ok(()),
        }
    }

    pub fn any_on(&self) -> bool {
        self.data.contains(&MASK_ON)
    }

    /// Pixelwise OR of two equally sized masks.
    pub fn union(&self, other: &RasterMask) -> Result<RasterMask> {
        self.same_size(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| {
                if a == MASK_ON || b == MASK_ON {
                    MASK_ON
                } else {
                    MASK_OFF
                }
            })
            .collect();
        Ok(Self {
            width: self.width,
            height: self.height,
            data,
        })
    }
}

/// Output sample is 255 where the input is at least `threshold`, else 0.
pub fn binarize(mask: &RasterMask, threshold: u8) -> RasterMask {
    let data = mask
        .data
        .iter()
        .map(|&v| if v >= threshold { MASK_ON } else { MASK_OFF })
        .collect();
    RasterMask {
        width: mask.width,
        height: mask.height,
        data,
    }
}

impl RgbaImage {
    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 4] {
        let i = self.index(x, y);
        [
            self.data[i],
            self.data[i + 1],
            self.data[i + 2],
            self.data[i + 3],
        ]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, px: [u8; 4]) {
        let i = self.index(x, y);
        self.data[i..i + 4].copy_from_slice(&px);
    }

    pub fn has_visible_pixel(&self) -> bool {
        self.data.chunks_exact(4).any(|p| p[3] > 0)
    }

    /// Nearest-neighbour resample to an explicit size.
    pub fn resize_nearest(&self, new_w: u32, new_h: u32) -> RgbaImage {
        assert!(new_w > 0 && new_h > 0);
        let mut out = RgbaImage::filled(new_w, new_h, [0; 4]);
        for ty in 0..new_h {
            let sy = ((u64::from(ty) * 2 + 1) * u64::from(self.height) / (2 * u64::from(new_h)))
                .min(u64::from(self.height - 1)) as u32;
            for tx in 0..new_w {
                let sx = ((u64::from(tx) * 2 + 1) * u64::from(self.width) / (2 * u64::from(new_w)))
                    .min(u64::from(self.width - 1)) as u32;
                out.set_pixel(tx, ty, self.pixel(sx, sy));
            }
        }
        out
    }
}

/// Simple polygon in pixel coordinates. Pixel (x, y) is inside when its
/// centre (x + 0.5, y + 0.5) is inside by the even-odd rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polygon(pub Vec<[f64; 2]>);

impl Polygon {
    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.0
    }

    pub fn contains(&self, px: f64, py: f64) -> bool {
        let v = &self.0;
        if v.len() < 3 {
            return false;
        }
        let mut inside = false;
        let mut j = v.len() - 1;
        for i in 0..v.len() {
            let [xi, yi] = v[i];
            let [xj, yj] = v[j];
            if (yi > py) != (yj > py) {
                let x_cross = xj + (py - yj) * (xi - xj) / (yi - yj);
                if px < x_cross {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    pub fn contains_pixel(&self, x: u32, y: u32) -> bool {
        self.contains(f64::from(x) + 0.5, f64::from(y) + 0.5)
    }

    pub fn rasterize(&self, width: u32, height: u32) -> RasterMask {
        let mut m = RasterMask::empty(width, height);
        for y in 0..height {
            for x in 0..width {
                if self.contains_pixel(x, y) {
                    m.set(x, y, MASK_ON);
                }
            }
        }
        m
    }

    /// Smallest pixel row whose centre can be inside the polygon.
    pub fn top_row(&self) -> Option<u32> {
        self.0
            .iter()
            .map(|p| p[1])
            .fold(None, |acc: Option<f64>, y| {
                Some(acc.map_or(y, |a| a.min(y)))
            })
            .map(|y| (y - 0.5).ceil().max(0.0) as u32)
    }

    /// Area by the shoelace formula.
    pub fn area(&self) -> f64 {
        let v = &self.0;
        if v.len() < 3 {
            return 0.0;
        }
        let mut s = 0.0;
        for i in 0..v.len() {
            let [x0, y0] = v[i];
            let [x1, y1] = v[(i + 1) % v.len()];
            s += x0 * y1 - x1 * y0;
        }
        s.abs() / 2.0
    }

    /// Whole-frame rectangle.
    pub fn frame(width: u32, height: u32) -> Self {
        let (w, h) = (f64::from(width), f64::from(height));
        Polygon(vec![[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]])
    }
}

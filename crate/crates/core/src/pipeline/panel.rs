use std::path::Path;

use font8x8::{UnicodeFonts, BASIC_FONTS};

use crate::error::{Error, Result};
use crate::io;
use crate::raster::{RasterImage, RasterMask};

const GLYPH: u32 = 8;
const PAD: u32 = 4;
const LABEL_H: u32 = GLYPH + 2 * PAD;
const BACKGROUND: [u8; 3] = [24, 24, 24];
const INK: [u8; 3] = [240, 240, 240];

/// A labelled sub-image of a comparison panel.
#[derive(Debug, Clone)]
pub struct PanelTile {
    pub label: String,
    pub image: RasterImage,
}

impl PanelTile {
    pub fn image(label: impl Into<String>, image: RasterImage) -> Self {
        PanelTile {
            label: label.into(),
            image,
        }
    }

    pub fn mask(label: impl Into<String>, mask: &RasterMask) -> Self {
        PanelTile::image(label, RasterImage::from_mask(mask))
    }
}

fn draw_text(canvas: &mut RasterImage, text: &str, x0: u32, y0: u32, max_w: u32) {
    let max_chars = (max_w / GLYPH) as usize;
    for (i, ch) in text.chars().take(max_chars).enumerate() {
        let glyph = BASIC_FONTS
            .get(ch)
            .or_else(|| BASIC_FONTS.get('?'))
            .unwrap_or([0; 8]);
        for (gy, row) in glyph.iter().enumerate() {
            for gx in 0..GLYPH {
                if row >> gx & 1 == 1 {
                    canvas.set_pixel(x0 + i as u32 * GLYPH + gx, y0 + gy as u32, INK);
                }
            }
        }
    }
}

/// Lays tiles out left to right with a label bar above each. Shorter tiles
/// are centred vertically on the background; nothing is resampled.
pub fn compose_panel(tiles: &[PanelTile]) -> Result<RasterImage> {
    if tiles.len() < 2 {
        return Err(Error::Params(format!(
            "a panel needs at least 2 tiles, got {}",
            tiles.len()
        )));
    }
    let tile_h = tiles.iter().map(|t| t.image.height()).max().unwrap_or(0);
    let width = PAD + tiles.iter().map(|t| t.image.width() + PAD).sum::<u32>();
    let height = LABEL_H + tile_h + PAD;
    let mut canvas = RasterImage::filled(width, height, BACKGROUND);
    let mut x = PAD;
    for t in tiles {
        let (w, h) = t.image.size();
        draw_text(&mut canvas, &t.label, x, PAD, w);
        let y_off = LABEL_H + (tile_h - h) / 2;
        for y in 0..h {
            let src = t.image.index(0, y);
            let dst = canvas.index(x, y_off + y);
            canvas.data_mut()[dst..dst + 3 * w as usize]
                .copy_from_slice(&t.image.data()[src..src + 3 * w as usize]);
        }
        x += w + PAD;
    }
    Ok(canvas)
}

/// Writes a comparison panel, conventionally the original, the ground
/// truth, then one tile per prediction.
pub fn emit_panel(tiles: &[PanelTile], path: impl AsRef<Path>) -> Result<()> {
    io::save_image(&compose_panel(tiles)?, path)
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{RasterImage, RasterMask, MASK_ON};

pub const PSNR_CAP: f64 = 99.0;

/// Reconstruction error over hole pixels only, averaged over channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityScores {
    pub l1_masked: f64,
    /// dB; exactly [`PSNR_CAP`] when the hole is reproduced perfectly.
    pub psnr_masked: f64,
}

pub fn inpaint_fidelity(
    inpainted: &RasterImage,
    clear: &RasterImage,
    hole: &RasterMask,
) -> Result<FidelityScores> {
    inpainted.same_size(clear)?;
    inpainted.same_size(hole)?;
    let (mut abs, mut sq, mut n) = (0u64, 0u64, 0u64);
    for (i, &h) in hole.data().iter().enumerate() {
        if h != MASK_ON {
            continue;
        }
        for c in 0..3 {
            let d = i64::from(inpainted.data()[i * 3 + c]) - i64::from(clear.data()[i * 3 + c]);
            abs += d.unsigned_abs();
            sq += (d * d) as u64;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::Metrics("fidelity needs a non-empty hole".into()));
    }
    let mse = sq as f64 / n as f64;
    let psnr_masked = if sq == 0 {
        PSNR_CAP
    } else {
        (10.0 * (255.0f64 * 255.0 / mse).log10()).min(PSNR_CAP)
    };
    Ok(FidelityScores {
        l1_masked: abs as f64 / n as f64,
        psnr_masked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, RngCore};

    #[test]
    fn perfect_and_offset() {
        let clear = RasterImage::filled(8, 8, [100, 50, 20]);
        let mut hole = RasterMask::empty(8, 8);
        hole.set(2, 2, 255);
        hole.set(3, 2, 255);
        let f = inpaint_fidelity(&clear, &clear, &hole).unwrap();
        assert_eq!((f.l1_masked, f.psnr_masked), (0.0, PSNR_CAP));

        let mut shifted = clear.clone();
        for x in 2..4 {
            shifted.set_pixel(x, 2, [110, 60, 30]);
        }
        shifted.set_pixel(7, 7, [0, 0, 0]); // outside the hole: ignored
        let f = inpaint_fidelity(&shifted, &clear, &hole).unwrap();
        assert_eq!(f.l1_masked, 10.0);
        assert!((f.psnr_masked - 10.0 * (65025.0f64 / 100.0).log10()).abs() < 1e-12);
        assert!(inpaint_fidelity(&clear, &clear, &RasterMask::empty(8, 8)).is_err());
    }

    #[test]
    fn random_pair_matches_per_pixel_oracle() {
        let mut rng = crate::seed::rng(5);
        let mut a = vec![0u8; 16 * 16 * 3];
        let mut b = vec![0u8; 16 * 16 * 3];
        rng.fill_bytes(&mut a);
        rng.fill_bytes(&mut b);
        let (a, b) = (
            RasterImage::from_vec(16, 16, a).unwrap(),
            RasterImage::from_vec(16, 16, b).unwrap(),
        );
        let hole = RasterMask::from_vec(
            16,
            16,
            (0..256)
                .map(|_| if rng.random_bool(0.3) { 255 } else { 0 })
                .collect(),
        )
        .unwrap();
        let (mut l1, mut se, mut n) = (0.0, 0.0, 0.0);
        for y in 0..16 {
            for x in 0..16 {
                if hole.is_on(x, y) {
                    let (p, q) = (a.pixel(x, y), b.pixel(x, y));
                    for c in 0..3 {
                        let d = f64::from(p[c]) - f64::from(q[c]);
                        l1 += d.abs();
                        se += d * d;
                        n += 1.0;
                    }
                }
            }
        }
        let f = inpaint_fidelity(&a, &b, &hole).unwrap();
        assert!((f.l1_masked - l1 / n).abs() < 1e-12);
        assert!((f.psnr_masked - 10.0 * (65025.0 / (se / n)).log10()).abs() < 1e-9);
    }
}

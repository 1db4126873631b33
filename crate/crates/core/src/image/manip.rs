//! Pixel-level edits: object masking and object copy-move.

use image::imageops::{self, FilterType};
use image::{ImageBuffer, Pixel, Primitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BBox, ImageError};

type Buffer<P> = ImageBuffer<P, Vec<<P as Pixel>::Subpixel>>;

/// Zero every channel of every pixel inside `bbox`.
pub fn mask_object<P>(image: &Buffer<P>, bbox: BBox) -> Result<Buffer<P>, ImageError>
where
    P: Pixel,
{
    bbox.check_within(image.width(), image.height())?;
    let mut out = image.clone();
    let zero = <P::Subpixel as Primitive>::DEFAULT_MIN_VALUE;
    for y in bbox.y..bbox.y + bbox.h {
        for x in bbox.x..bbox.x + bbox.w {
            out.get_pixel_mut(x, y).channels_mut().iter_mut().for_each(|c| *c = zero);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CopyMoveConfig {
    /// Source window sizes, as fractions of the target box.
    pub scales: Vec<f64>,
    /// Window grid stride in pixels; `None` picks `max(1, min(w, h) / 4)`.
    pub stride: Option<u32>,
}

impl Default for CopyMoveConfig {
    fn default() -> Self {
        Self { scales: vec![1.0, 0.75, 0.5], stride: None }
    }
}

/// Every window on the stride grid, at every scale, that avoids all
/// `relevant` boxes.
pub fn admissible_windows(width: u32, height: u32, target: BBox, relevant: &[BBox], config: &CopyMoveConfig) -> Vec<BBox> {
    let stride = config.stride.unwrap_or_else(|| (target.w.min(target.h) / 4).max(1)).max(1) as usize;
    let mut out = Vec::new();
    for &s in &config.scales {
        let sw = ((target.w as f64 * s).round() as u32).max(1);
        let sh = ((target.h as f64 * s).round() as u32).max(1);
        if sw > width || sh > height {
            continue;
        }
        for y in (0..=height - sh).step_by(stride) {
            for x in (0..=width - sw).step_by(stride) {
                let w = BBox::new(x, y, sw, sh);
                if !relevant.iter().any(|r| r.intersects(&w)) {
                    out.push(w);
                }
            }
        }
    }
    out
}

/// Replace `target` with a seeded, uniformly chosen irrelevant region of the
/// same image, rescaled (bilinear) to the target size.
///
/// `relevant` should contain every box that must not be used as a source,
/// including `target` itself.
pub fn copy_move_object<P>(
    image: &Buffer<P>,
    target: BBox,
    relevant: &[BBox],
    seed: u64,
    config: &CopyMoveConfig,
) -> Result<(Buffer<P>, BBox), ImageError>
where
    P: Pixel + 'static,
{
    target.check_within(image.width(), image.height())?;
    let mut blocked = relevant.to_vec();
    if !blocked.contains(&target) {
        blocked.push(target);
    }
    let windows = admissible_windows(image.width(), image.height(), target, &blocked, config);
    if windows.is_empty() {
        return Err(ImageError::NoSourceRegion);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let source = windows[rng.gen_range(0..windows.len())];
    let patch = imageops::crop_imm(image, source.x, source.y, source.w, source.h).to_image();
    let patch = if (source.w, source.h) == (target.w, target.h) {
        patch
    } else {
        imageops::resize(&patch, target.w, target.h, FilterType::Triangle)
    };
    let mut out = image.clone();
    imageops::replace(&mut out, &patch, target.x as i64, target.y as i64);
    Ok((out, source))
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::glyphs::GlyphSource;
use super::noise::ink_bounds;
use super::text::check_size;
use super::SynthError;
use crate::raster::filter::rotate_any;
use crate::raster::{resample, Raster, Rect};

const MARGIN: i32 = 2;

/// A quarter of a random glyph, rotated and rescaled: character-like
/// strokes that are not a character. Contributes no ground truth.
pub fn render_hard_negative_tile(face: &dyn GlyphSource, size: u32, seed: u64) -> Result<Raster, SynthError> {
    check_size(size)?;
    let charset = face.charset();
    if charset.is_empty() {
        return Err(SynthError::NothingDrawable(Vec::new()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last = None;
    for _ in 0..32 {
        let ch = charset[rng.gen_range(0..charset.len())];
        let Some(g) = face.glyph(ch, size) else { continue };
        let (hw, hh) = (g.width.div_ceil(2), g.height.div_ceil(2));
        let right = rng.gen_bool(0.5) && g.width > 1;
        let lower = rng.gen_bool(0.5) && g.height > 1;
        let (x0, x1) = if right { (hw.min(g.width - 1), g.width) } else { (0, hw) };
        let (y0, y1) = if lower { (hh.min(g.height - 1), g.height) } else { (0, hh) };
        let ink = rng.gen_range(0..=60u32);
        let (qw, qh) = (x1 - x0, y1 - y0);
        let mut quarter = Vec::with_capacity(qw * qh);
        for y in y0..y1 {
            for x in x0..x1 {
                let c = g.coverage[y * g.width + x] as u32;
                quarter.push((255 - (c * (255 - ink) + 127) / 255) as u8);
            }
        }
        if !quarter.iter().any(|&v| v < 128) {
            continue;
        }
        let quarter = Raster::from_vec(qw, qh, quarter).expect("quarter dims");
        let scale = rng.gen_range(0.5..=2.0);
        let sw = ((qw as f64 * scale).round() as usize).max(1);
        let sh = ((qh as f64 * scale).round() as usize).max(1);
        let scaled = resample(&quarter, sw, sh);
        let side = ((sw * sw + sh * sh) as f64).sqrt().ceil() as usize + 2;
        let mut canvas = Raster::new(side, side, 255);
        canvas.blit_min(&scaled, ((side - sw) / 2) as i32, ((side - sh) / 2) as i32);
        let angle = rng.gen_range(-180.0..=180.0);
        let rotated = rotate_any(&canvas, angle, 255);
        let Some(b) = ink_bounds(&rotated) else { continue };
        let padded = Rect::new(b.x0() - MARGIN, b.y0() - MARGIN, b.x1() + MARGIN, b.y1() + MARGIN).expect("non-empty");
        let mut tile = Raster::new(padded.width() as usize, padded.height() as usize, 255);
        tile.blit_min(&rotated, -padded.x0(), -padded.y0());
        if tile.data().iter().any(|&v| v < 128) {
            return Ok(tile);
        }
        last = Some(tile);
    }
    last.ok_or(SynthError::NothingDrawable(Vec::new()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::glyphs::BitmapFace;

    #[test]
    fn fragments_have_ink_and_are_deterministic() {
        for face in BitmapFace::variants() {
            for seed in 0..40 {
                let t = render_hard_negative_tile(&face, 9 + (seed as u32 * 7) % 90, seed).unwrap();
                assert!(t.data().iter().any(|&v| v < 255));
                assert_eq!(t, render_hard_negative_tile(&face, 9 + (seed as u32 * 7) % 90, seed).unwrap());
            }
        }
    }

    #[test]
    fn rejects_out_of_range_sizes() {
        assert!(render_hard_negative_tile(&BitmapFace::regular(), 101, 0).is_err());
    }
}

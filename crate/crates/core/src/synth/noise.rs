//! Font-level noise (speckle, binarization, per-glyph distortion) and
//! document-level degradations (blur, block-DCT compression, downsampling).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::raster::{connected_components, gaussian_blur, resample, Connectivity, Raster, Rect};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FontNoise {
    Speckle,
    Binarize,
    Distort,
}

/// Public single-family entry point; distortion regions are the tile's ink components.
pub fn apply_font_noise(tile: &Raster, family: FontNoise, strength: f64, seed: u64) -> Raster {
    let strength = strength.clamp(0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match family {
        FontNoise::Speckle => speckle(tile, strength, &mut rng),
        FontNoise::Binarize => binarize(tile),
        FontNoise::Distort => {
            let regions: Vec<Rect> = connected_components(&tile.binarize_ink(255), Connectivity::Eight)
                .into_iter()
                .map(|c| c.bbox)
                .collect();
            distort(tile, &regions, strength, &mut rng).0
        }
    }
}

/// Flips `round(strength * 2% * area)` distinct pixels to the opposite extreme.
pub(crate) fn speckle(tile: &Raster, strength: f64, rng: &mut impl Rng) -> Raster {
    let area = tile.data().len();
    let n = (strength * 0.02 * area as f64).round() as usize;
    let mut out = tile.clone();
    for idx in rand::seq::index::sample(rng, area, n.min(area)) {
        let v = &mut out.data_mut()[idx];
        *v = if *v >= 128 { 0 } else { 255 };
    }
    out
}

pub(crate) fn otsu_threshold(img: &Raster) -> u8 {
    let mut hist = [0u64; 256];
    for &v in img.data() {
        hist[v as usize] += 1;
    }
    let total = img.data().len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_t) = (-1.0, None);
    for t in 0..255 {
        w0 += hist[t] as f64;
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let (m0, m1) = (sum0 / w0, (sum_all - sum0) / w1);
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best {
            best = between;
            best_t = Some(t as u8);
        }
    }
    best_t.unwrap_or(127)
}

/// Otsu binarization to {0,255}; uniform images fall back to a fixed 128 cut.
pub(crate) fn binarize(tile: &Raster) -> Raster {
    let t = otsu_threshold(tile);
    let data = tile.data().iter().map(|&v| if v <= t { 0 } else { 255 }).collect();
    Raster::from_vec(tile.width(), tile.height(), data).expect("same dims")
}

/// Re-renders each region with a random scale and shift onto a white tile.
/// Returns the distorted tile and the moved region boxes (tight to ink).
pub(crate) fn distort(tile: &Raster, regions: &[Rect], strength: f64, rng: &mut impl Rng) -> (Raster, Vec<Rect>) {
    if strength <= 0.0 {
        return (tile.clone(), regions.to_vec());
    }
    let mut out = Raster::new(tile.width(), tile.height(), 255);
    let max_shift = 1.0 + 2.0 * strength;
    let max_scale = 0.05 * strength;
    let mut moved = Vec::with_capacity(regions.len());
    for r in regions {
        let Some(crop) = tile.crop(r) else {
            moved.push(*r);
            continue;
        };
        let scale = 1.0 + rng.gen_range(-max_scale..=max_scale);
        let nw = ((crop.width() as f64 * scale).round() as usize).max(1);
        let nh = ((crop.height() as f64 * scale).round() as usize).max(1);
        let scaled = resample(&crop, nw, nh);
        let tx = rng.gen_range(-max_shift..=max_shift).round() as i32;
        let ty = rng.gen_range(-max_shift..=max_shift).round() as i32;
        let x = r.x0() + (crop.width() as i32 - nw as i32) / 2 + tx;
        let y = r.y0() + (crop.height() as i32 - nh as i32) / 2 + ty;
        out.blit_min(&scaled, x, y);
        let ink = ink_bounds(&scaled).map(|b| b.translate(x, y));
        let placed = ink
            .and_then(|b| b.clip(tile.width(), tile.height()))
            .unwrap_or(*r);
        moved.push(placed);
    }
    (out, moved)
}

/// Tight box of non-white pixels.
pub(crate) fn ink_bounds(img: &Raster) -> Option<Rect> {
    let (mut x0, mut y0, mut x1, mut y1) = (i32::MAX, i32::MAX, i32::MIN, i32::MIN);
    for y in 0..img.height() {
        for x in 0..img.width() {
            if img.get(x, y) < 255 {
                x0 = x0.min(x as i32);
                y0 = y0.min(y as i32);
                x1 = x1.max(x as i32 + 1);
                y1 = y1.max(y as i32 + 1);
            }
        }
    }
    Rect::new(x0, y0, x1, y1).ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DocNoise {
    Blur { sigma: f64 },
    Compress { quality: u8 },
    Downsample { factor: f64 },
}

impl DocNoise {
    pub fn apply(&self, img: &Raster) -> Raster {
        match *self {
            DocNoise::Blur { sigma } => gaussian_blur(img, sigma),
            DocNoise::Compress { quality } => block_dct_roundtrip(img, quality),
            DocNoise::Downsample { factor } => {
                let w = ((img.width() as f64 * factor).round() as usize).max(1);
                let h = ((img.height() as f64 * factor).round() as usize).max(1);
                resample(&resample(img, w, h), img.width(), img.height())
            }
        }
    }
}

const LUMA_QUANT: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, 12, 12, 14, 19, 26, 58, 60, 55, 14, 13, 16, 24, 40, 57, 69, 56, 14, 17, 22, 29, 51,
    87, 80, 62, 18, 22, 37, 56, 68, 109, 103, 77, 24, 35, 55, 64, 81, 104, 113, 92, 49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
];

fn quant_table(quality: u8) -> [f32; 64] {
    let q = quality.clamp(1, 100) as u32;
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let mut t = [0f32; 64];
    for (o, &base) in t.iter_mut().zip(&LUMA_QUANT) {
        *o = ((base as u32 * scale + 50) / 100).clamp(1, 255) as f32;
    }
    t
}

fn dct_basis() -> [[f32; 8]; 8] {
    let mut c = [[0f32; 8]; 8];
    for (k, row) in c.iter_mut().enumerate() {
        let a = if k == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
        for (n, v) in row.iter_mut().enumerate() {
            *v = (a * ((2 * n + 1) as f64 * k as f64 * std::f64::consts::PI / 16.0).cos()) as f32;
        }
    }
    c
}

/// 8x8 block DCT, quantize, dequantize, inverse DCT: the lossy core of JPEG.
pub fn block_dct_roundtrip(img: &Raster, quality: u8) -> Raster {
    let (w, h) = (img.width(), img.height());
    let q = quant_table(quality);
    let c = dct_basis();
    let mut out = img.clone();
    let mut block = [[0f32; 8]; 8];
    let mut tmp = [[0f32; 8]; 8];
    for by in (0..h).step_by(8) {
        for bx in (0..w).step_by(8) {
            for (y, row) in block.iter_mut().enumerate() {
                for (x, v) in row.iter_mut().enumerate() {
                    *v = img.get((bx + x).min(w - 1), (by + y).min(h - 1)) as f32 - 128.0;
                }
            }
            // forward: C * B * C^T
            for u in 0..8 {
                for x in 0..8 {
                    tmp[u][x] = (0..8).map(|y| c[u][y] * block[y][x]).sum();
                }
            }
            let mut coef = [[0f32; 8]; 8];
            for u in 0..8 {
                for v in 0..8 {
                    let f: f32 = (0..8).map(|x| tmp[u][x] * c[v][x]).sum();
                    let qv = q[u * 8 + v];
                    coef[u][v] = (f / qv).round() * qv;
                }
            }
            // inverse: C^T * F * C
            for y in 0..8 {
                for v in 0..8 {
                    tmp[y][v] = (0..8).map(|u| c[u][y] * coef[u][v]).sum();
                }
            }
            for y in 0..8 {
                for x in 0..8 {
                    let (px, py) = (bx + x, by + y);
                    if px < w && py < h {
                        let val: f32 = (0..8).map(|v| tmp[y][v] * c[v][x]).sum::<f32>() + 128.0;
                        out.set(px, py, val.round().clamp(0.0, 255.0) as u8);
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::glyphs::BitmapFace;
    use crate::synth::text::render_text_tile;

    fn text_tile() -> Raster {
        render_text_tile("Noise 123", &BitmapFace::regular(), 20, 4).unwrap().image
    }

    #[test]
    fn zero_strength_is_identity() {
        let t = text_tile();
        assert_eq!(apply_font_noise(&t, FontNoise::Speckle, 0.0, 9), t);
        assert_eq!(apply_font_noise(&t, FontNoise::Distort, 0.0, 9), t);
    }

    #[test]
    fn binarize_is_two_level() {
        let out = apply_font_noise(&text_tile(), FontNoise::Binarize, 0.5, 1);
        assert!(out.data().iter().all(|&v| v == 0 || v == 255));
        assert!(out.data().contains(&0));
        let flat = Raster::new(5, 5, 200);
        assert!(binarize(&flat).data().iter().all(|&v| v == 255));
    }

    #[test]
    fn full_speckle_flips_two_percent() {
        let tile = Raster::new(100, 100, 255);
        let out = apply_font_noise(&tile, FontNoise::Speckle, 1.0, 77);
        let diff = tile.data().iter().zip(out.data()).filter(|(a, b)| a != b).count();
        assert_eq!(diff, 200);
    }

    #[test]
    fn distortion_keeps_ink_and_moves_little() {
        let t = text_tile();
        let out = apply_font_noise(&t, FontNoise::Distort, 1.0, 5);
        assert_eq!((out.width(), out.height()), (t.width(), t.height()));
        assert!(out.data().iter().any(|&v| v < 128));
        let (a, b) = (ink_bounds(&t).unwrap(), ink_bounds(&out).unwrap());
        assert!((a.x0() - b.x0()).abs() <= 4 && (a.y0() - b.y0()).abs() <= 4);
    }

    #[test]
    fn compression_preserves_flat_and_degrades_detail() {
        let flat = Raster::new(20, 13, 140);
        // flat blocks keep only the DC term, off by at most half a DC step (27 / 8 / 2)
        let out = block_dct_roundtrip(&flat, 30);
        let v = out.get(0, 0);
        assert!(out.data().iter().all(|&p| p == v));
        assert!((v as i32 - 140).abs() <= 2);
        let mid = Raster::new(20, 13, 128);
        assert_eq!(block_dct_roundtrip(&mid, 30), mid);
        let t = text_tile();
        let c = block_dct_roundtrip(&t, 10);
        assert_ne!(c, t);
        let err: f64 = t.data().iter().zip(c.data()).map(|(&a, &b)| (a as f64 - b as f64).abs()).sum::<f64>()
            / t.data().len() as f64;
        assert!(err < 40.0);
        let hq = block_dct_roundtrip(&t, 95);
        let err_hq: f64 = t.data().iter().zip(hq.data()).map(|(&a, &b)| (a as f64 - b as f64).abs()).sum::<f64>()
            / t.data().len() as f64;
        assert!(err_hq < err);
    }

    #[test]
    fn downsample_keeps_dimensions() {
        let t = text_tile();
        let d = DocNoise::Downsample { factor: 0.5 }.apply(&t);
        assert_eq!((d.width(), d.height()), (t.width(), t.height()));
    }
}

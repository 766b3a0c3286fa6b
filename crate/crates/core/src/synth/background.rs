use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::raster::io::read_image;
use crate::raster::{resample, stretch_range, Raster, Rect};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundKind {
    White,
    Natural,
    Texture,
}

#[derive(Debug, Clone)]
pub struct Background {
    pub image: Raster,
    /// Lower bound drawn for the texture range stretch.
    pub stretch_lo: Option<u8>,
}

pub fn make_background(
    kind: BackgroundKind,
    w: usize,
    h: usize,
    seed: u64,
    asset_dir: Option<&Path>,
) -> Result<Background, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        BackgroundKind::White => Ok(Background {
            image: Raster::new(w, h, 255),
            stretch_lo: None,
        }),
        BackgroundKind::Texture => {
            let tex = procedural_texture(w, h, &mut rng);
            let edges = contour_filter(&tex);
            let lo = rng.gen_range(120..=220u8);
            Ok(Background {
                image: stretch_range(&edges, lo, 255).expect("lo < 255"),
                stretch_lo: Some(lo),
            })
        }
        BackgroundKind::Natural => {
            let dir = asset_dir.ok_or_else(|| SynthError::NoAssets("<none>".into()))?;
            let assets = list_assets(dir)?;
            if assets.is_empty() {
                return Err(SynthError::NoAssets(dir.display().to_string()));
            }
            let src = read_image(&assets[rng.gen_range(0..assets.len())])?;
            Ok(Background {
                image: random_crop_resample(&src, w, h, &mut rng),
                stretch_lo: None,
            })
        }
    }
}

fn list_assets(dir: &Path) -> Result<Vec<PathBuf>, SynthError> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| SynthError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "pgm"))
        })
        .collect();
    paths.sort();
    Ok(paths)
}

fn random_crop_resample(src: &Raster, w: usize, h: usize, rng: &mut impl Rng) -> Raster {
    let aspect = w as f64 / h as f64;
    let (sw, sh) = (src.width() as f64, src.height() as f64);
    let (max_w, max_h) = if sw / sh > aspect { (sh * aspect, sh) } else { (sw, sw / aspect) };
    let frac = rng.gen_range(0.5..=1.0);
    let cw = ((max_w * frac).round() as usize).clamp(1, src.width());
    let ch = ((max_h * frac).round() as usize).clamp(1, src.height());
    let x = rng.gen_range(0..=src.width() - cw) as i32;
    let y = rng.gen_range(0..=src.height() - ch) as i32;
    let crop = src
        .crop(&Rect::from_xywh(x, y, cw as i32, ch as i32).expect("positive crop"))
        .expect("crop lies inside source");
    resample(&crop, w, h)
}

/// Fractal value noise with a few hard-edged blobs and streaks.
fn procedural_texture(w: usize, h: usize, rng: &mut impl Rng) -> Raster {
    let mut acc = vec![0f32; w * h];
    let mut amp = 1.0f32;
    let mut cell = rng.gen_range(24..96) as f32;
    for _ in 0..4 {
        let gw = (w as f32 / cell).ceil() as usize + 2;
        let gh = (h as f32 / cell).ceil() as usize + 2;
        let grid: Vec<f32> = (0..gw * gh).map(|_| rng.gen::<f32>()).collect();
        for y in 0..h {
            let fy = y as f32 / cell;
            let (iy, ty) = (fy as usize, fy.fract());
            for x in 0..w {
                let fx = x as f32 / cell;
                let (ix, tx) = (fx as usize, fx.fract());
                let g = |i: usize, j: usize| grid[j * gw + i];
                let top = g(ix, iy) * (1.0 - tx) + g(ix + 1, iy) * tx;
                let bot = g(ix, iy + 1) * (1.0 - tx) + g(ix + 1, iy + 1) * tx;
                acc[y * w + x] += amp * (top * (1.0 - ty) + bot * ty);
            }
        }
        amp *= 0.5;
        cell = (cell / 2.0).max(2.0);
    }
    let blobs = rng.gen_range(0..6);
    for _ in 0..blobs {
        let (cx, cy) = (rng.gen_range(0..w) as f32, rng.gen_range(0..h) as f32);
        let r = rng.gen_range(4.0..(w.min(h) as f32 / 4.0).max(5.0));
        let v = rng.gen_range(-1.0f32..1.0);
        for y in 0..h {
            for x in 0..w {
                let d = ((x as f32 - cx).powi(2) + (y as f32 - cy).powi(2)).sqrt();
                if d < r {
                    acc[y * w + x] += v;
                }
            }
        }
    }
    let streaks = rng.gen_range(0..4);
    for _ in 0..streaks {
        let horizontal = rng.gen_bool(0.5);
        let pos = rng.gen_range(0..if horizontal { h } else { w });
        let thick = rng.gen_range(1..4);
        let v = rng.gen_range(-1.0f32..1.0);
        for t in 0..thick {
            let p = pos + t;
            if horizontal && p < h {
                acc[p * w..(p + 1) * w].iter_mut().for_each(|a| *a += v);
            } else if !horizontal && p < w {
                (0..h).for_each(|y| acc[y * w + p] += v);
            }
        }
    }
    let (lo, hi) = acc.iter().fold((f32::MAX, f32::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let span = (hi - lo).max(1e-6);
    let data = acc.iter().map(|&v| ((v - lo) / span * 255.0).round() as u8).collect();
    Raster::from_vec(w, h, data).expect("texture dims")
}

/// Sobel gradient magnitude, inverted so edges are dark on a light field.
pub(crate) fn contour_filter(img: &Raster) -> Raster {
    let (w, h) = (img.width(), img.height());
    let px = |x: i64, y: i64| img.get(x.clamp(0, w as i64 - 1) as usize, y.clamp(0, h as i64 - 1) as usize) as f32;
    let mut mag = vec![0f32; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let gx = px(x + 1, y - 1) + 2.0 * px(x + 1, y) + px(x + 1, y + 1)
                - px(x - 1, y - 1)
                - 2.0 * px(x - 1, y)
                - px(x - 1, y + 1);
            let gy = px(x - 1, y + 1) + 2.0 * px(x, y + 1) + px(x + 1, y + 1)
                - px(x - 1, y - 1)
                - 2.0 * px(x, y - 1)
                - px(x + 1, y - 1);
            mag[y as usize * w + x as usize] = (gx * gx + gy * gy).sqrt();
        }
    }
    let max = mag.iter().copied().fold(0f32, f32::max).max(1e-6);
    let data = mag.iter().map(|&m| 255 - (m / max * 255.0).round() as u8).collect();
    Raster::from_vec(w, h, data).expect("same dims")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_is_white() {
        let bg = make_background(BackgroundKind::White, 16, 9, 3, None).unwrap();
        assert!(bg.image.data().iter().all(|&v| v == 255));
    }

    #[test]
    fn texture_is_deterministic_and_within_stretch() {
        let a = make_background(BackgroundKind::Texture, 64, 48, 11, None).unwrap();
        let b = make_background(BackgroundKind::Texture, 64, 48, 11, None).unwrap();
        assert_eq!(a.image, b.image);
        let lo = a.stretch_lo.unwrap();
        let (min, max) = a.image.min_max();
        assert!(min >= lo);
        let _ = max;
        assert_eq!(min, lo);
        assert_ne!(a.image, make_background(BackgroundKind::Texture, 64, 48, 12, None).unwrap().image);
    }

    #[test]
    fn natural_requires_assets() {
        let dir = tempfile::tempdir().unwrap();
        let err = make_background(BackgroundKind::Natural, 8, 8, 0, Some(dir.path())).unwrap_err();
        assert!(matches!(err, SynthError::NoAssets(_)));
        assert!(err.to_string().contains("texture"));
    }

    #[test]
    fn natural_crops_and_resamples_assets() {
        let dir = tempfile::tempdir().unwrap();
        let src = Raster::from_vec(40, 30, (0..1200).map(|i| (i % 251) as u8).collect()).unwrap();
        crate::raster::io::write_pgm(&dir.path().join("a.pgm"), &src).unwrap();
        let bg = make_background(BackgroundKind::Natural, 20, 10, 5, Some(dir.path())).unwrap();
        assert_eq!((bg.image.width(), bg.image.height()), (20, 10));
    }
}

use super::{Raster, RasterError};

/// Upper bound accepted by [`rotate`].
pub const MAX_ROTATION_DEGREES: f64 = 45.0;

/// Separable Gaussian blur, kernel half-width `ceil(3 sigma)`, clamp-to-edge.
pub fn gaussian_blur(img: &Raster, sigma: f64) -> Raster {
    if sigma <= 0.0 {
        return img.clone();
    }
    let plane: Vec<f32> = img.data().iter().map(|&v| v as f32).collect();
    let out = blur_plane(&plane, img.width(), img.height(), sigma);
    Raster::from_vec(img.width(), img.height(), out.iter().map(|&v| to_u8(v)).collect())
        .expect("blur keeps dimensions")
}

pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let half = (3.0 * sigma).ceil() as i64;
    let weights: Vec<f64> = (-half..=half)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| (w / total) as f32).collect()
}

/// Float-domain blur backing [`gaussian_blur`].
pub(crate) fn blur_plane(src: &[f32], w: usize, h: usize, sigma: f64) -> Vec<f32> {
    let k = gaussian_kernel(sigma);
    let half = (k.len() / 2) as i64;
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let mut tmp = vec![0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0f32;
            for (j, kv) in k.iter().enumerate() {
                acc += kv * src[y * w + clamp(x as i64 + j as i64 - half, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0f32;
            for (j, kv) in k.iter().enumerate() {
                acc += kv * tmp[clamp(y as i64 + j as i64 - half, h) * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

#[inline]
fn to_u8(v: f32) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Maps a source point to its position after [`rotate`] by `degrees`
/// (positive is counter-clockwise on screen) about the image center.
pub fn rotate_point(x: f64, y: f64, width: usize, height: usize, degrees: f64) -> (f64, f64) {
    let (cx, cy) = center(width, height);
    let (s, c) = degrees.to_radians().sin_cos();
    let (dx, dy) = (x - cx, y - cy);
    (cx + dx * c + dy * s, cy - dx * s + dy * c)
}

fn center(width: usize, height: usize) -> (f64, f64) {
    ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0)
}

/// Small rotation about the image center with bilinear sampling; samples
/// falling outside the source take `fill`.
pub fn rotate(img: &Raster, degrees: f64, fill: u8) -> Result<Raster, RasterError> {
    if !(degrees.abs() <= MAX_ROTATION_DEGREES) {
        return Err(RasterError::RotationTooLarge(degrees));
    }
    Ok(rotate_any(img, degrees, fill))
}

/// Same as [`rotate`] without the small-angle limit.
pub(crate) fn rotate_any(img: &Raster, degrees: f64, fill: u8) -> Raster {
    if degrees == 0.0 {
        return img.clone();
    }
    let (w, h) = (img.width(), img.height());
    let (cx, cy) = center(w, h);
    let (s, c) = degrees.to_radians().sin_cos();
    let mut out = Raster::new(w, h, fill);
    let sample = |x: i64, y: i64| -> f64 {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            fill as f64
        } else {
            img.get(x as usize, y as usize) as f64
        }
    };
    for oy in 0..h {
        for ox in 0..w {
            let (dx, dy) = (ox as f64 - cx, oy as f64 - cy);
            let sx = cx + dx * c - dy * s;
            let sy = cy + dx * s + dy * c;
            let (fx, fy) = (sx.floor(), sy.floor());
            let (ax, ay) = (sx - fx, sy - fy);
            let (ix, iy) = (fx as i64, fy as i64);
            if ix < -1 || iy < -1 || ix > w as i64 || iy > h as i64 {
                continue;
            }
            let v = sample(ix, iy) * (1.0 - ax) * (1.0 - ay)
                + sample(ix + 1, iy) * ax * (1.0 - ay)
                + sample(ix, iy + 1) * (1.0 - ax) * ay
                + sample(ix + 1, iy + 1) * ax * ay;
            out.set(ox, oy, v.round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}

/// Bilinear resampling with pixel-center alignment.
pub fn resample(img: &Raster, new_w: usize, new_h: usize) -> Raster {
    assert!(new_w >= 1 && new_h >= 1, "resample target must be at least 1x1");
    let (w, h) = (img.width(), img.height());
    if (w, h) == (new_w, new_h) {
        return img.clone();
    }
    let coord = |o: usize, src: usize, dst: usize| -> (usize, usize, f64) {
        let p = ((o as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, src as f64 - 1.0);
        let i0 = p.floor() as usize;
        (i0, (i0 + 1).min(src - 1), p - i0 as f64)
    };
    let xs: Vec<_> = (0..new_w).map(|x| coord(x, w, new_w)).collect();
    let mut out = Raster::new(new_w, new_h, 0);
    for oy in 0..new_h {
        let (y0, y1, ay) = coord(oy, h, new_h);
        for (ox, &(x0, x1, ax)) in xs.iter().enumerate() {
            let top = img.get(x0, y0) as f64 * (1.0 - ax) + img.get(x1, y0) as f64 * ax;
            let bot = img.get(x0, y1) as f64 * (1.0 - ax) + img.get(x1, y1) as f64 * ax;
            out.set(ox, oy, (top * (1.0 - ay) + bot * ay).round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}

/// Affine map of `[min, max]` onto `[lo, hi]`; constant images map to `lo`.
pub fn stretch_range(img: &Raster, lo: u8, hi: u8) -> Result<Raster, RasterError> {
    if lo >= hi {
        return Err(RasterError::InvalidRange { lo, hi });
    }
    let (min, max) = img.min_max();
    let data = if min == max {
        vec![lo; img.data().len()]
    } else {
        let scale = (hi - lo) as f64 / (max - min) as f64;
        img.data()
            .iter()
            .map(|&v| (lo as f64 + (v - min) as f64 * scale).round() as u8)
            .collect()
    };
    Ok(Raster::from_vec(img.width(), img.height(), data).expect("same dimensions"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(w: usize, h: usize) -> Raster {
        let data = (0..w * h).map(|i| ((i * 37) % 256) as u8).collect();
        Raster::from_vec(w, h, data).unwrap()
    }

    #[test]
    fn blur_identity_and_flat_field() {
        let img = ramp(9, 7);
        assert_eq!(gaussian_blur(&img, 0.0), img);
        let flat = Raster::new(20, 11, 173);
        for sigma in [0.5, 1.0, 2.7, 6.0] {
            assert_eq!(gaussian_blur(&flat, sigma), flat);
        }
    }

    /// Dense 2-D convolution with clamp-to-edge indexing, in f64.
    fn dense_blur(src: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
        let half = (3.0 * sigma).ceil() as i64;
        let g = |i: i64| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp();
        let norm: f64 = (-half..=half).map(g).sum::<f64>().powi(2);
        let mut out = vec![0.0; w * h];
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let mut acc = 0.0;
                for ky in -half..=half {
                    for kx in -half..=half {
                        let sx = (x + kx).clamp(0, w as i64 - 1) as usize;
                        let sy = (y + ky).clamp(0, h as i64 - 1) as usize;
                        acc += g(kx) * g(ky) * src[sy * w + sx];
                    }
                }
                out[(y as usize) * w + x as usize] = acc / norm;
            }
        }
        out
    }

    #[test]
    fn impulse_response_is_normalized() {
        let (w, h) = (41, 41);
        let mut img = Raster::new(w, h, 0);
        img.set(20, 20, 255);
        for sigma in [0.8, 1.5, 3.0] {
            let plane: Vec<f32> = img.data().iter().map(|&v| v as f32).collect();
            let blurred = blur_plane(&plane, w, h, sigma);
            let sum: f64 = blurred.iter().map(|&v| v as f64).sum();
            assert!((sum - 255.0).abs() <= 1.0, "sigma {sigma}: sum {sum}");
            let oracle = dense_blur(&plane.iter().map(|&v| v as f64).collect::<Vec<_>>(), w, h, sigma);
            let out = gaussian_blur(&img, sigma);
            for (o, e) in out.data().iter().zip(&oracle) {
                assert!((*o as f64 - e).abs() <= 0.5 + 1e-3);
            }
        }
    }

    #[test]
    fn rotate_identity_and_limit() {
        let img = ramp(12, 10);
        assert_eq!(rotate(&img, 0.0, 255).unwrap(), img);
        assert!(matches!(rotate(&img, 45.5, 255), Err(RasterError::RotationTooLarge(_))));
        assert!(rotate(&img, -45.0, 255).is_ok());
    }

    #[test]
    fn rotate_flat_field_round_trip() {
        let flat = Raster::new(30, 30, 90);
        let there = rotate(&flat, 7.0, 90).unwrap();
        assert_eq!(rotate(&there, -7.0, 90).unwrap(), flat);
    }

    #[test]
    fn rotate_quarter_turn_moves_pixel() {
        let n = 21;
        let mut img = Raster::new(n, n, 255);
        let (px, py) = (15usize, 6usize);
        img.set(px, py, 0);
        let out = rotate_any(&img, 90.0, 255);
        let (ex, ey) = rotate_point(px as f64, py as f64, n, n, 90.0);
        // ink centroid of the rotated image
        let (mut sx, mut sy, mut mass) = (0.0, 0.0, 0.0);
        for y in 0..n {
            for x in 0..n {
                let ink = 255.0 - out.get(x, y) as f64;
                sx += ink * x as f64;
                sy += ink * y as f64;
                mass += ink;
            }
        }
        assert!(mass > 0.0);
        assert!((sx / mass - ex).abs() <= 1.0 && (sy / mass - ey).abs() <= 1.0);
        // counter-clockwise: a pixel right of center moves above it
        assert!(ey < (n as f64 - 1.0) / 2.0);
    }

    #[test]
    fn resample_cases() {
        let img = ramp(7, 5);
        assert_eq!(resample(&img, 7, 5), img);
        let flat = Raster::new(13, 9, 42);
        assert_eq!(resample(&flat, 5, 31), Raster::new(5, 31, 42));
        let two = Raster::from_vec(2, 1, vec![0, 255]).unwrap();
        let up = resample(&two, 4, 1);
        assert_eq!(up.data(), &[0, 64, 191, 255]);
        assert!(up.data().windows(2).all(|p| p[0] <= p[1]));
    }

    #[test]
    fn stretch_cases() {
        let img = Raster::from_vec(3, 1, vec![64, 100, 192]).unwrap();
        assert_eq!(stretch_range(&img, 64, 192).unwrap(), img);
        let flat = Raster::new(4, 4, 77);
        assert_eq!(stretch_range(&flat, 10, 20).unwrap(), Raster::new(4, 4, 10));
        let bw = Raster::from_vec(2, 1, vec![0, 255]).unwrap();
        assert_eq!(stretch_range(&bw, 64, 192).unwrap().data(), &[64, 192]);
        assert!(matches!(stretch_range(&bw, 5, 5), Err(RasterError::InvalidRange { .. })));
    }

    proptest! {
        #[test]
        fn constant_images_survive_filters(v in 0u8..=255, w in 1usize..24, h in 1usize..24,
                                           nw in 1usize..40, nh in 1usize..40, sigma in 0.0f64..4.0) {
            let flat = Raster::new(w, h, v);
            let blurred = gaussian_blur(&flat, sigma);
            prop_assert!(blurred.data().iter().all(|&p| p.abs_diff(v) <= 1));
            let res = resample(&flat, nw, nh);
            prop_assert!(res.data().iter().all(|&p| p.abs_diff(v) <= 1));
        }

        #[test]
        fn filters_are_pure(seed in 0u64..1000) {
            let img = Raster::from_vec(16, 12, (0..192).map(|i| ((i as u64 * 31 + seed) % 256) as u8).collect()).unwrap();
            prop_assert_eq!(gaussian_blur(&img, 1.3), gaussian_blur(&img, 1.3));
            prop_assert_eq!(rotate(&img, 3.0, 255).unwrap(), rotate(&img, 3.0, 255).unwrap());
        }
    }
}

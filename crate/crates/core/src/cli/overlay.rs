use crate::detector::Heatmap;
use crate::mask::{apply_mask, MaskConfig, MaskError};
use crate::raster::{BinaryMap, Raster};

/// Gray level of the one-pixel separator columns.
pub const SEPARATOR: u8 = 128;

/// Original | heatmap intensity | masked page, separated by single gray
/// columns: `3 * width + 2` pixels wide.
pub fn render_overlay(page: &Raster, heatmap: &Heatmap, mask: &BinaryMap, fill: u8) -> Result<Raster, MaskError> {
    let (w, h) = (page.width(), page.height());
    for (mw, mh) in [(heatmap.width(), heatmap.height()), (mask.width(), mask.height())] {
        if (mw, mh) != (w, h) {
            return Err(MaskError::Dimensions(w, h, mw, mh));
        }
    }
    let cfg = MaskConfig {
        fill,
        ..MaskConfig::default()
    };
    let masked = apply_mask(page, mask, &cfg)?;
    let heat = heatmap.to_raster();
    let mut out = Raster::new(3 * w + 2, h, SEPARATOR);
    for (k, panel) in [page, &heat, &masked].into_iter().enumerate() {
        let x0 = k * (w + 1);
        for y in 0..h {
            for x in 0..w {
                out.set(x0 + x, y, panel.get(x, y));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn page() -> Raster {
        let mut p = Raster::new(7, 5, 255);
        p.set(2, 2, 10);
        p.set(5, 1, 90);
        p
    }

    #[test]
    fn layout_width() {
        let o = render_overlay(&page(), &Heatmap::filled(7, 5, 0.3), &BinaryMap::ones(7, 5), 255).unwrap();
        assert_eq!((o.width(), o.height()), (23, 5));
        assert!((0..5).all(|y| o.get(7, y) == SEPARATOR && o.get(15, y) == SEPARATOR));
    }

    #[test]
    fn zero_heatmap_gives_black_middle_and_uniform_right() {
        let o = render_overlay(&page(), &Heatmap::filled(7, 5, 0.0), &BinaryMap::zeros(7, 5), 200).unwrap();
        for y in 0..5 {
            for x in 0..7 {
                assert_eq!(o.get(8 + x, y), 0);
                assert_eq!(o.get(16 + x, y), 200);
                assert_eq!(o.get(x, y), page().get(x, y));
            }
        }
    }

    #[test]
    fn deterministic() {
        let hm = Heatmap::new(7, 5, (0..35).map(|i| i as f32 / 34.0).collect()).unwrap();
        let a = render_overlay(&page(), &hm, &BinaryMap::ones(7, 5), 255).unwrap();
        let b = render_overlay(&page(), &hm, &BinaryMap::ones(7, 5), 255).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn size_mismatch() {
        assert!(render_overlay(&page(), &Heatmap::filled(6, 5, 0.0), &BinaryMap::zeros(7, 5), 255).is_err());
    }
}

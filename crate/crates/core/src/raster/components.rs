use super::{BinaryMap, Rect};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub bbox: Rect,
    pub pixel_count: usize,
}

/// Labels foreground regions; output is sorted by `(y0, x0)`.
pub fn connected_components(map: &BinaryMap, connectivity: Connectivity) -> Vec<Component> {
    let (w, h) = (map.width(), map.height());
    let data = map.data();
    let mut seen = vec![false; w * h];
    let mut stack = Vec::new();
    let mut out = Vec::new();

    for start in 0..w * h {
        if data[start] == 0 || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        let mut count = 0;
        while let Some(idx) = stack.pop() {
            let (x, y) = (idx % w, idx / w);
            count += 1;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x + 1);
            y1 = y1.max(y + 1);
            let mut visit = |nx: usize, ny: usize| {
                let n = ny * w + nx;
                if data[n] != 0 && !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            };
            let (has_l, has_r, has_u, has_d) = (x > 0, x + 1 < w, y > 0, y + 1 < h);
            if has_l {
                visit(x - 1, y);
            }
            if has_r {
                visit(x + 1, y);
            }
            if has_u {
                visit(x, y - 1);
            }
            if has_d {
                visit(x, y + 1);
            }
            if connectivity == Connectivity::Eight {
                if has_l && has_u {
                    visit(x - 1, y - 1);
                }
                if has_r && has_u {
                    visit(x + 1, y - 1);
                }
                if has_l && has_d {
                    visit(x - 1, y + 1);
                }
                if has_r && has_d {
                    visit(x + 1, y + 1);
                }
            }
        }
        out.push(Component {
            bbox: Rect::new(x0 as i32, y0 as i32, x1 as i32, y1 as i32)
                .expect("component box is non-empty"),
            pixel_count: count,
        });
    }
    out.sort_by_key(|c| (c.bbox.y0(), c.bbox.x0(), c.bbox.y1(), c.bbox.x1()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_map_has_no_components() {
        assert!(connected_components(&BinaryMap::zeros(8, 8), Connectivity::Eight).is_empty());
    }

    #[test]
    fn single_block() {
        let mut m = BinaryMap::zeros(8, 8);
        m.fill_rect(&Rect::new(2, 2, 5, 5).unwrap());
        let cc = connected_components(&m, Connectivity::Four);
        assert_eq!(
            cc,
            vec![Component {
                bbox: Rect::new(2, 2, 5, 5).unwrap(),
                pixel_count: 9
            }]
        );
    }

    #[test]
    fn diagonal_touch_depends_on_connectivity() {
        let mut m = BinaryMap::zeros(6, 6);
        m.fill_rect(&Rect::new(0, 0, 2, 2).unwrap());
        m.fill_rect(&Rect::new(2, 2, 4, 4).unwrap());
        assert_eq!(connected_components(&m, Connectivity::Eight).len(), 1);
        assert_eq!(connected_components(&m, Connectivity::Four).len(), 2);
    }

    proptest! {
        #[test]
        fn pixel_counts_partition_foreground(bits in proptest::collection::vec(0u8..2, 12 * 9)) {
            let m = BinaryMap::from_vec(12, 9, bits).unwrap();
            for conn in [Connectivity::Four, Connectivity::Eight] {
                let cc = connected_components(&m, conn);
                prop_assert_eq!(cc.iter().map(|c| c.pixel_count).sum::<usize>(), m.count_ones());
                for c in &cc {
                    // tight: every edge row and column holds a foreground pixel
                    let b = c.bbox;
                    let row_hit = |y: i32| (b.x0()..b.x1()).any(|x| m.get(x as usize, y as usize));
                    let col_hit = |x: i32| (b.y0()..b.y1()).any(|y| m.get(x as usize, y as usize));
                    prop_assert!(row_hit(b.y0()) && row_hit(b.y1() - 1));
                    prop_assert!(col_hit(b.x0()) && col_hit(b.x1() - 1));
                }
                prop_assert!(cc.windows(2).all(|p| (p[0].bbox.y0(), p[0].bbox.x0()) <= (p[1].bbox.y0(), p[1].bbox.x0())));
            }
        }
    }
}

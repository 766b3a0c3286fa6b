use super::BinaryMap;

/// Square (Chebyshev) dilation, done as two separable running-window passes.
pub fn dilate(map: &BinaryMap, radius: usize) -> BinaryMap {
    if radius == 0 {
        return map.clone();
    }
    let (w, h) = (map.width(), map.height());
    let horiz = pass(map.data(), w, h, radius, true);
    let out = pass(&horiz, w, h, radius, false);
    BinaryMap::from_vec(w, h, out).expect("dilation keeps dimensions")
}

fn pass(src: &[u8], w: usize, h: usize, radius: usize, along_rows: bool) -> Vec<u8> {
    let (lines, len) = if along_rows { (h, w) } else { (w, h) };
    let at = |line: usize, i: usize| if along_rows { line * w + i } else { i * w + line };
    let mut out = vec![0u8; w * h];
    let mut prefix = vec![0u32; len + 1];
    for line in 0..lines {
        for i in 0..len {
            prefix[i + 1] = prefix[i] + u32::from(src[at(line, i)]);
        }
        for i in 0..len {
            let lo = i.saturating_sub(radius);
            let hi = (i + radius + 1).min(len);
            out[at(line, i)] = u8::from(prefix[hi] > prefix[lo]);
        }
    }
    out
}

//! Per-sample layer kernels on `[channels, height, width]` buffers.

use super::real::{gemm, Mat, Real};

/// Unfolds 3x3 zero-padded neighbourhoods into `[c * 9, h * w]`.
pub(crate) fn im2col3<T: Real>(input: &[T], c: usize, h: usize, w: usize, cols: &mut Vec<T>) {
    let hw = h * w;
    cols.clear();
    cols.resize(c * 9 * hw, T::ZERO);
    for ch in 0..c {
        let plane = &input[ch * hw..(ch + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((ch * 9) + ky * 3 + kx) * hw..][..hw];
                let (dy, dx) = (ky as isize - 1, kx as isize - 1);
                let x_lo = (-dx).max(0) as usize;
                let x_hi = (w as isize - dx).min(w as isize) as usize;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize || x_lo >= x_hi {
                        continue;
                    }
                    let src = &plane[sy as usize * w..][..w];
                    let dst = &mut row[y * w..][..w];
                    for x in x_lo..x_hi {
                        dst[x] = src[(x as isize + dx) as usize];
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col3`]: folds `[c * 9, h * w]` back, summing overlaps.
pub(crate) fn col2im3<T: Real>(cols: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let hw = h * w;
    let mut out = vec![T::ZERO; c * hw];
    for ch in 0..c {
        let plane = &mut out[ch * hw..(ch + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((ch * 9) + ky * 3 + kx) * hw..][..hw];
                let (dy, dx) = (ky as isize - 1, kx as isize - 1);
                let x_lo = (-dx).max(0) as usize;
                let x_hi = (w as isize - dx).min(w as isize) as usize;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize || x_lo >= x_hi {
                        continue;
                    }
                    let src = &row[y * w..][..w];
                    let dst = &mut plane[sy as usize * w..][..w];
                    for x in x_lo..x_hi {
                        dst[(x as isize + dx) as usize] += src[x];
                    }
                }
            }
        }
    }
    out
}

/// Same-padded 3x3 convolution followed by ReLU.
/// `weight` is `[c_out, c_in, 3, 3]`.
pub(crate) fn conv3_relu<T: Real>(
    input: &[T],
    c_in: usize,
    h: usize,
    w: usize,
    weight: &[T],
    bias: &[T],
    cols: &mut Vec<T>,
) -> Vec<T> {
    let c_out = bias.len();
    let hw = h * w;
    im2col3(input, c_in, h, w, cols);
    let mut out = vec![T::ZERO; c_out * hw];
    for (o, b) in bias.iter().enumerate() {
        out[o * hw..(o + 1) * hw].iter_mut().for_each(|v| *v = *b);
    }
    gemm(Mat::new(weight, c_out, c_in * 9), Mat::new(cols, c_in * 9, hw), T::ONE, &mut out);
    for v in &mut out {
        if *v < T::ZERO {
            *v = T::ZERO;
        }
    }
    out
}

/// Backward of [`conv3_relu`]. `output` is the post-ReLU activation and
/// `dout` is modified in place to the pre-ReLU gradient. Returns the input
/// gradient when `want_input` is set.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv3_relu_backward<T: Real>(
    input: &[T],
    c_in: usize,
    h: usize,
    w: usize,
    weight: &[T],
    output: &[T],
    dout: &mut [T],
    dweight: &mut [T],
    dbias: &mut [T],
    want_input: bool,
    cols: &mut Vec<T>,
) -> Option<Vec<T>> {
    let c_out = dbias.len();
    let hw = h * w;
    for (g, &y) in dout.iter_mut().zip(output) {
        if y <= T::ZERO {
            *g = T::ZERO;
        }
    }
    for (o, db) in dbias.iter_mut().enumerate() {
        let mut s = T::ZERO;
        for &g in &dout[o * hw..(o + 1) * hw] {
            s += g;
        }
        *db += s;
    }
    im2col3(input, c_in, h, w, cols);
    gemm(Mat::new(dout, c_out, hw), Mat::new(cols, c_in * 9, hw).t(), T::ONE, dweight);
    if !want_input {
        return None;
    }
    gemm(Mat::new(weight, c_out, c_in * 9).t(), Mat::new(dout, c_out, hw), T::ZERO, cols);
    Some(col2im3(cols, c_in, h, w))
}

/// 2x2 max pool; returns the pooled map and, per output, which of the four inputs won.
pub(crate) fn maxpool2<T: Real>(input: &[T], c: usize, h: usize, w: usize) -> (Vec<T>, Vec<u8>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let p = &input[ch * h * w..];
        for y in 0..oh {
            for x in 0..ow {
                let i = (2 * y) * w + 2 * x;
                let cand = [p[i], p[i + 1], p[i + w], p[i + w + 1]];
                let mut best = 0;
                for k in 1..4 {
                    if cand[k] > cand[best] {
                        best = k;
                    }
                }
                out.push(cand[best]);
                arg.push(best as u8);
            }
        }
    }
    (out, arg)
}

pub(crate) fn maxpool2_backward<T: Real>(dout: &[T], arg: &[u8], c: usize, h: usize, w: usize) -> Vec<T> {
    let (oh, ow) = (h / 2, w / 2);
    let mut din = vec![T::ZERO; c * h * w];
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let o = ch * oh * ow + y * ow + x;
                let k = arg[o] as usize;
                let i = ch * h * w + (2 * y + k / 2) * w + 2 * x + k % 2;
                din[i] = dout[o];
            }
        }
    }
    din
}

/// 2x2 stride-2 transposed convolution, `weight` is `[c_in, c_out, 2, 2]`.
/// Output is `[c_out, 2h, 2w]`.
pub(crate) fn upconv2<T: Real>(input: &[T], c_in: usize, h: usize, w: usize, weight: &[T], bias: &[T]) -> Vec<T> {
    let c_out = bias.len();
    let hw = h * w;
    let mut y = vec![T::ZERO; c_out * 4 * hw];
    gemm(Mat::new(weight, c_in, c_out * 4).t(), Mat::new(input, c_in, hw), T::ZERO, &mut y);
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![T::ZERO; c_out * oh * ow];
    for o in 0..c_out {
        for k in 0..4 {
            let (dy, dx) = (k / 2, k % 2);
            let src = &y[(o * 4 + k) * hw..][..hw];
            for yy in 0..h {
                let dst = &mut out[o * oh * ow + (2 * yy + dy) * ow..][..ow];
                for xx in 0..w {
                    dst[2 * xx + dx] = src[yy * w + xx] + bias[o];
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn upconv2_backward<T: Real>(
    input: &[T],
    c_in: usize,
    h: usize,
    w: usize,
    weight: &[T],
    dout: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
) -> Vec<T> {
    let c_out = dbias.len();
    let hw = h * w;
    let (oh, ow) = (2 * h, 2 * w);
    let mut dy = vec![T::ZERO; c_out * 4 * hw];
    for o in 0..c_out {
        let plane = &dout[o * oh * ow..][..oh * ow];
        let mut s = T::ZERO;
        for &g in plane {
            s += g;
        }
        dbias[o] += s;
        for k in 0..4 {
            let (ky, kx) = (k / 2, k % 2);
            let dst = &mut dy[(o * 4 + k) * hw..][..hw];
            for yy in 0..h {
                for xx in 0..w {
                    dst[yy * w + xx] = plane[(2 * yy + ky) * ow + 2 * xx + kx];
                }
            }
        }
    }
    gemm(Mat::new(input, c_in, hw), Mat::new(&dy, c_out * 4, hw).t(), T::ONE, dweight);
    let mut din = vec![T::ZERO; c_in * hw];
    gemm(Mat::new(weight, c_in, c_out * 4), Mat::new(&dy, c_out * 4, hw), T::ZERO, &mut din);
    din
}

/// Pointwise convolution producing logits, `weight` is `[c_out, c_in]`.
pub(crate) fn conv1<T: Real>(input: &[T], c_in: usize, hw: usize, weight: &[T], bias: &[T]) -> Vec<T> {
    let c_out = bias.len();
    let mut out = vec![T::ZERO; c_out * hw];
    for (o, b) in bias.iter().enumerate() {
        out[o * hw..(o + 1) * hw].iter_mut().for_each(|v| *v = *b);
    }
    gemm(Mat::new(weight, c_out, c_in), Mat::new(input, c_in, hw), T::ONE, &mut out);
    out
}

pub(crate) fn conv1_backward<T: Real>(
    input: &[T],
    c_in: usize,
    hw: usize,
    weight: &[T],
    dout: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
) -> Vec<T> {
    let c_out = dbias.len();
    for (o, db) in dbias.iter_mut().enumerate() {
        let mut s = T::ZERO;
        for &g in &dout[o * hw..(o + 1) * hw] {
            s += g;
        }
        *db += s;
    }
    gemm(Mat::new(dout, c_out, hw), Mat::new(input, c_in, hw).t(), T::ONE, dweight);
    let mut din = vec![T::ZERO; c_in * hw];
    gemm(Mat::new(weight, c_out, c_in).t(), Mat::new(dout, c_out, hw), T::ZERO, &mut din);
    din
}

#[inline]
pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::ZERO {
        T::ONE / (T::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::ONE + e)
    }
}

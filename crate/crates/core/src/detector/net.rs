//! U-Net forward and backward passes over a flat parameter vector.

use serde::{Deserialize, Serialize};

use super::layers::*;
use super::real::Real;
use super::{DetectorError, UNetConfig};

/// Name, shape and position of one parameter tensor in the flat vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Number of inputs feeding each output unit, for initialization.
    pub fn fan_in(&self) -> usize {
        match self.shape.as_slice() {
            // transposed conv [c_in, c_out, 2, 2]: each output pixel sees c_in inputs
            [c_in, _, 2, 2] if self.name.ends_with("up.weight") => *c_in,
            [_, rest @ ..] => rest.iter().product(),
            _ => 1,
        }
    }
}

/// Parameter layout implied by a config, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub specs: Vec<ParamSpec>,
    pub total: usize,
}

impl Layout {
    pub fn new(cfg: &UNetConfig) -> Self {
        let mut specs = Vec::new();
        let mut total = 0;
        let mut push = |name: String, shape: Vec<usize>| {
            let len: usize = shape.iter().product();
            specs.push(ParamSpec {
                name,
                shape,
                offset: total,
            });
            total += len;
        };
        let ch = &cfg.encoder_channels;
        let mut c_prev = cfg.input_channels;
        for (l, &c) in ch.iter().enumerate() {
            for k in 0..cfg.convs_per_level {
                let c_in = if k == 0 { c_prev } else { c };
                push(format!("enc{l}.conv{k}.weight"), vec![c, c_in, 3, 3]);
                push(format!("enc{l}.conv{k}.bias"), vec![c]);
            }
            c_prev = c;
        }
        for l in (0..ch.len() - 1).rev() {
            push(format!("dec{l}.up.weight"), vec![ch[l + 1], ch[l], 2, 2]);
            push(format!("dec{l}.up.bias"), vec![ch[l]]);
            for k in 0..cfg.convs_per_level {
                let c_in = if k == 0 { 2 * ch[l] } else { ch[l] };
                push(format!("dec{l}.conv{k}.weight"), vec![ch[l], c_in, 3, 3]);
                push(format!("dec{l}.conv{k}.bias"), vec![ch[l]]);
            }
        }
        push("head.weight".into(), vec![cfg.output_channels, ch[0], 1, 1]);
        push("head.bias".into(), vec![cfg.output_channels]);
        Self { specs, total }
    }

    pub fn find(&self, name: &str) -> Option<&ParamSpec> {
        self.specs.iter().find(|s| s.name == name)
    }
}

/// Cursor handing out parameter slices in layout order.
struct Params<'a, T> {
    data: &'a [T],
    specs: std::slice::Iter<'a, ParamSpec>,
}

impl<'a, T> Params<'a, T> {
    fn next(&mut self) -> &'a [T] {
        let s = self.specs.next().expect("layout exhausted");
        &self.data[s.offset..s.offset + s.len()]
    }
}

struct ConvRec<T> {
    input: Vec<T>,
    c_in: usize,
    output: Vec<T>,
}

struct LevelRec<T> {
    h: usize,
    w: usize,
    pool_arg: Option<Vec<u8>>,
    convs: Vec<ConvRec<T>>,
}

struct DecRec<T> {
    h: usize,
    w: usize,
    up_input: Vec<T>,
    convs: Vec<ConvRec<T>>,
}

/// Activations kept for the backward pass of a single sample.
pub(crate) struct Tape<T> {
    enc: Vec<LevelRec<T>>,
    dec: Vec<DecRec<T>>,
    head_input: Vec<T>,
    pub probs: Vec<T>,
}

pub(crate) struct Net<'a> {
    pub cfg: &'a UNetConfig,
    pub layout: &'a Layout,
}

impl Net<'_> {
    /// Forward pass of one `[input_channels, h, w]` sample. Returns output
    /// probabilities and, if `keep`, the tape for [`Net::backward`].
    pub fn forward<T: Real>(&self, params: &[T], input: &[T], h: usize, w: usize, keep: bool) -> (Vec<T>, Option<Tape<T>>) {
        let cfg = self.cfg;
        let ch = &cfg.encoder_channels;
        let mut p = Params {
            data: params,
            specs: self.layout.specs.iter(),
        };
        let mut cols = Vec::new();
        let mut x = input.to_vec();
        let mut c_cur = cfg.input_channels;
        let (mut hh, mut ww) = (h, w);
        let mut skips: Vec<Vec<T>> = Vec::new();
        let mut enc = Vec::new();
        for (l, &c) in ch.iter().enumerate() {
            let mut pool_arg = None;
            if l > 0 {
                let (pooled, arg) = maxpool2(&x, c_cur, hh, ww);
                x = pooled;
                hh /= 2;
                ww /= 2;
                pool_arg = Some(arg);
            }
            let mut convs = Vec::new();
            for _ in 0..cfg.convs_per_level {
                let (wt, b) = (p.next(), p.next());
                let y = conv3_relu(&x, c_cur, hh, ww, wt, b, &mut cols);
                let prev = std::mem::replace(&mut x, y);
                if keep {
                    convs.push(ConvRec {
                        input: prev,
                        c_in: c_cur,
                        output: x.clone(),
                    });
                }
                c_cur = c;
            }
            if l + 1 < ch.len() {
                skips.push(x.clone());
            }
            enc.push(LevelRec {
                h: hh,
                w: ww,
                pool_arg,
                convs,
            });
        }
        let mut dec = Vec::new();
        for l in (0..ch.len() - 1).rev() {
            let (wt, b) = (p.next(), p.next());
            let up = upconv2(&x, c_cur, hh, ww, wt, b);
            let up_input = std::mem::replace(&mut x, up);
            hh *= 2;
            ww *= 2;
            let skip = skips.pop().expect("one skip per level");
            x.extend_from_slice(&skip);
            c_cur = 2 * ch[l];
            let mut convs = Vec::new();
            for _ in 0..cfg.convs_per_level {
                let (wt, b) = (p.next(), p.next());
                let y = conv3_relu(&x, c_cur, hh, ww, wt, b, &mut cols);
                let prev = std::mem::replace(&mut x, y);
                if keep {
                    convs.push(ConvRec {
                        input: prev,
                        c_in: c_cur,
                        output: x.clone(),
                    });
                }
                c_cur = ch[l];
            }
            dec.push(DecRec {
                h: hh,
                w: ww,
                up_input: if keep { up_input } else { Vec::new() },
                convs,
            });
        }
        let (wt, b) = (p.next(), p.next());
        let mut probs = conv1(&x, c_cur, hh * ww, wt, b);
        probs.iter_mut().for_each(|v| *v = sigmoid(*v));
        let tape = keep.then(|| Tape {
            enc,
            dec,
            head_input: x,
            probs: probs.clone(),
        });
        (probs, tape)
    }

    /// Accumulates parameter gradients into `grad` given dLoss/dProbs.
    pub fn backward<T: Real>(&self, params: &[T], tape: Tape<T>, dprobs: &[T], grad: &mut [T]) {
        let ch = &self.cfg.encoder_channels;
        let specs = &self.layout.specs;
        // parameters are consumed in reverse layout order, two at a time
        let mut idx = specs.len();
        let mut next = || {
            idx -= 2;
            let (ws, bs) = (&specs[idx], &specs[idx + 1]);
            (ws.offset..ws.offset + ws.len(), bs.offset..bs.offset + bs.len())
        };
        let Tape {
            mut enc,
            mut dec,
            head_input,
            probs,
        } = tape;

        let (hh, ww) = dec.last().map_or((enc[0].h, enc[0].w), |d| (d.h, d.w));
        let dlogits: Vec<T> = dprobs.iter().zip(&probs).map(|(&g, &p)| g * p * (T::ONE - p)).collect();
        let (wr, br) = next();
        let (gw, gb) = split2(grad, wr.clone(), br);
        let mut dx = conv1_backward(&head_input, ch[0], hh * ww, &params[wr], &dlogits, gw, gb);

        let mut cols = Vec::new();
        let mut skip_grads: Vec<Vec<T>> = Vec::new();
        // decoder records were pushed deepest first, so popping walks shallowest first
        for l in 0..ch.len() - 1 {
            let d = dec.pop().expect("decoder record");
            for conv in d.convs.into_iter().rev() {
                let (wr, br) = next();
                let (gw, gb) = split2(grad, wr.clone(), br);
                dx = conv3_relu_backward(
                    &conv.input,
                    conv.c_in,
                    d.h,
                    d.w,
                    &params[wr],
                    &conv.output,
                    &mut dx,
                    gw,
                    gb,
                    true,
                    &mut cols,
                )
                .expect("input gradient requested");
            }
            // concat order is [upsampled, skip]
            skip_grads.push(dx.split_off(ch[l] * d.h * d.w));
            let (wr, br) = next();
            let (gw, gb) = split2(grad, wr.clone(), br);
            dx = upconv2_backward(&d.up_input, ch[l + 1], d.h / 2, d.w / 2, &params[wr], &dx, gw, gb);
        }
        for l in (0..ch.len()).rev() {
            let lv = enc.pop().expect("encoder record");
            if l + 1 < ch.len() {
                let sg = skip_grads.pop().expect("skip gradient");
                dx.iter_mut().zip(sg).for_each(|(a, b)| *a += b);
            }
            for (k, conv) in lv.convs.into_iter().enumerate().rev() {
                let (wr, br) = next();
                let (gw, gb) = split2(grad, wr.clone(), br);
                let want_input = l > 0 || k > 0;
                let din = conv3_relu_backward(
                    &conv.input,
                    conv.c_in,
                    lv.h,
                    lv.w,
                    &params[wr],
                    &conv.output,
                    &mut dx,
                    gw,
                    gb,
                    want_input,
                    &mut cols,
                );
                match din {
                    Some(g) => dx = g,
                    None => return,
                }
            }
            if let Some(arg) = lv.pool_arg {
                dx = maxpool2_backward(&dx, &arg, ch[l - 1], lv.h * 2, lv.w * 2);
            }
        }
    }
}

/// Disjoint mutable views of a weight range and a bias range.
fn split2<T>(
    grad: &mut [T],
    w: std::ops::Range<usize>,
    b: std::ops::Range<usize>,
) -> (&mut [T], &mut [T]) {
    assert!(w.end <= b.start, "bias follows weight in the layout");
    let (lo, hi) = grad.split_at_mut(b.start);
    (&mut lo[w], &mut hi[..b.end - b.start])
}

/// Per-sample dice loss `1 - (2 sum(p g) + eps) / (sum p + sum g + eps)` and
/// its gradient with respect to `p`. Sums are accumulated in f64.
pub(crate) fn dice_with_grad<T: Real>(pred: &[T], gt: &[T], eps: f64) -> (f64, Vec<T>) {
    let (mut pg, mut sp, mut sg) = (0.0f64, 0.0f64, 0.0f64);
    for (&p, &g) in pred.iter().zip(gt) {
        let (p, g) = (p.to_f64(), g.to_f64());
        pg += p * g;
        sp += p;
        sg += g;
    }
    let num = 2.0 * pg + eps;
    let den = sp + sg + eps;
    let loss = 1.0 - num / den;
    let den2 = den * den;
    let grad = gt
        .iter()
        .map(|&g| T::from_f64(-(2.0 * g.to_f64() * den - num) / den2))
        .collect();
    (loss, grad)
}

pub(crate) fn check_params(layout: &Layout, len: usize) -> Result<(), DetectorError> {
    if len != layout.total {
        return Err(DetectorError::Shape {
            tensor: "parameters".into(),
            expected: vec![layout.total],
            found: vec![len],
        });
    }
    Ok(())
}

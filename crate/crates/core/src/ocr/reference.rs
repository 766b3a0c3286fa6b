//! Template-matching recognizer. Characters are connected components (with
//! stacked parts such as the dot of an `i` folded in), words come from the
//! same grouping rule the mask boxes use, and each component is matched by
//! normalized cross-correlation against glyph templates rendered from known
//! faces. Per word, a font size and baseline are chosen jointly so that case
//! and punctuation are told apart by position as well as shape.
//!
//! It is deliberately naive: stray marks are happily read as characters.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{OcrError, OcrWord};
use crate::mask::{group_words, horizontal_gap, same_row, MaskConfig};
use crate::raster::{connected_components, Connectivity, Raster, Rect};
use crate::synth::GlyphSource;

pub const CANONICAL_HEIGHTS: [u32; 3] = [16, 24, 32];

/// A binarized, tight glyph bitmap and where it sits relative to the
/// baseline, in units of the font size.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub ch: char,
    pub font: String,
    pub height: u32,
    pub cols: usize,
    pub rows: usize,
    /// Row-major, 1 = ink.
    pub bitmap: Vec<u8>,
    pub top_rel: f64,
    pub bottom_rel: f64,
    pub width_rel: f64,
    centered: Vec<f32>,
    norm: f32,
}

impl Template {
    fn new(ch: char, font: &str, height: u32, cols: usize, rows: usize, bitmap: Vec<u8>, top: i32) -> Self {
        let s = height as f64;
        let (centered, norm) = center(bitmap.iter().map(|&b| b as f32));
        Self {
            ch,
            font: font.to_string(),
            height,
            cols,
            rows,
            bitmap,
            top_rel: top as f64 / s,
            bottom_rel: (top + rows as i32) as f64 / s,
            width_rel: cols as f64 / s,
            centered,
            norm,
        }
    }

    pub fn has_ink_on_every_edge(&self) -> bool {
        let at = |x: usize, y: usize| self.bitmap[y * self.cols + x] != 0;
        (0..self.cols).any(|x| at(x, 0))
            && (0..self.cols).any(|x| at(x, self.rows - 1))
            && (0..self.rows).any(|y| at(0, y))
            && (0..self.rows).any(|y| at(self.cols - 1, y))
    }
}

fn center(v: impl Iterator<Item = f32>) -> (Vec<f32>, f32) {
    let mut v: Vec<f32> = v.collect();
    let mean = v.iter().sum::<f32>() / v.len().max(1) as f32;
    v.iter_mut().for_each(|x| *x -= mean);
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    (v, norm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceModel {
    pub charset: String,
    pub heights: Vec<u32>,
    pub templates: Vec<Template>,
}

impl ReferenceModel {
    fn nearest_height(&self, size: f64) -> u32 {
        *self
            .heights
            .iter()
            .min_by(|a, b| {
                let da = (**a as f64 - size).abs();
                let db = (**b as f64 - size).abs();
                da.total_cmp(&db)
            })
            .expect("model has heights")
    }
}

/// Renders every character of `charset` from every source at every height.
pub fn build_reference_model(
    sources: &[Arc<dyn GlyphSource>],
    charset: &str,
    heights: &[u32],
) -> Result<ReferenceModel, OcrError> {
    if sources.is_empty() || heights.is_empty() || charset.is_empty() {
        return Err(OcrError::Config("need at least one source, height and character".into()));
    }
    let mut heights = heights.to_vec();
    heights.sort_unstable();
    heights.dedup();
    let chars: Vec<char> = charset.chars().filter(|c| !c.is_whitespace()).collect();
    let mut templates = Vec::new();
    for src in sources {
        let mut missing = Vec::new();
        for &h in &heights {
            for &ch in &chars {
                match src.glyph(ch, h).and_then(|g| binarize_tight(&g.coverage, g.width, g.height, g.top)) {
                    Some((cols, rows, bitmap, top)) => {
                        templates.push(Template::new(ch, src.name(), h, cols, rows, bitmap, top))
                    }
                    None if !missing.contains(&ch) => missing.push(ch),
                    None => {}
                }
            }
        }
        if !missing.is_empty() {
            return Err(OcrError::MissingGlyphs {
                source_name: src.name().to_string(),
                missing,
            });
        }
    }
    Ok(ReferenceModel {
        charset: chars.into_iter().collect(),
        heights,
        templates,
    })
}

/// Thresholds coverage at half and crops to the ink. Faint glyphs that
/// vanish at that level fall back to any coverage.
fn binarize_tight(cov: &[u8], w: usize, h: usize, top: i32) -> Option<(usize, usize, Vec<u8>, i32)> {
    let strong: Vec<u8> = cov.iter().map(|&c| u8::from(c >= 128)).collect();
    let bits = if strong.contains(&1) {
        strong
    } else {
        cov.iter().map(|&c| u8::from(c > 0)).collect()
    };
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if bits[y * w + x] != 0 {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
            }
        }
    }
    if x0 == usize::MAX {
        return None;
    }
    let (cw, ch) = (x1 - x0, y1 - y0);
    let mut out = Vec::with_capacity(cw * ch);
    for y in y0..y1 {
        out.extend_from_slice(&bits[y * w + x0..y * w + x1]);
    }
    Some((cw, ch, out, top + y0 as i32))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceConfig {
    pub binarize_threshold: u8,
    /// Words whose mean character correlation falls below this are dropped.
    pub min_confidence: f64,
    /// Weight of the baseline/size mismatch against correlation.
    pub geometry_weight: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            binarize_threshold: 128,
            min_confidence: 0.4,
            geometry_weight: 2.0,
        }
    }
}

/// Candidate templates kept per component and height.
const SHORTLIST: usize = 24;

struct Glyphlet {
    rect: Rect,
    /// Binary ink inside `rect`.
    ink: Vec<u8>,
    /// Per canonical height: (template index, correlation), best first.
    scores: BTreeMap<u32, Vec<(usize, f32)>>,
}

impl Glyphlet {
    fn shortlist(&mut self, model: &ReferenceModel, height: u32) -> &[(usize, f32)] {
        let (w, h) = (self.rect.width() as usize, self.rect.height() as usize);
        let ink = &self.ink;
        self.scores.entry(height).or_insert_with(|| {
            let mut resampled: BTreeMap<(usize, usize), (Vec<f32>, f32)> = BTreeMap::new();
            let ar = w as f64 / h as f64;
            let mut list: Vec<(usize, f32)> = model
                .templates
                .iter()
                .enumerate()
                .filter(|(_, t)| t.height == height)
                .filter(|(_, t)| (ar / (t.cols as f64 / t.rows as f64)).ln().abs() <= 1.1)
                .map(|(i, t)| {
                    let (v, n) = resampled
                        .entry((t.cols, t.rows))
                        .or_insert_with(|| center(resample(ink, w, h, t.cols, t.rows).into_iter()));
                    (i, ncc(v, *n, &t.centered, t.norm))
                })
                .collect();
            list.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            list.truncate(SHORTLIST);
            list
        })
    }
}

fn ncc(a: &[f32], na: f32, b: &[f32], nb: f32) -> f32 {
    const FLAT: f32 = 1e-6;
    match (na > FLAT, nb > FLAT) {
        (true, true) => a.iter().zip(b).map(|(x, y)| x * y).sum::<f32>() / (na * nb),
        // solid blocks: shape carries no information, geometry decides
        (false, false) => 1.0,
        _ => 0.0,
    }
}

/// Area-style resampling by 3x3 point sampling per output pixel.
fn resample(src: &[u8], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f32> {
    const K: usize = 3;
    let mut out = Vec::with_capacity(dw * dh);
    for v in 0..dh {
        for u in 0..dw {
            let mut acc = 0u32;
            for b in 0..K {
                let sy = ((v as f64 + (b as f64 + 0.5) / K as f64) * sh as f64 / dh as f64) as usize;
                for a in 0..K {
                    let sx = ((u as f64 + (a as f64 + 0.5) / K as f64) * sw as f64 / dw as f64) as usize;
                    acc += src[sy.min(sh - 1) * sw + sx.min(sw - 1)] as u32;
                }
            }
            out.push(acc as f32 / (K * K) as f32);
        }
    }
    out
}

/// Components with vertically stacked parts merged. Each component may
/// attach to one partner at least as tall as itself: the vertically
/// nearest one overlapping it horizontally by half the narrower width,
/// provided the pair stays within 1.6 times the height of the text row
/// either belongs to. Choosing the nearest keeps the dot of an `i` off a
/// descender on the line above.
fn glyph_boxes(comps: &[Rect]) -> Vec<Rect> {
    let n = comps.len();
    let mut row_h: Vec<i32> = comps.iter().map(|r| r.height()).collect();
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&comps[i], &comps[j]);
            if same_row(a, b) && horizontal_gap(a, b) <= 2 * a.height().max(b.height()) {
                row_h[i] = row_h[i].max(b.height());
                row_h[j] = row_h[j].max(a.height());
            }
        }
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        let a = comps[i];
        let mut best: Option<(i32, bool, usize)> = None;
        for (j, b) in comps.iter().enumerate() {
            if j == i || b.height() < a.height() || (b.height() == a.height() && j < i && b.y0() > a.y0()) {
                continue;
            }
            let overlap = a.x1().min(b.x1()) - a.x0().max(b.x0());
            let u = a.union(b);
            if 2 * overlap < a.width().min(b.width()) || 10 * u.height() > 16 * row_h[i].max(row_h[j]) {
                continue;
            }
            let gap = (b.y0() - a.y1()).max(a.y0() - b.y1());
            // partners below win ties: dots sit above their stems
            let key = (gap, b.y0() < a.y0(), j);
            if best.is_none_or(|k| key < k) {
                best = Some(key);
            }
        }
        if let Some((_, _, j)) = best {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri != rj {
                parent[ri] = rj;
            }
        }
    }
    let mut merged: Vec<Option<Rect>> = vec![None; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        merged[r] = Some(merged[r].map_or(comps[i], |m| m.union(&comps[i])));
    }
    let mut out: Vec<Rect> = merged.into_iter().flatten().collect();
    out.sort_by_key(|r| (r.y0(), r.x0(), r.y1(), r.x1()));
    out
}

pub fn reference_recognize(model: &ReferenceModel, page: &Raster, cfg: &ReferenceConfig) -> Vec<OcrWord> {
    let ink = page.binarize_ink(cfg.binarize_threshold);
    let comps: Vec<Rect> = connected_components(&ink, Connectivity::Eight)
        .into_iter()
        .map(|c| c.bbox)
        .collect();
    if comps.is_empty() {
        return Vec::new();
    }
    let boxes = glyph_boxes(&comps);
    let mut glyphs: Vec<Glyphlet> = boxes
        .iter()
        .map(|r| {
            let mut bits = Vec::with_capacity(r.area() as usize);
            for y in r.y0()..r.y1() {
                for x in r.x0()..r.x1() {
                    bits.push(ink.get(x as usize, y as usize) as u8);
                }
            }
            Glyphlet {
                rect: *r,
                ink: bits,
                scores: BTreeMap::new(),
            }
        })
        .collect();

    let mut heights_rel: Vec<f64> = model
        .templates
        .iter()
        .map(|t| ((t.bottom_rel - t.top_rel) * 32.0).round() / 32.0)
        .collect();
    heights_rel.sort_by(f64::total_cmp);
    heights_rel.dedup();

    let mut words = Vec::new();
    for mut group in group_words(&boxes, &MaskConfig::default()) {
        group.sort_by_key(|&i| (boxes[i].x0(), boxes[i].y0()));
        if let Some(w) = read_word(model, cfg, &mut glyphs, &group, &heights_rel) {
            if w.confidence >= cfg.min_confidence {
                words.push(w);
            }
        }
    }
    words.sort_by_key(|w| (w.rect.y0(), w.rect.x0()));
    words
}

fn read_word(
    model: &ReferenceModel,
    cfg: &ReferenceConfig,
    glyphs: &mut [Glyphlet],
    group: &[usize],
    heights_rel: &[f64],
) -> Option<OcrWord> {
    let h_max = group.iter().map(|&i| glyphs[i].rect.height()).max()? as f64;
    let mut sizes: Vec<f64> = heights_rel
        .iter()
        .filter(|&&r| r > 0.0)
        .map(|r| (h_max / r * 4.0).round() / 4.0)
        .filter(|s| (3.0..=400.0).contains(s))
        .collect();
    sizes.sort_by(f64::total_cmp);
    sizes.dedup();
    let mut baselines: Vec<i32> = group.iter().map(|&i| glyphs[i].rect.y1()).collect();
    baselines.sort_unstable();
    baselines.dedup();

    // (score, chosen template per glyph)
    let mut best: Option<(f64, Vec<(usize, f32)>)> = None;
    for &size in &sizes {
        let h = model.nearest_height(size);
        for &g in group {
            glyphs[g].shortlist(model, h);
        }
        for &b in &baselines {
            let mut total = 0.0;
            let mut picks = Vec::with_capacity(group.len());
            for &g in group {
                let r = glyphs[g].rect;
                let top = (r.y0() - b) as f64 / size;
                let bottom = (r.y1() - b) as f64 / size;
                let width = r.width() as f64 / size;
                let mut pick = None;
                let mut pick_score = f64::NEG_INFINITY;
                for &(t, c) in &glyphs[g].scores[&h] {
                    let tm = &model.templates[t];
                    let geom = (top - tm.top_rel).abs()
                        + (bottom - tm.bottom_rel).abs()
                        + 0.5 * (width - tm.width_rel).abs();
                    let s = c as f64 - cfg.geometry_weight * geom;
                    if s > pick_score {
                        pick_score = s;
                        pick = Some((t, c));
                    }
                }
                let Some(p) = pick else {
                    pick_score = -cfg.geometry_weight;
                    picks.push((usize::MAX, 0.0));
                    total += pick_score;
                    continue;
                };
                picks.push(p);
                total += pick_score;
            }
            let score = total / group.len() as f64;
            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                best = Some((score, picks));
            }
        }
    }
    let (_, picks) = best?;
    let text: String = picks
        .iter()
        .filter(|(t, _)| *t != usize::MAX)
        .map(|&(t, _)| model.templates[t].ch)
        .collect();
    if text.is_empty() {
        return None;
    }
    let confidence = picks.iter().map(|&(_, c)| (c as f64).max(0.0)).sum::<f64>() / picks.len() as f64;
    let rect = Rect::bounding(group.iter().map(|&i| &glyphs[i].rect)).expect("non-empty word");
    Some(OcrWord {
        text,
        rect,
        confidence: confidence.min(1.0),
    })
}

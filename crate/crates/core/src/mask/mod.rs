//! Heatmap thresholding, page blanking, word-box extraction and splitting
//! of oversized OCR detections.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::Heatmap;
use crate::ocr::OcrWord;
use crate::raster::{connected_components, dilate, iou, BinaryMap, Connectivity, Raster, Rect};

#[derive(Debug, Error, PartialEq)]
pub enum MaskError {
    #[error("invalid mask config: {0}")]
    Config(String),
    #[error("size mismatch: image {0}x{1}, mask {2}x{3}")]
    Dimensions(usize, usize, usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskConfig {
    pub threshold: f32,
    pub dilation_radius: usize,
    pub fill: u8,
    /// Fixed horizontal merge distance in pixels. When absent the distance
    /// is `word_gap_factor` times the median component height of the line.
    pub word_gap: Option<f64>,
    pub word_gap_factor: f64,
    pub oversize_factor: f64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            dilation_radius: 2,
            fill: 255,
            word_gap: None,
            word_gap_factor: 0.6,
            oversize_factor: 3.0,
        }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<(), MaskError> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(MaskError::Config(format!("threshold {} must lie in (0, 1)", self.threshold)));
        }
        if self.oversize_factor <= 1.0 {
            return Err(MaskError::Config(format!("oversize_factor {} must exceed 1", self.oversize_factor)));
        }
        if self.word_gap.is_some_and(|g| g < 0.0) || self.word_gap_factor < 0.0 {
            return Err(MaskError::Config("word gap must be non-negative".into()));
        }
        Ok(())
    }
}

/// Pixels at or above the threshold, without dilation.
pub fn threshold_heatmap(heatmap: &Heatmap, threshold: f32) -> BinaryMap {
    let data = heatmap.data().iter().map(|&p| (p >= threshold) as u8).collect();
    BinaryMap::from_vec(heatmap.width(), heatmap.height(), data).expect("same dims")
}

/// Thresholds then dilates by `dilation_radius` (square structuring element).
pub fn heatmap_to_mask(heatmap: &Heatmap, cfg: &MaskConfig) -> BinaryMap {
    dilate(&threshold_heatmap(heatmap, cfg.threshold), cfg.dilation_radius)
}

/// Keeps pixels under the mask, replaces the rest with `cfg.fill`.
pub fn apply_mask(image: &Raster, mask: &BinaryMap, cfg: &MaskConfig) -> Result<Raster, MaskError> {
    if (image.width(), image.height()) != (mask.width(), mask.height()) {
        return Err(MaskError::Dimensions(image.width(), image.height(), mask.width(), mask.height()));
    }
    let data = image
        .data()
        .iter()
        .zip(mask.data())
        .map(|(&v, &m)| if m != 0 { v } else { cfg.fill })
        .collect();
    Ok(Raster::from_vec(image.width(), image.height(), data).expect("same dims"))
}

fn vertical_overlap(a: &Rect, b: &Rect) -> i32 {
    a.y1().min(b.y1()) - a.y0().max(b.y0())
}

pub(crate) fn horizontal_gap(a: &Rect, b: &Rect) -> i32 {
    (b.x0() - a.x1()).max(a.x0() - b.x1())
}

/// Same text row: the vertical overlap covers at least half the shorter box.
pub(crate) fn same_row(a: &Rect, b: &Rect) -> bool {
    2 * vertical_overlap(a, b) >= a.height().min(b.height())
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }
    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a != b {
            self.0[a.max(b)] = a.min(b);
        }
    }
    fn groups(&mut self) -> Vec<Vec<usize>> {
        let n = self.0.len();
        let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            let r = self.find(i);
            by_root[r].push(i);
        }
        by_root.into_iter().filter(|g| !g.is_empty()).collect()
    }
}

fn median(mut v: Vec<i32>) -> f64 {
    v.sort_unstable();
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

/// Groups boxes into words. Two boxes join when they share a text row and
/// their horizontal gap is at most the word gap; the default gap scales
/// with the median height of the row they sit on, so small and large text
/// on one page are both split sensibly. Groups are returned in the order of
/// their first member.
pub fn group_words(boxes: &[Rect], cfg: &MaskConfig) -> Vec<Vec<usize>> {
    let n = boxes.len();
    // rows: chains of nearby boxes sharing a row
    let mut rows = Dsu::new(n);
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&boxes[i], &boxes[j]);
            if same_row(a, b) && horizontal_gap(a, b) <= 2 * a.height().max(b.height()) {
                rows.union(i, j);
            }
        }
    }
    let mut row_gap = vec![0.0; n];
    for g in rows.groups() {
        let gap = cfg
            .word_gap
            .unwrap_or_else(|| cfg.word_gap_factor * median(g.iter().map(|&i| boxes[i].height()).collect()));
        for i in g {
            row_gap[i] = gap;
        }
    }

    let mut words = Dsu::new(n);
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&boxes[i], &boxes[j]);
            if same_row(a, b) && horizontal_gap(a, b) as f64 <= row_gap[i].max(row_gap[j]) {
                words.union(i, j);
            }
        }
    }
    let mut groups = words.groups();
    fold_nested(boxes, &mut groups);
    groups.sort_by_key(|g| g[0]);
    groups
}

/// Merges any group whose box lies inside another group's box.
fn fold_nested(boxes: &[Rect], groups: &mut Vec<Vec<usize>>) {
    loop {
        let bbs: Vec<Rect> = groups
            .iter()
            .map(|g| Rect::bounding(g.iter().map(|&i| &boxes[i])).expect("non-empty group"))
            .collect();
        let mut hit = None;
        'outer: for a in 0..bbs.len() {
            for b in 0..bbs.len() {
                if a != b && bbs[a].contains(&bbs[b]) {
                    hit = Some((a, b));
                    break 'outer;
                }
            }
        }
        let Some((a, b)) = hit else { return };
        let moved = groups.remove(b);
        let a = if b < a { a - 1 } else { a };
        groups[a].extend(moved);
        groups[a].sort_unstable();
    }
}

/// Word boxes from a binary mask, sorted by `(y0, x0)`.
pub fn boxes_from_mask(mask: &BinaryMap, cfg: &MaskConfig) -> Vec<Rect> {
    let comps: Vec<Rect> = connected_components(mask, Connectivity::Eight)
        .into_iter()
        .map(|c| c.bbox)
        .collect();
    let mut out: Vec<Rect> = group_words(&comps, cfg)
        .into_iter()
        .map(|g| Rect::bounding(g.iter().map(|&i| &comps[i])).expect("non-empty group"))
        .collect();
    out.sort_by_key(|r| (r.y0(), r.x0()));
    out
}

/// Detects OCR words that span several detector boxes (whole lines or
/// paragraphs read as one word). Such words are dropped and the detector
/// boxes they touch are returned, once each and in reading order, for
/// individual re-recognition.
pub fn split_oversized(words: &[OcrWord], detector_boxes: &[Rect], cfg: &MaskConfig) -> (Vec<OcrWord>, Vec<Rect>) {
    if detector_boxes.is_empty() {
        return (words.to_vec(), Vec::new());
    }
    let med_w = median(detector_boxes.iter().map(Rect::width).collect());
    let med_h = median(detector_boxes.iter().map(Rect::height).collect());
    let mut kept = Vec::new();
    let mut regions: Vec<Rect> = Vec::new();
    for w in words {
        let r = w.rect;
        let oversized = r.width() as f64 > cfg.oversize_factor * med_w || r.height() as f64 > cfg.oversize_factor * med_h;
        if !oversized {
            kept.push(w.clone());
            continue;
        }
        for d in detector_boxes {
            if r.intersection(d).is_some() && !regions.contains(d) {
                regions.push(*d);
            }
        }
    }
    regions.sort_by_key(|r| (r.y0(), r.x0()));
    (kept, regions)
}

/// Combines kept words with words recovered from re-processed regions.
/// A recovered word that overlaps a kept word at IOU >= 0.5 is a duplicate
/// and is discarded. Output is sorted by `(y0, x0)`.
pub fn splice_words(kept: Vec<OcrWord>, recovered: Vec<OcrWord>) -> Vec<OcrWord> {
    let mut out = kept;
    for w in recovered {
        if !out.iter().any(|k| iou(&k.rect, &w.rect) >= 0.5) {
            out.push(w);
        }
    }
    out.sort_by_key(|w| (w.rect.y0(), w.rect.x0()));
    out
}

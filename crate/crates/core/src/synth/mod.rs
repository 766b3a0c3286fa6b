//! Synthetic training documents: text tiles with character-level ground
//! truth, textured and natural backgrounds, font- and document-level
//! degradations, and hard-negative glyph fragments.

mod background;
mod corpus;
mod dataset;
pub mod glyphs;
mod hardneg;
mod noise;
mod text;

pub use background::{make_background, Background, BackgroundKind};
pub use corpus::{TextCategory, TextSampler};
pub use dataset::{
    generate_dataset, load_sample, sample_seed, write_sample, Annotation, DatasetManifest, ManifestEntry,
    MANIFEST_VERSION,
};
pub use glyphs::{bundled_charset, bundled_charset_string, BitmapFace, FontLibrary, Glyph, GlyphSource, OutlineFace};
pub use hardneg::render_hard_negative_tile;
pub use noise::{apply_font_noise, block_dct_roundtrip, DocNoise, FontNoise};
pub use text::{render_text_tile, TextTile, WordAnnotation, MAX_FONT_SIZE, MIN_FONT_SIZE};

use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::io::ImageIoError;
use crate::raster::{rotate, rotate_point, BinaryMap, Raster, Rect};
use text::{draw_line, layout_line};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("text to render is empty")]
    EmptyText,
    #[error("font size {0} outside [9, 100]")]
    FontSize(u32),
    #[error("none of the characters could be drawn (missing: {0:?})")]
    NothingDrawable(Vec<char>),
    #[error("cannot load font {0}")]
    Font(String),
    #[error("no readable background images in {0}; use the texture background instead")]
    NoAssets(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("sample {index}: {source}")]
    Sample { index: usize, source: Box<SynthError> },
    #[error(transparent)]
    Image(#[from] ImageIoError),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl SynthError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        SynthError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FontNoiseProbs {
    pub speckle: f64,
    pub binarize: f64,
    pub distort: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocNoiseProbs {
    pub blur: f64,
    pub compress: f64,
    pub downsample: f64,
}

/// Generator settings. Missing JSON fields take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Probabilities of white, natural-image and texture backgrounds.
    pub background_probs: [f64; 3],
    pub font_size_range: [u32; 2],
    pub common_font_prob: f64,
    pub font_noise_probs: FontNoiseProbs,
    /// Whole-page rotation is drawn from `[-rotation_range, rotation_range]` degrees.
    pub rotation_range: f64,
    pub doc_noise_probs: DocNoiseProbs,
    /// Apply every document degradation independently instead of at most one.
    pub stack_doc_noise: bool,
    pub hard_negative_prob: f64,
    pub tiles_per_doc_range: [u32; 2],
    pub doc_size: usize,
    /// Directory of PNG/PGM photographs for natural backgrounds.
    pub asset_dir: Option<PathBuf>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            background_probs: [0.4, 0.2, 0.4],
            font_size_range: [MIN_FONT_SIZE, MAX_FONT_SIZE],
            common_font_prob: 0.8,
            font_noise_probs: FontNoiseProbs {
                speckle: 0.2,
                binarize: 0.1,
                distort: 0.2,
            },
            rotation_range: 3.0,
            doc_noise_probs: DocNoiseProbs {
                blur: 0.3,
                compress: 0.3,
                downsample: 0.3,
            },
            stack_doc_noise: false,
            hard_negative_prob: 0.3,
            tiles_per_doc_range: [2, 8],
            doc_size: 1024,
            asset_dir: None,
        }
    }
}

impl SynthConfig {
    /// Small pages for laptop-scale experiments: 256 px documents with fonts capped at 40 px.
    pub fn desk() -> Self {
        Self {
            font_size_range: [MIN_FONT_SIZE, 40],
            tiles_per_doc_range: [2, 6],
            doc_size: 256,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(SynthError::Config(format!("{name} = {p} is not a probability")))
            }
        };
        for (i, &p) in self.background_probs.iter().enumerate() {
            prob(&format!("background_probs[{i}]"), p)?;
        }
        let sum: f64 = self.background_probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(SynthError::Config(format!("background_probs sum to {sum}, expected 1")));
        }
        prob("common_font_prob", self.common_font_prob)?;
        prob("hard_negative_prob", self.hard_negative_prob)?;
        let f = &self.font_noise_probs;
        prob("font_noise_probs.speckle", f.speckle)?;
        prob("font_noise_probs.binarize", f.binarize)?;
        prob("font_noise_probs.distort", f.distort)?;
        let d = &self.doc_noise_probs;
        prob("doc_noise_probs.blur", d.blur)?;
        prob("doc_noise_probs.compress", d.compress)?;
        prob("doc_noise_probs.downsample", d.downsample)?;
        if !self.stack_doc_noise && d.blur + d.compress + d.downsample > 1.0 + 1e-9 {
            return Err(SynthError::Config("doc_noise_probs must sum to at most 1 unless stacked".into()));
        }
        let [lo, hi] = self.font_size_range;
        if lo < MIN_FONT_SIZE || hi > MAX_FONT_SIZE || lo > hi {
            return Err(SynthError::Config(format!("font_size_range [{lo}, {hi}] must lie within [9, 100]")));
        }
        let [t0, t1] = self.tiles_per_doc_range;
        if t0 == 0 || t0 > t1 {
            return Err(SynthError::Config(format!("tiles_per_doc_range [{t0}, {t1}] invalid")));
        }
        if !(0.0..=crate::raster::MAX_ROTATION_DEGREES).contains(&self.rotation_range) {
            return Err(SynthError::Config(format!("rotation_range {} outside [0, 45]", self.rotation_range)));
        }
        if self.doc_size < 32 {
            return Err(SynthError::Config(format!("doc_size {} below 32", self.doc_size)));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One synthesized page with its pixel ground truth and word annotations.
#[derive(Debug, Clone)]
pub struct DocumentSample {
    pub image: Raster,
    pub gt: BinaryMap,
    pub words: Vec<WordAnnotation>,
    pub seed: u64,
    pub provenance: SynthConfig,
}

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn pick_background(cfg: &SynthConfig, rng: &mut impl Rng) -> BackgroundKind {
    let r: f64 = rng.gen();
    let [w, n, _] = cfg.background_probs;
    if r < w {
        BackgroundKind::White
    } else if r < w + n {
        BackgroundKind::Natural
    } else {
        BackgroundKind::Texture
    }
}

/// Font size drawn log-uniformly from `[lo, min(hi, cap)]`.
fn pick_size(cfg: &SynthConfig, cap: u32, rng: &mut impl Rng) -> u32 {
    let [lo, hi] = cfg.font_size_range;
    let hi = hi.min(cap).max(lo);
    let (a, b) = ((lo as f64).ln(), (hi as f64 + 1.0).ln());
    (rng.gen_range(a..b).exp().floor() as u32).clamp(lo, hi)
}

struct Tile {
    image: Raster,
    words: Vec<WordAnnotation>,
}

fn text_block(
    face: &dyn GlyphSource,
    corpus: &TextSampler,
    size: u32,
    max_w: i32,
    max_h: i32,
    rng: &mut impl Rng,
) -> Option<Tile> {
    let m = face.metrics(size);
    let line_h = m.ascent + m.descent + (size as i32 / 4).max(1);
    let max_lines = (max_h / line_h).max(1);
    let n_lines = rng.gen_range(1..=max_lines.min(6));
    let mut lines = Vec::new();
    for _ in 0..n_lines {
        let mut text = String::new();
        let mut layout = None;
        for attempt in 0..12 {
            let token = corpus.sample(rng);
            let candidate = if text.is_empty() { token } else { format!("{text} {token}") };
            let l = layout_line(&candidate, face, size);
            if l.width <= max_w {
                text = candidate;
                layout = Some(l);
                if rng.gen_bool(0.25) {
                    break;
                }
            } else if layout.is_some() || attempt > 4 {
                break;
            }
        }
        if let Some(l) = layout {
            lines.push(l);
        }
    }
    if lines.is_empty() {
        return None;
    }
    let pad = (size as i32 / 4).max(2);
    let width = lines.iter().map(|l| l.width).max().unwrap_or(1) + 2 * pad;
    let height = lines.iter().map(|l| l.ascent + l.descent).sum::<i32>()
        + (lines.len() as i32 - 1) * (size as i32 / 4).max(1)
        + 2 * pad;
    let mut image = Raster::new(width as usize, height as usize, 255);
    let ink = rng.gen_range(0..=70u8);
    let mut words = Vec::new();
    let mut y = pad;
    for l in &lines {
        words.extend(draw_line(&mut image, l, pad, y + l.ascent, ink));
        y += l.ascent + l.descent + (size as i32 / 4).max(1);
    }
    Some(Tile { image, words })
}

fn hard_negative_block(
    fonts: &FontLibrary,
    cfg: &SynthConfig,
    cap: u32,
    max_w: i32,
    max_h: i32,
    rng: &mut impl Rng,
) -> Option<Tile> {
    let mut frags = Vec::new();
    let n = rng.gen_range(1..=8);
    for _ in 0..n {
        let face = fonts.pick(rng, cfg.common_font_prob);
        let size = pick_size(cfg, cap, rng);
        if let Ok(t) = render_hard_negative_tile(face.as_ref(), size, rng.gen()) {
            frags.push(t);
        }
    }
    if frags.is_empty() {
        return None;
    }
    // flow fragments into rows, like words on lines
    let mut placed = Vec::new();
    let (mut x, mut y, mut row_h, mut width) = (0i32, 0i32, 0i32, 0i32);
    for f in frags {
        let (fw, fh) = (f.width() as i32, f.height() as i32);
        if fw > max_w || fh > max_h {
            continue;
        }
        if x > 0 && x + fw > max_w {
            x = 0;
            y += row_h + rng.gen_range(0..=4);
            row_h = 0;
        }
        if y + fh > max_h {
            break;
        }
        placed.push((f, x, y));
        width = width.max(x + fw);
        row_h = row_h.max(fh);
        x += fw + rng.gen_range(0..=(fw / 2).max(1));
    }
    if placed.is_empty() {
        return None;
    }
    let mut image = Raster::new(width as usize, (y + row_h) as usize, 255);
    for (f, fx, fy) in &placed {
        image.blit_min(f, *fx, *fy);
    }
    Some(Tile { image, words: Vec::new() })
}

fn font_noise(tile: &mut Tile, cfg: &SynthConfig, rng: &mut impl Rng) {
    let p = &cfg.font_noise_probs;
    if rng.gen_bool(p.distort) {
        let strength = rng.gen_range(0.0..=1.0);
        let regions: Vec<Rect> = tile.words.iter().flat_map(|w| w.char_boxes.iter().copied()).collect();
        if tile.words.is_empty() {
            tile.image = apply_font_noise(&tile.image, FontNoise::Distort, strength, rng.gen());
        } else {
            let (img, moved) = noise::distort(&tile.image, &regions, strength, rng);
            tile.image = img;
            let mut it = moved.into_iter();
            for w in &mut tile.words {
                for c in &mut w.char_boxes {
                    *c = it.next().expect("one box per region");
                }
                w.bbox = Rect::bounding(&w.char_boxes).expect("word has chars");
            }
        }
    }
    if rng.gen_bool(p.binarize) {
        tile.image = noise::binarize(&tile.image);
    }
    if rng.gen_bool(p.speckle) {
        let strength = rng.gen_range(0.0..=1.0);
        tile.image = noise::speckle(&tile.image, strength, rng);
    }
}

/// Tight axis-aligned bound of `r` after rotating the page.
fn rotate_rect(r: &Rect, w: usize, h: usize, degrees: f64) -> Option<Rect> {
    if degrees == 0.0 {
        return r.clip(w, h);
    }
    let corners = [
        (r.x0() as f64 - 0.5, r.y0() as f64 - 0.5),
        (r.x1() as f64 - 0.5, r.y0() as f64 - 0.5),
        (r.x0() as f64 - 0.5, r.y1() as f64 - 0.5),
        (r.x1() as f64 - 0.5, r.y1() as f64 - 0.5),
    ];
    let pts: Vec<(f64, f64)> = corners.iter().map(|&(x, y)| rotate_point(x, y, w, h, degrees)).collect();
    let min_x = pts.iter().map(|p| p.0).fold(f64::MAX, f64::min);
    let max_x = pts.iter().map(|p| p.0).fold(f64::MIN, f64::max);
    let min_y = pts.iter().map(|p| p.1).fold(f64::MAX, f64::min);
    let max_y = pts.iter().map(|p| p.1).fold(f64::MIN, f64::max);
    Rect::new(
        (min_x + 0.5).floor() as i32,
        (min_y + 0.5).floor() as i32,
        (max_x + 0.5).ceil() as i32,
        (max_y + 0.5).ceil() as i32,
    )
    .ok()?
    .clip(w, h)
}

fn pick_doc_noise(cfg: &SynthConfig, rng: &mut impl Rng) -> Vec<DocNoise> {
    let p = &cfg.doc_noise_probs;
    let draw = |which: usize, rng: &mut ChaCha8Rng| match which {
        0 => DocNoise::Blur {
            sigma: rng.gen_range(0.6..1.6),
        },
        1 => DocNoise::Compress {
            quality: rng.gen_range(15..=60),
        },
        _ => DocNoise::Downsample {
            factor: rng.gen_range(0.35..0.75),
        },
    };
    let mut sub = ChaCha8Rng::seed_from_u64(rng.gen());
    let probs = [p.blur, p.compress, p.downsample];
    if cfg.stack_doc_noise {
        (0..3)
            .filter_map(|i| sub.gen_bool(probs[i]).then(|| draw(i, &mut sub)))
            .collect()
    } else {
        let r: f64 = sub.gen();
        let mut acc = 0.0;
        for (i, &pi) in probs.iter().enumerate() {
            acc += pi;
            if r < acc {
                return vec![draw(i, &mut sub)];
            }
        }
        Vec::new()
    }
}

/// Builds one page: background, a grid of text or hard-negative tiles with
/// font noise, a small page rotation, then document-level degradation.
pub fn compose_document(
    cfg: &SynthConfig,
    fonts: &FontLibrary,
    corpus: &TextSampler,
    seed: u64,
) -> Result<DocumentSample, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = cfg.doc_size;
    let kind = pick_background(cfg, &mut rng);
    let bg_seed = rng.gen();
    let mut page = match make_background(kind, size, size, bg_seed, cfg.asset_dir.as_deref()) {
        Ok(bg) => bg.image,
        Err(SynthError::NoAssets(_)) => make_background(BackgroundKind::Texture, size, size, bg_seed, None)?.image,
        Err(e) => return Err(e),
    };

    let [t0, t1] = cfg.tiles_per_doc_range;
    let n = rng.gen_range(t0..=t1) as usize;
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let (cell_w, cell_h) = ((size / cols) as i32, (size / rows) as i32);
    let mut cells: Vec<usize> = (0..cols * rows).collect();
    cells.shuffle(&mut rng);

    let mut words = Vec::new();
    for &cell in cells.iter().take(n) {
        let (cx, cy) = ((cell % cols) as i32 * cell_w, (cell / cols) as i32 * cell_h);
        let margin = (cell_w.min(cell_h) / 25).max(1);
        let (max_w, max_h) = (cell_w - 2 * margin, cell_h - 2 * margin);
        let cap = ((max_h as f64 / 1.6) as u32).max(MIN_FONT_SIZE);
        let tile = if rng.gen_bool(cfg.hard_negative_prob) {
            hard_negative_block(fonts, cfg, cap, max_w, max_h, &mut rng)
        } else {
            let face = fonts.pick(&mut rng, cfg.common_font_prob).clone();
            let size = pick_size(cfg, cap, &mut rng);
            text_block(face.as_ref(), corpus, size, max_w - size as i32 / 2, max_h - size as i32 / 2, &mut rng)
        };
        let Some(mut tile) = tile else { continue };
        font_noise(&mut tile, cfg, &mut rng);
        let (tw, th) = (tile.image.width() as i32, tile.image.height() as i32);
        let x = cx + margin + rng.gen_range(0..=(max_w - tw).max(0));
        let y = cy + margin + rng.gen_range(0..=(max_h - th).max(0));
        page.blit_min(&tile.image, x, y);
        for mut w in tile.words {
            w.translate(x, y);
            words.push(w);
        }
    }

    let angle = if cfg.rotation_range > 0.0 {
        rng.gen_range(-cfg.rotation_range..=cfg.rotation_range)
    } else {
        0.0
    };
    if angle != 0.0 {
        page = rotate(&page, angle, 255).expect("rotation within limit");
    }
    let words: Vec<WordAnnotation> = words
        .into_iter()
        .filter_map(|w| {
            let chars: Vec<Rect> = w.char_boxes.iter().filter_map(|c| rotate_rect(c, size, size, angle)).collect();
            WordAnnotation::from_chars(w.text, chars)
        })
        .collect();

    for noise in pick_doc_noise(cfg, &mut rng) {
        page = noise.apply(&page);
    }

    let mut gt = BinaryMap::zeros(size, size);
    for w in &words {
        for c in &w.char_boxes {
            gt.fill_rect(c);
        }
    }
    Ok(DocumentSample {
        image: page,
        gt,
        words,
        seed,
        provenance: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clean_cfg() -> SynthConfig {
        SynthConfig {
            background_probs: [1.0, 0.0, 0.0],
            font_noise_probs: FontNoiseProbs {
                speckle: 0.0,
                binarize: 0.0,
                distort: 0.0,
            },
            doc_noise_probs: DocNoiseProbs {
                blur: 0.0,
                compress: 0.0,
                downsample: 0.0,
            },
            rotation_range: 0.0,
            hard_negative_prob: 0.0,
            ..SynthConfig::desk()
        }
    }

    #[test]
    fn clean_gt_is_union_of_char_boxes() {
        let fonts = FontLibrary::bundled();
        let doc = compose_document(&clean_cfg(), &fonts, &TextSampler::default(), 3).unwrap();
        assert!(!doc.words.is_empty());
        let mut expect = BinaryMap::zeros(256, 256);
        for w in &doc.words {
            for c in &w.char_boxes {
                expect.fill_rect(c);
            }
        }
        assert_eq!(doc.gt, expect);
    }

    #[test]
    fn hard_negative_only_pages_have_empty_gt() {
        let cfg = SynthConfig {
            hard_negative_prob: 1.0,
            ..SynthConfig::desk()
        };
        let fonts = FontLibrary::bundled();
        for seed in 0..5 {
            let doc = compose_document(&cfg, &fonts, &TextSampler::default(), seed).unwrap();
            assert_eq!(doc.gt.count_ones(), 0);
            assert!(doc.words.is_empty());
            assert!(doc.image.data().iter().any(|&v| v < 128), "seed {seed} has no ink");
        }
    }

    #[test]
    fn same_seed_same_document() {
        let fonts = FontLibrary::bundled();
        let cfg = SynthConfig::desk();
        let a = compose_document(&cfg, &fonts, &TextSampler::default(), 42).unwrap();
        let b = compose_document(&cfg, &fonts, &TextSampler::default(), 42).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.gt, b.gt);
        assert_eq!(serde_json::to_string(&a.words).unwrap(), serde_json::to_string(&b.words).unwrap());
    }

    #[test]
    fn gt_stays_inside_word_boxes_under_noise() {
        let fonts = FontLibrary::bundled();
        let cfg = SynthConfig {
            font_noise_probs: FontNoiseProbs {
                speckle: 0.5,
                binarize: 0.3,
                distort: 0.8,
            },
            rotation_range: 3.0,
            ..SynthConfig::desk()
        };
        for seed in 0..8 {
            let doc = compose_document(&cfg, &fonts, &TextSampler::default(), seed).unwrap();
            for y in 0..256 {
                for x in 0..256 {
                    if doc.gt.get(x, y) {
                        assert!(doc.words.iter().any(|w| w.bbox.contains_point(x as i32, y as i32)));
                    }
                }
            }
            for w in &doc.words {
                assert_eq!(Some(w.bbox), Rect::bounding(&w.char_boxes));
                for c in &w.char_boxes {
                    assert!(c.height() as u32 <= 2 * 40, "char box {c:?}");
                }
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(SynthConfig::default().validate().is_ok());
        let bad = SynthConfig {
            background_probs: [0.5, 0.5, 0.5],
            ..SynthConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SynthConfig {
            font_size_range: [5, 20],
            ..SynthConfig::default()
        };
        assert!(bad.validate().is_err());
        let json = r#"{"doc_size": 512, "hard_negative_prob": 0.5}"#;
        let cfg: SynthConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.doc_size, 512);
        assert_eq!(cfg.font_size_range, [9, 100]);
        assert!(serde_json::from_str::<SynthConfig>(r#"{"doc_sise": 512}"#).is_err());
    }

    #[test]
    fn natural_without_assets_falls_back_to_texture() {
        let cfg = SynthConfig {
            background_probs: [0.0, 1.0, 0.0],
            ..SynthConfig::desk()
        };
        let doc = compose_document(&cfg, &FontLibrary::bundled(), &TextSampler::default(), 1).unwrap();
        assert_eq!(doc.image.width(), 256);
    }
}

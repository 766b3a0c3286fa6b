//! Glyph sources: a bundled 8x8 bitmap face in a few stylistic variants,
//! plus TrueType/OpenType faces loaded from a user directory.

use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use ab_glyph::{Font, FontVec, PxScale, ScaleFont};
use font8x8::UnicodeFonts;
use rand::Rng;

use super::SynthError;

/// Coverage bitmap of one character, positioned relative to the pen and baseline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Glyph {
    pub width: usize,
    pub height: usize,
    /// 0 = no ink, 255 = full ink.
    pub coverage: Vec<u8>,
    /// Offset of the bitmap's left edge from the pen position.
    pub left: i32,
    /// Offset of the bitmap's top edge from the baseline (negative is above).
    pub top: i32,
    pub advance: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LineMetrics {
    pub ascent: i32,
    pub descent: i32,
    pub space_advance: i32,
}

pub trait GlyphSource: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn metrics(&self, size: u32) -> LineMetrics;
    /// `None` when the face has no ink for `ch`.
    fn glyph(&self, ch: char, size: u32) -> Option<Glyph>;
    /// Printable non-space characters this source can draw.
    fn charset(&self) -> Vec<char>;
}

/// Characters every bundled face provides.
pub fn bundled_charset() -> Vec<char> {
    (0x21u8..=0x7e).map(char::from).collect()
}

pub fn bundled_charset_string() -> String {
    bundled_charset().into_iter().collect()
}

const CELL: f64 = 8.0;
const BASELINE_ROW: f64 = 7.0;
const SUPERSAMPLE: usize = 4;
const BRIDGE: f64 = 0.6;

/// The public-domain 8x8 face, optionally emboldened, sheared or condensed.
#[derive(Debug, Clone)]
pub struct BitmapFace {
    name: String,
    bold: bool,
    shear: f64,
    x_scale: f64,
}

impl BitmapFace {
    pub fn regular() -> Self {
        Self::variant("mono8", false, 0.0, 1.0)
    }

    pub fn variants() -> Vec<Self> {
        vec![
            Self::regular(),
            Self::variant("mono8-bold", true, 0.0, 1.0),
            Self::variant("mono8-italic", false, 0.22, 1.0),
            Self::variant("mono8-narrow", false, 0.0, 0.75),
        ]
    }

    fn variant(name: &str, bold: bool, shear: f64, x_scale: f64) -> Self {
        Self {
            name: name.to_string(),
            bold,
            shear,
            x_scale,
        }
    }

    fn rows(&self, ch: char) -> Option<[u8; 8]> {
        let mut rows = font8x8::BASIC_FONTS.get(ch)?;
        if self.bold {
            for r in &mut rows {
                *r |= *r << 1;
            }
        }
        rows.iter().any(|&r| r != 0).then_some(rows)
    }
}

impl GlyphSource for BitmapFace {
    fn name(&self) -> &str {
        &self.name
    }

    fn metrics(&self, size: u32) -> LineMetrics {
        let s = size as f64 / CELL;
        LineMetrics {
            ascent: (BASELINE_ROW * s).round() as i32,
            descent: s.round().max(1.0) as i32,
            space_advance: (6.0 * s * self.x_scale).round().max(2.0) as i32,
        }
    }

    fn glyph(&self, ch: char, size: u32) -> Option<Glyph> {
        let rows = self.rows(ch)?;
        let s = size as f64 / CELL;
        let bit = |cx: i32, cy: i32| (0..8).contains(&cx) && (0..8).contains(&cy) && rows[cy as usize] >> cx & 1 == 1;
        let ink = |fx: f64, fy: f64| -> bool {
            if !(0.0..CELL).contains(&fx) || !(0.0..CELL).contains(&fy) {
                return false;
            }
            let (cx, cy) = (fx as i32, fy as i32);
            if bit(cx, cy) {
                return true;
            }
            // cells meeting only at a corner get a small bridge so strokes
            // stay connected once sheared or scaled by a fraction
            let (u, v) = (fx.fract(), fy.fract());
            [(-1, -1), (1, -1), (-1, 1), (1, 1)].iter().any(|&(dx, dy)| {
                let du = if dx < 0 { u } else { 1.0 - u };
                let dv = if dy < 0 { v } else { 1.0 - v };
                du + dv <= BRIDGE && bit(cx + dx, cy) && bit(cx, cy + dy) && !bit(cx + dx, cy + dy)
            })
        };
        // pixel extent of the sheared, scaled cell relative to the cell's top-left
        let max_shift = self.shear * BASELINE_ROW * s;
        let span_w = (CELL * self.x_scale * s + max_shift + self.shear * s).ceil() as i32 + 2;
        let min_x = (-self.shear * s).floor() as i32 - 1;
        let span_h = size as i32;
        let (w, h) = ((span_w - min_x) as usize, span_h as usize);
        let mut cov = vec![0u8; w * h];
        let n = SUPERSAMPLE as f64;
        for py in 0..h {
            for px in 0..w {
                let mut hits = 0u32;
                for sy in 0..SUPERSAMPLE {
                    let y = py as f64 + (sy as f64 + 0.5) / n;
                    let fy = y / s;
                    for sx in 0..SUPERSAMPLE {
                        let x = (px as i32 + min_x) as f64 + (sx as f64 + 0.5) / n;
                        let fx = (x / s - self.shear * (BASELINE_ROW - fy)) / self.x_scale;
                        hits += u32::from(ink(fx, fy));
                    }
                }
                cov[py * w + px] = ((hits * 255 + (SUPERSAMPLE * SUPERSAMPLE) as u32 / 2)
                    / (SUPERSAMPLE * SUPERSAMPLE) as u32) as u8;
            }
        }
        let (bitmap, _, by) = tighten(&cov, w, h)?;
        let baseline = (BASELINE_ROW * s).round() as i32;
        let spacing = s.round().max(1.0) as i32;
        Some(Glyph {
            left: 0,
            top: by as i32 - baseline,
            advance: bitmap.width as i32 + spacing,
            width: bitmap.width,
            height: bitmap.height,
            coverage: bitmap.data,
        })
    }

    fn charset(&self) -> Vec<char> {
        bundled_charset()
    }
}

struct Bitmap {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

/// Crops a coverage buffer to its non-zero extent, returning the offset.
fn tighten(cov: &[u8], w: usize, h: usize) -> Option<(Bitmap, usize, usize)> {
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if cov[y * w + x] > 0 {
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
    let (bw, bh) = (x1 - x0, y1 - y0);
    let mut data = Vec::with_capacity(bw * bh);
    for y in y0..y1 {
        data.extend_from_slice(&cov[y * w + x0..y * w + x1]);
    }
    Some((Bitmap { width: bw, height: bh, data }, x0, y0))
}

/// Outline face loaded from a TrueType/OpenType file.
pub struct OutlineFace {
    name: String,
    font: FontVec,
}

impl fmt::Debug for OutlineFace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OutlineFace").field("name", &self.name).finish()
    }
}

impl OutlineFace {
    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let bytes = fs::read(path).map_err(|e| SynthError::io(path, e))?;
        let font = FontVec::try_from_vec(bytes).map_err(|_| SynthError::Font(path.display().to_string()))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(Self { name, font })
    }
}

impl GlyphSource for OutlineFace {
    fn name(&self) -> &str {
        &self.name
    }

    fn metrics(&self, size: u32) -> LineMetrics {
        let sf = self.font.as_scaled(PxScale::from(size as f32));
        let space = sf.h_advance(self.font.glyph_id(' '));
        LineMetrics {
            ascent: sf.ascent().ceil() as i32,
            descent: (-sf.descent()).ceil() as i32,
            space_advance: space.round().max(2.0) as i32,
        }
    }

    fn glyph(&self, ch: char, size: u32) -> Option<Glyph> {
        let id = self.font.glyph_id(ch);
        if id.0 == 0 {
            return None;
        }
        let scale = PxScale::from(size as f32);
        let sf = self.font.as_scaled(scale);
        let outlined = self.font.outline_glyph(id.with_scale_and_position(scale, ab_glyph::point(0.0, 0.0)))?;
        let bounds = outlined.px_bounds();
        let (w, h) = (bounds.width() as usize, bounds.height() as usize);
        if w == 0 || h == 0 {
            return None;
        }
        let mut cov = vec![0u8; w * h];
        outlined.draw(|x, y, c| {
            let idx = y as usize * w + x as usize;
            if idx < cov.len() {
                cov[idx] = (c.clamp(0.0, 1.0) * 255.0).round() as u8;
            }
        });
        let (bitmap, bx, by) = tighten(&cov, w, h)?;
        Some(Glyph {
            left: bounds.min.x as i32 + bx as i32,
            top: bounds.min.y as i32 + by as i32,
            advance: sf.h_advance(id).round().max(1.0) as i32,
            width: bitmap.width,
            height: bitmap.height,
            coverage: bitmap.data,
        })
    }

    fn charset(&self) -> Vec<char> {
        bundled_charset()
            .into_iter()
            .filter(|&c| self.font.glyph_id(c).0 != 0)
            .collect()
    }
}

/// Faces split into a frequently used group and a long tail.
#[derive(Debug, Clone)]
pub struct FontLibrary {
    pub common: Vec<Arc<dyn GlyphSource>>,
    pub unique: Vec<Arc<dyn GlyphSource>>,
}

impl FontLibrary {
    /// The bundled bitmap variants, all treated as common faces.
    pub fn bundled() -> Self {
        Self {
            common: BitmapFace::variants()
                .into_iter()
                .map(|f| Arc::new(f) as Arc<dyn GlyphSource>)
                .collect(),
            unique: Vec::new(),
        }
    }

    pub fn single(face: Arc<dyn GlyphSource>) -> Self {
        Self {
            common: vec![face],
            unique: Vec::new(),
        }
    }

    /// Adds `.ttf`/`.otf` faces from `dir`. Files under a `unique/`
    /// subdirectory join the long-tail group; everything else is common.
    pub fn extend_from_dir(&mut self, dir: &Path) -> Result<usize, SynthError> {
        let mut added = 0;
        for (sub, unique) in [(dir.to_path_buf(), false), (dir.join("unique"), true)] {
            if !sub.is_dir() {
                continue;
            }
            let mut paths: Vec<_> = fs::read_dir(&sub)
                .map_err(|e| SynthError::io(&sub, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.extension()
                        .and_then(|e| e.to_str())
                        .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "ttf" | "otf"))
                })
                .collect();
            paths.sort();
            for p in paths {
                let face: Arc<dyn GlyphSource> = Arc::new(OutlineFace::load(&p)?);
                if unique {
                    self.unique.push(face);
                } else {
                    self.common.push(face);
                }
                added += 1;
            }
        }
        Ok(added)
    }

    /// Picks a face: common with probability `common_prob` when a long tail exists.
    pub fn pick<R: Rng>(&self, rng: &mut R, common_prob: f64) -> &Arc<dyn GlyphSource> {
        let use_common = self.unique.is_empty() || rng.gen_bool(common_prob.clamp(0.0, 1.0));
        let pool = if use_common && !self.common.is_empty() {
            &self.common
        } else {
            &self.unique
        };
        &pool[rng.gen_range(0..pool.len())]
    }

    pub fn all(&self) -> impl Iterator<Item = &Arc<dyn GlyphSource>> {
        self.common.iter().chain(&self.unique)
    }
}

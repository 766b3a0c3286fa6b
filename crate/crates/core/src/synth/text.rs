use serde::{Deserialize, Serialize};

use super::glyphs::{Glyph, GlyphSource};
use super::SynthError;
use crate::raster::{Raster, Rect};

pub const MIN_FONT_SIZE: u32 = 9;
pub const MAX_FONT_SIZE: u32 = 100;

/// A word and its per-character boxes (spaces excluded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordAnnotation {
    pub text: String,
    #[serde(rename = "box")]
    pub bbox: Rect,
    #[serde(rename = "chars")]
    pub char_boxes: Vec<Rect>,
}

impl WordAnnotation {
    /// Builds a word whose box is the tight union of `char_boxes`.
    pub fn from_chars(text: String, char_boxes: Vec<Rect>) -> Option<Self> {
        let bbox = Rect::bounding(&char_boxes)?;
        Some(Self { text, bbox, char_boxes })
    }

    pub fn translate(&mut self, dx: i32, dy: i32) {
        self.bbox = self.bbox.translate(dx, dy);
        for c in &mut self.char_boxes {
            *c = c.translate(dx, dy);
        }
    }
}

impl crate::eval::Word for WordAnnotation {
    fn text(&self) -> &str {
        &self.text
    }
    fn rect(&self) -> Rect {
        self.bbox
    }
}

#[derive(Debug, Clone)]
pub struct TextTile {
    pub image: Raster,
    pub words: Vec<WordAnnotation>,
    /// Characters the glyph source could not draw.
    pub skipped: Vec<char>,
}

pub(crate) struct PlacedGlyph {
    x: i32,
    glyph: Glyph,
}

/// One laid-out line: glyphs at pen positions plus the word grouping.
pub(crate) struct LineLayout {
    glyphs: Vec<PlacedGlyph>,
    words: Vec<(String, Vec<usize>)>,
    pub width: i32,
    pub ascent: i32,
    pub descent: i32,
    pub skipped: Vec<char>,
}

pub(crate) fn layout_line(text: &str, face: &dyn GlyphSource, size: u32) -> LineLayout {
    let m = face.metrics(size);
    let mut pen = 0i32;
    let mut glyphs = Vec::new();
    let mut words: Vec<(String, Vec<usize>)> = Vec::new();
    let mut skipped = Vec::new();
    let mut in_word = false;
    let (mut ascent, mut descent) = (m.ascent, m.descent);
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !glyphs.is_empty() {
                pen += m.space_advance;
            }
            in_word = false;
            continue;
        }
        let Some(glyph) = face.glyph(ch, size) else {
            skipped.push(ch);
            continue;
        };
        if !in_word {
            words.push((String::new(), Vec::new()));
            in_word = true;
        }
        let w = words.last_mut().expect("word pushed above");
        w.0.push(ch);
        w.1.push(glyphs.len());
        ascent = ascent.max(-glyph.top);
        descent = descent.max(glyph.top + glyph.height as i32);
        let x = pen + glyph.left;
        pen += glyph.advance;
        glyphs.push(PlacedGlyph { x, glyph });
    }
    let width = glyphs
        .iter()
        .map(|g| g.x + g.glyph.width as i32)
        .max()
        .unwrap_or(0);
    LineLayout {
        glyphs,
        words,
        width,
        ascent,
        descent,
        skipped,
    }
}

/// Draws `line` with its pen origin at `x` and baseline at `baseline`.
/// Ink of luminance `ink` is min-blended so overlapping strokes darken.
pub(crate) fn draw_line(canvas: &mut Raster, line: &LineLayout, x: i32, baseline: i32, ink: u8) -> Vec<WordAnnotation> {
    let mut boxes = Vec::with_capacity(line.glyphs.len());
    for pg in &line.glyphs {
        let g = &pg.glyph;
        let (gx, gy) = (x + pg.x, baseline + g.top);
        for row in 0..g.height {
            let ty = gy + row as i32;
            if ty < 0 || ty >= canvas.height() as i32 {
                continue;
            }
            for col in 0..g.width {
                let tx = gx + col as i32;
                let c = g.coverage[row * g.width + col] as u32;
                if c == 0 || tx < 0 || tx >= canvas.width() as i32 {
                    continue;
                }
                let v = (255 - (c * (255 - ink as u32) + 127) / 255) as u8;
                let cur = canvas.get(tx as usize, ty as usize);
                canvas.set(tx as usize, ty as usize, cur.min(v));
            }
        }
        boxes.push(Rect::from_xywh(gx, gy, g.width as i32, g.height as i32).expect("glyph bitmaps are non-empty"));
    }
    line.words
        .iter()
        .filter_map(|(text, idx)| {
            let chars: Vec<Rect> = idx.iter().map(|&i| boxes[i]).collect();
            WordAnnotation::from_chars(text.clone(), chars)
        })
        .collect()
}

pub(crate) fn check_size(size: u32) -> Result<(), SynthError> {
    if !(MIN_FONT_SIZE..=MAX_FONT_SIZE).contains(&size) {
        return Err(SynthError::FontSize(size));
    }
    Ok(())
}

/// Renders one horizontal line of text on a white tile with a quarter-size margin.
pub fn render_text_tile(text: &str, face: &dyn GlyphSource, size: u32, seed: u64) -> Result<TextTile, SynthError> {
    if text.trim().is_empty() {
        return Err(SynthError::EmptyText);
    }
    check_size(size)?;
    let line = layout_line(text, face, size);
    if line.glyphs.is_empty() {
        return Err(SynthError::NothingDrawable(line.skipped));
    }
    let pad = (size as i32 / 4).max(2);
    let w = line.width + 2 * pad;
    let h = line.ascent + line.descent + 2 * pad;
    let mut image = Raster::new(w as usize, h as usize, 255);
    // ink darkness varies with the seed: 0..=60
    let ink = (super::splitmix64(seed) % 61) as u8;
    let words = draw_line(&mut image, &line, pad, pad + line.ascent, ink);
    Ok(TextTile {
        image,
        words,
        skipped: line.skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::glyphs::BitmapFace;

    #[test]
    fn single_glyph_word() {
        let t = render_text_tile("A", &BitmapFace::regular(), 24, 1).unwrap();
        assert_eq!(t.words.len(), 1);
        assert_eq!(t.words[0].char_boxes.len(), 1);
        assert_eq!(t.words[0].char_boxes[0], t.words[0].bbox);
    }

    #[test]
    fn spaces_split_words() {
        for face in BitmapFace::variants() {
            let t = render_text_tile("A B", &face, 20, 3).unwrap();
            assert_eq!(t.words.len(), 2);
            let (a, b) = (t.words[0].char_boxes[0], t.words[1].char_boxes[0]);
            assert!(a.intersection(&b).is_none());
        }
    }

    #[test]
    fn char_boxes_follow_descenders() {
        let face = BitmapFace::regular();
        let desc = render_text_tile("ygj", &face, 32, 0).unwrap();
        let flat = render_text_tile("aaa", &face, 32, 0).unwrap();
        assert!(desc.words[0].bbox.y1() > flat.words[0].bbox.y1());
    }

    #[test]
    fn boxes_are_tight_and_inside_tile() {
        let t = render_text_tile("Hello, World 42", &BitmapFace::regular(), 16, 9).unwrap();
        let full = Rect::new(0, 0, t.image.width() as i32, t.image.height() as i32).unwrap();
        for w in &t.words {
            assert_eq!(Some(w.bbox), Rect::bounding(&w.char_boxes));
            for c in &w.char_boxes {
                assert!(full.contains(c));
                assert!(c.height() <= 2 * 16);
                // tight: some ink on the first and last row of the box
                let row_ink = |y: i32| (c.x0()..c.x1()).any(|x| t.image.get(x as usize, y as usize) < 255);
                assert!(row_ink(c.y0()) && row_ink(c.y1() - 1));
            }
        }
        assert_eq!(t.words.iter().map(|w| w.text.as_str()).collect::<Vec<_>>(), ["Hello,", "World", "42"]);
    }

    #[test]
    fn missing_glyphs_are_reported() {
        let t = render_text_tile("a\u{263a}b", &BitmapFace::regular(), 16, 0).unwrap();
        assert_eq!(t.skipped, vec!['\u{263a}']);
        assert_eq!(t.words[0].text, "ab");
        assert!(matches!(render_text_tile("   ", &BitmapFace::regular(), 16, 0), Err(SynthError::EmptyText)));
        assert!(matches!(render_text_tile("a", &BitmapFace::regular(), 8, 0), Err(SynthError::FontSize(8))));
    }
}

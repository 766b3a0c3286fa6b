//! OCR engines: an external word-level engine driven through a command
//! template, and a small template-matching recognizer that needs nothing
//! outside this crate.

mod external;
mod reference;
mod tsv;

use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::io::ImageIoError;
use crate::raster::{Raster, Rect};

pub use external::{run_external, run_external_on_raster, ExternalEngineConfig};
pub use reference::{
    build_reference_model, reference_recognize, ReferenceConfig, ReferenceModel, Template, CANONICAL_HEIGHTS,
};
pub use tsv::{parse_tsv, write_tsv, TSV_HEADER};

#[derive(Debug, Error)]
pub enum OcrError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("engine config: {0}")]
    Config(String),
    #[error("could not start `{command}`: {source}")]
    Spawn { command: String, source: io::Error },
    #[error("engine exited with {status}: {stderr}")]
    Exit { status: String, stderr: String },
    #[error("engine timed out after {0} s")]
    Timeout(f64),
    #[error("TSV line {line}: {message}")]
    Tsv { line: usize, message: String },
    #[error("glyph source `{source_name}` lacks characters {missing:?}")]
    MissingGlyphs { source_name: String, missing: Vec<char> },
    #[error(transparent)]
    Image(#[from] ImageIoError),
}

/// One recognized word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrWord {
    pub text: String,
    #[serde(rename = "box")]
    pub rect: Rect,
    /// In `[0, 1]`.
    pub confidence: f64,
}

impl crate::eval::Word for OcrWord {
    fn text(&self) -> &str {
        &self.text
    }
    fn rect(&self) -> Rect {
        self.rect
    }
}

/// White padding added around each region crop before re-recognition.
pub const REGION_PADDING: i32 = 2;

/// Either engine behind one call.
#[derive(Debug, Clone)]
pub enum OcrEngine {
    Reference(Box<ReferenceModel>, ReferenceConfig),
    External(ExternalEngineConfig),
}

impl OcrEngine {
    pub fn reference_default() -> Result<Self, OcrError> {
        let fonts = crate::synth::FontLibrary::bundled();
        let sources: Vec<_> = fonts.all().cloned().collect();
        let model = build_reference_model(&sources, &crate::synth::bundled_charset_string(), &CANONICAL_HEIGHTS)?;
        Ok(Self::Reference(Box::new(model), ReferenceConfig::default()))
    }

    pub fn recognize(&self, page: &Raster) -> Result<Vec<OcrWord>, OcrError> {
        match self {
            Self::Reference(m, cfg) => Ok(reference_recognize(m, page, cfg)),
            Self::External(cfg) => run_external_on_raster(cfg, page),
        }
    }

    /// Recognizes each region separately on a padded white crop and maps
    /// the words back to page coordinates.
    pub fn recognize_regions(&self, page: &Raster, regions: &[Rect]) -> Result<Vec<OcrWord>, OcrError> {
        let mut out = Vec::new();
        for r in regions {
            let Some(r) = r.clip(page.width(), page.height()) else {
                continue;
            };
            let Some(crop) = page.crop(&r) else { continue };
            let p = REGION_PADDING;
            let mut padded = Raster::new(crop.width() + 2 * p as usize, crop.height() + 2 * p as usize, 255);
            padded.blit_min(&crop, p, p);
            for mut w in self.recognize(&padded)? {
                w.rect = w.rect.translate(r.x0() - p, r.y0() - p);
                out.push(w);
            }
        }
        Ok(out)
    }
}

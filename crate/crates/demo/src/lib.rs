//! Browser front end. `DemoState` holds the logic and is tested natively;
//! `Demo` wraps it for JavaScript.

use docmask::detector::{decode_checkpoint, predict_page, Heatmap, UNet};
use docmask::eval::{evaluate_document, DocumentScore, EvalOptions, GtWord};
use docmask::mask::{apply_mask, heatmap_to_mask, MaskConfig};
use docmask::ocr::{OcrEngine, OcrWord};
use docmask::raster::Raster;
use docmask::synth::{compose_document, DocumentSample, FontLibrary, SynthConfig, TextSampler};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Where the heatmap comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatSource {
    /// The page's own ground truth, standing in for a perfect detector.
    GroundTruth,
    Model,
}

#[derive(Debug, Clone, Serialize)]
pub struct ArmResult {
    pub words: Vec<OcrWord>,
    pub score: DocumentScore,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub heat_source: HeatSource,
    pub unmasked: ArmResult,
    pub masked: ArmResult,
    pub ground_truth: Vec<String>,
}

pub struct DemoState {
    fonts: FontLibrary,
    corpus: TextSampler,
    engine: Option<OcrEngine>,
    model: Option<UNet>,
    doc: Option<DocumentSample>,
    heatmap: Option<Heatmap>,
    masked: Option<Raster>,
}

impl Default for DemoState {
    fn default() -> Self {
        Self::new()
    }
}

impl DemoState {
    pub fn new() -> Self {
        Self {
            fonts: FontLibrary::bundled(),
            corpus: TextSampler::default(),
            engine: None,
            model: None,
            doc: None,
            heatmap: None,
            masked: None,
        }
    }

    /// Composes a desk-scale page; returns its word count.
    pub fn synthesize(&mut self, seed: u64, hard_negative_prob: f64) -> Result<usize, String> {
        let cfg = SynthConfig {
            hard_negative_prob,
            ..SynthConfig::desk()
        };
        let doc = compose_document(&cfg, &self.fonts, &self.corpus, seed).map_err(|e| e.to_string())?;
        let n = doc.words.len();
        self.heatmap = None;
        self.masked = None;
        self.doc = Some(doc);
        Ok(n)
    }

    /// Accepts a checkpoint produced by `docmask train`.
    pub fn load_model(&mut self, bytes: &[u8]) -> Result<String, String> {
        let c = decode_checkpoint(bytes).map_err(|e| e.to_string())?;
        let desc = format!("{:?} channels, {} steps", c.model.config().encoder_channels, c.adam.step);
        self.model = Some(c.model);
        self.heatmap = None;
        Ok(desc)
    }

    pub fn page(&self) -> Option<&Raster> {
        self.doc.as_ref().map(|d| &d.image)
    }

    pub fn heat_source(&self) -> HeatSource {
        if self.model.is_some() {
            HeatSource::Model
        } else {
            HeatSource::GroundTruth
        }
    }

    fn ensure_heatmap(&mut self) -> Result<&Heatmap, String> {
        if self.heatmap.is_none() {
            let doc = self.doc.as_ref().ok_or("no page yet")?;
            let hm = match &self.model {
                Some(m) => predict_page(m, &doc.image, 256, 32).map_err(|e| e.to_string())?,
                None => {
                    let data = doc.gt.data().iter().map(|&v| v as f32).collect();
                    Heatmap::new(doc.gt.width(), doc.gt.height(), data).ok_or("empty page")?
                }
            };
            self.heatmap = Some(hm);
        }
        Ok(self.heatmap.as_ref().expect("just set"))
    }

    pub fn heatmap_image(&mut self) -> Result<Raster, String> {
        Ok(self.ensure_heatmap()?.to_raster())
    }

    /// Thresholds and dilates the heatmap and blanks everything outside it.
    pub fn mask(&mut self, threshold: f32, dilation: usize) -> Result<&Raster, String> {
        let cfg = MaskConfig {
            threshold,
            dilation_radius: dilation,
            ..MaskConfig::default()
        };
        cfg.validate().map_err(|e| e.to_string())?;
        let mask = heatmap_to_mask(self.ensure_heatmap()?, &cfg);
        let page = self.page().ok_or("no page yet")?;
        self.masked = Some(apply_mask(page, &mask, &cfg).map_err(|e| e.to_string())?);
        Ok(self.masked.as_ref().expect("just set"))
    }

    /// Recognizes the page with and without the current mask and scores both.
    pub fn compare(&mut self) -> Result<Comparison, String> {
        if self.masked.is_none() {
            self.mask(0.5, 2)?;
        }
        if self.engine.is_none() {
            self.engine = Some(OcrEngine::reference_default().map_err(|e| e.to_string())?);
        }
        let engine = self.engine.as_ref().expect("just set");
        let doc = self.doc.as_ref().ok_or("no page yet")?;
        let gt: Vec<GtWord> = doc
            .words
            .iter()
            .map(|w| GtWord {
                text: w.text.clone(),
                rect: w.bbox,
            })
            .collect();
        let opts = EvalOptions::default();
        let arm = |page: &Raster| -> Result<ArmResult, String> {
            let words = engine.recognize(page).map_err(|e| e.to_string())?;
            let score = evaluate_document("page", &words, &gt, &opts);
            Ok(ArmResult { words, score })
        };
        Ok(Comparison {
            heat_source: self.heat_source(),
            unmasked: arm(&doc.image)?,
            masked: arm(self.masked.as_ref().expect("masked above"))?,
            ground_truth: doc.words.iter().map(|w| w.text.clone()).collect(),
        })
    }
}

/// Gray to RGBA for a canvas `ImageData`.
pub fn to_rgba(r: &Raster) -> Vec<u8> {
    r.data().iter().flat_map(|&v| [v, v, v, 255]).collect()
}

#[wasm_bindgen]
pub struct Demo {
    state: DemoState,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new() -> Demo {
        Demo { state: DemoState::new() }
    }

    pub fn synthesize(&mut self, seed: u32, hard_negative_prob: f64) -> Result<usize, JsError> {
        self.state.synthesize(seed as u64, hard_negative_prob).map_err(|e| JsError::new(&e))
    }

    pub fn load_model(&mut self, bytes: &[u8]) -> Result<String, JsError> {
        self.state.load_model(bytes).map_err(|e| JsError::new(&e))
    }

    pub fn width(&self) -> usize {
        self.state.page().map_or(0, Raster::width)
    }

    pub fn height(&self) -> usize {
        self.state.page().map_or(0, Raster::height)
    }

    pub fn page_rgba(&self) -> Vec<u8> {
        self.state.page().map(to_rgba).unwrap_or_default()
    }

    pub fn heatmap_rgba(&mut self) -> Result<Vec<u8>, JsError> {
        self.state.heatmap_image().map(|r| to_rgba(&r)).map_err(|e| JsError::new(&e))
    }

    pub fn mask_rgba(&mut self, threshold: f32, dilation: usize) -> Result<Vec<u8>, JsError> {
        self.state.mask(threshold, dilation).map(to_rgba).map_err(|e| JsError::new(&e))
    }

    /// JSON of both arms' words and scores.
    pub fn compare(&mut self) -> Result<String, JsError> {
        let c = self.state.compare().map_err(|e| JsError::new(&e))?;
        serde_json::to_string(&c).map_err(|e| JsError::new(&e.to_string()))
    }
}

impl Default for Demo {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ground_truth_mask_flow() {
        let mut s = DemoState::new();
        assert!(s.mask(0.5, 2).is_err());
        let n = s.synthesize(4, 0.5).unwrap();
        assert!(n > 0);
        assert_eq!(s.heat_source(), HeatSource::GroundTruth);
        let masked = s.mask(0.5, 2).unwrap().clone();
        assert_eq!(masked.width(), 256);
        let c = s.compare().unwrap();
        assert_eq!(c.ground_truth.len(), n);
        assert!(c.masked.score.edit_score >= c.unmasked.score.edit_score - 1e-9);
    }

    #[test]
    fn dilation_zero_keeps_less_ink() {
        let mut s = DemoState::new();
        s.synthesize(9, 0.0).unwrap();
        let white = |r: &Raster| r.data().iter().filter(|&&v| v == 255).count();
        let tight = white(s.mask(0.5, 0).unwrap());
        let loose = white(s.mask(0.5, 4).unwrap());
        assert!(tight >= loose);
    }

    #[test]
    fn bad_checkpoint_rejected() {
        assert!(DemoState::new().load_model(b"nope").is_err());
    }

    #[test]
    fn rgba_layout() {
        let r = Raster::from_vec(2, 1, vec![0, 200]).unwrap();
        assert_eq!(to_rgba(&r), vec![0, 0, 0, 255, 200, 200, 200, 255]);
    }
}

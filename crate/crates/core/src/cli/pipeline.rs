//! The full flow: detect, mask, recognize; every page is also recognized
//! unmasked so the report carries both arms side by side.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::detector::{predict_page, DetectorError, Heatmap, TrainConfig, UNet, UNetConfig};
use crate::eval::{evaluate_document, EvalOptions, EvalReport, GtWord};
use crate::mask::{apply_mask, boxes_from_mask, heatmap_to_mask, split_oversized, splice_words, threshold_heatmap, MaskConfig};
use crate::ocr::{ExternalEngineConfig, OcrEngine, OcrError, OcrWord, ReferenceConfig};
use crate::raster::{BinaryMap, Raster, Rect};
use crate::synth::SynthConfig;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EngineConfig {
    #[default]
    Reference,
    External(ExternalEngineConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceConfig {
    pub tile: usize,
    pub overlap: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self { tile: 256, overlap: 32 }
    }
}

/// Size and base seed of a generated batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatchConfig {
    pub count: usize,
    pub seed: u64,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self { count: 100, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub version: u32,
    pub synth: SynthConfig,
    pub batch: BatchConfig,
    pub train: TrainConfig,
    pub unet: UNetConfig,
    pub mask: MaskConfig,
    pub inference: InferenceConfig,
    pub engine: EngineConfig,
    pub reference: ReferenceConfig,
    pub eval: EvalOptions,
    pub paths: PathsConfig,
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            synth: SynthConfig::default(),
            batch: BatchConfig::default(),
            train: TrainConfig::default(),
            unet: UNetConfig::default(),
            mask: MaskConfig::default(),
            inference: InferenceConfig::default(),
            engine: EngineConfig::Reference,
            reference: ReferenceConfig::default(),
            eval: EvalOptions::default(),
            paths: PathsConfig::default(),
            workers: 1,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.version != CONFIG_VERSION {
            return Err(format!("config version {} unsupported (expected {CONFIG_VERSION})", self.version));
        }
        self.synth.validate().map_err(|e| e.to_string())?;
        self.unet.validate().map_err(|e| e.to_string())?;
        self.train.validate(&self.unet).map_err(|e| e.to_string())?;
        self.mask.validate().map_err(|e| e.to_string())?;
        if let EngineConfig::External(e) = &self.engine {
            e.validate().map_err(|e| e.to_string())?;
        }
        if !(0.0..=1.0).contains(&self.reference.min_confidence) {
            return Err("reference.min_confidence must lie in [0, 1]".into());
        }
        if self.inference.tile == 0 || self.inference.overlap >= self.inference.tile {
            return Err("inference tile must be positive and larger than the overlap".into());
        }
        if self.workers == 0 {
            return Err("workers must be at least 1".into());
        }
        Ok(())
    }

    pub fn build_engine(&self) -> Result<OcrEngine, OcrError> {
        match &self.engine {
            EngineConfig::Reference => match OcrEngine::reference_default()? {
                OcrEngine::Reference(m, _) => Ok(OcrEngine::Reference(m, self.reference.clone())),
                other => Ok(other),
            },
            EngineConfig::External(e) => Ok(OcrEngine::External(e.clone())),
        }
    }
}

/// A page with its ground-truth words.
#[derive(Debug, Clone)]
pub struct PipelineDoc {
    pub name: String,
    pub image: Raster,
    pub words: Vec<GtWord>,
}

/// Everything produced for one page.
#[derive(Debug, Clone)]
pub struct PageResult {
    pub heatmap: Heatmap,
    pub mask: BinaryMap,
    pub masked: Raster,
    pub detector_boxes: Vec<Rect>,
    pub unmasked_words: Vec<OcrWord>,
    pub masked_words: Vec<OcrWord>,
    /// Regions sent back to the engine after oversized words were split.
    pub reprocessed: Vec<Rect>,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Ocr(#[from] OcrError),
    #[error("{0}")]
    Other(String),
}

/// Drops oversized words, re-recognizes the detector boxes they covered
/// and splices the results back in reading order.
pub fn resolve_oversized(
    engine: &OcrEngine,
    page: &Raster,
    words: Vec<OcrWord>,
    detector_boxes: &[Rect],
    cfg: &MaskConfig,
) -> Result<(Vec<OcrWord>, Vec<Rect>), OcrError> {
    let (kept, regions) = split_oversized(&words, detector_boxes, cfg);
    if regions.is_empty() {
        return Ok((kept, regions));
    }
    let recovered = engine.recognize_regions(page, &regions)?;
    Ok((splice_words(kept, recovered), regions))
}

/// Recognizes the page as is, then detects, masks and recognizes again.
/// Oversized words from the masked pass are split into detector regions
/// and re-recognized.
pub fn process_page(model: &UNet, engine: &OcrEngine, page: &Raster, cfg: &PipelineConfig) -> Result<PageResult, PipelineError> {
    let unmasked_words = engine.recognize(page)?;
    let heatmap = predict_page(model, page, cfg.inference.tile, cfg.inference.overlap)?;
    let mask = heatmap_to_mask(&heatmap, &cfg.mask);
    let masked = apply_mask(page, &mask, &cfg.mask).map_err(|e| PipelineError::Other(e.to_string()))?;
    let detector_boxes = boxes_from_mask(&threshold_heatmap(&heatmap, cfg.mask.threshold), &cfg.mask);
    let words = engine.recognize(&masked)?;
    let (masked_words, reprocessed) = resolve_oversized(engine, &masked, words, &detector_boxes, &cfg.mask)?;
    Ok(PageResult {
        heatmap,
        mask,
        masked,
        detector_boxes,
        unmasked_words,
        masked_words,
        reprocessed,
    })
}

/// Both arms of the comparison on the same pages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairedReport {
    pub version: u32,
    pub config: PipelineConfig,
    pub masked: EvalReport,
    pub unmasked: EvalReport,
    /// Masked minus unmasked mean Edit Score.
    pub edit_score_gain: f64,
    /// Masked minus unmasked micro F1.
    pub f1_gain: f64,
}

pub fn run_pipeline(model: &UNet, engine: &OcrEngine, docs: &[PipelineDoc], cfg: &PipelineConfig) -> Result<PairedReport, PipelineError> {
    let one = |d: &PipelineDoc| {
        let r = process_page(model, engine, &d.image, cfg)?;
        Ok::<_, PipelineError>((
            evaluate_document(&d.name, &r.masked_words, &d.words, &cfg.eval),
            evaluate_document(&d.name, &r.unmasked_words, &d.words, &cfg.eval),
        ))
    };
    let scores: Vec<_> = map_ordered(docs, cfg.workers, one)?;
    let (masked, unmasked): (Vec<_>, Vec<_>) = scores.into_iter().unzip();
    let masked = EvalReport::new(cfg.eval, masked);
    let unmasked = EvalReport::new(cfg.eval, unmasked);
    Ok(PairedReport {
        version: CONFIG_VERSION,
        config: cfg.clone(),
        edit_score_gain: masked.aggregate.mean_edit_score - unmasked.aggregate.mean_edit_score,
        f1_gain: masked.aggregate.f1 - unmasked.aggregate.f1,
        masked,
        unmasked,
    })
}

/// Maps in a worker pool; results keep input order.
pub(crate) fn map_ordered<T: Sync, R: Send, E: Send>(
    items: &[T],
    workers: usize,
    f: impl Fn(&T) -> Result<R, E> + Sync + Send,
) -> Result<Vec<R>, E> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if workers > 1 {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
                return pool.install(|| items.par_iter().map(&f).collect());
            }
        }
    }
    let _ = workers;
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let c = PipelineConfig::default();
        let json = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(PipelineConfig::from_json(&json).unwrap(), c);
        assert!(json.contains("\"engine\": \"reference\""));
    }

    #[test]
    fn misspelled_key_is_rejected() {
        let err = PipelineConfig::from_json(r#"{"version": 1, "mask": {"treshold": 0.4}}"#).unwrap_err();
        assert!(err.contains("treshold"), "{err}");
        assert!(PipelineConfig::from_json(r#"{"versoin": 1}"#).is_err());
    }

    #[test]
    fn version_and_engine_checked() {
        assert!(PipelineConfig::from_json(r#"{"version": 2}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"engine": {"external": {"command_template": "ocr {input}"}}}"#).is_err());
        let ok = PipelineConfig::from_json(r#"{"engine": {"external": {"command_template": "ocr {input} {output}"}}}"#).unwrap();
        assert!(matches!(ok.engine, EngineConfig::External(_)));
    }
}

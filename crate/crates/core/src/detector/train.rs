use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::{loss_and_grad, DetectorError, UNet, UNetConfig};
use crate::raster::{BinaryMap, Raster};
use crate::synth::{load_sample, splitmix64, DatasetManifest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_betas: [f64; 2],
    pub adam_eps: f64,
    pub batch_size: usize,
    pub steps: u64,
    pub crop_size: usize,
    pub dice_eps: f64,
    pub seed: u64,
    /// Cosine decay of the learning rate; constant when absent.
    pub lr_decay: Option<LrDecay>,
}

/// The rate falls from `learning_rate` to `final_fraction * learning_rate`
/// along a half cosine over the first `over_steps` global steps and stays
/// there afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrDecay {
    pub over_steps: u64,
    pub final_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            adam_betas: [0.9, 0.999],
            adam_eps: 1e-8,
            batch_size: 4,
            steps: 1000,
            crop_size: 256,
            dice_eps: 1.0,
            seed: 0,
            lr_decay: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, unet: &UNetConfig) -> Result<(), DetectorError> {
        let err = |m: String| Err(DetectorError::TrainConfig(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return err(format!("learning_rate {} must be positive", self.learning_rate));
        }
        let [b1, b2] = self.adam_betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return err(format!("adam_betas {:?} must lie in [0, 1)", self.adam_betas));
        }
        if self.adam_eps <= 0.0 || self.dice_eps <= 0.0 {
            return err("adam_eps and dice_eps must be positive".into());
        }
        if self.batch_size == 0 {
            return err("batch_size must be at least 1".into());
        }
        if let Some(d) = self.lr_decay {
            if d.over_steps == 0 || !(0.0..=1.0).contains(&d.final_fraction) {
                return err(format!("lr_decay {d:?} needs over_steps > 0 and final_fraction in [0, 1]"));
            }
        }
        let d = unet.divisor();
        if self.crop_size == 0 || self.crop_size % d != 0 {
            return err(format!("crop_size {} must be a positive multiple of {d}", self.crop_size));
        }
        Ok(())
    }
}

impl TrainConfig {
    /// Learning rate for the update that follows `step` completed updates.
    pub fn lr_at(&self, step: u64) -> f64 {
        match self.lr_decay {
            None => self.learning_rate,
            Some(d) => {
                let t = (step as f64 / d.over_steps as f64).min(1.0);
                let f = d.final_fraction + (1.0 - d.final_fraction) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos());
                self.learning_rate * f
            }
        }
    }
}

/// ADAM first and second moments plus the number of updates applied.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f32], grad: &[f32], cfg: &TrainConfig) {
        let lr = cfg.lr_at(self.step);
        self.step += 1;
        let [b1, b2] = cfg.adam_betas;
        let t = self.step as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let step = (lr * c2.sqrt() / c1) as f32;
        let eps = (cfg.adam_eps * c2.sqrt()) as f32;
        let (b1, b2) = (b1 as f32, b2 as f32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            params[i] -= step * self.m[i] / (self.v[i].sqrt() + eps);
        }
    }
}

/// Everything recorded about how a checkpoint was produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub loss_curve: Vec<f64>,
    pub dataset_hash: Option<String>,
    pub train_config: Option<TrainConfig>,
}

#[derive(Debug, Clone)]
pub struct TrainSample {
    pub image: Raster,
    pub gt: BinaryMap,
}

/// Copies a `crop x crop` window starting at `(x0, y0)`; outside the
/// source, images read as white and GT as background.
fn crop_into(s: &TrainSample, x0: usize, y0: usize, crop: usize, img: &mut Vec<f32>, gt: &mut Vec<f32>) {
    let (w, h) = (s.image.width(), s.image.height());
    for y in y0..y0 + crop {
        for x in x0..x0 + crop {
            if x < w && y < h {
                img.push(s.image.get(x, y) as f32 / 255.0);
                gt.push(s.gt.get(x, y) as u8 as f32);
            } else {
                img.push(1.0);
                gt.push(0.0);
            }
        }
    }
}

/// Trains on in-memory samples. Passing a checkpoint resumes from its
/// weights and optimizer state. Each step's crops depend only on the seed
/// and the global step index, so a resumed run continues exactly where an
/// uninterrupted one would be.
pub fn train_on_samples(
    samples: &[TrainSample],
    tcfg: &TrainConfig,
    ucfg: &UNetConfig,
    resume: Option<Checkpoint>,
    mut progress: impl FnMut(u64, f64),
) -> Result<Checkpoint, DetectorError> {
    ucfg.validate()?;
    tcfg.validate(ucfg)?;
    if samples.len() < tcfg.batch_size {
        return Err(DetectorError::TooFewSamples {
            found: samples.len(),
            need: tcfg.batch_size,
        });
    }
    let mut ckpt = match resume {
        Some(c) => {
            if c.model.config() != ucfg {
                return Err(DetectorError::Config("resume checkpoint has a different network config".into()));
            }
            c
        }
        None => {
            let model = UNet::init(ucfg.clone(), tcfg.seed)?;
            let n = model.params().len();
            Checkpoint {
                model,
                adam: AdamState::new(n),
                meta: TrainMeta::default(),
            }
        }
    };
    ckpt.meta.train_config = Some(tcfg.clone());
    let crop = tcfg.crop_size;
    let b = tcfg.batch_size;
    for _ in 0..tcfg.steps {
        let step = ckpt.adam.step;
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(tcfg.seed ^ splitmix64(step)));
        let mut img = Vec::with_capacity(b * crop * crop);
        let mut gt = Vec::with_capacity(b * crop * crop);
        for _ in 0..b {
            let s = &samples[rng.gen_range(0..samples.len())];
            let x0 = rng.gen_range(0..=s.image.width().saturating_sub(crop));
            let y0 = rng.gen_range(0..=s.image.height().saturating_sub(crop));
            crop_into(s, x0, y0, crop, &mut img, &mut gt);
        }
        let (loss, grad) = loss_and_grad(ucfg, ckpt.model.params(), &img, &gt, b, crop, crop, tcfg.dice_eps)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(DetectorError::Diverged(step + 1));
        }
        let mut params = std::mem::take(&mut ckpt.model.params);
        ckpt.adam.update(&mut params, &grad, tcfg);
        ckpt.model.params = params;
        ckpt.meta.loss_curve.push(loss);
        progress(ckpt.adam.step, loss);
    }
    Ok(ckpt)
}

/// Loads every sample of a synthesized dataset and trains on it.
pub fn train(
    tcfg: &TrainConfig,
    ucfg: &UNetConfig,
    manifest: &Path,
    resume: Option<Checkpoint>,
    progress: impl FnMut(u64, f64),
) -> Result<Checkpoint, DetectorError> {
    let m = DatasetManifest::load(manifest)?;
    let samples = m
        .entries
        .iter()
        .map(|e| load_sample(&m, e).map(|(image, gt, _)| TrainSample { image, gt }))
        .collect::<Result<Vec<_>, _>>()?;
    let mut ckpt = train_on_samples(&samples, tcfg, ucfg, resume, progress)?;
    ckpt.meta.dataset_hash = Some(m.config_hash.clone());
    Ok(ckpt)
}

/// `step,loss` rows, one per recorded step.
pub fn write_loss_csv(path: &Path, curve: &[f64]) -> Result<(), DetectorError> {
    let io = |e| DetectorError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    writeln!(f, "step,loss").map_err(io)?;
    for (i, l) in curve.iter().enumerate() {
        writeln!(f, "{},{l}", i + 1).map_err(io)?;
    }
    f.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Rect;

    fn toy_samples() -> Vec<TrainSample> {
        (0..3)
            .map(|k| {
                let mut image = Raster::new(32, 32, 255);
                let mut gt = BinaryMap::zeros(32, 32);
                let r = Rect::new(4 + k, 8, 20 + k, 14).unwrap();
                for y in 9..13 {
                    for x in (5 + k)..(19 + k) {
                        image.set(x as usize, y, 20);
                    }
                }
                gt.fill_rect(&r);
                TrainSample { image, gt }
            })
            .collect()
    }

    fn cfgs() -> (TrainConfig, UNetConfig) {
        (
            TrainConfig {
                learning_rate: 1e-3,
                batch_size: 2,
                steps: 6,
                crop_size: 16,
                seed: 4,
                ..TrainConfig::default()
            },
            UNetConfig::with_channels(&[2, 4, 8]),
        )
    }

    #[test]
    fn default_learning_rate() {
        assert_eq!(TrainConfig::default().learning_rate, 1e-5);
        let t: TrainConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(t.learning_rate, 1e-5);
        assert_eq!(t.adam_betas, [0.9, 0.999]);
    }

    #[test]
    fn repeated_runs_give_identical_curves() {
        let (t, u) = cfgs();
        let a = train_on_samples(&toy_samples(), &t, &u, None, |_, _| {}).unwrap();
        let b = train_on_samples(&toy_samples(), &t, &u, None, |_, _| {}).unwrap();
        assert_eq!(a.meta.loss_curve, b.meta.loss_curve);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn resuming_matches_uninterrupted_run() {
        let (t, u) = cfgs();
        let full = train_on_samples(&toy_samples(), &t, &u, None, |_, _| {}).unwrap();
        let half = TrainConfig { steps: 3, ..t.clone() };
        let first = train_on_samples(&toy_samples(), &half, &u, None, |_, _| {}).unwrap();
        let resumed = train_on_samples(&toy_samples(), &half, &u, Some(first), |_, _| {}).unwrap();
        assert_eq!(resumed.meta.loss_curve, full.meta.loss_curve);
        assert_eq!(resumed.model, full.model);
        assert_eq!(resumed.adam, full.adam);
    }

    #[test]
    fn cosine_decay_endpoints() {
        let t = TrainConfig {
            learning_rate: 1e-3,
            lr_decay: Some(LrDecay { over_steps: 100, final_fraction: 0.1 }),
            ..TrainConfig::default()
        };
        assert_eq!(t.lr_at(0), 1e-3);
        assert!((t.lr_at(50) - 0.55e-3).abs() < 1e-12);
        assert!((t.lr_at(100) - 1e-4).abs() < 1e-12);
        assert_eq!(t.lr_at(500), t.lr_at(100));
        assert_eq!(TrainConfig::default().lr_at(7), 1e-5);
    }

    #[test]
    fn resuming_with_decay_matches_uninterrupted_run() {
        let (mut t, u) = cfgs();
        t.lr_decay = Some(LrDecay { over_steps: 5, final_fraction: 0.2 });
        let full = train_on_samples(&toy_samples(), &t, &u, None, |_, _| {}).unwrap();
        let half = TrainConfig { steps: 3, ..t.clone() };
        let first = train_on_samples(&toy_samples(), &half, &u, None, |_, _| {}).unwrap();
        let resumed = train_on_samples(&toy_samples(), &half, &u, Some(first), |_, _| {}).unwrap();
        assert_eq!(resumed.model, full.model);
    }

    #[test]
    fn invalid_crop_is_rejected() {
        let (mut t, u) = cfgs();
        t.crop_size = 10;
        assert!(train_on_samples(&toy_samples(), &t, &u, None, |_, _| {}).is_err());
    }

    #[test]
    fn loss_csv_has_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("loss.csv");
        write_loss_csv(&p, &[0.5, 0.25]).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "step,loss\n1,0.5\n2,0.25\n");
    }
}

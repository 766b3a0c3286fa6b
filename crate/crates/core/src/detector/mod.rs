//! U-Net text detector: forward pass, dice loss, ADAM training, checkpoints
//! and tiled full-page inference.

mod checkpoint;
mod layers;
mod net;
pub mod real;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use net::{Layout, ParamSpec};
pub use train::{train, train_on_samples, write_loss_csv, AdamState, LrDecay, TrainConfig, TrainMeta, TrainSample};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::Raster;
use net::{check_params, dice_with_grad, Net};
use real::Real;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("invalid network config: {0}")]
    Config(String),
    #[error("invalid training config: {0}")]
    TrainConfig(String),
    #[error("tensor `{tensor}` has shape {found:?}, expected {expected:?}")]
    Shape {
        tensor: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("tensor data length {len} does not match shape {shape:?}")]
    TensorLength { shape: Vec<usize>, len: usize },
    #[error("tensor contains a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("loss became non-finite at step {0}")]
    Diverged(u64),
    #[error("dataset has {found} samples, need at least {need}")]
    TooFewSamples { found: usize, need: usize },
    #[error("tile {tile} and overlap {overlap} invalid (tile must be a positive multiple of {divisor}, overlap < tile)")]
    Tiling { tile: usize, overlap: usize, divisor: usize },
    #[error(transparent)]
    Synth(#[from] crate::synth::SynthError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UNetConfig {
    pub levels: usize,
    pub encoder_channels: Vec<usize>,
    pub convs_per_level: usize,
    pub kernel: usize,
    pub input_channels: usize,
    pub output_channels: usize,
}

impl Default for UNetConfig {
    fn default() -> Self {
        Self {
            levels: 4,
            encoder_channels: vec![32, 64, 128, 256],
            convs_per_level: 2,
            kernel: 3,
            input_channels: 1,
            output_channels: 1,
        }
    }
}

impl UNetConfig {
    pub fn with_channels(channels: &[usize]) -> Self {
        Self {
            levels: channels.len(),
            encoder_channels: channels.to_vec(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DetectorError> {
        let err = |m: String| Err(DetectorError::Config(m));
        if self.levels == 0 || self.levels != self.encoder_channels.len() {
            return err(format!(
                "levels = {} but {} encoder channel counts given",
                self.levels,
                self.encoder_channels.len()
            ));
        }
        if self.encoder_channels[0] == 0 || self.encoder_channels.windows(2).any(|p| p[1] <= p[0]) {
            return err(format!("encoder_channels {:?} must be positive and strictly increasing", self.encoder_channels));
        }
        if self.kernel != 3 {
            return err(format!("only 3x3 kernels are supported, got {}", self.kernel));
        }
        if self.convs_per_level == 0 || self.input_channels == 0 || self.output_channels == 0 {
            return err("convs_per_level, input_channels and output_channels must be positive".into());
        }
        Ok(())
    }

    /// Spatial sizes must be multiples of this.
    pub fn divisor(&self) -> usize {
        1 << (self.levels - 1)
    }
}

/// Dense `f32` tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, DetectorError> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(DetectorError::TensorLength { shape, len: data.len() });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(DetectorError::NonFinite(i));
        }
        Ok(Self { shape, data })
    }
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![0.0; n] }
    }
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }
    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// `[1, 1, h, w]` tensor with pixels scaled to `[0, 1]`.
    pub fn from_raster(img: &Raster) -> Self {
        Self {
            shape: vec![1, 1, img.height(), img.width()],
            data: img.data().iter().map(|&v| v as f32 / 255.0).collect(),
        }
    }
}

/// Network weights with their config and layout.
#[derive(Debug, Clone, PartialEq)]
pub struct UNet {
    config: UNetConfig,
    layout: Layout,
    params: Vec<f32>,
}

impl UNet {
    /// Fan-in scaled uniform weights, zero biases.
    pub fn init(config: UNetConfig, seed: u64) -> Result<Self, DetectorError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0f32; layout.total];
        for s in &layout.specs {
            if s.name.ends_with(".bias") {
                continue;
            }
            let bound = (6.0 / s.fan_in() as f64).sqrt();
            for v in &mut params[s.offset..s.offset + s.len()] {
                *v = rng.gen_range(-bound..bound) as f32;
            }
        }
        Ok(Self { config, layout, params })
    }

    pub fn zeros(config: UNetConfig) -> Result<Self, DetectorError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let params = vec![0.0; layout.total];
        Ok(Self { config, layout, params })
    }

    pub fn from_params(config: UNetConfig, params: Vec<f32>) -> Result<Self, DetectorError> {
        config.validate()?;
        let layout = Layout::new(&config);
        check_params(&layout, params.len())?;
        Ok(Self { config, layout, params })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.config
    }
    pub fn layout(&self) -> &Layout {
        &self.layout
    }
    pub fn params(&self) -> &[f32] {
        &self.params
    }
    pub fn params_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }

    /// Copy of one named weight tensor.
    pub fn tensor(&self, name: &str) -> Option<Tensor> {
        let s = self.layout.find(name)?;
        Some(Tensor {
            shape: s.shape.clone(),
            data: self.params[s.offset..s.offset + s.len()].to_vec(),
        })
    }

    fn net(&self) -> Net<'_> {
        Net {
            cfg: &self.config,
            layout: &self.layout,
        }
    }

    fn check_input(&self, shape: &[usize]) -> Result<(usize, usize, usize), DetectorError> {
        let d = self.config.divisor();
        match *shape {
            [b, c, h, w] if c == self.config.input_channels && h > 0 && w > 0 && h % d == 0 && w % d == 0 => {
                Ok((b, h, w))
            }
            _ => Err(DetectorError::Shape {
                tensor: "input".into(),
                expected: vec![shape.first().copied().unwrap_or(1), self.config.input_channels, d, d],
                found: shape.to_vec(),
            }),
        }
    }

    /// Probabilities `[batch, output_channels, h, w]` for an input
    /// `[batch, input_channels, h, w]` with `h` and `w` divisible by
    /// `2^(levels - 1)`.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor, DetectorError> {
        let (b, h, w) = self.check_input(&input.shape)?;
        let per = self.config.input_channels * h * w;
        let run = |i: usize| self.net().forward(&self.params, &input.data[i * per..(i + 1) * per], h, w, false).0;
        #[cfg(feature = "parallel")]
        let outs: Vec<Vec<f32>> = {
            use rayon::prelude::*;
            (0..b).into_par_iter().map(run).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let outs: Vec<Vec<f32>> = (0..b).map(run).collect();
        Ok(Tensor {
            shape: vec![b, self.config.output_channels, h, w],
            data: outs.concat(),
        })
    }
}

/// Forward pass of `model` on `image`.
pub fn unet_forward(model: &UNet, image: &Tensor) -> Result<Tensor, DetectorError> {
    model.forward(image)
}

/// `1 - (2 sum(p g) + eps) / (sum p + sum g + eps)`.
pub fn dice_loss(pred: &Tensor, gt: &Tensor, eps: f64) -> Result<f64, DetectorError> {
    if pred.shape != gt.shape {
        return Err(DetectorError::Shape {
            tensor: "gt".into(),
            expected: pred.shape.clone(),
            found: gt.shape.clone(),
        });
    }
    Ok(dice_with_grad(&pred.data, &gt.data, eps).0)
}

/// Mean per-sample dice loss over a batch and its gradient with respect to
/// every parameter. `images` and `gts` hold `batch` samples of `h * w`
/// values each (one input and one output channel). Per-sample gradients are
/// summed in index order, so the result does not depend on thread count.
#[allow(clippy::too_many_arguments)]
pub fn loss_and_grad<T: Real>(
    config: &UNetConfig,
    params: &[T],
    images: &[T],
    gts: &[T],
    batch: usize,
    h: usize,
    w: usize,
    dice_eps: f64,
) -> Result<(f64, Vec<T>), DetectorError> {
    config.validate()?;
    if config.input_channels != 1 || config.output_channels != 1 {
        return Err(DetectorError::Config("training expects one input and one output channel".into()));
    }
    let layout = Layout::new(config);
    check_params(&layout, params.len())?;
    let d = config.divisor();
    let hw = h * w;
    if h % d != 0 || w % d != 0 || images.len() != batch * hw || gts.len() != batch * hw {
        return Err(DetectorError::Shape {
            tensor: "batch".into(),
            expected: vec![batch, 1, h, w],
            found: vec![images.len(), gts.len()],
        });
    }
    let net = Net {
        cfg: config,
        layout: &layout,
    };
    let scale = T::from_f64(1.0 / batch as f64);
    let one = |i: usize| {
        let (_, tape) = net.forward(params, &images[i * hw..(i + 1) * hw], h, w, true);
        let tape = tape.expect("tape requested");
        let (loss, dprobs) = dice_with_grad(&tape.probs, &gts[i * hw..(i + 1) * hw], dice_eps);
        let dprobs: Vec<T> = dprobs.into_iter().map(|g| g * scale).collect();
        let mut grad = vec![T::ZERO; layout.total];
        net.backward(params, tape, &dprobs, &mut grad);
        (loss, grad)
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<(f64, Vec<T>)> = {
        use rayon::prelude::*;
        (0..batch).into_par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<(f64, Vec<T>)> = (0..batch).map(one).collect();
    let mut grad = vec![T::ZERO; layout.total];
    let mut loss = 0.0;
    for (l, g) in parts {
        loss += l;
        grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    Ok((loss / batch as f64, grad))
}

/// Per-pixel probability map.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Heatmap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Option<Self> {
        (width * height == data.len() && width > 0 && height > 0).then_some(Self { width, height, data })
    }
    pub fn filled(width: usize, height: usize, v: f32) -> Self {
        Self {
            width,
            height,
            data: vec![v; width * height],
        }
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Intensity rendering: probability 1 is white.
    pub fn to_raster(&self) -> Raster {
        let data = self.data.iter().map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        Raster::from_vec(self.width, self.height, data).expect("same dims")
    }
}

/// Tile origins along one axis covering `len` with stride `tile - overlap`.
fn tile_starts(len: usize, tile: usize, overlap: usize) -> Vec<usize> {
    let stride = tile - overlap;
    let mut starts = vec![0];
    while starts.last().unwrap() + tile < len {
        starts.push(starts.last().unwrap() + stride);
    }
    starts
}

/// Full-page inference: pads with white to the tile grid, runs each tile,
/// averages overlapping predictions, crops back to the page size.
pub fn predict_page(model: &UNet, page: &Raster, tile: usize, overlap: usize) -> Result<Heatmap, DetectorError> {
    let d = model.config.divisor();
    if tile == 0 || tile % d != 0 || overlap >= tile {
        return Err(DetectorError::Tiling {
            tile,
            overlap,
            divisor: d,
        });
    }
    let (w, h) = (page.width(), page.height());
    let xs = tile_starts(w, tile, overlap);
    let ys = tile_starts(h, tile, overlap);
    let (pw, ph) = (xs.last().unwrap() + tile, ys.last().unwrap() + tile);
    let mut padded = vec![1.0f32; pw * ph];
    for y in 0..h {
        for x in 0..w {
            padded[y * pw + x] = page.get(x, y) as f32 / 255.0;
        }
    }
    let origins: Vec<(usize, usize)> = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
    let run = |&(x0, y0): &(usize, usize)| {
        let mut input = Vec::with_capacity(tile * tile);
        for y in y0..y0 + tile {
            input.extend_from_slice(&padded[y * pw + x0..y * pw + x0 + tile]);
        }
        model.net().forward(&model.params, &input, tile, tile, false).0
    };
    #[cfg(feature = "parallel")]
    let outs: Vec<Vec<f32>> = {
        use rayon::prelude::*;
        origins.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outs: Vec<Vec<f32>> = origins.iter().map(run).collect();

    let mut sum = vec![0f32; pw * ph];
    let mut count = vec![0u16; pw * ph];
    for (&(x0, y0), out) in origins.iter().zip(&outs) {
        for ty in 0..tile {
            let row = (y0 + ty) * pw + x0;
            for tx in 0..tile {
                sum[row + tx] += out[ty * tile + tx];
                count[row + tx] += 1;
            }
        }
    }
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let i = y * pw + x;
            data.push(sum[i] / count[i] as f32);
        }
    }
    Ok(Heatmap {
        width: w,
        height: h,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> UNetConfig {
        UNetConfig::with_channels(&[2, 4, 8, 16])
    }

    #[test]
    fn zero_network_outputs_one_half() {
        let m = UNet::zeros(tiny()).unwrap();
        let out = m.forward(&Tensor::new(vec![1, 1, 16, 24], vec![0.3; 384]).unwrap()).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn forward_keeps_shape_and_range() {
        let m = UNet::init(UNetConfig::with_channels(&[4, 8, 16, 32]), 1).unwrap();
        let x: Vec<f32> = (0..2 * 64 * 64).map(|i| ((i * 31) % 255) as f32 / 255.0).collect();
        let out = m.forward(&Tensor::new(vec![2, 1, 64, 64], x.clone()).unwrap()).unwrap();
        assert_eq!(out.shape(), &[2, 1, 64, 64]);
        assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));
        let again = m.forward(&Tensor::new(vec![2, 1, 64, 64], x).unwrap()).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn rejects_indivisible_input() {
        let m = UNet::zeros(tiny()).unwrap();
        let err = m.forward(&Tensor::zeros(vec![1, 1, 12, 16])).unwrap_err();
        assert!(err.to_string().contains("input"));
    }

    #[test]
    fn dice_examples() {
        let t = |v: f32| Tensor::new(vec![100], vec![v; 100]).unwrap();
        assert_eq!(dice_loss(&t(1.0), &t(1.0), 1.0).unwrap(), 0.0);
        assert_eq!(dice_loss(&t(0.0), &t(0.0), 1.0).unwrap(), 0.0);
        assert!((dice_loss(&t(1.0), &t(0.0), 1.0).unwrap() - (1.0 - 1.0 / 101.0)).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(UNetConfig::default().validate().is_ok());
        assert!(UNetConfig::with_channels(&[8, 8]).validate().is_err());
        let mut c = UNetConfig::default();
        c.levels = 3;
        assert!(c.validate().is_err());
    }

    /// Central differences in f64 against the analytic gradient.
    #[test]
    fn gradient_matches_finite_differences_f64() {
        let cfg = tiny();
        let mut m = UNet::init(cfg.clone(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // zero biases would sit some pre-activations exactly on the ReLU kink
        for s in m.layout().specs.clone() {
            if s.name.ends_with(".bias") {
                m.params_mut()[s.offset..s.offset + s.len()].iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
            }
        }
        let params: Vec<f64> = m.params().iter().map(|&v| v as f64).collect();
        let img: Vec<f64> = (0..2 * 64).map(|_| rng.gen_range(0.0..1.0)).collect();
        let gt: Vec<f64> = (0..2 * 64).map(|_| rng.gen_bool(0.4) as u8 as f64).collect();
        let (_, grad) = loss_and_grad(&cfg, &params, &img, &gt, 2, 8, 8, 1.0).unwrap();
        let h = 1e-6;
        let mut worst = 0f64;
        let mut bad = 0;
        for i in 0..params.len() {
            let mut p = params.clone();
            p[i] += h;
            let up = loss_and_grad(&cfg, &p, &img, &gt, 2, 8, 8, 1.0).unwrap().0;
            p[i] -= 2.0 * h;
            let down = loss_and_grad(&cfg, &p, &img, &gt, 2, 8, 8, 1.0).unwrap().0;
            let num = (up - down) / (2.0 * h);
            let rel = (num - grad[i]).abs() / num.abs().max(grad[i].abs()).max(1e-6);
            if rel > 1e-3 {
                bad += 1;
            }
            worst = worst.max(rel);
        }
        assert_eq!(bad, 0, "{bad} of {} parameters off, worst {worst}", params.len());
    }

    #[test]
    fn single_tile_prediction_equals_direct_forward() {
        let m = UNet::init(UNetConfig::with_channels(&[4, 8, 16, 32]), 5).unwrap();
        let page = Raster::from_vec(64, 64, (0..64 * 64).map(|i| (i * 7 % 256) as u8).collect()).unwrap();
        let direct = m.forward(&Tensor::from_raster(&page)).unwrap();
        for overlap in [0, 16, 40] {
            let hm = predict_page(&m, &page, 64, overlap).unwrap();
            for (a, b) in hm.data().iter().zip(direct.data()) {
                assert!((a - b).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn small_page_is_padded_white() {
        let m = UNet::init(UNetConfig::with_channels(&[4, 8, 16, 32]), 5).unwrap();
        let page = Raster::from_vec(20, 12, (0..240).map(|i| (i * 13 % 256) as u8).collect()).unwrap();
        let hm = predict_page(&m, &page, 32, 8).unwrap();
        let mut padded = Raster::new(32, 32, 255);
        padded.blit_min(&page, 0, 0);
        let direct = m.forward(&Tensor::from_raster(&padded)).unwrap();
        assert_eq!((hm.width(), hm.height()), (20, 12));
        for y in 0..12 {
            for x in 0..20 {
                assert!((hm.get(x, y) - direct.data()[y * 32 + x]).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn zero_overlap_tiles_partition_the_page() {
        assert_eq!(tile_starts(100, 32, 0), vec![0, 32, 64, 96]);
        assert_eq!(tile_starts(64, 32, 0), vec![0, 32]);
        assert_eq!(tile_starts(64, 32, 16), vec![0, 16, 32]);
        let m = UNet::init(UNetConfig::with_channels(&[4, 8, 16, 32]), 5).unwrap();
        let page = Raster::from_vec(64, 32, (0..64 * 32).map(|i| (i * 7 % 256) as u8).collect()).unwrap();
        let hm = predict_page(&m, &page, 32, 0).unwrap();
        let right = page.crop(&crate::raster::Rect::new(32, 0, 64, 32).unwrap()).unwrap();
        let direct = m.forward(&Tensor::from_raster(&right)).unwrap();
        for y in 0..32 {
            for x in 0..32 {
                assert_eq!(hm.get(32 + x, y), direct.data()[y * 32 + x]);
            }
        }
    }
}

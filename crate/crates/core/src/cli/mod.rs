//! Command-line front end. Exit codes: 0 success, 1 usage or config error,
//! 2 runtime failure.

mod overlay;
mod pipeline;

use std::ffi::OsString;
use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use overlay::{render_overlay, SEPARATOR};
pub use pipeline::{
    process_page, resolve_oversized, run_pipeline, BatchConfig, EngineConfig, InferenceConfig, PageResult, PairedReport,
    PathsConfig, PipelineConfig, PipelineDoc, PipelineError, CONFIG_VERSION,
};

use crate::detector::{load_checkpoint, predict_page, save_checkpoint, train, write_loss_csv, Heatmap, UNet, UNetConfig};
use crate::eval::{evaluate_document, parse_sroie_gt, write_report, EsDenominator, EvalReport, GtWord};
use crate::mask::{apply_mask, boxes_from_mask, heatmap_to_mask, threshold_heatmap};
use crate::ocr::{parse_tsv, write_tsv, ExternalEngineConfig, OcrEngine};
use crate::raster::io::{read_image, write_pgm};
use crate::raster::Raster;
use crate::synth::{
    compose_document, generate_dataset, load_sample, sample_seed, Annotation, DatasetManifest, FontLibrary, SynthConfig,
    TextSampler,
};

#[derive(Debug, Parser)]
#[command(name = "docmask", version, about = "Mask non-text clutter out of document images before OCR")]
pub struct Cli {
    /// JSON pipeline config; command-line flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Print the fully resolved config as JSON and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset: image, GT mask and annotation per document plus a manifest.
    Synth(SynthArgs),
    /// Train the detector on a dataset and write a checkpoint.
    Train(TrainArgs),
    /// Detect text on a page and blank everything else.
    Mask(MaskArgs),
    /// Recognize a page and write word-level TSV.
    Ocr(OcrArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Run detection, masking and OCR on a page set; report masked and unmasked scores.
    Pipeline(PipelineArgs),
    /// Write an original | heatmap | masked side-by-side image.
    Viz(VizArgs),
}

#[derive(Debug, Args)]
pub struct EngineArgs {
    /// External engine command with {input} and {output} placeholders; the built-in recognizer is used otherwise.
    #[arg(long, value_name = "TEMPLATE")]
    pub engine_cmd: Option<String>,
    /// Seconds before the external engine is killed.
    #[arg(long)]
    pub engine_timeout: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MaskFlags {
    /// Heatmap probability at or above which a pixel counts as text.
    #[arg(long)]
    pub threshold: Option<f32>,
    /// Mask dilation radius in pixels.
    #[arg(long)]
    pub dilation: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of documents.
    #[arg(long)]
    pub n: Option<usize>,
    /// Base seed; document i uses a seed derived from it and i.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads; output does not depend on this.
    #[arg(long)]
    pub workers: Option<usize>,
    /// 256 px pages with smaller fonts.
    #[arg(long)]
    pub desk: bool,
    /// Directory of .ttf/.otf faces to add (a `unique/` subdirectory holds rare faces).
    #[arg(long, value_name = "DIR")]
    pub fonts: Option<PathBuf>,
    /// Directory of photographs for natural backgrounds.
    #[arg(long, value_name = "DIR")]
    pub assets: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset manifest.json.
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    /// Checkpoint to write.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// ADAM steps to take.
    #[arg(long)]
    pub steps: Option<u64>,
    /// Learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Crops per step.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Square crop size in pixels.
    #[arg(long)]
    pub crop: Option<usize>,
    /// Seed for initialization and crop sampling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Encoder channels per level, e.g. 32,64,128,256.
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<usize>>,
    /// Continue from this checkpoint; --steps more steps are taken.
    #[arg(long, value_name = "FILE")]
    pub resume: Option<PathBuf>,
    /// Write the per-step loss as CSV.
    #[arg(long, value_name = "FILE")]
    pub loss_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    /// Detector checkpoint.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Page image (PGM or PNG).
    #[arg(long, value_name = "FILE")]
    pub page: PathBuf,
    /// Masked page (PGM).
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Word boxes extracted from the heatmap (JSON).
    #[arg(long, value_name = "FILE")]
    pub boxes: Option<PathBuf>,
    /// Heatmap as an intensity PGM.
    #[arg(long, value_name = "FILE")]
    pub heatmap: Option<PathBuf>,
    #[command(flatten)]
    pub mask: MaskFlags,
}

#[derive(Debug, Args)]
pub struct OcrArgs {
    /// Page image (PGM or PNG).
    #[arg(long, value_name = "FILE")]
    pub page: PathBuf,
    /// TSV output; stdout when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Prediction TSV, or a directory of `<name>.tsv` files.
    #[arg(long, value_name = "PATH")]
    pub pred: PathBuf,
    /// Ground truth: annotation JSON, receipt-style text file, a dataset manifest, or a directory of those.
    #[arg(long, value_name = "PATH")]
    pub gt: PathBuf,
    /// Report JSON; stdout when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// IOU at which a prediction matches a ground-truth word.
    #[arg(long)]
    pub iou: Option<f64>,
    /// Compare text case-sensitively.
    #[arg(long)]
    pub case_sensitive: bool,
    /// gt_only or gt_plus_fp.
    #[arg(long, value_parser = parse_denominator)]
    pub denominator: Option<EsDenominator>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Detector checkpoint.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Dataset manifest.json to run on; a batch is generated from the synth config when absent.
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    /// Size of the generated batch.
    #[arg(long)]
    pub n: Option<usize>,
    /// Base seed of the generated batch.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Generate 256 px desk-scale pages.
    #[arg(long)]
    pub desk: bool,
    /// Paired report JSON; stdout when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Also write masked pages and both arms' TSV here.
    #[arg(long, value_name = "DIR")]
    pub save_dir: Option<PathBuf>,
    /// Pages processed in parallel; the report does not depend on this.
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub mask: MaskFlags,
    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Debug, Args)]
pub struct VizArgs {
    /// Page image (PGM or PNG).
    #[arg(long, value_name = "FILE")]
    pub page: PathBuf,
    /// Checkpoint to compute the heatmap with.
    #[arg(long, value_name = "FILE", conflicts_with = "heatmap")]
    pub model: Option<PathBuf>,
    /// Precomputed heatmap PGM (255 = probability 1).
    #[arg(long, value_name = "FILE")]
    pub heatmap: Option<PathBuf>,
    /// Output PGM.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[command(flatten)]
    pub mask: MaskFlags,
}

fn parse_denominator(s: &str) -> Result<EsDenominator, String> {
    match s {
        "gt_only" => Ok(EsDenominator::GtOnly),
        "gt_plus_fp" => Ok(EsDenominator::GtPlusFp),
        _ => Err(format!("`{s}` is not gt_only or gt_plus_fp")),
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

fn rt(e: impl Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn usage(e: impl Display) -> CliError {
    CliError::Usage(e.to_string())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            match &e {
                CliError::Usage(m) => eprintln!("error: {m}\n\nRun `docmask --help` for usage."),
                CliError::Runtime(m) => eprintln!("error: {m}"),
            }
            e.exit_code()
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, CliError> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    PipelineConfig::from_json(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn apply_mask_flags(cfg: &mut PipelineConfig, f: &MaskFlags) {
    set(&mut cfg.mask.threshold, f.threshold);
    set(&mut cfg.mask.dilation_radius, f.dilation);
}

fn apply_engine_flags(cfg: &mut PipelineConfig, f: &EngineArgs) {
    if let Some(t) = &f.engine_cmd {
        let mut e = ExternalEngineConfig::new(t.clone());
        if let EngineConfig::External(old) = &cfg.engine {
            e.timeout_secs = old.timeout_secs;
        }
        cfg.engine = EngineConfig::External(e);
    }
    if let (Some(s), EngineConfig::External(e)) = (f.engine_timeout, &mut cfg.engine) {
        e.timeout_secs = s;
    }
}

/// Merges flags into the loaded config.
fn resolve(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Synth(a) => {
            if a.desk {
                cfg.synth = SynthConfig::desk();
            }
            set(&mut cfg.batch.count, a.n);
            set(&mut cfg.batch.seed, a.seed);
            set(&mut cfg.workers, a.workers);
            if a.out.is_some() {
                cfg.paths.dataset = a.out.clone();
            }
            if a.assets.is_some() {
                cfg.synth.asset_dir = a.assets.clone();
            }
        }
        Command::Train(a) => {
            set(&mut cfg.train.steps, a.steps);
            set(&mut cfg.train.learning_rate, a.lr);
            set(&mut cfg.train.batch_size, a.batch);
            set(&mut cfg.train.crop_size, a.crop);
            set(&mut cfg.train.seed, a.seed);
            if let Some(ch) = &a.channels {
                cfg.unet = UNetConfig::with_channels(ch);
            }
            if a.data.is_some() {
                cfg.paths.dataset = a.data.clone();
            }
            if a.out.is_some() {
                cfg.paths.checkpoint = a.out.clone();
            }
        }
        Command::Mask(a) => {
            apply_mask_flags(&mut cfg, &a.mask);
            if a.model.is_some() {
                cfg.paths.checkpoint = a.model.clone();
            }
        }
        Command::Ocr(a) => apply_engine_flags(&mut cfg, &a.engine),
        Command::Eval(a) => {
            set(&mut cfg.eval.iou_threshold, a.iou);
            if a.case_sensitive {
                cfg.eval.case_insensitive = false;
            }
            set(&mut cfg.eval.denominator, a.denominator);
        }
        Command::Pipeline(a) => {
            if a.desk {
                cfg.synth = SynthConfig::desk();
            }
            set(&mut cfg.batch.count, a.n);
            set(&mut cfg.batch.seed, a.seed);
            set(&mut cfg.workers, a.workers);
            apply_mask_flags(&mut cfg, &a.mask);
            apply_engine_flags(&mut cfg, &a.engine);
            if a.model.is_some() {
                cfg.paths.checkpoint = a.model.clone();
            }
            if a.data.is_some() {
                cfg.paths.dataset = a.data.clone();
            }
            if a.out.is_some() {
                cfg.paths.report = a.out.clone();
            }
        }
        Command::Viz(a) => apply_mask_flags(&mut cfg, &a.mask),
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve(&cli)?;
    if cli.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
        return Ok(());
    }
    match &cli.command {
        Command::Synth(a) => cmd_synth(&cfg, a),
        Command::Train(a) => cmd_train(&cfg, a),
        Command::Mask(a) => cmd_mask(&cfg, a),
        Command::Ocr(a) => cmd_ocr(&cfg, a),
        Command::Eval(a) => cmd_eval(&cfg, a),
        Command::Pipeline(a) => cmd_pipeline(&cfg, a),
        Command::Viz(a) => cmd_viz(&cfg, a),
    }
}

fn font_library(extra: Option<&Path>) -> Result<FontLibrary, CliError> {
    let mut fonts = FontLibrary::bundled();
    if let Some(dir) = extra {
        fonts.extend_from_dir(dir).map_err(rt)?;
    }
    Ok(fonts)
}

fn cmd_synth(cfg: &PipelineConfig, a: &SynthArgs) -> Result<(), CliError> {
    let out = cfg
        .paths
        .dataset
        .as_deref()
        .ok_or_else(|| usage("synth needs --out or paths.dataset"))?;
    let fonts = font_library(a.fonts.as_deref())?;
    let m = generate_dataset(cfg.batch.count, &cfg.synth, &fonts, out, cfg.batch.seed, cfg.workers).map_err(rt)?;
    eprintln!("wrote {} documents to {}", m.count, out.display());
    Ok(())
}

fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("manifest.json")
    } else {
        p.to_path_buf()
    }
}

fn cmd_train(cfg: &PipelineConfig, a: &TrainArgs) -> Result<(), CliError> {
    let data = cfg.paths.dataset.as_deref().ok_or_else(|| usage("train needs --data"))?;
    let out = cfg.paths.checkpoint.as_deref().ok_or_else(|| usage("train needs --out"))?;
    let resume = match &a.resume {
        Some(p) => Some(load_checkpoint(p).map_err(rt)?),
        None => None,
    };
    let every = (cfg.train.steps / 20).max(1);
    let ckpt = train(&cfg.train, &cfg.unet, &manifest_path(data), resume, |step, loss| {
        if step % every == 0 {
            eprintln!("step {step}: dice loss {loss:.4}");
        }
    })
    .map_err(rt)?;
    save_checkpoint(&ckpt, out).map_err(rt)?;
    if let Some(p) = &a.loss_csv {
        write_loss_csv(p, &ckpt.meta.loss_curve).map_err(rt)?;
    }
    eprintln!("saved {}", out.display());
    Ok(())
}

fn load_model(cfg: &PipelineConfig) -> Result<UNet, CliError> {
    let p = cfg.paths.checkpoint.as_deref().ok_or_else(|| usage("a checkpoint is required (--model)"))?;
    Ok(load_checkpoint(p).map_err(rt)?.model)
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| rt(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(rt)
        }
    }
}

fn cmd_mask(cfg: &PipelineConfig, a: &MaskArgs) -> Result<(), CliError> {
    let model = load_model(cfg)?;
    let page = read_image(&a.page).map_err(rt)?;
    let hm = predict_page(&model, &page, cfg.inference.tile, cfg.inference.overlap).map_err(rt)?;
    let mask = heatmap_to_mask(&hm, &cfg.mask);
    let masked = apply_mask(&page, &mask, &cfg.mask).map_err(rt)?;
    write_pgm(&a.out, &masked).map_err(rt)?;
    if let Some(p) = &a.heatmap {
        write_pgm(p, &hm.to_raster()).map_err(rt)?;
    }
    if let Some(p) = &a.boxes {
        let boxes = boxes_from_mask(&threshold_heatmap(&hm, cfg.mask.threshold), &cfg.mask);
        let json = serde_json::to_string_pretty(&boxes).map_err(rt)?;
        write_or_print(Some(p), &json)?;
    }
    Ok(())
}

fn cmd_ocr(cfg: &PipelineConfig, a: &OcrArgs) -> Result<(), CliError> {
    let engine = cfg.build_engine().map_err(rt)?;
    let words = match &engine {
        OcrEngine::External(e) => crate::ocr::run_external(e, &a.page).map_err(rt)?,
        _ => engine.recognize(&read_image(&a.page).map_err(rt)?).map_err(rt)?,
    };
    write_or_print(a.out.as_deref(), &write_tsv(&words))
}

/// Ground-truth words from an annotation JSON or a receipt-style text file.
fn read_gt_file(p: &Path) -> Result<Vec<GtWord>, CliError> {
    let text = fs::read_to_string(p).map_err(|e| rt(format!("{}: {e}", p.display())))?;
    if p.extension().is_some_and(|e| e == "json") {
        let ann: Annotation = serde_json::from_str(&text).map_err(|e| rt(format!("{}: {e}", p.display())))?;
        Ok(ann
            .words
            .into_iter()
            .map(|w| GtWord {
                text: w.text,
                rect: w.bbox,
            })
            .collect())
    } else {
        parse_sroie_gt(&text).map_err(|e| rt(format!("{}: {e}", p.display())))
    }
}

fn read_pred_file(p: &Path) -> Result<Vec<crate::ocr::OcrWord>, CliError> {
    let text = fs::read_to_string(p).map_err(|e| rt(format!("{}: {e}", p.display())))?;
    parse_tsv(&text).map_err(|e| rt(format!("{}: {e}", p.display())))
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// (name, prediction file, ground truth) triples.
fn eval_pairs(pred: &Path, gt: &Path) -> Result<Vec<(String, PathBuf, Vec<GtWord>)>, CliError> {
    if gt.file_name().is_some_and(|n| n == "manifest.json") || (gt.is_dir() && gt.join("manifest.json").is_file()) {
        let m = DatasetManifest::load(&manifest_path(gt)).map_err(rt)?;
        return m
            .entries
            .iter()
            .map(|e| {
                let name = stem(Path::new(&e.image));
                let gt = read_gt_file(&m.annotation_path(e))?;
                let p = if pred.is_dir() { pred.join(format!("{name}.tsv")) } else { pred.to_path_buf() };
                Ok((name, p, gt))
            })
            .collect();
    }
    if gt.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(gt)
            .map_err(|e| rt(format!("{}: {e}", gt.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json" || e == "txt"))
            .collect();
        files.sort();
        return files
            .iter()
            .map(|g| {
                let name = stem(g);
                Ok((name.clone(), pred.join(format!("{name}.tsv")), read_gt_file(g)?))
            })
            .collect();
    }
    Ok(vec![(stem(gt), pred.to_path_buf(), read_gt_file(gt)?)])
}

fn cmd_eval(cfg: &PipelineConfig, a: &EvalArgs) -> Result<(), CliError> {
    let pairs = eval_pairs(&a.pred, &a.gt)?;
    let mut docs = Vec::with_capacity(pairs.len());
    for (name, p, gt) in &pairs {
        let pred = read_pred_file(p)?;
        docs.push(evaluate_document(name, &pred, gt, &cfg.eval));
    }
    let report = EvalReport::new(cfg.eval, docs);
    match &a.out {
        Some(p) => write_report(&report, p).map_err(rt)?,
        None => write_or_print(None, &(serde_json::to_string_pretty(&report).map_err(rt)? + "\n"))?,
    }
    eprintln!(
        "F1 {:.4}  mean ES {:.4}  over {} documents",
        report.aggregate.f1, report.aggregate.mean_edit_score, report.aggregate.documents
    );
    Ok(())
}

fn gt_words(ann: Vec<crate::synth::WordAnnotation>) -> Vec<GtWord> {
    ann.into_iter()
        .map(|w| GtWord {
            text: w.text,
            rect: w.bbox,
        })
        .collect()
}

/// Synthesizes `cfg.batch` in memory.
pub fn generated_batch(cfg: &PipelineConfig) -> Result<Vec<PipelineDoc>, CliError> {
    let fonts = FontLibrary::bundled();
    let corpus = TextSampler::default();
    (0..cfg.batch.count)
        .map(|i| {
            let d = compose_document(&cfg.synth, &fonts, &corpus, sample_seed(cfg.batch.seed, i as u64)).map_err(rt)?;
            Ok(PipelineDoc {
                name: format!("doc_{i:06}"),
                image: d.image,
                words: gt_words(d.words),
            })
        })
        .collect()
}

fn dataset_docs(manifest: &Path) -> Result<Vec<PipelineDoc>, CliError> {
    let m = DatasetManifest::load(&manifest_path(manifest)).map_err(rt)?;
    m.entries
        .iter()
        .map(|e| {
            let (image, _, ann) = load_sample(&m, e).map_err(rt)?;
            Ok(PipelineDoc {
                name: stem(Path::new(&e.image)),
                image,
                words: gt_words(ann.words),
            })
        })
        .collect()
}

fn cmd_pipeline(cfg: &PipelineConfig, a: &PipelineArgs) -> Result<(), CliError> {
    let model = load_model(cfg)?;
    let engine = cfg.build_engine().map_err(rt)?;
    let docs = match &cfg.paths.dataset {
        Some(p) => dataset_docs(p)?,
        None => generated_batch(cfg)?,
    };
    let report = run_pipeline(&model, &engine, &docs, cfg).map_err(rt)?;
    if let Some(dir) = &a.save_dir {
        fs::create_dir_all(dir).map_err(|e| rt(format!("{}: {e}", dir.display())))?;
        for d in &docs {
            let r = process_page(&model, &engine, &d.image, cfg).map_err(rt)?;
            write_pgm(&dir.join(format!("{}_masked.pgm", d.name)), &r.masked).map_err(rt)?;
            fs::write(dir.join(format!("{}_masked.tsv", d.name)), write_tsv(&r.masked_words)).map_err(rt)?;
            fs::write(dir.join(format!("{}_unmasked.tsv", d.name)), write_tsv(&r.unmasked_words)).map_err(rt)?;
        }
    }
    let json = serde_json::to_string_pretty(&report).map_err(rt)? + "\n";
    write_or_print(cfg.paths.report.as_deref(), &json)?;
    eprintln!(
        "mean ES masked {:.4} unmasked {:.4} (gain {:+.4}); F1 masked {:.4} unmasked {:.4}",
        report.masked.aggregate.mean_edit_score,
        report.unmasked.aggregate.mean_edit_score,
        report.edit_score_gain,
        report.masked.aggregate.f1,
        report.unmasked.aggregate.f1
    );
    Ok(())
}

fn read_heatmap(p: &Path) -> Result<Heatmap, CliError> {
    let r = read_image(p).map_err(rt)?;
    let data = r.data().iter().map(|&v| v as f32 / 255.0).collect();
    Heatmap::new(r.width(), r.height(), data).ok_or_else(|| rt("empty heatmap"))
}

fn cmd_viz(cfg: &PipelineConfig, a: &VizArgs) -> Result<(), CliError> {
    let page = read_image(&a.page).map_err(rt)?;
    let hm = match (&a.heatmap, &a.model) {
        (Some(p), _) => read_heatmap(p)?,
        (None, Some(m)) => {
            let model = load_checkpoint(m).map_err(rt)?.model;
            predict_page(&model, &page, cfg.inference.tile, cfg.inference.overlap).map_err(rt)?
        }
        (None, None) => return Err(usage("viz needs --model or --heatmap")),
    };
    let mask = heatmap_to_mask(&hm, &cfg.mask);
    let img: Raster = render_overlay(&page, &hm, &mask, cfg.mask.fill).map_err(rt)?;
    write_pgm(&a.out, &img).map_err(rt)
}

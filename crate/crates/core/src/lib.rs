pub mod detector;
pub mod eval;
pub mod mask;
pub mod ocr;
pub mod raster;
pub mod synth;
pub mod cli;

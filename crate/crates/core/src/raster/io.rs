//! Binary PGM (P5) codec plus PNG ingestion for user-supplied assets.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use super::{luminance, BinaryMap, Raster, RasterError};

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("malformed PGM: {0}")]
    Pgm(String),
    #[error("PNG decode failed: {0}")]
    Png(String),
    #[error("unrecognized image format for {0}")]
    UnknownFormat(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

pub fn encode_pgm(img: &Raster) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Raster, ImageIoError> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(ImageIoError::Pgm("truncated header".into()));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| ImageIoError::Pgm("non-ascii header".into()))?);
    }
    if fields[0] != "P5" {
        return Err(ImageIoError::Pgm(format!("expected P5 magic, found {:?}", fields[0])));
    }
    let num = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| ImageIoError::Pgm(format!("bad {what}: {s:?}")))
    };
    let (w, h, maxval) = (num(fields[1], "width")?, num(fields[2], "height")?, num(fields[3], "maxval")?);
    if maxval == 0 || maxval > 255 {
        return Err(ImageIoError::Pgm(format!("unsupported maxval {maxval}")));
    }
    // exactly one whitespace byte separates header from payload
    pos += 1;
    let need = w * h;
    if bytes.len() < pos + need {
        return Err(ImageIoError::Pgm(format!(
            "payload holds {} bytes, expected {need}",
            bytes.len().saturating_sub(pos)
        )));
    }
    let mut data = bytes[pos..pos + need].to_vec();
    if maxval != 255 {
        for v in &mut data {
            *v = ((*v as usize).min(maxval) * 255 / maxval) as u8;
        }
    }
    Ok(Raster::from_vec(w, h, data)?)
}

pub fn write_pgm(path: &Path, img: &Raster) -> Result<(), ImageIoError> {
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode_pgm(img))
        .and_then(|_| w.flush())
        .map_err(|e| io_err(path, e))
}

pub fn read_pgm(path: &Path) -> Result<Raster, ImageIoError> {
    decode_pgm(&fs::read(path).map_err(|e| io_err(path, e))?)
}

/// Binary maps are stored as {0,255} PGM.
pub fn write_map(path: &Path, map: &BinaryMap) -> Result<(), ImageIoError> {
    write_pgm(path, &map.to_raster())
}

pub fn read_map(path: &Path) -> Result<BinaryMap, ImageIoError> {
    let img = read_pgm(path)?;
    let data = img.data().iter().map(|&v| u8::from(v >= 128)).collect();
    Ok(BinaryMap::from_vec(img.width(), img.height(), data)?)
}

pub fn decode_png(bytes: &[u8]) -> Result<Raster, ImageIoError> {
    let mut decoder = png::Decoder::new(io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(|e| ImageIoError::Png(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| ImageIoError::Png("image too large".into()))?];
    let info = reader.next_frame(&mut buf).map_err(|e| ImageIoError::Png(e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let px = &buf[..info.buffer_size()];
    let data: Vec<u8> = match info.color_type {
        png::ColorType::Grayscale => px.to_vec(),
        png::ColorType::GrayscaleAlpha => px.chunks_exact(2).map(|p| p[0]).collect(),
        png::ColorType::Rgb => px.chunks_exact(3).map(|p| luminance(p[0], p[1], p[2])).collect(),
        png::ColorType::Rgba => px.chunks_exact(4).map(|p| luminance(p[0], p[1], p[2])).collect(),
        png::ColorType::Indexed => return Err(ImageIoError::Png("palette not expanded".into())),
    };
    Ok(Raster::from_vec(w, h, data)?)
}

/// Reads PGM or PNG, sniffed by magic bytes.
pub fn read_image(path: &Path) -> Result<Raster, ImageIoError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.starts_with(b"P5") {
        decode_pgm(&bytes)
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        decode_png(&bytes)
    } else {
        Err(ImageIoError::UnknownFormat(path.display().to_string()))
    }
}

fn io_err(path: &Path, source: io::Error) -> ImageIoError {
    ImageIoError::Io {
        path: path.display().to_string(),
        source,
    }
}

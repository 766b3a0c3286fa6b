//! Receipt-style ground truth: one word per line as
//! `x1,y1,x2,y2,x3,y3,x4,y4,text`, the quadrilateral collapsed to its
//! bounding box. Text may itself contain commas.

use thiserror::Error;

use super::GtWord;
use crate::raster::Rect;

#[derive(Debug, Error, PartialEq)]
pub enum SroieError {
    #[error("line {line}: expected 8 coordinates followed by text")]
    FieldCount { line: usize },
    #[error("line {line}: bad coordinate {value:?}")]
    Coordinate { line: usize, value: String },
    #[error("line {line}: degenerate quadrilateral")]
    Degenerate { line: usize },
}

pub fn parse_sroie_gt(text: &str) -> Result<Vec<GtWord>, SroieError> {
    let mut words = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim_start_matches('\u{feff}').trim_end_matches('\r');
        if raw.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = raw.splitn(9, ',').collect();
        if parts.len() != 9 {
            return Err(SroieError::FieldCount { line });
        }
        let mut coords = [0i32; 8];
        for (c, p) in coords.iter_mut().zip(&parts[..8]) {
            *c = p.trim().parse().map_err(|_| SroieError::Coordinate {
                line,
                value: p.to_string(),
            })?;
        }
        let xs = [coords[0], coords[2], coords[4], coords[6]];
        let ys = [coords[1], coords[3], coords[5], coords[7]];
        let rect = Rect::new(
            *xs.iter().min().unwrap(),
            *ys.iter().min().unwrap(),
            *xs.iter().max().unwrap() + 1,
            *ys.iter().max().unwrap() + 1,
        )
        .map_err(|_| SroieError::Degenerate { line })?;
        let text = parts[8].to_string();
        if !text.trim().is_empty() {
            words.push(GtWord { text, rect });
        }
    }
    Ok(words)
}

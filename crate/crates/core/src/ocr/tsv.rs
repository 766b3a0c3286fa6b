//! Word-level TSV. Columns are `level left top width height conf text`;
//! the twelve-column layout common OCR engines emit is also accepted.

use super::{OcrError, OcrWord};
use crate::raster::Rect;

pub const TSV_HEADER: &str = "level\tleft\ttop\twidth\theight\tconf\ttext";

/// Word rows: level 5 in the twelve-column layout.
const WORD_LEVEL: &str = "5";

pub fn parse_tsv(body: &str) -> Result<Vec<OcrWord>, OcrError> {
    let mut words = Vec::new();
    for (i, line) in body.lines().enumerate() {
        let line_no = i + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() || line.starts_with("level") {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let err = |message: String| OcrError::Tsv { line: line_no, message };
        // the text column may itself hold no tab, so only two layouts are possible
        let (geom, conf, text) = match cols.len() {
            7 => (&cols[1..5], cols[5], cols[6]),
            12 => (&cols[6..10], cols[10], cols[11]),
            n if n < 7 => return Err(err(format!("expected 7 or 12 columns, found {n}"))),
            n => return Err(err(format!("expected 7 or 12 columns, found {n}"))),
        };
        if cols.len() == 12 && cols[0].trim() != WORD_LEVEL {
            continue;
        }
        let mut g = [0i32; 4];
        for (k, (v, name)) in geom.iter().zip(["left", "top", "width", "height"]).enumerate() {
            g[k] = v
                .trim()
                .parse()
                .map_err(|_| err(format!("{name} `{v}` is not an integer")))?;
        }
        let conf: f64 = conf
            .trim()
            .parse()
            .map_err(|_| err(format!("conf `{conf}` is not a number")))?;
        let text = text.trim();
        if text.is_empty() {
            continue;
        }
        let [x, y, w, h] = g;
        if w <= 0 || h <= 0 {
            return Err(err(format!("empty box {w}x{h} for `{text}`")));
        }
        let rect = Rect::from_xywh(x, y, w, h).map_err(|e| err(e.to_string()))?;
        let confidence = if conf.is_finite() { (conf / 100.0).clamp(0.0, 1.0) } else { 0.0 };
        words.push(OcrWord {
            text: text.to_string(),
            rect,
            confidence,
        });
    }
    Ok(words)
}

/// Writes words in the seven-column layout. Tabs and newlines inside text
/// become spaces.
pub fn write_tsv(words: &[OcrWord]) -> String {
    let mut s = String::from(TSV_HEADER);
    s.push('\n');
    for w in words {
        let text: String = w
            .text
            .chars()
            .map(|c| if c == '\t' || c == '\n' || c == '\r' { ' ' } else { c })
            .collect();
        let r = w.rect;
        s.push_str(&format!(
            "{WORD_LEVEL}\t{}\t{}\t{}\t{}\t{}\t{text}\n",
            r.x0(),
            r.y0(),
            r.width(),
            r.height(),
            w.confidence * 100.0
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_row() {
        let w = parse_tsv("5\t10\t20\t30\t12\t96\tHELLO").unwrap();
        assert_eq!(
            w,
            vec![OcrWord {
                text: "HELLO".into(),
                rect: Rect::new(10, 20, 40, 32).unwrap(),
                confidence: 0.96
            }]
        );
    }

    #[test]
    fn empty_body() {
        assert!(parse_tsv("").unwrap().is_empty());
        assert!(parse_tsv(&format!("{TSV_HEADER}\n")).unwrap().is_empty());
    }

    #[test]
    fn bad_geometry_names_the_line() {
        let body = format!("{TSV_HEADER}\n5\t1\t1\t4\t4\t90\tok\n5\t1\tx2\t4\t4\t90\tbad\n");
        match parse_tsv(&body) {
            Err(OcrError::Tsv { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("top"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn twelve_column_layout_and_skips() {
        let body = "level\tpage_num\tblock_num\tpar_num\tline_num\tword_num\tleft\ttop\twidth\theight\tconf\ttext\n\
                    1\t1\t0\t0\t0\t0\t0\t0\t100\t50\t-1\t\n\
                    5\t1\t1\t1\t1\t1\t3\t4\t10\t8\t150\tHi\n\
                    5\t1\t1\t1\t1\t2\t20\t4\t10\t8\t-1\t \n";
        let w = parse_tsv(body).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].rect, Rect::new(3, 4, 13, 12).unwrap());
        assert_eq!(w[0].confidence, 1.0);
    }

    #[test]
    fn write_then_parse() {
        let words = vec![
            OcrWord {
                text: "a\tb".into(),
                rect: Rect::new(0, 0, 5, 6).unwrap(),
                confidence: 0.25,
            },
            OcrWord {
                text: "c".into(),
                rect: Rect::new(7, 1, 9, 4).unwrap(),
                confidence: 1.0,
            },
        ];
        let back = parse_tsv(&write_tsv(&words)).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].text, "a b");
        assert_eq!(back[1], words[1]);
        assert!((back[0].confidence - 0.25).abs() < 1e-12);
    }
}

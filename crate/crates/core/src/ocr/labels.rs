//! Character label files: one `class cx cy w h` line per character, the
//! class being the detector class index and coordinates normalized to the
//! plate patch.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgops::Rect;

use super::alphabet::{symbol_of_class, NUM_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharLabel {
    pub class: usize,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl CharLabel {
    pub fn symbol(&self) -> char {
        symbol_of_class(self.class).expect("validated class")
    }

    pub fn to_pixels(&self, width: f64, height: f64) -> Rect {
        let (w, h) = (self.w * width, self.h * height);
        Rect::new(self.cx * width - w / 2.0, self.cy * height - h / 2.0, w, h)
    }

    pub fn from_pixels(class: usize, r: &Rect, width: f64, height: f64) -> Self {
        let (cx, cy) = r.center();
        Self {
            class,
            cx: cx / width,
            cy: cy / height,
            w: r.width / width,
            h: r.height / height,
        }
    }
}

pub fn parse_labels(text: &str) -> Result<Vec<CharLabel>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad =
            |msg: &str| Error::InvalidArgument(format!("label line {}: {msg}: {line:?}", n + 1));
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(bad("expected 5 fields"));
        }
        let class: usize = fields[0]
            .parse()
            .map_err(|_| bad("class is not an integer"))?;
        if class >= NUM_CLASSES {
            return Err(bad("class out of range"));
        }
        let mut v = [0f64; 4];
        for (slot, f) in v.iter_mut().zip(&fields[1..]) {
            *slot = f.parse().map_err(|_| bad("coordinate is not a number"))?;
        }
        out.push(CharLabel {
            class,
            cx: v[0],
            cy: v[1],
            w: v[2],
            h: v[3],
        });
    }
    Ok(out)
}

pub fn format_labels(labels: &[CharLabel]) -> String {
    labels
        .iter()
        .map(|l| {
            format!(
                "{} {:.6} {:.6} {:.6} {:.6}\n",
                l.class, l.cx, l.cy, l.w, l.h
            )
        })
        .collect()
}

pub fn read_labels(path: &Path) -> Result<Vec<CharLabel>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_format_agree() {
        let text =
            "0 0.100000 0.500000 0.080000 0.600000\n34 0.900000 0.500000 0.080000 0.600000\n";
        let labels = parse_labels(text).unwrap();
        assert_eq!(labels.len(), 2);
        assert_eq!(labels[1].symbol(), '9');
        assert_eq!(format_labels(&labels), text);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(parse_labels("35 0.1 0.1 0.1 0.1").is_err());
        assert!(parse_labels("1 0.1 0.1").is_err());
    }
}

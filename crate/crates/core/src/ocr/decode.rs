//! Decoding of the detection map into character detections.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgops::Rect;
use crate::nn::loss::sigmoid;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::alphabet::{symbol_of_class, NUM_CLASSES};
use super::net::{Anchors, ANCHOR_FIELDS};
use super::reading::CharDetection;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub conf_threshold: f64,
    pub nms_iou: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            conf_threshold: 0.25,
            nms_iou: 0.45,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("conf_threshold", self.conf_threshold),
            ("nms_iou", self.nms_iou),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!(
                    "{name} = {v} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// Size of one grid cell in patch pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSize {
    pub width: f64,
    pub height: f64,
}

impl Default for CellSize {
    fn default() -> Self {
        Self {
            width: 8.0,
            height: 8.0,
        }
    }
}

/// Raw decode of one `(row, col, anchor)` prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub row: usize,
    pub col: usize,
    pub anchor: usize,
    pub class: usize,
    pub confidence: f64,
    pub bbox: Rect,
}

/// Decodes every cell/anchor of a `[anchors * 40, rows, cols]` map.
pub fn decode_candidates<T: Scalar>(
    grid: &Tensor<T>,
    anchors: &Anchors,
    cell: CellSize,
) -> Result<Vec<Candidate>> {
    let na = anchors.0.len();
    let [ch, rows, cols] = match grid.shape() {
        [c, h, w] => [*c, *h, *w],
        other => return Err(Error::shape("[channels, rows, cols]", format!("{other:?}"))),
    };
    if ch != na * ANCHOR_FIELDS {
        return Err(Error::shape(na * ANCHOR_FIELDS, ch));
    }
    let g = grid.data();
    let plane = rows * cols;
    let at = |c: usize, r: usize, k: usize| g[c * plane + r * cols + k].as_f64();
    let mut out = Vec::with_capacity(plane * na);
    for row in 0..rows {
        for col in 0..cols {
            for (a, &(aw, ah)) in anchors.0.iter().enumerate() {
                let base = a * ANCHOR_FIELDS;
                let cx = (col as f64 + sigmoid(at(base, row, col))) * cell.width;
                let cy = (row as f64 + sigmoid(at(base + 1, row, col))) * cell.height;
                let w = aw * at(base + 2, row, col).exp();
                let h = ah * at(base + 3, row, col).exp();
                let obj = sigmoid(at(base + 4, row, col));
                // max softmax probability = 1 / sum(exp(z - zmax))
                let mut best = 0;
                let mut zmax = f64::NEG_INFINITY;
                for k in 0..NUM_CLASSES {
                    let z = at(base + 5 + k, row, col);
                    if z > zmax {
                        zmax = z;
                        best = k;
                    }
                }
                let denom: f64 = (0..NUM_CLASSES)
                    .map(|k| (at(base + 5 + k, row, col) - zmax).exp())
                    .sum();
                out.push(Candidate {
                    row,
                    col,
                    anchor: a,
                    class: best,
                    confidence: obj / denom,
                    bbox: Rect::new(cx - w / 2.0, cy - h / 2.0, w, h),
                });
            }
        }
    }
    Ok(out)
}

/// Greedy class-agnostic suppression. Input order breaks confidence ties.
/// Returns survivors in descending confidence.
pub fn non_max_suppression(mut cands: Vec<Candidate>, iou_threshold: f64) -> Vec<Candidate> {
    // stable: equal confidences keep their enumeration order
    cands.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    let mut kept: Vec<Candidate> = Vec::new();
    for c in cands {
        if kept.iter().all(|k| k.bbox.iou(&c.bbox) <= iou_threshold) {
            kept.push(c);
        }
    }
    kept
}

/// Threshold, suppress and order detections left to right.
pub fn decode_detections<T: Scalar>(
    grid: &Tensor<T>,
    anchors: &Anchors,
    cell: CellSize,
    cfg: &DecoderConfig,
) -> Result<Vec<CharDetection>> {
    cfg.validate()?;
    let cands: Vec<Candidate> = decode_candidates(grid, anchors, cell)?
        .into_iter()
        .filter(|c| c.confidence >= cfg.conf_threshold)
        .collect();
    let mut kept = non_max_suppression(cands, cfg.nms_iou);
    kept.sort_by(|a, b| a.bbox.center().0.total_cmp(&b.bbox.center().0));
    Ok(kept
        .into_iter()
        .map(|c| CharDetection {
            symbol: symbol_of_class(c.class).expect("class index below NUM_CLASSES"),
            confidence: c.confidence,
            bbox: c.bbox,
        })
        .collect())
}

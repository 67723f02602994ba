//! Detection loss and the separate training loop of the character detector.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::augment::{apply_plate_params, transform_box, PlateAugParams};
use crate::error::{Error, Result};
use crate::imgops::Rect;
use crate::nn::loss::{bce_with_logit, sigmoid, softmax_cross_entropy};
use crate::nn::Adam;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::decode::CellSize;
use super::labels::CharLabel;
use super::net::{Anchors, ANCHOR_FIELDS, PLATE_HEIGHT, PLATE_WIDTH};
use super::OcrModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub coord: f64,
    pub object: f64,
    pub no_object: f64,
    pub class: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            coord: 5.0,
            object: 1.0,
            no_object: 0.5,
            class: 1.0,
        }
    }
}

/// A ground-truth character in patch pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub class: usize,
    pub bbox: Rect,
}

/// Anchor whose shape best overlaps a box of size `w x h` (both centered).
pub fn best_anchor(anchors: &Anchors, w: f64, h: f64) -> usize {
    let mut best = 0;
    let mut best_iou = -1.0;
    for (i, &(aw, ah)) in anchors.0.iter().enumerate() {
        let inter = aw.min(w) * ah.min(h);
        let iou = inter / (aw * ah + w * h - inter);
        if iou > best_iou {
            best_iou = iou;
            best = i;
        }
    }
    best
}

/// Loss of a detection map against targets and its gradient with respect
/// to the map. Each target is owned by the cell containing its center and
/// by the best-matching anchor there; every other anchor slot is pushed
/// toward zero objectness.
pub fn detection_loss<T: Scalar>(
    grid: &Tensor<T>,
    targets: &[Target],
    anchors: &Anchors,
    cell: CellSize,
    weights: &LossWeights,
) -> Result<(f64, Tensor<T>)> {
    let na = anchors.0.len();
    let [ch, rows, cols] = match grid.shape() {
        [c, h, w] => [*c, *h, *w],
        other => return Err(Error::shape("[channels, rows, cols]", format!("{other:?}"))),
    };
    if ch != na * ANCHOR_FIELDS {
        return Err(Error::shape(na * ANCHOR_FIELDS, ch));
    }
    let plane = rows * cols;
    let g = grid.data();
    let at = |c: usize, idx: usize| g[c * plane + idx].as_f64();
    let mut grad = vec![0f64; g.len()];

    // responsible (cell index, anchor) -> target
    let mut owner: Vec<Option<&Target>> = vec![None; plane * na];
    for t in targets {
        let (cx, cy) = t.bbox.center();
        let col = ((cx / cell.width).floor().max(0.0) as usize).min(cols - 1);
        let row = ((cy / cell.height).floor().max(0.0) as usize).min(rows - 1);
        let a = best_anchor(anchors, t.bbox.width, t.bbox.height);
        owner[(row * cols + col) * na + a] = Some(t);
    }

    let mut loss = 0.0;
    for idx in 0..plane {
        let (row, col) = (idx / cols, idx % cols);
        for a in 0..na {
            let base = a * ANCHOR_FIELDS;
            let obj = at(base + 4, idx);
            match owner[idx * na + a] {
                None => {
                    let (l, d) = bce_with_logit(obj, 0.0);
                    loss += weights.no_object * l;
                    grad[(base + 4) * plane + idx] += weights.no_object * d;
                }
                Some(t) => {
                    let (l, d) = bce_with_logit(obj, 1.0);
                    loss += weights.object * l;
                    grad[(base + 4) * plane + idx] += weights.object * d;

                    let (cx, cy) = t.bbox.center();
                    let (aw, ah) = anchors.0[a];
                    let want = [
                        cx / cell.width - col as f64,
                        cy / cell.height - row as f64,
                        (t.bbox.width / aw).ln(),
                        (t.bbox.height / ah).ln(),
                    ];
                    for k in 0..2 {
                        let z = at(base + k, idx);
                        let s = sigmoid(z);
                        let e = s - want[k];
                        loss += weights.coord * e * e;
                        grad[(base + k) * plane + idx] += weights.coord * 2.0 * e * s * (1.0 - s);
                    }
                    for k in 2..4 {
                        let e = at(base + k, idx) - want[k];
                        loss += weights.coord * e * e;
                        grad[(base + k) * plane + idx] += weights.coord * 2.0 * e;
                    }
                    let logits: Vec<f64> = (0..ANCHOR_FIELDS - 5)
                        .map(|k| at(base + 5 + k, idx))
                        .collect();
                    let (l, d) = softmax_cross_entropy(&logits, t.class);
                    loss += weights.class * l;
                    for (k, dk) in d.into_iter().enumerate() {
                        grad[(base + 5 + k) * plane + idx] += weights.class * dk;
                    }
                }
            }
        }
    }
    let grad = Tensor::from_vec(grid.shape(), grad.into_iter().map(T::lit).collect())?;
    Ok((loss, grad))
}

/// One training image for the detector.
#[derive(Debug, Clone)]
pub struct OcrSample<T> {
    pub pixels: Tensor<T>,
    pub labels: Vec<CharLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OcrTrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub augment: bool,
    pub loss: LossWeights,
}

impl Default for OcrTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 128,
            epochs: 10,
            seed: 0,
            augment: true,
            loss: LossWeights::default(),
        }
    }
}

fn pixel_targets(labels: &[CharLabel]) -> Vec<Target> {
    labels
        .iter()
        .map(|l| Target {
            class: l.class,
            bbox: l.to_pixels(PLATE_WIDTH as f64, PLATE_HEIGHT as f64),
        })
        .collect()
}

/// Trains the detector in place; returns the mean loss of each epoch.
pub fn train_ocr<T: Scalar>(
    model: &mut OcrModel<T>,
    samples: &[OcrSample<T>],
    cfg: &OcrTrainConfig,
) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::Missing("no OCR training samples".into()));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::InvalidArgument(
            "OCR training hyperparameters must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(cfg.learning_rate);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let cell = model.cell_size();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = model.net.zero_grads();
            let mut batch_loss = 0.0;
            for &i in batch {
                let s = &samples[i];
                let mut targets = pixel_targets(&s.labels);
                let pixels = if cfg.augment {
                    let params = PlateAugParams::sample(&mut rng);
                    let a = params.affine(PLATE_WIDTH, PLATE_HEIGHT);
                    for t in &mut targets {
                        t.bbox = transform_box(&a, &t.bbox);
                    }
                    targets.retain(|t| {
                        let (cx, cy) = t.bbox.center();
                        (0.0..PLATE_WIDTH as f64).contains(&cx)
                            && (0.0..PLATE_HEIGHT as f64).contains(&cy)
                    });
                    apply_plate_params(&s.pixels, &params)?
                } else {
                    s.pixels.clone()
                };
                let (out, tape) = model.net.forward_train(&pixels)?;
                let (loss, grad) = detection_loss(&out, &targets, &model.anchors, cell, &cfg.loss)?;
                if !loss.is_finite() {
                    return Err(Error::Diverged { epoch, step, loss });
                }
                batch_loss += loss;
                model.net.backward(tape, grad, &mut grads, false);
            }
            grads.scale(T::lit(1.0 / batch.len() as f64));
            opt.step(model.net.params_mut(), &grads.0);
            step += 1;
            epoch_loss += batch_loss;
            log::debug!(
                "ocr epoch {epoch} step {step} loss {:.4}",
                batch_loss / batch.len() as f64
            );
        }
        let mean = epoch_loss / samples.len() as f64;
        log::info!("ocr epoch {} mean loss {mean:.4}", epoch + 1);
        history.push(mean);
    }
    Ok(history)
}

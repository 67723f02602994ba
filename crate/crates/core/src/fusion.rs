//! Two-stream fusion head, joint training and inference.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::dataset::augment::augment_shape;
use crate::dataset::{PatchSource, ShapePatch};
use crate::error::{Error, Result};
use crate::eval::Confusion;
use crate::nn::loss::{softmax, softmax_cross_entropy};
use crate::nn::{Adam, Dense, Grads, Layer, Sequential};
use crate::ocr::{build_ocr_descriptor, OcrDescriptor, OcrModel, PlateReading, OCR_DESCRIPTOR_LEN};
use crate::pairgen::PairSample;
use crate::scalar::Scalar;
use crate::shape::{
    build_small_vgg, embed, l1_backward, shape_descriptor, ShapeDescriptor, ShapeEmbedding,
    EMBEDDING_LEN,
};
use crate::tensor::Tensor;

pub const FUSION_INPUT_LEN: usize = EMBEDDING_LEN + OCR_DESCRIPTOR_LEN;
pub const HIDDEN: usize = 512;
/// Output index of the "matching" class.
pub const MATCH_CLASS: usize = 1;

/// `2083 -> 512 -> 512 -> 2`, rectifiers between the dense layers.
pub fn build_fusion_head<T: Scalar>(seed: u64) -> Sequential<T> {
    build_head(FUSION_INPUT_LEN, seed)
}

pub(crate) fn build_head<T: Scalar>(inputs: usize, seed: u64) -> Sequential<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Sequential::new(&[inputs]);
    net.push(
        "fc1",
        Layer::Dense(Dense::new(inputs, HIDDEN, 2f64.sqrt(), &mut rng)),
    );
    net.push("fc1.act", Layer::Relu);
    net.push(
        "fc2",
        Layer::Dense(Dense::new(HIDDEN, HIDDEN, 2f64.sqrt(), &mut rng)),
    );
    net.push("fc2.act", Layer::Relu);
    net.push("fc3", Layer::Dense(Dense::new(HIDDEN, 2, 1.0, &mut rng)));
    net
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchDecision {
    pub p_match: f64,
    pub p_nonmatch: f64,
}

impl MatchDecision {
    pub fn from_logits<T: Scalar>(logits: &[T]) -> Self {
        let p = softmax(logits);
        Self {
            p_match: p[MATCH_CLASS].as_f64(),
            p_nonmatch: p[1 - MATCH_CLASS].as_f64(),
        }
    }

    pub fn is_match(&self) -> bool {
        self.p_match > self.p_nonmatch
    }
}

/// Whether the head sees the OCR descriptor or a zero vector in its place.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionMode {
    TwoStream,
    ShapeOnly,
}

impl FusionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FusionMode::TwoStream => "two-stream",
            FusionMode::ShapeOnly => "shape-only",
        }
    }
}

/// Concatenation `[s, p]` fed to the head.
pub fn fusion_input<T: Scalar>(s: &ShapeDescriptor<T>, p: &OcrDescriptor<T>) -> Result<Tensor<T>> {
    if s.values.len() != EMBEDDING_LEN {
        return Err(Error::shape(EMBEDDING_LEN, s.values.len()));
    }
    if p.values.len() != OCR_DESCRIPTOR_LEN {
        return Err(Error::shape(OCR_DESCRIPTOR_LEN, p.values.len()));
    }
    let mut v = Vec::with_capacity(FUSION_INPUT_LEN);
    v.extend_from_slice(&s.values);
    v.extend_from_slice(&p.values);
    Tensor::from_vec(&[FUSION_INPUT_LEN], v)
}

pub fn fuse_forward<T: Scalar>(
    s: &ShapeDescriptor<T>,
    p: &OcrDescriptor<T>,
    head: &Sequential<T>,
) -> Result<MatchDecision> {
    let logits = head.forward(&fusion_input(s, p)?)?;
    Ok(MatchDecision::from_logits(logits.data()))
}

/// Cross-entropy of the head on one input and its parameter gradients.
pub fn head_loss_and_grads<T: Scalar>(
    head: &Sequential<T>,
    input: &Tensor<T>,
    matching: bool,
) -> Result<(T, Grads<T>)> {
    let (logits, tape) = head.forward_train(input)?;
    let (loss, dlogits) = softmax_cross_entropy(logits.data(), usize::from(matching));
    let mut grads = head.zero_grads();
    head.backward(tape, Tensor::from_vec(&[2], dlogits)?, &mut grads, false);
    Ok((loss, grads))
}

pub fn head_loss<T: Scalar>(head: &Sequential<T>, input: &Tensor<T>, matching: bool) -> Result<T> {
    let logits = head.forward(input)?;
    Ok(softmax_cross_entropy(logits.data(), usize::from(matching)).0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub augment: bool,
    /// Negatives drawn per positive in each epoch.
    pub max_negative_ratio: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 128,
            epochs: 10,
            seed: 0,
            augment: true,
            max_negative_ratio: 4.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0)
            || self.batch_size == 0
            || self.epochs == 0
            || !(self.max_negative_ratio > 0.0)
        {
            return Err(Error::InvalidArgument(format!(
                "training hyperparameters must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Plate readings per occurrence. The OCR stream is frozen while the rest
/// trains, so each plate is read once.
pub type ReadingCache = HashMap<PatchSource, PlateReading>;

/// Reads every plate referenced by `pairs` that is not cached yet.
pub fn read_plates<T: Scalar>(
    ocr: &OcrModel<T>,
    pairs: &[PairSample<T>],
    cache: &mut ReadingCache,
) -> Result<()> {
    for p in pairs {
        for plate in [&p.plate_a, &p.plate_b] {
            if !cache.contains_key(&plate.source) {
                cache.insert(plate.source.clone(), ocr.read(plate)?);
            }
        }
    }
    Ok(())
}

fn cached<'a>(cache: &'a ReadingCache, src: &PatchSource) -> Result<&'a PlateReading> {
    cache
        .get(src)
        .ok_or_else(|| Error::Missing(format!("no plate reading for {src:?}")))
}

#[derive(Debug, Clone)]
pub struct TwoStreamModel<T> {
    pub shape: Sequential<T>,
    pub ocr: OcrModel<T>,
    pub head: Sequential<T>,
    pub mode: FusionMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_precision: f64,
    pub val_recall: f64,
    pub val_f_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
}

impl<T: Scalar> TwoStreamModel<T> {
    pub fn new(seed: u64, mode: FusionMode) -> Self {
        Self {
            shape: build_small_vgg(seed),
            ocr: OcrModel::new(seed.wrapping_add(1)),
            head: build_fusion_head(seed.wrapping_add(2)),
            mode,
        }
    }

    pub fn ocr_descriptor(&self, r1: &PlateReading, r2: &PlateReading) -> Result<OcrDescriptor<T>> {
        match self.mode {
            FusionMode::TwoStream => build_ocr_descriptor(r1, r2),
            FusionMode::ShapeOnly => {
                OcrDescriptor::from_values(vec![T::zero(); OCR_DESCRIPTOR_LEN])
            }
        }
    }

    pub fn decide(
        &self,
        e1: &ShapeEmbedding<T>,
        e2: &ShapeEmbedding<T>,
        r1: &PlateReading,
        r2: &PlateReading,
    ) -> Result<MatchDecision> {
        fuse_forward(
            &shape_descriptor(e1, e2)?,
            &self.ocr_descriptor(r1, r2)?,
            &self.head,
        )
    }

    /// Full inference on one pair, reading both plates.
    pub fn predict(&self, pair: &PairSample<T>) -> Result<MatchDecision> {
        let e1 = embed(&self.shape, &pair.shape_a)?;
        let e2 = embed(&self.shape, &pair.shape_b)?;
        let r1 = self.ocr.read(&pair.plate_a)?;
        let r2 = self.ocr.read(&pair.plate_b)?;
        self.decide(&e1, &e2, &r1, &r2)
    }

    /// Decisions for many pairs, embedding each occurrence once and taking
    /// plate readings from `readings`.
    pub fn predict_many(
        &self,
        pairs: &[PairSample<T>],
        readings: &ReadingCache,
    ) -> Result<Vec<MatchDecision>> {
        let mut embeddings: HashMap<PatchSource, ShapeEmbedding<T>> = HashMap::new();
        let mut out = Vec::with_capacity(pairs.len());
        for p in pairs {
            for s in [&p.shape_a, &p.shape_b] {
                if !embeddings.contains_key(&s.source) {
                    embeddings.insert(s.source.clone(), embed(&self.shape, s)?);
                }
            }
            out.push(self.decide(
                &embeddings[&p.shape_a.source],
                &embeddings[&p.shape_b.source],
                cached(readings, &p.plate_a.source)?,
                cached(readings, &p.plate_b.source)?,
            )?);
        }
        Ok(out)
    }

    pub fn confusion(&self, pairs: &[PairSample<T>], readings: &ReadingCache) -> Result<Confusion> {
        let predicted: Vec<bool> = self
            .predict_many(pairs, readings)?
            .iter()
            .map(MatchDecision::is_match)
            .collect();
        let truth: Vec<bool> = pairs.iter().map(|p| p.matching).collect();
        Confusion::from_predictions(&predicted, &truth)
    }

    /// Loss of one pair; accumulates shape and head gradients.
    fn pair_step(
        &self,
        a: &ShapePatch<T>,
        b: &ShapePatch<T>,
        p: &OcrDescriptor<T>,
        matching: bool,
        shape_grads: &mut Grads<T>,
        head_grads: &mut Grads<T>,
    ) -> Result<T> {
        let (ea, tape_a) = self.shape.forward_train(&a.pixels)?;
        let (eb, tape_b) = self.shape.forward_train(&b.pixels)?;
        let s = ShapeDescriptor {
            values: ea
                .data()
                .iter()
                .zip(eb.data())
                .map(|(&x, &y)| (x - y).abs())
                .collect(),
        };
        let (logits, tape_h) = self.head.forward_train(&fusion_input(&s, p)?)?;
        let (loss, dlogits) = softmax_cross_entropy(logits.data(), usize::from(matching));
        let dx = self
            .head
            .backward(tape_h, Tensor::from_vec(&[2], dlogits)?, head_grads, true)
            .expect("input gradient requested");
        let mut dea = l1_backward(ea.data(), eb.data(), &dx.data()[..EMBEDDING_LEN]);
        let out_shape = self.shape.output_shape();
        dea = dea.reshape(&out_shape)?;
        let mut deb = dea.clone();
        deb.scale(-T::one());
        self.shape.backward(tape_a, dea, shape_grads, false);
        self.shape.backward(tape_b, deb, shape_grads, false);
        Ok(loss)
    }

    /// Trains the shape stream and the head jointly with cross-entropy; the
    /// OCR stream is left untouched. Each epoch visits every positive pair
    /// and a fresh random draw of at most `max_negative_ratio` negatives per
    /// positive. The weights of the epoch with the best validation F-score
    /// are kept.
    pub fn train(
        &mut self,
        train: &[PairSample<T>],
        validation: &[PairSample<T>],
        readings: &ReadingCache,
        cfg: &TrainConfig,
    ) -> Result<TrainReport> {
        cfg.validate()?;
        if train.is_empty() || validation.is_empty() {
            return Err(Error::Missing(
                "training and validation pair pools must be nonempty".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let descriptors: Vec<OcrDescriptor<T>> = train
            .iter()
            .map(|p| {
                self.ocr_descriptor(
                    cached(readings, &p.plate_a.source)?,
                    cached(readings, &p.plate_b.source)?,
                )
            })
            .collect::<Result<_>>()?;
        let positives: Vec<usize> = (0..train.len()).filter(|&i| train[i].matching).collect();
        let negatives: Vec<usize> = (0..train.len()).filter(|&i| !train[i].matching).collect();
        let n_neg = if positives.is_empty() {
            negatives.len()
        } else {
            negatives
                .len()
                .min((positives.len() as f64 * cfg.max_negative_ratio).ceil() as usize)
        };

        let mut shape_opt = Adam::new(cfg.learning_rate);
        let mut head_opt = Adam::new(cfg.learning_rate);
        let mut best: Option<(f64, Sequential<T>, Sequential<T>)> = None;
        let mut report = TrainReport {
            epochs: Vec::new(),
            best_epoch: 0,
        };
        let mut step = 0;
        for epoch in 0..cfg.epochs {
            let mut pool = positives.clone();
            pool.extend(
                sample(&mut rng, negatives.len(), n_neg)
                    .into_iter()
                    .map(|k| negatives[k]),
            );
            pool.shuffle(&mut rng);
            let mut total = 0.0;
            for batch in pool.chunks(cfg.batch_size) {
                let mut shape_grads = self.shape.zero_grads();
                let mut head_grads = self.head.zero_grads();
                let mut batch_loss = 0.0;
                for &i in batch {
                    let pair = &train[i];
                    let loss = if cfg.augment {
                        let a = augment_shape(&pair.shape_a, &mut rng)?;
                        let b = augment_shape(&pair.shape_b, &mut rng)?;
                        self.pair_step(
                            &a,
                            &b,
                            &descriptors[i],
                            pair.matching,
                            &mut shape_grads,
                            &mut head_grads,
                        )?
                    } else {
                        self.pair_step(
                            &pair.shape_a,
                            &pair.shape_b,
                            &descriptors[i],
                            pair.matching,
                            &mut shape_grads,
                            &mut head_grads,
                        )?
                    };
                    batch_loss += loss.as_f64();
                }
                let inv = T::lit(1.0 / batch.len() as f64);
                shape_grads.scale(inv);
                head_grads.scale(inv);
                if !batch_loss.is_finite() || !shape_grads.all_finite() || !head_grads.all_finite()
                {
                    return Err(Error::Diverged {
                        epoch: epoch + 1,
                        step,
                        loss: batch_loss,
                    });
                }
                shape_opt.step(self.shape.params_mut(), &shape_grads.0);
                head_opt.step(self.head.params_mut(), &head_grads.0);
                total += batch_loss;
                step += 1;
            }
            let c = self.confusion(validation, readings)?;
            let (p, r) = c.precision_recall();
            let stats = EpochStats {
                epoch: epoch + 1,
                train_loss: total / pool.len() as f64,
                val_precision: p,
                val_recall: r,
                val_f_score: c.f_score(),
            };
            log::info!(
                "{} epoch {}: loss {:.4} val P={:.4} R={:.4} F={:.4}",
                self.mode.as_str(),
                stats.epoch,
                stats.train_loss,
                p,
                r,
                stats.val_f_score
            );
            report.epochs.push(stats);
            if best.as_ref().is_none_or(|(f, _, _)| stats.val_f_score > *f) {
                best = Some((stats.val_f_score, self.shape.clone(), self.head.clone()));
                report.best_epoch = stats.epoch;
            }
        }
        if let Some((_, shape, head)) = best {
            self.shape = shape;
            self.head = head;
        }
        Ok(report)
    }

    /// Bundles all three networks with `metadata` (e.g. a config hash).
    pub fn to_checkpoint(&self, metadata: &BTreeMap<String, String>) -> Checkpoint<T> {
        let mut ck = Checkpoint::default();
        ck.metadata = metadata.clone();
        ck.metadata
            .insert("fusion_mode".into(), self.mode.as_str().into());
        self.ocr.store(&mut ck);
        ck.put_network("shape.", &self.shape);
        ck.put_network("head.", &self.head);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint<T>) -> Result<Self> {
        let mode = match ck.metadata.get("fusion_mode").map(String::as_str) {
            Some("shape-only") => FusionMode::ShapeOnly,
            Some("two-stream") | None => FusionMode::TwoStream,
            Some(other) => return Err(Error::Checkpoint(format!("unknown fusion mode {other:?}"))),
        };
        let mut m = Self::new(0, mode);
        m.ocr = OcrModel::restore(ck)?;
        ck.get_network("shape.", &mut m.shape)?;
        ck.get_network("head.", &mut m.head)?;
        Ok(m)
    }

    pub fn save(&self, path: &Path, metadata: &BTreeMap<String, String>) -> Result<()> {
        self.to_checkpoint(metadata).save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Trains a head alone on precomputed inputs; returns the mean loss per
/// epoch.
pub fn train_head<T: Scalar>(
    head: &mut Sequential<T>,
    data: &[(Tensor<T>, bool)],
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Missing("empty training pool".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(cfg.learning_rate);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads = head.zero_grads();
            let mut batch_loss = 0.0;
            for &i in batch {
                let (x, y) = &data[i];
                let (logits, tape) = head.forward_train(x)?;
                let (loss, d) = softmax_cross_entropy(logits.data(), usize::from(*y));
                head.backward(tape, Tensor::from_vec(&[2], d)?, &mut grads, false);
                batch_loss += loss.as_f64();
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch: epoch + 1,
                    step,
                    loss: batch_loss,
                });
            }
            grads.scale(T::lit(1.0 / batch.len() as f64));
            opt.step(head.params_mut(), &grads.0);
            total += batch_loss;
        }
        history.push(total / data.len() as f64);
    }
    Ok(history)
}

//! Glue from an annotated corpus to labeled pair pools and a cross-validation
//! classifier wrapping [`TwoStreamModel`].

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use crate::dataset::{
    extract_plate_patch, Corpus, FrameSource, PatchBank, PatchSource, SetId, ShapeExpansion,
};
use crate::error::Result;
use crate::eval::PairClassifier;
use crate::fusion::{
    read_plates, MatchDecision, ReadingCache, TrainConfig, TrainReport, TwoStreamModel,
};
use crate::ocr::labels::read_labels;
use crate::ocr::{OcrModel, OcrSample};
use crate::pairgen::{pairs_for_set, referenced_sources, PairRecord, PairSample};
use crate::scalar::Scalar;

/// Extracts the occurrences referenced by `records` and attaches them.
/// All records must belong to sets present in `corpus`.
pub fn load_pair_samples<T: Scalar>(
    corpus: &Corpus,
    frames: &dyn FrameSource,
    records: &[PairRecord],
    expand: &ShapeExpansion,
) -> Result<Vec<PairSample<T>>> {
    let mut by_set: BTreeMap<SetId, Vec<PairRecord>> = BTreeMap::new();
    for r in records {
        by_set.entry(r.set_id).or_default().push(r.clone());
    }
    let mut bank = PatchBank::default();
    for (set, recs) in &by_set {
        bank.fill(corpus, *set, &referenced_sources(recs), frames, expand)?;
    }
    records
        .iter()
        .map(|r| PairSample::from_record(r, &bank))
        .collect()
}

/// Pair records of one set alongside their samples.
pub type SetPool<T> = (Vec<PairRecord>, Vec<PairSample<T>>);

/// Pair records and samples for each listed set.
pub fn pair_pools<T: Scalar>(
    corpus: &Corpus,
    frames: &dyn FrameSource,
    sets: &[SetId],
    max_frames: Option<usize>,
    expand: &ShapeExpansion,
) -> Result<BTreeMap<SetId, SetPool<T>>> {
    let mut out = BTreeMap::new();
    for &set in sets {
        let records = pairs_for_set(corpus, set, max_frames)?;
        let samples = load_pair_samples(corpus, frames, &records, expand)?;
        out.insert(set, (records, samples));
    }
    Ok(out)
}

/// Reads every plate in `pools` once with `ocr`.
pub fn read_all_plates<'a, T: Scalar + 'a>(
    ocr: &OcrModel<T>,
    pools: impl IntoIterator<Item = &'a [PairSample<T>]>,
) -> Result<ReadingCache> {
    let mut cache = ReadingCache::new();
    for pairs in pools {
        read_plates(ocr, pairs, &mut cache)?;
    }
    Ok(cache)
}

/// Detector training samples for legible plates of `sets` that have a label
/// file `<labels_dir>/<video>/<frame>.txt`, using at most `max_frames`
/// occurrences per vehicle. Occurrences without a label file are skipped.
pub fn load_ocr_samples<T: Scalar>(
    corpus: &Corpus,
    frames: &dyn FrameSource,
    labels_dir: &Path,
    sets: &[SetId],
    max_frames: usize,
) -> Result<Vec<OcrSample<T>>> {
    let mut out = Vec::new();
    for video in corpus.videos.iter().filter(|v| sets.contains(&v.set_id)) {
        for ann in video.vehicles.iter().filter(|a| a.legible) {
            for &f in ann.occurrences.iter().take(max_frames) {
                let path = labels_dir.join(&video.name).join(format!("{f}.txt"));
                if !path.is_file() {
                    continue;
                }
                let source = PatchSource {
                    vehicle_id: ann.vehicle_id.clone(),
                    camera_id: video.camera,
                    frame_index: f,
                };
                let patch =
                    extract_plate_patch(&frames.frame(&video.name, f)?, ann.box_at(f), source)?;
                out.push(OcrSample {
                    pixels: patch.pixels,
                    labels: read_labels(&path)?,
                });
            }
        }
    }
    Ok(out)
}

/// [`TwoStreamModel`] trained with a fixed OCR stream and shared cached readings.
pub struct TwoStreamClassifier<T> {
    pub model: TwoStreamModel<T>,
    pub readings: Arc<ReadingCache>,
    pub config: TrainConfig,
    pub report: Option<TrainReport>,
}

impl<T: Scalar> TwoStreamClassifier<T> {
    pub fn new(model: TwoStreamModel<T>, readings: Arc<ReadingCache>, config: TrainConfig) -> Self {
        Self {
            model,
            readings,
            config,
            report: None,
        }
    }
}

impl<T: Scalar> PairClassifier<PairSample<T>> for TwoStreamClassifier<T> {
    fn fit(&mut self, train: &[PairSample<T>], validation: &[PairSample<T>]) -> Result<()> {
        self.report = Some(
            self.model
                .train(train, validation, &self.readings, &self.config)?,
        );
        Ok(())
    }

    fn predict(&self, pairs: &[PairSample<T>]) -> Result<Vec<bool>> {
        Ok(self
            .model
            .predict_many(pairs, &self.readings)?
            .iter()
            .map(MatchDecision::is_match)
            .collect())
    }
}

//! License-plate character detection, plate reading and the OCR descriptor.

pub mod alphabet;
pub mod decode;
pub mod descriptor;
pub mod labels;
pub mod net;
pub mod reading;
pub mod train;

pub use decode::{decode_detections, CellSize, DecoderConfig};
pub use descriptor::{build_ocr_descriptor, OcrDescriptor, OCR_DESCRIPTOR_LEN};
pub use labels::CharLabel;
pub use net::{build_cnn_ocr, Anchors};
pub use reading::{apply_swaps, CharDetection, PlateReading, SlotStatus, PLATE_SLOTS};
pub use train::{train_ocr, OcrSample, OcrTrainConfig};

use std::collections::BTreeMap;
use std::path::Path;

use crate::checkpoint::Checkpoint;
use crate::dataset::PlatePatch;
use crate::error::Result;
use crate::nn::Sequential;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// The detector network together with its anchors and decoder settings.
#[derive(Debug, Clone)]
pub struct OcrModel<T> {
    pub net: Sequential<T>,
    pub anchors: Anchors,
    pub decoder: DecoderConfig,
}

impl<T: Scalar> OcrModel<T> {
    pub fn new(seed: u64) -> Self {
        Self {
            net: build_cnn_ocr(seed),
            anchors: Anchors::default(),
            decoder: DecoderConfig::default(),
        }
    }

    pub fn cell_size(&self) -> CellSize {
        let out = self.net.output_shape();
        let inp = self.net.input_shape();
        CellSize {
            width: inp[2] as f64 / out[2] as f64,
            height: inp[1] as f64 / out[1] as f64,
        }
    }

    pub fn detect(&self, pixels: &Tensor<T>) -> Result<Vec<CharDetection>> {
        let grid = self.net.forward(pixels)?;
        decode_detections(&grid, &self.anchors, self.cell_size(), &self.decoder)
    }

    /// Reads a plate patch. Illegible or missing plates give the all-padding
    /// reading with zero confidences.
    pub fn read(&self, patch: &PlatePatch<T>) -> Result<PlateReading> {
        if !patch.legible {
            return Ok(PlateReading::blank());
        }
        Ok(apply_swaps(&self.detect(&patch.pixels)?))
    }

    /// Stores the detector under `ocr.` with anchors and decoder settings
    /// in `ck`'s metadata.
    pub fn store(&self, ck: &mut Checkpoint<T>) {
        ck.metadata.insert(
            "ocr_anchors".into(),
            serde_json::to_string(&self.anchors).expect("anchors serialize"),
        );
        ck.metadata.insert(
            "ocr_decoder".into(),
            serde_json::to_string(&self.decoder).expect("decoder serializes"),
        );
        ck.put_network("ocr.", &self.net);
    }

    /// Inverse of [`OcrModel::store`].
    pub fn restore(ck: &Checkpoint<T>) -> Result<Self> {
        let mut m = Self::new(0);
        ck.get_network("ocr.", &mut m.net)?;
        if let Some(a) = ck.metadata.get("ocr_anchors") {
            m.anchors = serde_json::from_str(a)?;
        }
        if let Some(d) = ck.metadata.get("ocr_decoder") {
            m.decoder = serde_json::from_str(d)?;
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path, metadata: &BTreeMap<String, String>) -> Result<()> {
        let mut ck = Checkpoint {
            metadata: metadata.clone(),
            ..Checkpoint::default()
        };
        self.store(&mut ck);
        ck.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::restore(&Checkpoint::load(path)?)
    }
}

//! Vehicle re-identification across two cameras from a Siamese shape
//! stream and a license-plate OCR stream, fused by a small MLP.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below name the common concrete instantiations.

pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod imgops;
pub mod nn;
pub mod ocr;
pub mod pairgen;
pub mod pipeline;
pub mod scalar;
pub mod shape;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type TensorF32 = Tensor<f32>;
pub type TensorF64 = Tensor<f64>;
pub type NetworkF32 = nn::Sequential<f32>;
pub type NetworkF64 = nn::Sequential<f64>;
pub type OcrModelF32 = ocr::OcrModel<f32>;
pub type OcrModelF64 = ocr::OcrModel<f64>;
pub type TwoStreamModelF32 = fusion::TwoStreamModel<f32>;
pub type TwoStreamModelF64 = fusion::TwoStreamModel<f64>;
pub type PairSampleF32 = pairgen::PairSample<f32>;
pub type PairSampleF64 = pairgen::PairSample<f64>;
pub type CheckpointF32 = checkpoint::Checkpoint<f32>;
pub type CheckpointF64 = checkpoint::Checkpoint<f64>;

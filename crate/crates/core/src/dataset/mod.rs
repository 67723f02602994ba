//! Ground-truth ingestion, patch extraction and augmentation.

pub mod annotation;
pub mod augment;
pub mod corpus;
pub mod patch;

pub use annotation::{parse_ground_truth, serialize_ground_truth, SetId, VehicleAnnotation};
pub use augment::{augment_plate, augment_shape, PlateAugParams, ShapeAugParams};
pub use corpus::{
    extract_occurrence, Corpus, DirFrames, FrameSource, Occurrence, PatchBank, SetStats, Video,
};
pub use patch::{
    extract_plate_patch, extract_shape_patch, shape_region, PatchSource, PlatePatch,
    ShapeExpansion, ShapePatch, SHAPE_SIZE,
};

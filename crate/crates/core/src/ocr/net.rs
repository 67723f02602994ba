//! The CNN-OCR character detector.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{Conv2d, GroupNorm, Layer, Sequential};
use crate::scalar::Scalar;

use super::alphabet::NUM_CLASSES;

pub const PLATE_WIDTH: usize = 352;
pub const PLATE_HEIGHT: usize = 128;
pub const GRID_WIDTH: usize = 44;
pub const GRID_HEIGHT: usize = 16;
pub const NUM_ANCHORS: usize = 5;
/// Box offsets (4), objectness (1) and class logits per anchor.
pub const ANCHOR_FIELDS: usize = 5 + NUM_CLASSES;
pub const HEAD_CHANNELS: usize = NUM_ANCHORS * ANCHOR_FIELDS;

const LEAKY_SLOPE: f64 = 0.1;
const NORM_GROUPS: usize = 32;
/// Initial objectness bias; sigmoid(-4) ~ 0.018 keeps early no-object loss small.
const OBJECTNESS_PRIOR: f64 = -4.0;

/// `(filters, kernel)` per row of the architecture; `None` is a 2x2/2 max pool.
const LAYOUT: [Option<(usize, usize)>; 15] = [
    Some((32, 3)),
    None,
    Some((64, 3)),
    None,
    Some((128, 3)),
    Some((64, 1)),
    Some((128, 3)),
    None,
    Some((256, 3)),
    Some((128, 1)),
    Some((256, 3)),
    Some((512, 3)),
    Some((256, 1)),
    Some((512, 3)),
    Some((HEAD_CHANNELS, 1)),
];

/// Anchor box sizes in plate-patch pixels, `(width, height)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchors(pub Vec<(f64, f64)>);

impl Default for Anchors {
    fn default() -> Self {
        // Tall, thin character shapes.
        Anchors(vec![
            (20.0, 40.0),
            (28.0, 52.0),
            (36.0, 64.0),
            (44.0, 76.0),
            (52.0, 92.0),
        ])
    }
}

/// Builds the 15-layer detector mapping a `352 x 128 x 3` plate to a
/// `44 x 16 x 200` detection map. Every conv except the final linear 1x1
/// detection conv is followed by group normalization and a leaky rectifier.
pub fn build_cnn_ocr<T: Scalar>(seed: u64) -> Sequential<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Sequential::new(&[3, PLATE_HEIGHT, PLATE_WIDTH]);
    let mut channels = 3;
    let last = LAYOUT.len() - 1;
    for (i, row) in LAYOUT.iter().enumerate() {
        match row {
            Some((filters, kernel)) => {
                let gain = if i == last {
                    0.1
                } else {
                    (2.0f64 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE)).sqrt()
                };
                let mut conv = Conv2d::new(channels, *filters, *kernel, gain, &mut rng);
                if i == last {
                    for a in 0..NUM_ANCHORS {
                        conv.bias.data_mut()[a * ANCHOR_FIELDS + 4] = T::lit(OBJECTNESS_PRIOR);
                    }
                }
                net.push(i.to_string(), Layer::Conv(conv));
                if i != last {
                    net.push(
                        format!("{i}.norm"),
                        Layer::Norm(GroupNorm::new(*filters, NORM_GROUPS.min(*filters))),
                    );
                    net.push(format!("{i}.act"), Layer::LeakyRelu(LEAKY_SLOPE));
                }
                channels = *filters;
            }
            None => net.push(i.to_string(), Layer::MaxPool),
        }
    }
    net
}

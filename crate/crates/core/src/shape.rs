//! Small-VGG Siamese shape stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{ShapePatch, SHAPE_SIZE};
use crate::error::{Error, Result};
use crate::nn::{Conv2d, Layer, Sequential};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const EMBEDDING_LEN: usize = 2 * 2 * 512;

const FILTERS: [usize; 5] = [64, 128, 128, 256, 512];

/// Five 3x3 convolutions, each followed by a rectifier and a 2x2/2 max
/// pool. Layers are named "0".."9" in table order.
pub fn build_small_vgg<T: Scalar>(seed: u64) -> Sequential<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Sequential::new(&[3, SHAPE_SIZE, SHAPE_SIZE]);
    let mut channels = 3;
    for (i, &filters) in FILTERS.iter().enumerate() {
        let conv = Conv2d::new(channels, filters, 3, 2f64.sqrt(), &mut rng);
        net.push((2 * i).to_string(), Layer::Conv(conv));
        net.push(format!("{}.act", 2 * i), Layer::Relu);
        net.push((2 * i + 1).to_string(), Layer::MaxPool);
        channels = filters;
    }
    net.push("flatten", Layer::Flatten);
    net
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeEmbedding<T> {
    pub values: Vec<T>,
}

/// Componentwise L1 distance between two embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeDescriptor<T> {
    pub values: Vec<T>,
}

impl<T: Scalar> ShapeDescriptor<T> {
    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![T::zero(); len],
        }
    }
}

/// One tower of the Siamese pair. Both towers are this same network, so
/// weight sharing holds by construction.
pub fn embed<T: Scalar>(net: &Sequential<T>, patch: &ShapePatch<T>) -> Result<ShapeEmbedding<T>> {
    let out = net.forward(&patch.pixels)?;
    Ok(ShapeEmbedding {
        values: out.into_data(),
    })
}

pub fn shape_descriptor<T: Scalar>(
    e1: &ShapeEmbedding<T>,
    e2: &ShapeEmbedding<T>,
) -> Result<ShapeDescriptor<T>> {
    if e1.values.len() != e2.values.len() {
        return Err(Error::shape(e1.values.len(), e2.values.len()));
    }
    Ok(ShapeDescriptor {
        values: e1
            .values
            .iter()
            .zip(&e2.values)
            .map(|(&a, &b)| (a - b).abs())
            .collect(),
    })
}

/// Gradient of `sum_i g_i |a_i - b_i|` with respect to `a` (the gradient
/// for `b` is its negation).
pub(crate) fn l1_backward<T: Scalar>(a: &[T], b: &[T], grad: &[T]) -> Tensor<T> {
    let data = a
        .iter()
        .zip(b)
        .zip(grad)
        .map(|((&x, &y), &g)| {
            if x > y {
                g
            } else if x < y {
                -g
            } else {
                T::zero()
            }
        })
        .collect();
    Tensor::from_vec(&[a.len()], data).expect("length matches")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::PatchSource;

    fn src() -> PatchSource {
        PatchSource {
            vehicle_id: "v".into(),
            camera_id: 1,
            frame_index: 0,
        }
    }

    #[test]
    fn descriptor_arithmetic() {
        let a = ShapeEmbedding {
            values: vec![1.0, 0.0, 2.0],
        };
        let b = ShapeEmbedding {
            values: vec![0.0, 0.0, 1.0],
        };
        assert_eq!(
            shape_descriptor(&a, &b).unwrap().values,
            vec![1.0, 0.0, 1.0]
        );
        assert_eq!(shape_descriptor(&a, &a).unwrap().values, vec![0.0; 3]);
        let c = ShapeEmbedding { values: vec![1.0] };
        assert!(shape_descriptor(&a, &c).is_err());
    }

    #[test]
    fn zero_input_gives_finite_embedding() {
        let net = build_small_vgg::<f32>(0);
        let p = ShapePatch::new(Tensor::zeros(&[3, 64, 64]), src()).unwrap();
        let e = embed(&net, &p).unwrap();
        assert_eq!(e.values.len(), EMBEDDING_LEN);
        assert!(e.values.iter().all(|v| v.is_finite()));
        assert_eq!(embed(&net, &p).unwrap(), e);
    }

    #[test]
    fn l1_gradient_sign() {
        let g = l1_backward(&[1.0, 0.0, 2.0], &[0.0, 1.0, 2.0], &[2.0, 2.0, 2.0]);
        assert_eq!(g.data(), &[2.0, -2.0, 0.0]);
    }
}

use crate::scalar::Scalar;
use crate::tensor::Tensor;

const EPS: f64 = 1e-5;

/// Per-sample group normalization over `[C, H, W]` maps followed by a
/// per-channel affine transform. Statistics never depend on the batch.
#[derive(Debug, Clone)]
pub struct GroupNorm<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub channels: usize,
    pub groups: usize,
}

pub(crate) struct NormCache<T> {
    normalized: Vec<T>,
    inv_std: Vec<T>,
}

impl<T: Scalar> GroupNorm<T> {
    /// Panics unless `groups` divides `channels`.
    pub fn new(channels: usize, groups: usize) -> Self {
        assert!(
            groups > 0 && channels.is_multiple_of(groups),
            "{groups} groups do not divide {channels} channels"
        );
        Self {
            weight: Tensor::from_vec(&[channels], vec![T::one(); channels]).unwrap(),
            bias: Tensor::zeros(&[channels]),
            channels,
            groups,
        }
    }

    pub fn num_params(&self) -> usize {
        2 * self.channels
    }

    fn normalize(&self, x: &Tensor<T>) -> (Vec<T>, Vec<T>) {
        let per_group = x.len() / self.groups;
        let mut normalized = Vec::with_capacity(x.len());
        let mut inv_std = Vec::with_capacity(self.groups);
        for chunk in x.data().chunks(per_group) {
            let n = per_group as f64;
            let mean = chunk.iter().map(|v| v.to_f64().unwrap()).sum::<f64>() / n;
            let var = chunk
                .iter()
                .map(|v| (v.to_f64().unwrap() - mean).powi(2))
                .sum::<f64>()
                / n;
            let inv = 1.0 / (var + EPS).sqrt();
            let (m, s) = (T::lit(mean), T::lit(inv));
            normalized.extend(chunk.iter().map(|v| (*v - m) * s));
            inv_std.push(s);
        }
        (normalized, inv_std)
    }

    fn affine(&self, shape: &[usize], mut values: Vec<T>) -> Tensor<T> {
        let plane = values.len() / self.channels;
        for ((chunk, g), b) in values
            .chunks_mut(plane)
            .zip(self.weight.data())
            .zip(self.bias.data())
        {
            chunk.iter_mut().for_each(|v| *v = *v * *g + *b);
        }
        Tensor::from_vec(shape, values).unwrap()
    }

    pub(crate) fn forward_inference(&self, x: &Tensor<T>) -> Tensor<T> {
        let (normalized, _) = self.normalize(x);
        self.affine(x.shape(), normalized)
    }

    pub(crate) fn forward(&self, x: &Tensor<T>) -> (Tensor<T>, NormCache<T>) {
        let (normalized, inv_std) = self.normalize(x);
        let out = self.affine(x.shape(), normalized.clone());
        (
            out,
            NormCache {
                normalized,
                inv_std,
            },
        )
    }

    pub(crate) fn backward(
        &self,
        cache: &NormCache<T>,
        dy: &Tensor<T>,
        grad_weight: &mut Tensor<T>,
        grad_bias: &mut Tensor<T>,
    ) -> Tensor<T> {
        let plane = dy.len() / self.channels;
        let xhat = &cache.normalized;
        let mut dxhat = dy.data().to_vec();
        for (c, (gw, gb)) in grad_weight
            .data_mut()
            .iter_mut()
            .zip(grad_bias.data_mut())
            .enumerate()
        {
            let range = c * plane..(c + 1) * plane;
            for (d, xh) in dy.data()[range.clone()].iter().zip(&xhat[range.clone()]) {
                *gw += *d * *xh;
                *gb += *d;
            }
            let g = self.weight.data()[c];
            dxhat[range].iter_mut().for_each(|v| *v *= g);
        }
        let per_group = dy.len() / self.groups;
        let n = T::lit(per_group as f64);
        for ((dx, xh), inv) in dxhat
            .chunks_mut(per_group)
            .zip(xhat.chunks(per_group))
            .zip(&cache.inv_std)
        {
            let sum = dx.iter().fold(T::zero(), |a, v| a + *v);
            let dot = dx.iter().zip(xh).fold(T::zero(), |a, (d, x)| a + *d * *x);
            for (d, x) in dx.iter_mut().zip(xh) {
                *d = *inv * (n * *d - sum - *x * dot) / n;
            }
        }
        Tensor::from_vec(dy.shape(), dxhat).unwrap()
    }
}

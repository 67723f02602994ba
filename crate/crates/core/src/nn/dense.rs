use rand::Rng;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Fully connected layer, `y = W x + b` with `W` stored `[out, in]`.
#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub inputs: usize,
    pub outputs: usize,
}

impl<T: Scalar> Dense<T> {
    pub fn new<R: Rng>(inputs: usize, outputs: usize, gain: f64, rng: &mut R) -> Self {
        let bound = gain * (3.0 / inputs as f64).sqrt();
        let weight = (0..inputs * outputs)
            .map(|_| T::lit(rng.gen_range(-bound..bound)))
            .collect();
        Self {
            weight: Tensor::from_vec(&[outputs, inputs], weight).unwrap(),
            bias: Tensor::zeros(&[outputs]),
            inputs,
            outputs,
        }
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub(crate) fn forward(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.inputs);
        self.weight
            .data()
            .chunks(self.inputs)
            .zip(self.bias.data())
            .map(|(row, b)| row.iter().zip(x).fold(*b, |acc, (w, v)| acc + *w * *v))
            .collect()
    }

    pub(crate) fn backward(
        &self,
        x: &[T],
        dy: &[T],
        grad_weight: &mut Tensor<T>,
        grad_bias: &mut Tensor<T>,
        need_input_grad: bool,
    ) -> Option<Vec<T>> {
        for ((grow, gb), d) in grad_weight
            .data_mut()
            .chunks_mut(self.inputs)
            .zip(grad_bias.data_mut())
            .zip(dy)
        {
            *gb += *d;
            if *d != T::zero() {
                for (g, v) in grow.iter_mut().zip(x) {
                    *g += *d * *v;
                }
            }
        }
        if !need_input_grad {
            return None;
        }
        let mut dx = vec![T::zero(); self.inputs];
        for (row, d) in self.weight.data().chunks(self.inputs).zip(dy) {
            if *d == T::zero() {
                continue;
            }
            for (g, w) in dx.iter_mut().zip(row) {
                *g += *d * *w;
            }
        }
        Some(dx)
    }
}

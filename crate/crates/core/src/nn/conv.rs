//! 2-D convolution, stride 1, "same" zero padding, lowered to GEMM via im2col.

use rand::Rng;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl<T: Scalar> Conv2d<T> {
    /// Uniform fan-in initialization, `bound = gain * sqrt(3 / fan_in)`.
    pub fn new<R: Rng>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        gain: f64,
        rng: &mut R,
    ) -> Self {
        assert!(kernel % 2 == 1, "odd kernels only");
        let fan_in = in_channels * kernel * kernel;
        let bound = gain * (3.0 / fan_in as f64).sqrt();
        let weight = (0..out_channels * fan_in)
            .map(|_| T::lit(rng.gen_range(-bound..bound)))
            .collect();
        Self {
            weight: Tensor::from_vec(&[out_channels, in_channels, kernel, kernel], weight).unwrap(),
            bias: Tensor::zeros(&[out_channels]),
            in_channels,
            out_channels,
            kernel,
        }
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn pad(&self) -> usize {
        self.kernel / 2
    }

    /// Returns the output `[F, H, W]` and the lowered input matrix
    /// (`C*k*k x H*W`) needed by the backward pass.
    pub(crate) fn forward(&self, input: &Tensor<T>) -> (Tensor<T>, Vec<T>) {
        let [c, h, w] = dims3(input);
        debug_assert_eq!(c, self.in_channels);
        let cols = if self.kernel == 1 {
            input.data().to_vec()
        } else {
            im2col(input.data(), c, h, w, self.kernel, self.pad())
        };
        let out = self.forward_cols(&cols, h, w);
        (out, cols)
    }

    pub(crate) fn forward_inference(&self, input: &Tensor<T>) -> Tensor<T> {
        let [c, h, w] = dims3(input);
        if self.kernel == 1 {
            self.forward_cols(input.data(), h, w)
        } else {
            let cols = im2col(input.data(), c, h, w, self.kernel, self.pad());
            self.forward_cols(&cols, h, w)
        }
    }

    fn forward_cols(&self, cols: &[T], h: usize, w: usize) -> Tensor<T> {
        let hw = h * w;
        let ckk = self.in_channels * self.kernel * self.kernel;
        let f = self.out_channels;
        let mut out = vec![T::zero(); f * hw];
        for (row, b) in out.chunks_mut(hw).zip(self.bias.data()) {
            row.iter_mut().for_each(|x| *x = *b);
        }
        T::gemm(
            f,
            ckk,
            hw,
            T::one(),
            self.weight.data(),
            (ckk as isize, 1),
            cols,
            (hw as isize, 1),
            T::one(),
            &mut out,
            (hw as isize, 1),
        );
        Tensor::from_vec(&[f, h, w], out).unwrap()
    }

    /// Accumulates weight/bias gradients and optionally returns the input gradient.
    pub(crate) fn backward(
        &self,
        cols: &[T],
        in_shape: [usize; 3],
        grad_out: &Tensor<T>,
        grad_weight: &mut Tensor<T>,
        grad_bias: &mut Tensor<T>,
        need_input_grad: bool,
    ) -> Option<Tensor<T>> {
        let [c, h, w] = in_shape;
        let hw = h * w;
        let ckk = c * self.kernel * self.kernel;
        let f = self.out_channels;
        let dy = grad_out.data();

        // dW += dY * cols^T
        T::gemm(
            f,
            hw,
            ckk,
            T::one(),
            dy,
            (hw as isize, 1),
            cols,
            (1, hw as isize),
            T::one(),
            grad_weight.data_mut(),
            (ckk as isize, 1),
        );
        for (gb, row) in grad_bias.data_mut().iter_mut().zip(dy.chunks(hw)) {
            *gb += row.iter().copied().sum::<T>();
        }
        if !need_input_grad {
            return None;
        }
        // dcols = W^T * dY
        let mut dcols = vec![T::zero(); ckk * hw];
        T::gemm(
            ckk,
            f,
            hw,
            T::one(),
            self.weight.data(),
            (1, ckk as isize),
            dy,
            (hw as isize, 1),
            T::zero(),
            &mut dcols,
            (hw as isize, 1),
        );
        let dx = if self.kernel == 1 {
            dcols
        } else {
            col2im(&dcols, c, h, w, self.kernel, self.pad())
        };
        Some(Tensor::from_vec(&[c, h, w], dx).unwrap())
    }
}

pub(crate) fn dims3<T: Scalar>(t: &Tensor<T>) -> [usize; 3] {
    let s = t.shape();
    assert_eq!(s.len(), 3, "expected a [C, H, W] tensor, got {s:?}");
    [s[0], s[1], s[2]]
}

/// Valid output-column range `[x0, x1)` for kernel offset `kx`.
#[inline]
fn valid_range(len: usize, offset: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(offset);
    let hi = (len + pad).saturating_sub(offset).min(len);
    (lo, hi.max(lo))
}

fn im2col<T: Scalar>(input: &[T], c: usize, h: usize, w: usize, k: usize, pad: usize) -> Vec<T> {
    let hw = h * w;
    let mut cols = vec![T::zero(); c * k * k * hw];
    for ch in 0..c {
        let plane = &input[ch * hw..(ch + 1) * hw];
        for ky in 0..k {
            let (y0, y1) = valid_range(h, ky, pad);
            for kx in 0..k {
                let (x0, x1) = valid_range(w, kx, pad);
                let row = ((ch * k + ky) * k + kx) * hw;
                for y in y0..y1 {
                    let iy = y + ky - pad;
                    let src = &plane[iy * w + x0 + kx - pad..iy * w + x1 + kx - pad];
                    cols[row + y * w + x0..row + y * w + x1].copy_from_slice(src);
                }
            }
        }
    }
    cols
}

fn col2im<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, k: usize, pad: usize) -> Vec<T> {
    let hw = h * w;
    let mut out = vec![T::zero(); c * hw];
    for ch in 0..c {
        let plane = &mut out[ch * hw..(ch + 1) * hw];
        for ky in 0..k {
            let (y0, y1) = valid_range(h, ky, pad);
            for kx in 0..k {
                let (x0, x1) = valid_range(w, kx, pad);
                let row = ((ch * k + ky) * k + kx) * hw;
                for y in y0..y1 {
                    let iy = y + ky - pad;
                    let dst = &mut plane[iy * w + x0 + kx - pad..iy * w + x1 + kx - pad];
                    let src = &cols[row + y * w + x0..row + y * w + x1];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += *s;
                    }
                }
            }
        }
    }
    out
}

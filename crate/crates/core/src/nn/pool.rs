use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::conv::dims3;

/// 2x2 max pooling with stride 2. Odd trailing rows/columns are dropped.
pub(crate) fn maxpool_forward<T: Scalar>(input: &Tensor<T>) -> (Tensor<T>, Vec<u32>) {
    let [c, h, w] = dims3(input);
    let (oh, ow) = (h / 2, w / 2);
    let src = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for y in 0..oh {
            for x in 0..ow {
                let i0 = base + 2 * y * w + 2 * x;
                let mut best = i0;
                for idx in [i0 + 1, i0 + w, i0 + w + 1] {
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                out.push(src[best]);
                arg.push(best as u32);
            }
        }
    }
    (Tensor::from_vec(&[c, oh, ow], out).unwrap(), arg)
}

pub(crate) fn maxpool_inference<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    maxpool_forward(input).0
}

pub(crate) fn maxpool_backward<T: Scalar>(
    argmax: &[u32],
    in_shape: [usize; 3],
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let mut dx = Tensor::zeros(&in_shape);
    let d = dx.data_mut();
    for (i, g) in argmax.iter().zip(grad_out.data()) {
        d[*i as usize] += *g;
    }
    dx
}

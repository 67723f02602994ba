//! Minimal feed-forward network toolkit: convolution, max pooling,
//! rectifiers and dense layers with hand-written backward passes.

mod conv;
mod dense;
pub mod loss;
mod norm;
mod optim;
mod pool;

pub use conv::Conv2d;
pub use dense::Dense;
pub use norm::GroupNorm;
pub use optim::Adam;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub enum Layer<T> {
    Conv(Conv2d<T>),
    MaxPool,
    Relu,
    LeakyRelu(f64),
    Flatten,
    Dense(Dense<T>),
    Norm(GroupNorm<T>),
}

impl<T: Scalar> Layer<T> {
    fn kind(&self) -> &'static str {
        match self {
            Layer::Conv(_) => "conv",
            Layer::MaxPool => "max",
            Layer::Relu => "relu",
            Layer::LeakyRelu(_) => "leaky",
            Layer::Flatten => "flatten",
            Layer::Dense(_) => "dense",
            Layer::Norm(_) => "norm",
        }
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = || {
            Error::shape(
                format!("valid input for {}", self.kind()),
                format!("{input:?}"),
            )
        };
        Ok(match self {
            Layer::Conv(c) => {
                if input.len() != 3 || input[0] != c.in_channels {
                    return Err(bad());
                }
                vec![c.out_channels, input[1], input[2]]
            }
            Layer::MaxPool => {
                if input.len() != 3 || input[1] < 2 || input[2] < 2 {
                    return Err(bad());
                }
                vec![input[0], input[1] / 2, input[2] / 2]
            }
            Layer::Relu | Layer::LeakyRelu(_) => input.to_vec(),
            Layer::Norm(n) => {
                if input.len() != 3 || input[0] != n.channels {
                    return Err(bad());
                }
                input.to_vec()
            }
            Layer::Flatten => vec![input.iter().product()],
            Layer::Dense(d) => {
                if input != [d.inputs] {
                    return Err(bad());
                }
                vec![d.outputs]
            }
        })
    }

    /// Multiply-accumulate count for one forward pass.
    fn macs(&self, input: &[usize]) -> u64 {
        match self {
            Layer::Conv(c) => {
                (c.in_channels * c.kernel * c.kernel * c.out_channels * input[1] * input[2]) as u64
            }
            Layer::Dense(d) => (d.inputs * d.outputs) as u64,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NamedLayer<T> {
    pub name: String,
    pub layer: Layer<T>,
}

/// One row of a shape trace: dimensions are reported `width x height x channels`
/// for image tensors and `[n]` for vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRow {
    pub name: String,
    pub kind: &'static str,
    pub filters: Option<usize>,
    pub kernel: Option<usize>,
    pub input: Vec<usize>,
    pub output: Vec<usize>,
}

fn whc(shape: &[usize]) -> Vec<usize> {
    match shape {
        [c, h, w] => vec![*w, *h, *c],
        other => other.to_vec(),
    }
}

enum Cache<T> {
    Conv {
        cols: Vec<T>,
        in_shape: [usize; 3],
    },
    Pool {
        argmax: Vec<u32>,
        in_shape: [usize; 3],
    },
    Act {
        output: Tensor<T>,
    },
    Flatten {
        in_shape: Vec<usize>,
    },
    Dense {
        input: Vec<T>,
    },
    Norm(norm::NormCache<T>),
}

/// Activations recorded by [`Sequential::forward_train`].
pub struct Tape<T> {
    caches: Vec<Cache<T>>,
}

/// Gradient buffers aligned with [`Sequential::params`].
#[derive(Debug, Clone)]
pub struct Grads<T>(pub Vec<Tensor<T>>);

impl<T: Scalar> Grads<T> {
    pub fn scale(&mut self, factor: T) {
        self.0.iter_mut().for_each(|g| g.scale(factor));
    }

    pub fn zero(&mut self) {
        self.0.iter_mut().for_each(|g| g.fill(T::zero()));
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(Tensor::all_finite)
    }
}

#[derive(Debug, Clone)]
pub struct Sequential<T> {
    input_shape: Vec<usize>,
    layers: Vec<NamedLayer<T>>,
}

impl<T: Scalar> Sequential<T> {
    pub fn new(input_shape: &[usize]) -> Self {
        Self {
            input_shape: input_shape.to_vec(),
            layers: Vec::new(),
        }
    }

    /// Appends a layer. Panics if it cannot consume the current output shape.
    pub fn push(&mut self, name: impl Into<String>, layer: Layer<T>) {
        let current = self.output_shape();
        if let Err(e) = layer.output_shape(&current) {
            panic!("incompatible layer: {e}");
        }
        self.layers.push(NamedLayer {
            name: name.into(),
            layer,
        });
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.layers
            .iter()
            .fold(self.input_shape.clone(), |shape, l| {
                l.layer.output_shape(&shape).expect("validated by push")
            })
    }

    pub fn layers(&self) -> &[NamedLayer<T>] {
        &self.layers
    }

    /// Shape trace of the parameterized and pooling layers (activations are folded in).
    pub fn trace(&self) -> Vec<TraceRow> {
        let mut shape = self.input_shape.clone();
        let mut rows = Vec::new();
        for nl in &self.layers {
            let out = nl
                .layer
                .output_shape(&shape)
                .expect("layers were validated on push");
            if !matches!(nl.layer, Layer::Relu | Layer::LeakyRelu(_) | Layer::Norm(_)) {
                let (filters, kernel) = match &nl.layer {
                    Layer::Conv(c) => (Some(c.out_channels), Some(c.kernel)),
                    Layer::Dense(d) => (Some(d.outputs), None),
                    Layer::MaxPool => (None, Some(2)),
                    _ => (None, None),
                };
                rows.push(TraceRow {
                    name: nl.name.clone(),
                    kind: nl.layer.kind(),
                    filters,
                    kernel,
                    input: whc(&shape),
                    output: whc(&out),
                });
            }
            shape = out;
        }
        rows
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|nl| match &nl.layer {
                Layer::Conv(c) => c.num_params(),
                Layer::Dense(d) => d.num_params(),
                Layer::Norm(n) => n.num_params(),
                _ => 0,
            })
            .sum()
    }

    /// Forward cost in FLOPs, counting a multiply-accumulate as two.
    pub fn flops(&self) -> u64 {
        let mut shape = self.input_shape.clone();
        let mut total = 0;
        for nl in &self.layers {
            total += 2 * nl.layer.macs(&shape);
            shape = nl.layer.output_shape(&shape).unwrap();
        }
        total
    }

    /// Named parameters in a fixed order: for each layer, weight then bias.
    pub fn params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for nl in &self.layers {
            match &nl.layer {
                Layer::Conv(Conv2d { weight, bias, .. })
                | Layer::Dense(Dense { weight, bias, .. })
                | Layer::Norm(GroupNorm { weight, bias, .. }) => {
                    out.push((format!("{}.weight", nl.name), weight));
                    out.push((format!("{}.bias", nl.name), bias));
                }
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for nl in &mut self.layers {
            match &mut nl.layer {
                Layer::Conv(Conv2d { weight, bias, .. })
                | Layer::Dense(Dense { weight, bias, .. })
                | Layer::Norm(GroupNorm { weight, bias, .. }) => {
                    out.push(weight);
                    out.push(bias);
                }
                _ => {}
            }
        }
        out
    }

    pub fn zero_grads(&self) -> Grads<T> {
        Grads(
            self.params()
                .into_iter()
                .map(|(_, p)| Tensor::zeros(p.shape()))
                .collect(),
        )
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        if x.shape() != self.input_shape.as_slice() {
            return Err(Error::shape(
                format!("{:?}", self.input_shape),
                format!("{:?}", x.shape()),
            ));
        }
        Ok(())
    }

    /// Inference pass; keeps no intermediate state.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.run(x, None)
    }

    /// Output of every layer, in order.
    pub fn activations(&self, x: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let mut out = Vec::with_capacity(self.layers.len());
        self.run(x, Some(&mut out))?;
        Ok(out)
    }

    fn run(&self, x: &Tensor<T>, mut record: Option<&mut Vec<Tensor<T>>>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for nl in &self.layers {
            cur = match &nl.layer {
                Layer::Conv(c) => c.forward_inference(&cur),
                Layer::MaxPool => pool::maxpool_inference(&cur),
                Layer::Relu => map(cur, |v| v.max(T::zero())),
                Layer::LeakyRelu(s) => {
                    let s = T::lit(*s);
                    map(cur, |v| if v > T::zero() { v } else { v * s })
                }
                Layer::Flatten => {
                    let n = cur.len();
                    cur.reshape(&[n])?
                }
                Layer::Dense(d) => Tensor::from_vec(&[d.outputs], d.forward(cur.data()))?,
                Layer::Norm(n) => n.forward_inference(&cur),
            };
            if let Some(r) = record.as_deref_mut() {
                r.push(cur.clone());
            }
        }
        Ok(cur)
    }

    /// Forward pass that records what [`Sequential::backward`] needs.
    pub fn forward_train(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Tape<T>)> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for nl in &self.layers {
            cur = match &nl.layer {
                Layer::Conv(c) => {
                    let in_shape = conv::dims3(&cur);
                    let (out, cols) = c.forward(&cur);
                    caches.push(Cache::Conv { cols, in_shape });
                    out
                }
                Layer::MaxPool => {
                    let in_shape = conv::dims3(&cur);
                    let (out, argmax) = pool::maxpool_forward(&cur);
                    caches.push(Cache::Pool { argmax, in_shape });
                    out
                }
                Layer::Relu => {
                    let out = map(cur, |v| v.max(T::zero()));
                    caches.push(Cache::Act {
                        output: out.clone(),
                    });
                    out
                }
                Layer::LeakyRelu(s) => {
                    let s = T::lit(*s);
                    let out = map(cur, |v| if v > T::zero() { v } else { v * s });
                    caches.push(Cache::Act {
                        output: out.clone(),
                    });
                    out
                }
                Layer::Flatten => {
                    let in_shape = cur.shape().to_vec();
                    let n = cur.len();
                    caches.push(Cache::Flatten { in_shape });
                    cur.reshape(&[n])?
                }
                Layer::Dense(d) => {
                    let out = d.forward(cur.data());
                    caches.push(Cache::Dense {
                        input: cur.into_data(),
                    });
                    Tensor::from_vec(&[d.outputs], out)?
                }
                Layer::Norm(n) => {
                    let (out, cache) = n.forward(&cur);
                    caches.push(Cache::Norm(cache));
                    out
                }
            };
        }
        Ok((cur, Tape { caches }))
    }

    /// Backpropagates `grad_out`, accumulating into `grads`. Returns the
    /// gradient with respect to the network input when requested.
    pub fn backward(
        &self,
        tape: Tape<T>,
        grad_out: Tensor<T>,
        grads: &mut Grads<T>,
        need_input_grad: bool,
    ) -> Option<Tensor<T>> {
        assert_eq!(tape.caches.len(), self.layers.len());
        let mut param_idx = grads.0.len();
        let mut grad = grad_out;
        for (i, (nl, cache)) in self.layers.iter().zip(tape.caches).enumerate().rev() {
            // Below the first parameterized layer only the input gradient is left to compute.
            let want = need_input_grad
                || self.layers[..i]
                    .iter()
                    .any(|l| matches!(l.layer, Layer::Conv(_) | Layer::Dense(_) | Layer::Norm(_)));
            grad = match (&nl.layer, cache) {
                (Layer::Conv(c), Cache::Conv { cols, in_shape }) => {
                    param_idx -= 2;
                    let (gw, gb) = split_pair(&mut grads.0, param_idx);
                    c.backward(&cols, in_shape, &grad, gw, gb, want)?
                }
                (Layer::Dense(d), Cache::Dense { input }) => {
                    param_idx -= 2;
                    let (gw, gb) = split_pair(&mut grads.0, param_idx);
                    {
                        let dx = d.backward(&input, grad.data(), gw, gb, want)?;
                        Tensor::from_vec(&[d.inputs], dx).unwrap()
                    }
                }
                (Layer::Norm(n), Cache::Norm(cache)) => {
                    param_idx -= 2;
                    let (gw, gb) = split_pair(&mut grads.0, param_idx);
                    n.backward(&cache, &grad, gw, gb)
                }
                (Layer::MaxPool, Cache::Pool { argmax, in_shape }) => {
                    pool::maxpool_backward(&argmax, in_shape, &grad)
                }
                (Layer::Relu, Cache::Act { output }) => {
                    let mut g = grad;
                    for (gi, o) in g.data_mut().iter_mut().zip(output.data()) {
                        if *o <= T::zero() {
                            *gi = T::zero();
                        }
                    }
                    g
                }
                (Layer::LeakyRelu(s), Cache::Act { output }) => {
                    let s = T::lit(*s);
                    let mut g = grad;
                    for (gi, o) in g.data_mut().iter_mut().zip(output.data()) {
                        if *o <= T::zero() {
                            *gi *= s;
                        }
                    }
                    g
                }
                (Layer::Flatten, Cache::Flatten { in_shape }) => grad.reshape(&in_shape).unwrap(),
                _ => unreachable!("tape does not match network"),
            };
        }
        Some(grad)
    }
}

fn map<T: Scalar>(mut t: Tensor<T>, f: impl Fn(T) -> T) -> Tensor<T> {
    t.data_mut().iter_mut().for_each(|v| *v = f(*v));
    t
}

fn split_pair<T>(v: &mut [Tensor<T>], i: usize) -> (&mut Tensor<T>, &mut Tensor<T>) {
    let (a, b) = v[i..i + 2].split_at_mut(1);
    (&mut a[0], &mut b[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_net(rng: &mut ChaCha8Rng) -> Sequential<f64> {
        let mut net = Sequential::new(&[2, 6, 6]);
        net.push("0", Layer::Conv(Conv2d::new(2, 4, 3, 1.4, rng)));
        net.push("0.norm", Layer::Norm(GroupNorm::new(4, 2)));
        net.push("0.act", Layer::LeakyRelu(0.1));
        net.push("1", Layer::MaxPool);
        net.push("2", Layer::Conv(Conv2d::new(4, 2, 1, 1.4, rng)));
        net.push("2.act", Layer::Relu);
        net.push("flat", Layer::Flatten);
        net.push("3", Layer::Dense(Dense::new(18, 4, 1.0, rng)));
        for p in net.params_mut() {
            p.data_mut()
                .iter_mut()
                .for_each(|v| *v += rng.gen_range(-0.05..0.05));
        }
        net
    }

    fn loss(net: &Sequential<f64>, x: &Tensor<f64>, w: &[f64]) -> f64 {
        net.forward(x)
            .unwrap()
            .data()
            .iter()
            .zip(w)
            .map(|(a, b)| a * b)
            .sum()
    }

    #[test]
    fn backward_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut net = tiny_net(&mut rng);
        let x = Tensor::from_vec(
            &[2, 6, 6],
            (0..72).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let w: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, tape) = net.forward_train(&x).unwrap();
        let mut grads = net.zero_grads();
        let dx = net
            .backward(
                tape,
                Tensor::from_vec(&[4], w.clone()).unwrap(),
                &mut grads,
                true,
            )
            .unwrap();

        let h = 1e-6;
        let n_params = net.params().len();
        for p in 0..n_params {
            let len = net.params()[p].1.len();
            for i in (0..len).step_by(if len < 16 { 1 } else { 7 }) {
                let orig = net.params()[p].1.data()[i];
                net.params_mut()[p].data_mut()[i] = orig + h;
                let up = loss(&net, &x, &w);
                net.params_mut()[p].data_mut()[i] = orig - h;
                let down = loss(&net, &x, &w);
                net.params_mut()[p].data_mut()[i] = orig;
                let fd = (up - down) / (2.0 * h);
                let an = grads.0[p].data()[i];
                assert!((fd - an).abs() < 1e-6, "param {p}[{i}]: fd {fd} vs {an}");
            }
        }
        for i in (0..72).step_by(5) {
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let fd = (loss(&net, &xp, &w) - loss(&net, &xm, &w)) / (2.0 * h);
            assert!((fd - dx.data()[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn inference_and_training_forward_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = tiny_net(&mut rng);
        let x = Tensor::from_vec(
            &[2, 6, 6],
            (0..72).map(|i| (i as f64 * 0.37).sin()).collect(),
        )
        .unwrap();
        assert_eq!(net.forward(&x).unwrap(), net.forward_train(&x).unwrap().0);
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = tiny_net(&mut rng);
        assert!(net.forward(&Tensor::zeros(&[2, 5, 6])).is_err());
    }
}

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Adam with Keras defaults for the moment decay rates and epsilon.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update. `params` and `grads` must keep the same order between calls.
    pub fn step(&mut self, params: Vec<&mut Tensor<T>>, grads: &[Tensor<T>]) {
        assert_eq!(params.len(), grads.len());
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Tensor::zeros(g.shape())).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::lit(self.beta1);
        let b2 = T::lit(self.beta2);
        let one = T::one();
        let lr_t = T::lit(
            self.learning_rate * (1.0 - self.beta2.powi(t)).sqrt() / (1.0 - self.beta1.powi(t)),
        );
        let eps = T::lit(self.epsilon);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((w, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + (one - b1) * gi;
                *vi = b2 * *vi + (one - b2) * gi * gi;
                *w -= lr_t * *mi / (vi.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut x = Tensor::from_vec(&[2], vec![3.0f64, -2.0]).unwrap();
        let mut opt = Adam::new(0.1);
        for _ in 0..500 {
            let g = Tensor::from_vec(&[2], x.data().iter().map(|v| 2.0 * v).collect()).unwrap();
            opt.step(vec![&mut x], &[g]);
        }
        assert!(x.data().iter().all(|v| v.abs() < 1e-2), "{x:?}");
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut x = Tensor::from_vec(&[1], vec![1.0f64]).unwrap();
        let mut opt = Adam::new(1e-4);
        opt.step(vec![&mut x], &[Tensor::from_vec(&[1], vec![5.0]).unwrap()]);
        assert!((x.data()[0] - (1.0 - 1e-4)).abs() < 1e-9);
    }
}

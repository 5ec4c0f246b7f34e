// SPDX-License-Identifier: MIT OR Apache-2.0

use ndarray::{Array2, NdFloat, Zip};

use crate::probe::model::ProbeParams;

/// Adam state for one set of probe parameters.
pub struct Adam<T> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    step: i32,
    moments: Vec<(Array2<T>, Array2<T>)>,
}

impl<T: NdFloat> Adam<T> {
    pub fn new(params: &ProbeParams<T>, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let moments = params
            .tensors()
            .iter()
            .map(|t| (Array2::zeros(t.raw_dim()), Array2::zeros(t.raw_dim())))
            .collect();
        let c = |v: f64| T::from(v).unwrap();
        Adam {
            lr: c(lr),
            beta1: c(beta1),
            beta2: c(beta2),
            eps: c(eps),
            step: 0,
            moments,
        }
    }

    pub fn update(&mut self, params: &mut ProbeParams<T>, grads: &ProbeParams<T>) {
        self.step += 1;
        let one = T::one();
        let bc1 = one - self.beta1.powi(self.step);
        let bc2 = one - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for ((p, g), (m, v)) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.moments.iter_mut())
        {
            Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            });
        }
    }
}

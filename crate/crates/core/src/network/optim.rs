//! AdamW with decoupled weight decay.

use serde::{Deserialize, Serialize};

use super::Layer;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

/// Moment accumulators shaped like the network layers, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<T> {
    pub m: Vec<Layer<T>>,
    pub v: Vec<Layer<T>>,
    pub step: u64,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(layers: &[Layer<T>]) -> Self {
        let zeros = || {
            layers
                .iter()
                .map(|l| Layer::zeros(l.weight.ncols(), l.weight.nrows()))
                .collect()
        };
        AdamW {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    /// One update of every parameter in `layers` from `grads`.
    pub fn step(&mut self, cfg: &AdamWConfig, layers: &mut [Layer<T>], grads: &[Layer<T>]) {
        self.step += 1;
        let t = self.step as i32;
        let lr = T::of(cfg.lr);
        let b1 = T::of(cfg.beta1);
        let b2 = T::of(cfg.beta2);
        let eps = T::of(cfg.eps);
        let decay = T::one() - T::of(cfg.lr * cfg.weight_decay);
        let bc1 = T::one() - T::of(cfg.beta1.powi(t));
        let bc2 = T::one() - T::of(cfg.beta2.powi(t));
        let one = T::one();

        let update = |p: &mut T, g: T, m: &mut T, v: &mut T| {
            *p = *p * decay;
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };

        for (l, layer) in layers.iter_mut().enumerate() {
            let (ml, vl, gl) = (&mut self.m[l], &mut self.v[l], &grads[l]);
            ndarray::Zip::from(&mut layer.weight)
                .and(&gl.weight)
                .and(&mut ml.weight)
                .and(&mut vl.weight)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut layer.bias)
                .and(&gl.bias)
                .and(&mut ml.bias)
                .and(&mut vl.bias)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
    }
}

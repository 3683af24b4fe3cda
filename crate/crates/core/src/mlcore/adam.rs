//! Adam with bias-corrected moments.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::nn::{DenseNetwork, Gradients};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: Vec<(Array2<f64>, Array1<f64>)>,
    v: Vec<(Array2<f64>, Array1<f64>)>,
}

impl AdamState {
    pub fn new(net: &DenseNetwork, learning_rate: f64) -> Self {
        let zeros: Vec<_> = net
            .layers
            .iter()
            .map(|l| (Array2::zeros(l.weights.raw_dim()), Array1::zeros(l.bias.len())))
            .collect();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies one update to `net`. Shape mismatches and non-finite
    /// gradients leave both the network and the state untouched.
    pub fn update(&mut self, net: &mut DenseNetwork, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != net.layers.len() || self.m.len() != net.layers.len() {
            return Err(Error::Shape {
                expected: net.layers.len(),
                actual: grads.layers.len(),
            });
        }
        for ((gw, gb), l) in grads.layers.iter().zip(&net.layers) {
            if gw.dim() != l.weights.dim() || gb.len() != l.bias.len() {
                return Err(Error::Shape {
                    expected: l.weights.len() + l.bias.len(),
                    actual: gw.len() + gb.len(),
                });
            }
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradients".into()));
        }
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let lr = self.learning_rate;
        let step = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let mh = *m / c1;
            let vh = *v / c2;
            *p -= lr * mh / (vh.sqrt() + eps);
        };
        for (i, l) in net.layers.iter_mut().enumerate() {
            let (gw, gb) = &grads.layers[i];
            let (mw, mb) = &mut self.m[i];
            let (vw, vb) = &mut self.v[i];
            ndarray::Zip::from(&mut l.weights)
                .and(gw)
                .and(mw)
                .and(vw)
                .for_each(|p, g, m, v| step(p, *g, m, v));
            ndarray::Zip::from(&mut l.bias)
                .and(gb)
                .and(mb)
                .and(vb)
                .for_each(|p, g, m, v| step(p, *g, m, v));
        }
        Ok(())
    }
}

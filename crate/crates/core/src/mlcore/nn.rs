//! Small fully connected networks with manual backprop.
//!
//! Weights are stored `inputs x outputs` so a batch (one row per sample)
//! goes through a layer as `x.dot(w) + b`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

pub const NETWORK_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn inputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.ncols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNetwork {
    pub version: u32,
    pub layers: Vec<DenseLayer>,
}

/// Parameter gradients, one `(weights, bias)` pair per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|(w, b)| w.iter().chain(b.iter()).all(|v| v.is_finite()))
    }

    pub fn scale(&mut self, k: f64) {
        for (w, b) in &mut self.layers {
            *w *= k;
            *b *= k;
        }
    }
}

/// Activations kept from a batch forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `acts[0]` is the input, `acts[i+1]` the output of layer `i`.
    acts: Vec<Array2<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("trace holds the input")
    }
}

impl DenseNetwork {
    /// Fan-in scaled uniform init: weights in +-1/sqrt(inputs), zero bias.
    /// `sizes` lists layer widths from input to output; the last layer is
    /// identity, the rest use `hidden`.
    pub fn new(sizes: &[usize], hidden: Activation, rng: &mut Rng) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidInput(format!("bad layer sizes {sizes:?}")));
        }
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let bound = 1.0 / (sizes[i] as f64).sqrt();
                DenseLayer {
                    weights: Array2::from_shape_fn((sizes[i], sizes[i + 1]), |_| {
                        rng.random_range(-bound..bound)
                    }),
                    bias: Array1::zeros(sizes[i + 1]),
                    activation: if i + 1 == n {
                        Activation::Identity
                    } else {
                        hidden
                    },
                }
            })
            .collect();
        Ok(Self {
            version: NETWORK_FORMAT_VERSION,
            layers,
        })
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        let net = Self {
            version: NETWORK_FORMAT_VERSION,
            layers,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Empty("network layers"));
        }
        for l in &self.layers {
            if l.bias.len() != l.outputs() {
                return Err(Error::Shape {
                    expected: l.outputs(),
                    actual: l.bias.len(),
                });
            }
        }
        for w in self.layers.windows(2) {
            if w[0].outputs() != w[1].inputs() {
                return Err(Error::Shape {
                    expected: w[0].outputs(),
                    actual: w[1].inputs(),
                });
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let xb = ArrayView2::from_shape((1, x.len()), x)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(self.forward_batch(xb)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        let mut a = x.to_owned();
        for l in &self.layers {
            a = apply_layer(l, &a);
        }
        Ok(a)
    }

    pub fn forward_trace(&self, x: ArrayView2<f64>) -> Result<ForwardTrace> {
        self.check_input(x.ncols())?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_owned());
        for l in &self.layers {
            let next = apply_layer(l, acts.last().unwrap());
            acts.push(next);
        }
        Ok(ForwardTrace { acts })
    }

    /// Gradients of `sum(grad_out * output)` for a single input.
    pub fn backward(&self, x: &[f64], grad_out: &[f64]) -> Result<Gradients> {
        let xb = ArrayView2::from_shape((1, x.len()), x)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        let gb = ArrayView2::from_shape((1, grad_out.len()), grad_out)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        let trace = self.forward_trace(xb)?;
        self.backward_trace(&trace, gb)
    }

    /// Gradients summed over the batch rows of the trace.
    pub fn backward_trace(&self, trace: &ForwardTrace, grad_out: ArrayView2<f64>) -> Result<Gradients> {
        let out = trace.output();
        if grad_out.dim() != out.dim() {
            return Err(Error::Shape {
                expected: out.len(),
                actual: grad_out.len(),
            });
        }
        let mut delta = grad_out.to_owned();
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate().rev() {
            if l.activation == Activation::Relu {
                // relu output > 0 iff pre-activation > 0
                delta.zip_mut_with(&trace.acts[i + 1], |d, a| {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            let input = &trace.acts[i];
            let gw = input.t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            if i > 0 {
                delta = delta.dot(&l.weights.t());
            }
            layers.push((gw, gb));
        }
        layers.reverse();
        Ok(Gradients { layers })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let net: Self = serde_json::from_str(s)?;
        if net.version != NETWORK_FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported network version {}",
                net.version
            )));
        }
        net.validate()?;
        Ok(net)
    }

    fn check_input(&self, n: usize) -> Result<()> {
        if n != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                actual: n,
            });
        }
        Ok(())
    }
}

fn apply_layer(l: &DenseLayer, a: &Array2<f64>) -> Array2<f64> {
    let mut z = a.dot(&l.weights) + &l.bias;
    if l.activation == Activation::Relu {
        z.mapv_inplace(|v| v.max(0.0));
    }
    z
}

//! Agent state: per HP, six log-standardized counters optionally followed by
//! the log-standardized predicted worst-case QoS.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qospred::predictor::log1p10;
use crate::simenv::CounterVector;

const MIN_STD: f64 = 1e-9;

/// Frozen per-feature statistics in log10(1+x) space, shared by every HP
/// block of the state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub with_prediction: bool,
}

impl StateNormalizer {
    pub fn block_dim(&self) -> usize {
        if self.with_prediction {
            7
        } else {
            6
        }
    }

    /// Identity transform after the log step.
    pub fn identity(with_prediction: bool) -> Self {
        let d = if with_prediction { 7 } else { 6 };
        Self {
            mean: vec![0.0; d],
            std: vec![1.0; d],
            with_prediction,
        }
    }

    /// Fits statistics from raw counter vectors and, when `predictions` is
    /// given, the matching predicted QoS values.
    pub fn fit(counters: &[CounterVector], predictions: Option<&[f64]>) -> Result<Self> {
        if counters.is_empty() {
            return Err(Error::Empty("normalizer samples"));
        }
        if let Some(p) = predictions {
            if p.len() != counters.len() {
                return Err(Error::Shape {
                    expected: counters.len(),
                    actual: p.len(),
                });
            }
        }
        let with_prediction = predictions.is_some();
        let d = if with_prediction { 7 } else { 6 };
        let rows: Vec<Vec<f64>> = counters
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let mut r: Vec<f64> = c.to_array().iter().map(|v| log1p10(*v)).collect();
                if let Some(p) = predictions {
                    r.push(log1p10(p[i]));
                }
                r
            })
            .collect();
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("normalizer samples".into()));
        }
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std = (0..d)
            .map(|j| {
                let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                let s = var.sqrt();
                if s < MIN_STD {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(Self {
            mean,
            std,
            with_prediction,
        })
    }

    fn push_block(&self, out: &mut Vec<f64>, counters: &CounterVector, pred: Option<f64>) -> Result<()> {
        let raw = counters.to_array();
        let mut block: Vec<f64> = raw.to_vec();
        if self.with_prediction {
            block.push(pred.ok_or_else(|| Error::InvalidInput("predicted QoS missing".into()))?);
        }
        for (j, v) in block.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::NonFinite(format!("state input {j} = {v}")));
            }
            out.push((log1p10(*v) - self.mean[j]) / self.std[j]);
        }
        Ok(())
    }
}

/// Concatenates one block per HP. `predicted` must hold one value per HP
/// when the normalizer includes the prediction and is ignored otherwise.
pub fn build_state(counters: &[CounterVector], predicted: &[f64], norm: &StateNormalizer) -> Result<Vec<f64>> {
    if counters.is_empty() {
        return Err(Error::Empty("HP counter blocks"));
    }
    if norm.with_prediction && predicted.len() != counters.len() {
        return Err(Error::Shape {
            expected: counters.len(),
            actual: predicted.len(),
        });
    }
    let mut out = Vec::with_capacity(counters.len() * norm.block_dim());
    for (i, c) in counters.iter().enumerate() {
        norm.push_block(&mut out, c, predicted.get(i).copied())?;
    }
    Ok(out)
}

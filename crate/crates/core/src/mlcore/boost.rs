//! Gradient-boosted trees for squared-error regression and binary
//! log-loss classification.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::tree::{GrowParams, RegressionTree};
use crate::error::{ensure_finite, Error, Result};

pub const BOOSTED_FORMAT_VERSION: u32 = 1;

/// Largest Newton leaf step for the logistic objective.
const MAX_LOGISTIC_LEAF: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    SquaredError,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub objective: Objective,
}

impl BoostParams {
    pub fn regression(estimators: usize, max_depth: usize, learning_rate: f64) -> Self {
        Self {
            estimators,
            max_depth,
            learning_rate,
            objective: Objective::SquaredError,
        }
    }

    pub fn classifier(estimators: usize, max_depth: usize, learning_rate: f64) -> Self {
        Self {
            objective: Objective::Logistic,
            ..Self::regression(estimators, max_depth, learning_rate)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub version: u32,
    pub objective: Objective,
    pub base_score: f64,
    pub learning_rate: f64,
    pub n_features: usize,
    pub trees: Vec<RegressionTree>,
    /// Total split gain credited to each feature during fitting.
    pub feature_importance: Vec<f64>,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl BoostedModel {
    /// A model whose only tree is a single leaf, useful as a stand-in.
    pub fn constant(objective: Objective, base_score: f64, n_features: usize) -> Self {
        Self {
            version: BOOSTED_FORMAT_VERSION,
            objective,
            base_score,
            learning_rate: 1.0,
            n_features,
            trees: vec![RegressionTree::leaf(0.0)],
            feature_importance: vec![0.0; n_features],
        }
    }

    pub fn margin(&self, x: &[f64]) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    fn output(&self, margin: f64) -> f64 {
        match self.objective {
            Objective::SquaredError => margin,
            Objective::Logistic => sigmoid(margin),
        }
    }

    /// Regression value, or probability of the positive class for logistic models.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::Shape {
                expected: self.n_features,
                actual: x.len(),
            });
        }
        Ok(self.output(self.margin(x)))
    }

    pub fn predict_rows(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.n_features {
            return Err(Error::Shape {
                expected: self.n_features,
                actual: x.ncols(),
            });
        }
        let mut buf = vec![0.0; self.n_features];
        Ok(x
            .rows()
            .into_iter()
            .map(|row| {
                for (b, v) in buf.iter_mut().zip(row.iter()) {
                    *b = *v;
                }
                self.output(self.margin(&buf))
            })
            .collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        if m.version != BOOSTED_FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported boosted model version {}",
                m.version
            )));
        }
        Ok(m)
    }
}

/// Mean training loss of `model` on the given data (squared error or log-loss).
pub fn training_loss(objective: Objective, margins: &[f64], y: &[f64]) -> f64 {
    let n = y.len() as f64;
    match objective {
        Objective::SquaredError => {
            margins.iter().zip(y).map(|(m, t)| (m - t).powi(2)).sum::<f64>() / n
        }
        Objective::Logistic => {
            margins
                .iter()
                .zip(y)
                .map(|(m, t)| {
                    // log(1 + e^m) - t*m, computed stably
                    let softplus = if *m > 0.0 {
                        m + (-m).exp().ln_1p()
                    } else {
                        m.exp().ln_1p()
                    };
                    softplus - t * m
                })
                .sum::<f64>()
                / n
        }
    }
}

pub fn fit_boosted(x: ArrayView2<f64>, y: &[f64], params: &BoostParams) -> Result<BoostedModel> {
    fit_boosted_with_history(x, y, params).map(|(m, _)| m)
}

/// Fits the model and returns the training loss before the first tree and
/// after each boosting round.
pub fn fit_boosted_with_history(
    x: ArrayView2<f64>,
    y: &[f64],
    params: &BoostParams,
) -> Result<(BoostedModel, Vec<f64>)> {
    let n = x.nrows();
    if n == 0 || y.is_empty() {
        return Err(Error::Empty("training data"));
    }
    if n != y.len() {
        return Err(Error::Shape {
            expected: n,
            actual: y.len(),
        });
    }
    if n < 2 {
        return Err(Error::InvalidInput("boosting needs at least two rows".into()));
    }
    if params.estimators == 0 {
        return Err(Error::InvalidInput("estimators must be >= 1".into()));
    }
    if !(params.learning_rate > 0.0) {
        return Err(Error::InvalidInput("learning rate must be > 0".into()));
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("features".into()));
    }
    ensure_finite(y, "targets")?;

    let base_score = match params.objective {
        Objective::SquaredError => y.iter().sum::<f64>() / n as f64,
        Objective::Logistic => {
            if y.iter().any(|t| *t != 0.0 && *t != 1.0) {
                return Err(Error::InvalidInput("logistic targets must be 0 or 1".into()));
            }
            let p = (y.iter().sum::<f64>() / n as f64).clamp(1e-6, 1.0 - 1e-6);
            (p / (1.0 - p)).ln()
        }
    };
    let grow = GrowParams {
        max_depth: params.max_depth,
        max_leaf: match params.objective {
            Objective::SquaredError => f64::INFINITY,
            Objective::Logistic => MAX_LOGISTIC_LEAF,
        },
    };
    let mut margins = vec![base_score; n];
    let mut history = vec![training_loss(params.objective, &margins, y)];
    let mut trees = Vec::with_capacity(params.estimators);
    let mut importance = vec![0.0; x.ncols()];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut row = vec![0.0; x.ncols()];
    for _ in 0..params.estimators {
        for i in 0..n {
            match params.objective {
                Objective::SquaredError => {
                    grad[i] = margins[i] - y[i];
                    hess[i] = 1.0;
                }
                Objective::Logistic => {
                    let p = sigmoid(margins[i]);
                    grad[i] = p - y[i];
                    hess[i] = p * (1.0 - p);
                }
            }
        }
        let (tree, gains) = RegressionTree::grow(x, &grad, &hess, &grow);
        for (imp, g) in importance.iter_mut().zip(gains) {
            *imp += g;
        }
        for i in 0..n {
            for (r, v) in row.iter_mut().zip(x.row(i).iter()) {
                *r = *v;
            }
            margins[i] += params.learning_rate * tree.predict(&row);
        }
        history.push(training_loss(params.objective, &margins, y));
        trees.push(tree);
    }
    Ok((
        BoostedModel {
            version: BOOSTED_FORMAT_VERSION,
            objective: params.objective,
            base_score,
            learning_rate: params.learning_rate,
            n_features: x.ncols(),
            trees,
            feature_importance: importance,
        },
        history,
    ))
}

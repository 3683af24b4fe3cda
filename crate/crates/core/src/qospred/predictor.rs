//! Two-level worst-case QoS predictor: a classifier decides whether a
//! counter vector belongs to the critical range, and routes it to a
//! fine regressor (critical range) or a coarse one (full range).

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::dataset::{ProfilingDataset, ProfilingRow};
use crate::error::{Error, Result};
use crate::mlcore::{fit_boosted, BoostParams, BoostedModel};
use crate::simenv::{Action, CounterVector};

pub const PREDICTOR_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeSpec {
    pub estimators: usize,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    /// Labels at or below this many dpps are the critical range.
    pub classifier_threshold: f64,
    pub classifier: TreeSpec,
    pub coarse: TreeSpec,
    pub fine: TreeSpec,
    pub learning_rate: f64,
    /// Counter names fed to the models, in order.
    pub features: Vec<String>,
    /// Append the five action indices to the counter inputs.
    pub include_action: bool,
    /// When false, only the coarse regressor is trained (one-level ablation).
    pub two_level: bool,
    /// Each side of the threshold needs this many rows for a two-level fit.
    pub min_side_rows: usize,
    /// Fit the coarse regressor on `log10(1 + dpps)` and map its output
    /// back, so errors are relative across the full range.
    pub coarse_log_target: bool,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            classifier_threshold: 250.0,
            classifier: TreeSpec {
                estimators: 20,
                depth: 2,
            },
            coarse: TreeSpec {
                estimators: 20,
                depth: 3,
            },
            fine: TreeSpec {
                estimators: 30,
                depth: 3,
            },
            learning_rate: 0.2,
            features: CounterVector::NAMES.iter().map(|s| s.to_string()).collect(),
            include_action: false,
            two_level: true,
            min_side_rows: 50,
            coarse_log_target: false,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.classifier_threshold > 0.0) {
            return Err(Error::Config("classifier threshold must be > 0".into()));
        }
        for (name, s) in [
            ("classifier", self.classifier),
            ("coarse", self.coarse),
            ("fine", self.fine),
        ] {
            if s.estimators == 0 {
                return Err(Error::Config(format!("{name} needs at least one estimator")));
            }
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        if self.features.is_empty() && !self.include_action {
            return Err(Error::Config("predictor has no inputs".into()));
        }
        self.feature_indices()?;
        Ok(())
    }

    pub fn feature_indices(&self) -> Result<Vec<usize>> {
        self.features
            .iter()
            .map(|f| {
                CounterVector::index_of(f)
                    .ok_or_else(|| Error::Config(format!("unknown counter {f:?}")))
            })
            .collect()
    }
}

/// `log10(1 + x)` followed by per-column standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogStandardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl LogStandardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Empty("normalization rows"));
        }
        let d = rows[0].len();
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += log1p10(*v) / n as f64;
            }
        }
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (log1p10(*v) - m).powi(2) / n as f64;
            }
        }
        let std = var
            .into_iter()
            .map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::Shape {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("predictor input".into()));
        }
        Ok(x
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (log1p10(*v) - m) / s)
            .collect())
    }
}

/// `log10(1 + x)`, with negatives floored at zero.
pub fn log1p10(x: f64) -> f64 {
    x.max(0.0).ln_1p() / std::f64::consts::LN_10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelPredictor {
    pub version: u32,
    pub feature_names: Vec<String>,
    feature_idx: Vec<usize>,
    pub include_action: bool,
    pub threshold: f64,
    pub norm: LogStandardizer,
    /// None when the fit fell back to the coarse regressor alone.
    pub classifier: Option<BoostedModel>,
    pub fine: Option<BoostedModel>,
    pub coarse: BoostedModel,
    pub coarse_log_target: bool,
    /// Set when a two-level fit was requested but could not be made.
    pub fallback_warning: bool,
}

/// Everything the routing decision saw, for inspection and tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub dpps: f64,
    pub probability_above: Option<f64>,
    pub routed_fine: bool,
}

impl TwoLevelPredictor {
    /// Builds a predictor from already-fitted parts. `norm` must cover the
    /// raw input width.
    pub fn from_parts(
        cfg: &PredictorConfig,
        norm: LogStandardizer,
        classifier: Option<BoostedModel>,
        fine: Option<BoostedModel>,
        coarse: BoostedModel,
    ) -> Result<Self> {
        let feature_idx = cfg.feature_indices()?;
        let width = feature_idx.len() + if cfg.include_action { 5 } else { 0 };
        if norm.dim() != width {
            return Err(Error::Shape {
                expected: width,
                actual: norm.dim(),
            });
        }
        if classifier.is_some() != fine.is_some() {
            return Err(Error::InvalidInput(
                "classifier and fine regressor must be both present or both absent".into(),
            ));
        }
        Ok(Self {
            version: PREDICTOR_FORMAT_VERSION,
            feature_names: cfg.features.clone(),
            feature_idx,
            include_action: cfg.include_action,
            threshold: cfg.classifier_threshold,
            norm,
            classifier,
            fine,
            coarse,
            coarse_log_target: cfg.coarse_log_target,
            fallback_warning: false,
        })
    }

    pub fn raw_inputs(&self, counters: &CounterVector, action: &Action) -> Vec<f64> {
        raw_inputs(&self.feature_idx, self.include_action, counters, action)
    }

    pub fn predict_detail(&self, counters: &CounterVector, action: &Action) -> Result<Prediction> {
        let x = self.norm.transform(&self.raw_inputs(counters, action))?;
        let (dpps, probability_above, routed_fine) = match (&self.classifier, &self.fine) {
            (Some(c), Some(f)) => {
                let p = c.predict(&x)?;
                if p < 0.5 {
                    (f.predict(&x)?, Some(p), true)
                } else {
                    (self.coarse_output(&x)?, Some(p), false)
                }
            }
            _ => (self.coarse_output(&x)?, None, false),
        };
        Ok(Prediction {
            dpps: dpps.max(0.0),
            probability_above,
            routed_fine,
        })
    }

    fn coarse_output(&self, x: &[f64]) -> Result<f64> {
        let v = self.coarse.predict(x)?;
        Ok(if self.coarse_log_target {
            10f64.powf(v.min(12.0)) - 1.0
        } else {
            v
        })
    }

    /// Predicted worst-case dpps, never negative.
    pub fn predict_qos(&self, counters: &CounterVector, action: &Action) -> Result<f64> {
        Ok(self.predict_detail(counters, action)?.dpps)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        if p.version != PREDICTOR_FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported predictor version {}",
                p.version
            )));
        }
        Ok(p)
    }
}

fn raw_inputs(idx: &[usize], include_action: bool, c: &CounterVector, a: &Action) -> Vec<f64> {
    let arr = c.to_array();
    let mut x: Vec<f64> = idx.iter().map(|&i| arr[i]).collect();
    if include_action {
        x.extend(a.indices().iter().map(|&v| v as f64));
    }
    x
}

fn design_matrix(norm: &LogStandardizer, raw: &[Vec<f64>]) -> Result<Array2<f64>> {
    let d = norm.dim();
    let mut flat = Vec::with_capacity(raw.len() * d);
    for r in raw {
        flat.extend(norm.transform(r)?);
    }
    Array2::from_shape_vec((raw.len(), d), flat).map_err(|e| Error::InvalidInput(e.to_string()))
}

fn spec_params(s: TreeSpec, lr: f64) -> BoostParams {
    BoostParams::regression(s.estimators, s.depth, lr)
}

pub fn train_predictor(data: &ProfilingDataset, cfg: &PredictorConfig) -> Result<TwoLevelPredictor> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("profiling dataset"));
    }
    let idx = cfg.feature_indices()?;
    let rows: &[ProfilingRow] = &data.rows;
    let raw: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| raw_inputs(&idx, cfg.include_action, &r.counters, &r.action))
        .collect();
    let norm = LogStandardizer::fit(&raw)?;
    let x = design_matrix(&norm, &raw)?;
    let y = data.labels();
    let coarse_y: Vec<f64> = if cfg.coarse_log_target {
        y.iter().map(|v| log1p10(*v)).collect()
    } else {
        y.clone()
    };
    let coarse = fit_boosted(x.view(), &coarse_y, &spec_params(cfg.coarse, cfg.learning_rate))?;

    let below: Vec<usize> = (0..y.len()).filter(|&i| y[i] <= cfg.classifier_threshold).collect();
    let above = y.len() - below.len();
    let enough = below.len() >= cfg.min_side_rows && above >= cfg.min_side_rows;
    let mut pred = if cfg.two_level && enough {
        let class: Vec<f64> = y
            .iter()
            .map(|v| if *v > cfg.classifier_threshold { 1.0 } else { 0.0 })
            .collect();
        let classifier = fit_boosted(
            x.view(),
            &class,
            &BoostParams::classifier(cfg.classifier.estimators, cfg.classifier.depth, cfg.learning_rate),
        )?;
        let xf = x.select(ndarray::Axis(0), &below);
        let yf: Vec<f64> = below.iter().map(|&i| y[i]).collect();
        let fine = fit_boosted(xf.view(), &yf, &spec_params(cfg.fine, cfg.learning_rate))?;
        TwoLevelPredictor::from_parts(cfg, norm, Some(classifier), Some(fine), coarse)?
    } else {
        TwoLevelPredictor::from_parts(cfg, norm, None, None, coarse)?
    };
    if cfg.two_level && !enough {
        log::warn!(
            "only {} rows below and {above} above {} dpps; using a single regressor",
            below.len(),
            cfg.classifier_threshold
        );
        pred.fallback_warning = true;
    }
    Ok(pred)
}

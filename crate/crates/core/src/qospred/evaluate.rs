//! Leave-one-mix-out evaluation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::ProfilingDataset;
use super::predictor::{train_predictor, PredictorConfig};
use crate::error::{Error, Result};

/// Absolute errors above this many dpps count as large mispredictions.
pub const LARGE_ERROR_DPPS: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub mix: usize,
    pub rows: usize,
    /// Classifier F1 with "above threshold" as the positive class; None
    /// when the fold used a single regressor or had no positives at all.
    pub f1: Option<f64>,
    pub critical_mae: Option<f64>,
    pub full_mae: f64,
    pub large_errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LomoReport {
    pub folds: Vec<FoldMetrics>,
    /// Metrics over the pooled held-out predictions of every fold.
    pub pooled_f1: Option<f64>,
    pub pooled_critical_mae: Option<f64>,
    pub pooled_full_mae: f64,
    pub total_large_errors: usize,
}

#[derive(Default)]
struct Confusion {
    tp: usize,
    fp: usize,
    fn_: usize,
}

impl Confusion {
    fn add(&mut self, predicted_above: bool, actual_above: bool) {
        match (predicted_above, actual_above) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            _ => {}
        }
    }

    fn f1(&self) -> Option<f64> {
        let denom = 2 * self.tp + self.fp + self.fn_;
        (denom > 0).then(|| 2.0 * self.tp as f64 / denom as f64)
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn evaluate_leave_one_mix_out(data: &ProfilingDataset, cfg: &PredictorConfig) -> Result<LomoReport> {
    let mixes = data.mixes();
    if mixes.len() < 2 {
        return Err(Error::InvalidInput(
            "leave-one-mix-out needs at least two mixes".into(),
        ));
    }
    let thr = cfg.classifier_threshold;
    let mut folds = Vec::with_capacity(mixes.len());
    let mut pooled = Confusion::default();
    let mut pooled_crit = Vec::new();
    let mut pooled_full = Vec::new();
    let mut any_classifier = false;
    for &m in &mixes {
        let train = data.filter(|r| r.mix != m);
        let test = data.filter(|r| r.mix == m);
        let pred = train_predictor(&train, cfg)?;
        let mut conf = Confusion::default();
        let mut crit = Vec::new();
        let mut full = Vec::new();
        let mut large = 0;
        for r in &test.rows {
            let p = pred.predict_detail(&r.counters, &r.action)?;
            let err = (p.dpps - r.label_dpps).abs();
            let actual_above = r.label_dpps > thr;
            if let Some(prob) = p.probability_above {
                any_classifier = true;
                conf.add(prob >= 0.5, actual_above);
                pooled.add(prob >= 0.5, actual_above);
            }
            if !actual_above {
                crit.push(err);
            }
            full.push(err);
            if err > LARGE_ERROR_DPPS {
                large += 1;
            }
        }
        pooled_crit.extend(&crit);
        pooled_full.extend(&full);
        folds.push(FoldMetrics {
            mix: m,
            rows: test.len(),
            f1: if pred.classifier.is_some() { conf.f1() } else { None },
            critical_mae: mean(&crit),
            full_mae: mean(&full).unwrap_or(0.0),
            large_errors: large,
        });
    }
    Ok(LomoReport {
        pooled_f1: if any_classifier { pooled.f1() } else { None },
        pooled_critical_mae: mean(&pooled_crit),
        pooled_full_mae: mean(&pooled_full).unwrap_or(0.0),
        total_large_errors: folds.iter().map(|f| f.large_errors).sum(),
        folds,
    })
}

impl LomoReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["mix", "rows", "f1", "critical_mae", "full_mae", "large_errors"])?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for f in &self.folds {
            w.write_record([
                f.mix.to_string(),
                f.rows.to_string(),
                opt(f.f1),
                opt(f.critical_mae),
                f.full_mae.to_string(),
                f.large_errors.to_string(),
            ])?;
        }
        w.write_record([
            "pooled".to_string(),
            self.folds.iter().map(|f| f.rows).sum::<usize>().to_string(),
            opt(self.pooled_f1),
            opt(self.pooled_critical_mae),
            self.pooled_full_mae.to_string(),
            self.total_large_errors.to_string(),
        ])?;
        w.flush().map_err(|e| Error::file(path, e))?;
        Ok(())
    }
}

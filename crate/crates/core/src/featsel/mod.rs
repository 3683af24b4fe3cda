//! Hierarchical counter selection: rare/low-variance filter, shadow-feature
//! elimination, distribution-shift filter, problem-class exclusion and
//! stepwise selection, applied in that order.

pub mod catalog;
pub mod steps;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use catalog::{build_decoy_catalog, CatalogEntry, CounterCatalog, CounterClass, SamplePoint};
pub use steps::{
    distribution_shift_filter, exclude_problem_classes, filter_rare_low_variance,
    shadow_feature_elimination, stepwise_select, EliminationReason, ShadowOutcome,
};

use crate::error::{Error, Result};
use crate::mlcore::BoostParams;
use crate::qospred::predictor::log1p10;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    /// Mix whose samples feed the rare/low-variance filter.
    pub step1_mix: usize,
    pub min_rate: f64,
    pub min_cv: f64,
    pub shadow_rounds: usize,
    pub shadow_cutoff: f64,
    pub shadow_estimators: usize,
    pub shadow_depth: usize,
    pub max_log10_shift: f64,
    pub k: usize,
    pub stepwise_estimators: usize,
    pub stepwise_depth: usize,
    pub stepwise_folds: usize,
    pub learning_rate: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            step1_mix: 0,
            min_rate: 1.0,
            min_cv: 0.01,
            shadow_rounds: 5,
            shadow_cutoff: 1.0,
            shadow_estimators: 30,
            shadow_depth: 3,
            max_log10_shift: 2.0,
            k: 6,
            stepwise_estimators: 20,
            stepwise_depth: 3,
            stepwise_folds: 3,
            learning_rate: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSurvivors {
    pub step: usize,
    pub name: String,
    pub survivors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Elimination {
    pub counter: String,
    pub step: usize,
    pub reason: EliminationReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub steps: Vec<StepSurvivors>,
    pub eliminated: Vec<Elimination>,
    /// Final features in selection order.
    pub selected: Vec<String>,
    pub shadow_warning: bool,
}

impl SelectionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Runs all five steps. Steps 2 and 5 regress `log10(1 + label)`; step 5
/// cross-validates over folds of whole mixes.
pub fn run_selection(catalog: &CounterCatalog, cfg: &SelectionConfig, seed: u64) -> Result<SelectionReport> {
    catalog.validate()?;
    if cfg.k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let names = catalog.names();
    let mut report = SelectionReport {
        steps: Vec::new(),
        eliminated: Vec::new(),
        selected: Vec::new(),
        shadow_warning: false,
    };
    let record = |report: &mut SelectionReport, step: usize, name: &str, keep: &[usize], gone: Vec<(usize, EliminationReason)>| {
        for (i, reason) in gone {
            report.eliminated.push(Elimination {
                counter: names[i].clone(),
                step,
                reason,
            });
        }
        report.steps.push(StepSurvivors {
            step,
            name: name.into(),
            survivors: keep.iter().map(|&i| names[i].clone()).collect(),
        });
    };

    let all: Vec<usize> = (0..catalog.entries.len()).collect();
    let (s1, gone) = filter_rare_low_variance(catalog, &all, cfg.step1_mix, cfg.min_rate, cfg.min_cv)?;
    record(&mut report, 1, "rare_low_variance", &s1, gone);

    let y: Vec<f64> = catalog.labels.iter().map(|v| log1p10(*v)).collect();
    let n = catalog.points.len();
    let x = Array2::from_shape_fn((n, s1.len()), |(r, c)| catalog.entries[s1[c]].values[r]);
    let mut rng = rng::child(seed, 0x7368_6164);
    let shadow = shadow_feature_elimination(
        x.view(),
        &y,
        cfg.shadow_rounds,
        cfg.shadow_cutoff,
        &BoostParams::regression(cfg.shadow_estimators, cfg.shadow_depth, cfg.learning_rate),
        &mut rng,
    )?;
    report.shadow_warning = shadow.degenerate_warning;
    let s2: Vec<usize> = shadow.survivors.iter().map(|&c| s1[c]).collect();
    let gone = shadow.eliminated.into_iter().map(|(c, r)| (s1[c], r)).collect();
    record(&mut report, 2, "shadow_features", &s2, gone);

    let (s3, gone) = distribution_shift_filter(catalog, &s2, cfg.max_log10_shift)?;
    record(&mut report, 3, "distribution_shift", &s3, gone);

    let (s4, gone) = exclude_problem_classes(catalog, &s3);
    record(&mut report, 4, "problem_classes", &s4, gone);

    if cfg.k > s4.len() {
        return Err(Error::InvalidInput(format!(
            "only {} counters survive to stepwise selection, {} requested",
            s4.len(),
            cfg.k
        )));
    }
    let x4 = Array2::from_shape_fn((n, s4.len()), |(r, c)| catalog.entries[s4[c]].values[r]);
    let folds: Vec<usize> = catalog.points.iter().map(|p| p.mix % cfg.stepwise_folds.max(1)).collect();
    let order = stepwise_select(
        x4.view(),
        &y,
        &folds,
        cfg.k,
        &BoostParams::regression(cfg.stepwise_estimators, cfg.stepwise_depth, cfg.learning_rate),
    )?;
    let s5: Vec<usize> = order.iter().map(|&c| s4[c]).collect();
    let gone = s4
        .iter()
        .filter(|i| !s5.contains(i))
        .map(|&i| (i, EliminationReason::NotSelected))
        .collect();
    record(&mut report, 5, "stepwise", &s5, gone);
    report.selected = s5.iter().map(|&i| names[i].clone()).collect();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_matches_documented_thresholds() {
        let c = SelectionConfig::default();
        assert_eq!((c.min_rate, c.min_cv, c.shadow_rounds, c.k), (1.0, 0.01, 5, 6));
        assert_eq!(c.max_log10_shift, 2.0);
        assert_eq!(c.shadow_cutoff, 1.0);
    }
}

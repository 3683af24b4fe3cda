//! The individual counter-selection steps. Candidate sets are index lists
//! into a catalog (or columns of a matrix), always kept in ascending order.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::catalog::CounterCatalog;
use crate::error::{Error, Result};
use crate::mlcore::{fit_boosted, BoostParams};
use crate::rng::Rng;

/// Why a counter left the candidate set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EliminationReason {
    RareEvent { mean_rate: f64, min_rate: f64 },
    LowVariance { cv: f64, min_cv: f64 },
    BelowShadow { round: usize, importance: f64, max_shadow: f64 },
    DistributionShift { log10_shift: f64, max_log10_shift: f64 },
    ProblemClass { class: super::catalog::CounterClass },
    NotSelected,
}

pub type Eliminated = Vec<(usize, EliminationReason)>;

fn mean_cv(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let cv = if mean.abs() > 0.0 { var.sqrt() / mean.abs() } else { 0.0 };
    (mean, cv)
}

/// Step 1: drop counters whose mean rate on `mix` is below `min_rate` or
/// whose coefficient of variation there is below `min_cv`.
pub fn filter_rare_low_variance(
    catalog: &CounterCatalog,
    candidates: &[usize],
    mix: usize,
    min_rate: f64,
    min_cv: f64,
) -> Result<(Vec<usize>, Eliminated)> {
    let mut keep = Vec::new();
    let mut gone = Vec::new();
    for &i in candidates {
        let v = catalog.mix_values(i, mix);
        if v.is_empty() {
            return Err(Error::InvalidInput(format!("no samples for mix {mix}")));
        }
        let (mean, cv) = mean_cv(&v);
        if mean < min_rate {
            gone.push((i, EliminationReason::RareEvent { mean_rate: mean, min_rate }));
        } else if cv < min_cv {
            gone.push((i, EliminationReason::LowVariance { cv, min_cv }));
        } else {
            keep.push(i);
        }
    }
    Ok((keep, gone))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShadowOutcome {
    /// Surviving column indices of the input matrix.
    pub survivors: Vec<usize>,
    pub eliminated: Eliminated,
    /// Set when `y` is constant and nothing could be ranked.
    pub degenerate_warning: bool,
    pub rounds_run: usize,
}

/// Step 2: per round, append a row-permuted copy of every surviving column,
/// fit a boosted model and drop columns whose split gain is below
/// `cutoff x` the largest shadow gain. Every round draws fresh shadows, so a
/// column must clear the bar in all of them.
pub fn shadow_feature_elimination(
    x: ArrayView2<f64>,
    y: &[f64],
    rounds: usize,
    cutoff: f64,
    params: &BoostParams,
    rng: &mut Rng,
) -> Result<ShadowOutcome> {
    if x.nrows() < 100 {
        return Err(Error::InvalidInput(format!(
            "shadow elimination needs at least 100 rows, got {}",
            x.nrows()
        )));
    }
    if x.nrows() != y.len() {
        return Err(Error::Shape {
            expected: x.nrows(),
            actual: y.len(),
        });
    }
    let mut survivors: Vec<usize> = (0..x.ncols()).collect();
    let first = y[0];
    if y.iter().all(|v| *v == first) {
        log::warn!("constant target; shadow elimination skipped");
        return Ok(ShadowOutcome {
            survivors,
            eliminated: Vec::new(),
            degenerate_warning: true,
            rounds_run: 0,
        });
    }
    let n = x.nrows();
    let mut eliminated = Vec::new();
    let mut rounds_run = 0;
    for round in 0..rounds {
        if survivors.is_empty() {
            break;
        }
        rounds_run += 1;
        let k = survivors.len();
        let mut aug = Array2::zeros((n, 2 * k));
        for (j, &c) in survivors.iter().enumerate() {
            aug.column_mut(j).assign(&x.column(c));
            let mut shadow = x.column(c).to_vec();
            shadow.shuffle(rng);
            aug.column_mut(k + j).assign(&ndarray::Array1::from(shadow));
        }
        let model = fit_boosted(aug.view(), y, params)?;
        let imp = &model.feature_importance;
        let max_shadow = imp[k..].iter().copied().fold(0.0, f64::max);
        let bar = cutoff * max_shadow;
        let mut next = Vec::with_capacity(k);
        for (j, &c) in survivors.iter().enumerate() {
            if imp[j] < bar {
                eliminated.push((
                    c,
                    EliminationReason::BelowShadow {
                        round,
                        importance: imp[j],
                        max_shadow,
                    },
                ));
            } else {
                next.push(c);
            }
        }
        survivors = next;
    }
    Ok(ShadowOutcome {
        survivors,
        eliminated,
        degenerate_warning: false,
        rounds_run,
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Step 3: drop counters whose per-mix medians span `max_log10_shift`
/// decades or more. Medians are floored at 1e-9.
pub fn distribution_shift_filter(
    catalog: &CounterCatalog,
    candidates: &[usize],
    max_log10_shift: f64,
) -> Result<(Vec<usize>, Eliminated)> {
    let mixes = catalog.mixes();
    if mixes.len() < 2 {
        return Err(Error::InvalidInput("distribution shift needs at least two mixes".into()));
    }
    let mut keep = Vec::new();
    let mut gone = Vec::new();
    for &i in candidates {
        let meds: Vec<f64> = mixes
            .iter()
            .map(|&m| median(catalog.mix_values(i, m)).max(1e-9))
            .collect();
        let hi = meds.iter().copied().fold(f64::MIN, f64::max);
        let lo = meds.iter().copied().fold(f64::MAX, f64::min);
        let shift = (hi / lo).log10();
        if shift >= max_log10_shift {
            gone.push((
                i,
                EliminationReason::DistributionShift {
                    log10_shift: shift,
                    max_log10_shift,
                },
            ));
        } else {
            keep.push(i);
        }
    }
    Ok((keep, gone))
}

/// Step 4: drop coherency, specialized-ISA and non-standard-component counters.
pub fn exclude_problem_classes(catalog: &CounterCatalog, candidates: &[usize]) -> (Vec<usize>, Eliminated) {
    let mut keep = Vec::new();
    let mut gone = Vec::new();
    for &i in candidates {
        let class = catalog.entries[i].class;
        if class.is_problematic() {
            gone.push((i, EliminationReason::ProblemClass { class }));
        } else {
            keep.push(i);
        }
    }
    (keep, gone)
}

/// Mean absolute error of a model fit on `cols`, cross-validated over
/// `folds` (each row's fold id).
fn cv_mae(x: ArrayView2<f64>, y: &[f64], cols: &[usize], folds: &[usize], params: &BoostParams) -> Result<f64> {
    let sub = x.select(Axis(1), cols);
    let mut ids: Vec<usize> = folds.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let mut total = 0.0;
    let mut count = 0usize;
    for &f in &ids {
        let train: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != f).collect();
        let test: Vec<usize> = (0..y.len()).filter(|&i| folds[i] == f).collect();
        if train.len() < 2 {
            continue;
        }
        let xt = sub.select(Axis(0), &train);
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let m = fit_boosted(xt.view(), &yt, params)?;
        let xe = sub.select(Axis(0), &test);
        let pred = m.predict_rows(xe.view())?;
        for (p, &i) in pred.iter().zip(&test) {
            total += (p - y[i]).abs();
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InvalidInput("cross-validation has no usable folds".into()));
    }
    Ok(total / count as f64)
}

/// Step 5: greedy forward selection by cross-validated MAE. Returns `k`
/// column indices in the order they were added; ties go to the lower index.
pub fn stepwise_select(
    x: ArrayView2<f64>,
    y: &[f64],
    folds: &[usize],
    k: usize,
    params: &BoostParams,
) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    if k > x.ncols() {
        return Err(Error::InvalidInput(format!(
            "asked for {k} features out of {}",
            x.ncols()
        )));
    }
    if folds.len() != y.len() || x.nrows() != y.len() {
        return Err(Error::Shape {
            expected: x.nrows(),
            actual: y.len().min(folds.len()),
        });
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    while chosen.len() < k {
        let mut best: Option<(usize, f64)> = None;
        for c in 0..x.ncols() {
            if chosen.contains(&c) {
                continue;
            }
            if chosen.len() + 1 == x.ncols() {
                // last one left, nothing to compare
                best = Some((c, 0.0));
                break;
            }
            let mut cols = chosen.clone();
            cols.push(c);
            let mae = cv_mae(x, y, &cols, folds, params)?;
            if best.is_none_or(|(_, b)| mae < b) {
                best = Some((c, mae));
            }
        }
        chosen.push(best.expect("a candidate remains").0);
    }
    Ok(chosen)
}

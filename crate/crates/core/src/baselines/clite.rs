//! Bayesian-optimization online search baseline: steady-state incumbent
//! plus search episodes triggered by violations or demand drops.

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::gp::{ei_acquire, GaussianProcess, GpConfig};
use crate::controller::{records_for_interval, reward_positive, split_actions, ControlRecord, SimControl};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::simenv::Action;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClitePlusConfig {
    pub samples_per_search: usize,
    pub initial_random: usize,
    pub violation_count: usize,
    pub violation_window: usize,
    /// Relative demand drop that restarts the search.
    pub demand_drop: f64,
    pub ei_xi: f64,
    pub gp: GpConfig,
    /// Upper bound on acquisition candidates; larger joint spaces are
    /// subsampled per search.
    pub max_candidates: usize,
    /// Weight of BE performance in the met-QoS objective.
    pub alpha: f64,
}

impl Default for ClitePlusConfig {
    fn default() -> Self {
        Self {
            samples_per_search: 40,
            initial_random: 10,
            violation_count: 3,
            violation_window: 10,
            demand_drop: 0.05,
            ei_xi: 0.01,
            gp: GpConfig::default(),
            max_candidates: 20_000,
            alpha: 0.8,
        }
    }
}

impl ClitePlusConfig {
    pub fn validate(&self) -> Result<()> {
        self.gp.validate()?;
        if self.initial_random < 2 || self.samples_per_search < self.initial_random {
            return Err(Error::Config(format!(
                "search needs 2 <= initial_random ({}) <= samples_per_search ({})",
                self.initial_random, self.samples_per_search
            )));
        }
        if self.violation_window == 0 || self.violation_count >= self.violation_window {
            return Err(Error::Config("violation trigger must fit in its window".into()));
        }
        if !(0.0..1.0).contains(&self.demand_drop) {
            return Err(Error::Config(format!("demand_drop {} outside [0, 1)", self.demand_drop)));
        }
        if self.max_candidates == 0 || !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config("max_candidates must be positive and alpha in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalObs {
    pub violation: bool,
    pub demand: f64,
}

/// True when more than `violation_count` of the last `violation_window`
/// intervals violated, or demand fell by more than `demand_drop` relative
/// to the demand when the previous search ended.
pub fn clite_should_resample(history: &[IntervalObs], demand_at_search_end: f64, cfg: &ClitePlusConfig) -> Result<bool> {
    let last = history.last().ok_or(Error::Empty("interval history"))?;
    let recent = &history[history.len().saturating_sub(cfg.violation_window)..];
    let violations = recent.iter().filter(|o| o.violation).count();
    let dropped = last.demand < (1.0 - cfg.demand_drop) * demand_at_search_end;
    Ok(violations > cfg.violation_count || dropped)
}

/// Search objective: the positive reward when every HP meets its target,
/// otherwise minus the worst measured/target ratio, floored at -10.
pub fn clite_objective(meas: &[f64], targets: &[f64], be_perf: f64, power_norm: f64, alpha: f64) -> Result<f64> {
    if meas.len() != targets.len() {
        return Err(Error::Shape {
            expected: targets.len(),
            actual: meas.len(),
        });
    }
    let worst = meas
        .iter()
        .zip(targets)
        .map(|(m, t)| m / t)
        .fold(0.0, f64::max);
    if worst <= 1.0 {
        reward_positive(be_perf.clamp(0.0, 1.0), (1.0 - power_norm).clamp(0.0, 1.0), alpha)
    } else {
        Ok(-worst.min(10.0))
    }
}

/// Flat action vectors for `n_hp` replicated spaces in lexicographic order,
/// capped at `max` by seeded subsampling.
fn candidate_grid(sizes: &[usize], max: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let total: usize = sizes.iter().product();
    let decode = |mut k: usize| {
        let mut v = vec![0; sizes.len()];
        for (slot, n) in v.iter_mut().zip(sizes).rev() {
            *slot = k % n;
            k /= n;
        }
        v
    };
    if total <= max {
        (0..total).map(decode).collect()
    } else {
        let mut picks = sample(rng, total, max).into_vec();
        picks.sort_unstable();
        picks.into_iter().map(decode).collect()
    }
}

fn normalize(action: &[usize], sizes: &[usize]) -> Vec<f64> {
    action
        .iter()
        .zip(sizes)
        .map(|(&a, &n)| if n > 1 { a as f64 / (n - 1) as f64 } else { 0.0 })
        .collect()
}

/// Feasible for the node: combined HP LLC shares fit.
fn feasible(ctl: &SimControl, flat: &[usize]) -> bool {
    split_actions(flat, ctl.n_hp())
        .and_then(|a| crate::simenv::combine_hp_actions(ctl.sim().node(), &a))
        .is_ok()
}

enum Phase {
    Search {
        candidates: Vec<Vec<usize>>,
        grid: Vec<Vec<f64>>,
        observed: Vec<(Vec<usize>, f64)>,
    },
    Steady,
}

/// Runs the search controller for up to `horizon` intervals (or until the
/// trace ends). Every interval is logged with its sampling-phase flag.
pub fn clite_run(ctl: &mut SimControl, cfg: &ClitePlusConfig, horizon: usize, rng: &mut Rng) -> Result<Vec<ControlRecord>> {
    cfg.validate()?;
    let sizes = ctl.branch_sizes();
    let dims = sizes.len();
    let mut gp_cfg = cfg.gp.clone();
    if gp_cfg.length_scales.len() != dims {
        // one length scale per branch; replicate the per-knob scales
        let base = gp_cfg.length_scales.clone();
        gp_cfg.length_scales = (0..dims).map(|i| base[i % base.len()]).collect();
    }
    let targets = ctl.targets();
    let mut log = Vec::new();
    let mut incumbent: Option<Vec<usize>> = None;
    let mut history: Vec<IntervalObs> = Vec::new();
    let mut demand_at_end = 0.0;
    let mut phase = new_search(ctl, &sizes, cfg, rng);
    for step in 0..horizon {
        if ctl.is_done() {
            break;
        }
        let (flat, sampling) = match &phase {
            Phase::Search {
                candidates,
                grid,
                observed,
            } => {
                let pick = if observed.len() < cfg.initial_random {
                    candidates[rng.random_range(0..candidates.len())].clone()
                } else {
                    let xs: Vec<Vec<f64>> = observed.iter().map(|(a, _)| normalize(a, &sizes)).collect();
                    let ys: Vec<f64> = observed.iter().map(|(_, y)| *y).collect();
                    let gp = GaussianProcess::fit(&xs, &ys, &gp_cfg)?;
                    let best = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    candidates[ei_acquire(&gp, grid, best, cfg.ei_xi)?].clone()
                };
                (pick, true)
            }
            Phase::Steady => (incumbent.clone().expect("steady phase follows a search"), false),
        };
        let actions: Vec<Action> = split_actions(&flat, ctl.n_hp())?;
        ctl.apply(&actions)?;
        log.extend(records_for_interval(ctl, step, sampling));
        let out = ctl.last_outcome();
        let demand: f64 = out.hp_demand.iter().sum();
        let violation = out.measured_qos.iter().zip(&targets).any(|(m, t)| m > t);
        match &mut phase {
            Phase::Search { observed, .. } => {
                let y = clite_objective(&out.measured_qos, &targets, out.be_ips_norm, out.power_norm, cfg.alpha)?;
                observed.push((flat, y));
                if observed.len() == cfg.samples_per_search {
                    // first maximum wins
                    let mut best = 0;
                    for (i, (_, y)) in observed.iter().enumerate() {
                        if *y > observed[best].1 {
                            best = i;
                        }
                    }
                    incumbent = Some(observed[best].0.clone());
                    demand_at_end = demand;
                    history.clear();
                    phase = Phase::Steady;
                }
            }
            Phase::Steady => {
                history.push(IntervalObs { violation, demand });
                if clite_should_resample(&history, demand_at_end, cfg)? {
                    phase = new_search(ctl, &sizes, cfg, rng);
                }
            }
        }
    }
    Ok(log)
}

fn new_search(ctl: &SimControl, sizes: &[usize], cfg: &ClitePlusConfig, rng: &mut Rng) -> Phase {
    let mut candidates = candidate_grid(sizes, cfg.max_candidates, rng);
    candidates.retain(|c| feasible(ctl, c));
    let grid = candidates.iter().map(|c| normalize(c, sizes)).collect();
    Phase::Search {
        candidates,
        grid,
        observed: Vec::new(),
    }
}

/// Number of search episodes started in a log (rising edges of the
/// sampling flag, counted on HP 0).
pub fn count_searches(log: &[ControlRecord]) -> usize {
    let mut prev = false;
    let mut n = 0;
    for r in log.iter().filter(|r| r.hp == 0) {
        if r.sampling_phase && !prev {
            n += 1;
        }
        prev = r.sampling_phase;
    }
    n
}

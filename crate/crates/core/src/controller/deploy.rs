//! Deployment runs and the per-interval control log shared by every
//! controller.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bdq::QModel;
use super::policy::{select_action, ActionSmoother};
use super::simctl::{split_actions, SimControl};
use super::train::ControlEnv;
use crate::error::{Error, Result};
use crate::rng;
use crate::simenv::Action;

/// One row per (interval, HP).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRecord {
    pub step: usize,
    pub hp: usize,
    pub t_s: f64,
    pub demand_pps: f64,
    pub target_dpps: f64,
    pub meas_dpps: f64,
    pub pred_dpps: f64,
    pub reward: f64,
    pub violation: bool,
    pub action_llc: usize,
    pub action_mbw: usize,
    pub action_hpcf: usize,
    pub action_becf: usize,
    pub action_ucf: usize,
    pub be_ips_norm: f64,
    pub power_norm: f64,
    pub hp_llc_ways: usize,
    pub be_llc_ways: usize,
    pub total_llc_ways: usize,
    pub sampling_phase: bool,
}

impl ControlRecord {
    pub fn action(&self) -> Action {
        Action::from_indices([
            self.action_llc,
            self.action_mbw,
            self.action_hpcf,
            self.action_becf,
            self.action_ucf,
        ])
    }
}

pub const CONTROL_LOG_HEADER: &str = "step,hp,t_s,demand_pps,target_dpps,meas_dpps,pred_dpps,reward,violation,action_llc,action_mbw,action_hpcf,action_becf,action_ucf,be_ips_norm,power_norm,hp_llc_ways,be_llc_ways,total_llc_ways,sampling_phase";

/// Rows describing the interval `ctl` just completed.
pub fn records_for_interval(ctl: &SimControl, step: usize, sampling_phase: bool) -> Vec<ControlRecord> {
    let out = ctl.last_outcome();
    let alloc = ctl.sim().allocation();
    let targets = ctl.targets();
    let preds = ctl.last_predictions();
    ctl.last_actions()
        .iter()
        .enumerate()
        .map(|(h, a)| {
            let meas = out.measured_qos[h];
            ControlRecord {
                step,
                hp: h,
                t_s: out.t_s,
                demand_pps: out.hp_demand[h],
                target_dpps: targets[h],
                meas_dpps: meas,
                pred_dpps: preds[h],
                reward: ctl.last_reward(),
                violation: meas > targets[h],
                action_llc: a.llc,
                action_mbw: a.mbw,
                action_hpcf: a.hpcf,
                action_becf: a.becf,
                action_ucf: a.ucf,
                be_ips_norm: out.be_ips_norm,
                power_norm: out.power_norm,
                hp_llc_ways: alloc.hp[h].llc_ways,
                be_llc_ways: alloc.be_llc_ways,
                total_llc_ways: ctl.sim().node().total_llc_ways,
                sampling_phase,
            }
        })
        .collect()
}

pub fn write_control_log(rows: &[ControlRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(CONTROL_LOG_HEADER.split(','))?;
    }
    w.flush().map_err(|e| Error::file(path, e))?;
    Ok(())
}

pub fn read_control_log(path: &Path) -> Result<Vec<ControlRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CONTROL_LOG_HEADER {
        return Err(Error::InvalidInput(format!(
            "{}: unexpected control log header",
            path.display()
        )));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Steps where the HP shares plus the BE share do not add up to the node's
/// LLC ways.
pub fn llc_audit_failures(rows: &[ControlRecord]) -> Vec<usize> {
    let mut bad = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let step = rows[i].step;
        let mut hp_sum = 0;
        let mut j = i;
        while j < rows.len() && rows[j].step == step {
            hp_sum += rows[j].hp_llc_ways;
            j += 1;
        }
        let first = &rows[i];
        let consistent = rows[i..j]
            .iter()
            .all(|r| r.be_llc_ways == first.be_llc_ways && r.total_llc_ways == first.total_llc_ways);
        if !consistent || hp_sum + first.be_llc_ways != first.total_llc_ways {
            bad.push(step);
        }
        i = j;
    }
    bad
}

/// Greedy deployment of a trained model with optional action smoothing,
/// for at most `max_intervals` intervals or until the trace ends.
pub fn run_agent<M: QModel>(
    ctl: &mut SimControl,
    model: &M,
    smoothing_window: usize,
    max_intervals: usize,
) -> Result<Vec<ControlRecord>> {
    let n_hp = ctl.n_hp();
    let mut smoothers = (0..n_hp)
        .map(|_| ActionSmoother::new(smoothing_window))
        .collect::<Result<Vec<_>>>()?;
    // greedy selection never draws from the generator
    let mut unused = rng::seeded(0);
    let mut log = Vec::new();
    for step in 0..max_intervals {
        if ctl.is_done() {
            break;
        }
        let q = model.q_values(&ctl.state())?;
        let raw = split_actions(&select_action(&q, 0.0, &mut unused), n_hp)?;
        let actions: Vec<Action> = raw
            .into_iter()
            .zip(smoothers.iter_mut())
            .map(|(a, s)| s.push(a))
            .collect();
        ctl.apply(&actions)?;
        log.extend(records_for_interval(ctl, step, false));
    }
    Ok(log)
}

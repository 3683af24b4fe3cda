//! End-to-end runs of the staged pipeline on the tiny configuration.

use std::fs;

use prompt_core::controller::{llc_audit_failures, read_control_log};
use prompt_core::harness::{
    bucket_counts, compute_metrics, ExperimentConfig, Pipeline, Stage, StageStatus, PLOT_HEADER,
};

fn tiny_in(dir: &std::path::Path) -> Pipeline {
    let mut cfg = ExperimentConfig::tiny();
    cfg.output_dir = dir.to_path_buf();
    Pipeline::new(cfg).unwrap()
}

#[test]
fn tiny_run_completes_and_is_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let p = tiny_in(dir.path());
    p.run_all().unwrap();
    let cfg = p.config();
    let episodes = p.load_episodes().unwrap();
    assert_eq!(
        episodes.len(),
        cfg.evaluation.seeds.len() * cfg.evaluation.holdout_be.len() * cfg.evaluation.controllers.len()
    );
    for ep in &episodes {
        let log = p.load_log(ep).unwrap();
        assert_eq!(log.len(), cfg.evaluation.episode_intervals, "{}", ep.log);
        assert!(llc_audit_failures(&log).is_empty(), "{}", ep.log);
        // metrics recomputed from the CSV match the stored report exactly
        assert_eq!(compute_metrics(&log).unwrap(), ep.metrics);
        let buckets = bucket_counts(&log);
        assert_eq!(buckets, ep.buckets);
        assert_eq!(buckets.sum(), log.len());
        let plot = fs::read_to_string(p.stage_dir(Stage::EmitPlots).join(&ep.log)).unwrap();
        let mut lines = plot.lines();
        assert_eq!(lines.next().unwrap(), PLOT_HEADER.join(","));
        assert_eq!(lines.count(), log.len());
    }
    let summary = p.load_comparison().unwrap();
    assert_eq!(summary.controllers.len(), 3);
    let per_run = fs::read_to_string(p.stage_dir(Stage::Compare).join("metrics.csv")).unwrap();
    assert!(per_run.starts_with("controller,be,seed,violation_pct,tardiness,be_perf,power_eff,actions"));
    let lomo = fs::read_to_string(p.stage_dir(Stage::EvalPredictor).join("summary.json")).unwrap();
    assert!(lomo.contains("two_level_critical_mae"));
}

#[test]
fn reruns_are_no_ops_and_outputs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let pa = tiny_in(a.path());
    let pb = tiny_in(b.path());
    pa.run(Stage::Compare).unwrap();
    pb.run(Stage::Compare).unwrap();
    for stage in [Stage::SelectFeatures, Stage::Collect, Stage::TrainPredictor, Stage::TrainAgent, Stage::Evaluate, Stage::Compare] {
        let ma = pa.manifest(stage).unwrap();
        let mb = pb.manifest(stage).unwrap();
        assert_eq!(ma.outputs, mb.outputs, "{stage} outputs differ between runs");
        assert_eq!(ma.input_hash, mb.input_hash);
    }
    let before = fs::read(pa.stage_dir(Stage::Evaluate).join("manifest.json")).unwrap();
    assert_eq!(pa.run(Stage::Compare).unwrap(), StageStatus::UpToDate);
    assert_eq!(pa.run(Stage::Evaluate).unwrap(), StageStatus::UpToDate);
    assert_eq!(fs::read(pa.stage_dir(Stage::Evaluate).join("manifest.json")).unwrap(), before);
}

#[test]
fn a_failed_stage_leaves_upstream_artifacts_intact() {
    let dir = tempfile::tempdir().unwrap();
    let p = tiny_in(dir.path());
    p.run(Stage::TrainAgent).unwrap();
    let upstream = [Stage::Collect, Stage::TrainPredictor, Stage::TrainAgent].map(|s| p.manifest(s).unwrap());
    // a regular file where the stage directory belongs makes evaluate fail
    let blocker = p.stage_dir(Stage::Evaluate);
    fs::write(&blocker, "").unwrap();
    assert!(p.run(Stage::Compare).is_err());
    for (stage, m) in [Stage::Collect, Stage::TrainPredictor, Stage::TrainAgent].into_iter().zip(&upstream) {
        assert_eq!(&p.manifest(stage).unwrap(), m);
        assert_eq!(p.run(stage).unwrap(), StageStatus::UpToDate, "{stage} was disturbed");
    }
    fs::remove_file(&blocker).unwrap();
    // a missing agent output is noticed and rebuilt before evaluation
    let sel = p.stage_dir(Stage::TrainAgent).join("prompt/seed_0/selected.json");
    fs::remove_file(&sel).unwrap();
    assert_eq!(p.run(Stage::Evaluate).unwrap(), StageStatus::Ran);
    assert!(sel.exists());
    assert_eq!(p.manifest(Stage::TrainAgent).unwrap(), upstream[2]);
    // a corrupted control log makes evaluate stale; rerunning restores it
    let ep = &p.load_episodes().unwrap()[0];
    let log_path = p.stage_dir(Stage::Evaluate).join(&ep.log);
    let eval_manifest = p.manifest(Stage::Evaluate).unwrap();
    assert!(read_control_log(&log_path).is_ok());
    fs::write(&log_path, "not,a,control,log\n").unwrap();
    p.run(Stage::Compare).unwrap();
    assert_eq!(p.manifest(Stage::Evaluate).unwrap(), eval_manifest);
}

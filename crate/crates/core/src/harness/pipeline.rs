//! Staged experiment pipeline. Each stage writes into its own directory
//! under the output root and finishes by writing `manifest.json`, which
//! records a hash of the stage inputs (config slice plus upstream output
//! hashes) and a hash of every file produced. A stage whose manifest matches
//! is skipped; prerequisites run first when stale.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::config::{ControllerKind, ExperimentConfig};
use super::metrics::{aggregate, bucket_counts, compute_metrics, median, BucketCounts, Metrics, BUCKET_NAMES};
use crate::baselines::{agent_control, clite_run, new_agent_model, AgentKind};
use crate::controller::{
    llc_audit_failures, read_control_log, run_agent, select_checkpoint, train_loop, write_control_log, BdqModel,
    BdqNetwork, Checkpoint, ControlRecord, EnvFactory, SimControl, StateNormalizer,
};
use crate::error::{Error, Result};
use crate::featsel::{build_decoy_catalog, run_selection, SelectionReport};
use crate::qospred::{
    collect_from_mixes, evaluate_leave_one_mix_out, train_predictor, LomoReport, PredictorConfig, ProfilingDataset,
    TwoLevelPredictor,
};
use crate::rng::{derive_seed, seeded};
use crate::simenv::{BEWorkloadSpec, CounterVector, HPWorkloadSpec, NodeConfig, SimEnv};

const MANIFEST: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;

// seed streams
const S_FEATSEL_DATA: u64 = 1;
const S_FEATSEL_CATALOG: u64 = 2;
const S_FEATSEL_RUN: u64 = 3;
const S_COLLECT: u64 = 4;
const S_TRAIN: u64 = 0x100;
const S_EVAL: u64 = 0x200;
const S_CLITE: u64 = 0x300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    SelectFeatures,
    Collect,
    TrainPredictor,
    EvalPredictor,
    TrainAgent,
    Evaluate,
    Compare,
    EmitPlots,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::SelectFeatures,
        Stage::Collect,
        Stage::TrainPredictor,
        Stage::EvalPredictor,
        Stage::TrainAgent,
        Stage::Evaluate,
        Stage::Compare,
        Stage::EmitPlots,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::SelectFeatures => "select-features",
            Stage::Collect => "collect",
            Stage::TrainPredictor => "train-predictor",
            Stage::EvalPredictor => "eval-predictor",
            Stage::TrainAgent => "train-agent",
            Stage::Evaluate => "evaluate",
            Stage::Compare => "compare",
            Stage::EmitPlots => "emit-plots",
        }
    }

    pub fn dir_name(self) -> &'static str {
        match self {
            Stage::SelectFeatures => "featsel",
            Stage::Collect => "collect",
            Stage::TrainPredictor => "predictor",
            Stage::EvalPredictor => "predictor_eval",
            Stage::TrainAgent => "agent",
            Stage::Evaluate => "evaluate",
            Stage::Compare => "compare",
            Stage::EmitPlots => "plots",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub stage: String,
    pub input_hash: String,
    /// Relative path to sha256 of the file contents.
    pub outputs: BTreeMap<String, String>,
}

impl Manifest {
    /// Hash over the sorted output hashes; downstream stages key on it.
    pub fn output_digest(&self) -> String {
        sha256_hex(serde_json::to_string(&self.outputs).expect("string map serializes").as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    UpToDate,
}

/// One evaluation episode's summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub seed: u64,
    pub be: String,
    pub controller: ControllerKind,
    pub log: String,
    pub metrics: Metrics,
    pub buckets: BucketCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerSummary {
    pub controller: ControllerKind,
    /// Aggregate over held-out BEs, one per seed.
    pub per_seed: Vec<(u64, Metrics)>,
    pub median_violation_pct: f64,
    /// Seeds without violations count as 1.0.
    pub median_tardiness: f64,
    pub median_be_perf: f64,
    pub median_power_eff: f64,
    pub buckets: BucketCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub controllers: Vec<ControllerSummary>,
}

impl ComparisonSummary {
    pub fn get(&self, kind: ControllerKind) -> Option<&ControllerSummary> {
        self.controllers.iter().find(|c| c.controller == kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorEvalSummary {
    pub features: Vec<String>,
    pub two_level_critical_mae: Option<f64>,
    pub one_level_critical_mae: Option<f64>,
    pub two_level_f1: Option<f64>,
    pub two_level_full_mae: f64,
    pub one_level_full_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedCheckpoint {
    pub step: usize,
    pub file: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::file(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::file(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::file(path, e))
}

/// Every regular file under `dir` except the manifest, relative to `dir`.
fn list_outputs(dir: &Path) -> Result<Vec<PathBuf>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        for entry in fs::read_dir(dir).map_err(|e| Error::file(dir, e))? {
            let path = entry.map_err(|e| Error::file(dir, e))?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                let rel = path.strip_prefix(root).expect("walk stays under root").to_path_buf();
                if rel != Path::new(MANIFEST) {
                    out.push(rel);
                }
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort();
    Ok(out)
}

fn hash_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::file(path, e))?))
}

fn rel_key(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

pub struct Pipeline {
    cfg: ExperimentConfig,
}

impl Pipeline {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.cfg.output_dir.join(stage.dir_name())
    }

    pub fn manifest(&self, stage: Stage) -> Result<Manifest> {
        let path = self.stage_dir(stage).join(MANIFEST);
        Ok(serde_json::from_str(&read_text(&path)?)?)
    }

    fn prerequisites(&self, stage: Stage) -> Vec<Stage> {
        let featsel = if self.cfg.featsel.enabled {
            vec![Stage::SelectFeatures]
        } else {
            vec![]
        };
        match stage {
            Stage::SelectFeatures | Stage::Collect => vec![],
            Stage::TrainPredictor | Stage::EvalPredictor => [featsel, vec![Stage::Collect]].concat(),
            Stage::TrainAgent => vec![Stage::Collect, Stage::TrainPredictor],
            Stage::Evaluate => vec![Stage::TrainPredictor, Stage::TrainAgent],
            Stage::Compare | Stage::EmitPlots => vec![Stage::Evaluate],
        }
    }

    fn config_slice(&self, stage: Stage) -> serde_json::Value {
        let c = &self.cfg;
        let env = &c.environment;
        match stage {
            Stage::SelectFeatures => json!([c.seed, env.node, env.hp[0], env.profiling_mixes, c.featsel]),
            Stage::Collect => json!([c.seed, env.node, env.hp[0], env.profiling_mixes, c.predictor.collect]),
            Stage::TrainPredictor | Stage::EvalPredictor => json!([c.predictor.model, c.featsel.enabled]),
            Stage::TrainAgent => json!([
                c.seed,
                env.node,
                env.hp,
                self.training_be().ok(),
                c.agent,
                c.evaluation.seeds,
                self.agent_kinds()
            ]),
            Stage::Evaluate => json!([c.seed, env.node, env.hp, self.holdout_be().ok(), c.agent, c.baselines, c.evaluation]),
            Stage::Compare | Stage::EmitPlots => json!([c.evaluation.controllers]),
        }
    }

    fn input_hash(&self, stage: Stage) -> Result<String> {
        let mut upstream = BTreeMap::new();
        for p in self.prerequisites(stage) {
            upstream.insert(p.name(), self.manifest(p)?.output_digest());
        }
        let doc = json!({
            "version": MANIFEST_VERSION,
            "stage": stage.name(),
            "config": self.config_slice(stage),
            "upstream": upstream,
        });
        Ok(sha256_hex(serde_json::to_string(&doc)?.as_bytes()))
    }

    fn up_to_date(&self, stage: Stage, input_hash: &str) -> bool {
        let Ok(m) = self.manifest(stage) else {
            return false;
        };
        if m.version != MANIFEST_VERSION || m.input_hash != input_hash {
            return false;
        }
        let dir = self.stage_dir(stage);
        m.outputs
            .iter()
            .all(|(rel, h)| hash_file(&dir.join(rel)).is_ok_and(|actual| &actual == h))
    }

    /// Runs `stage` after its prerequisites, skipping anything current.
    pub fn run(&self, stage: Stage) -> Result<StageStatus> {
        for p in self.prerequisites(stage) {
            self.run(p)?;
        }
        let input_hash = self.input_hash(stage)?;
        if self.up_to_date(stage, &input_hash) {
            info!("{stage}: up to date");
            return Ok(StageStatus::UpToDate);
        }
        let dir = self.stage_dir(stage);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::file(&dir, e))?;
        }
        create_dir(&dir)?;
        info!("{stage}: running");
        match stage {
            Stage::SelectFeatures => self.select_features(&dir)?,
            Stage::Collect => self.collect(&dir)?,
            Stage::TrainPredictor => self.train_predictor(&dir)?,
            Stage::EvalPredictor => self.eval_predictor(&dir)?,
            Stage::TrainAgent => self.train_agents(&dir)?,
            Stage::Evaluate => self.evaluate(&dir)?,
            Stage::Compare => self.compare(&dir)?,
            Stage::EmitPlots => self.emit_plots(&dir)?,
        }
        let mut outputs = BTreeMap::new();
        for rel in list_outputs(&dir)? {
            outputs.insert(rel_key(&rel), hash_file(&dir.join(&rel))?);
        }
        let m = Manifest {
            version: MANIFEST_VERSION,
            stage: stage.name().into(),
            input_hash,
            outputs,
        };
        write_text(&dir.join(MANIFEST), &serde_json::to_string_pretty(&m)?)?;
        info!("{stage}: done");
        Ok(StageStatus::Ran)
    }

    /// Every stage in order.
    pub fn run_all(&self) -> Result<()> {
        for s in Stage::ALL {
            self.run(s)?;
        }
        Ok(())
    }

    fn training_be(&self) -> Result<Vec<BEWorkloadSpec>> {
        let env = &self.cfg.environment;
        env.training_be.iter().map(|n| env.find_be(n)).collect()
    }

    fn holdout_be(&self) -> Result<Vec<BEWorkloadSpec>> {
        let env = &self.cfg.environment;
        self.cfg.evaluation.holdout_be.iter().map(|n| env.find_be(n)).collect()
    }

    fn agent_kinds(&self) -> Vec<AgentKind> {
        let mut kinds: Vec<AgentKind> = Vec::new();
        for k in self.cfg.evaluation.controllers.iter().filter_map(|c| c.agent()) {
            if !kinds.contains(&k) {
                kinds.push(k);
            }
        }
        kinds
    }

    fn select_features(&self, dir: &Path) -> Result<()> {
        let c = &self.cfg;
        let collect = crate::qospred::CollectConfig {
            samples_per_mix: c.featsel.samples_per_mix,
            ..c.predictor.collect.clone()
        };
        let data = collect_from_mixes(
            &c.environment.node,
            &c.environment.hp[0],
            &c.environment.profiling_mixes,
            &collect,
            derive_seed(c.seed, S_FEATSEL_DATA),
        )?;
        let catalog = build_decoy_catalog(&data, derive_seed(c.seed, S_FEATSEL_CATALOG))?;
        catalog.write_csv(&dir.join("catalog.csv"))?;
        let report = run_selection(&catalog, &c.featsel.selection, derive_seed(c.seed, S_FEATSEL_RUN))?;
        write_text(&dir.join("report.json"), &report.to_json()?)
    }

    fn collect(&self, dir: &Path) -> Result<()> {
        let c = &self.cfg;
        let data = collect_from_mixes(
            &c.environment.node,
            &c.environment.hp[0],
            &c.environment.profiling_mixes,
            &c.predictor.collect,
            derive_seed(c.seed, S_COLLECT),
        )?;
        data.write_csv(&dir.join("dataset.csv"))
    }

    fn dataset(&self) -> Result<ProfilingDataset> {
        let path = self.stage_dir(Stage::Collect).join("dataset.csv");
        if !path.exists() {
            return Err(Error::MissingArtifact(path));
        }
        ProfilingDataset::read_csv(&path)
    }

    /// Predictor config with the selected counters, kept in counter order.
    /// Selected names that are not simulator counters are dropped.
    pub fn resolved_predictor_config(&self) -> Result<PredictorConfig> {
        let mut cfg = self.cfg.predictor.model.clone();
        if self.cfg.featsel.enabled {
            let path = self.stage_dir(Stage::SelectFeatures).join("report.json");
            let report: SelectionReport = serde_json::from_str(&read_text(&path)?)?;
            let features: Vec<String> = CounterVector::NAMES
                .iter()
                .filter(|n| report.selected.iter().any(|s| s == *n))
                .map(|n| n.to_string())
                .collect();
            if features.is_empty() {
                return Err(Error::Config("feature selection kept no simulator counters".into()));
            }
            cfg.features = features;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn train_predictor(&self, dir: &Path) -> Result<()> {
        let p = train_predictor(&self.dataset()?, &self.resolved_predictor_config()?)?;
        write_text(&dir.join("predictor.json"), &p.to_json()?)
    }

    pub fn load_predictor(&self) -> Result<TwoLevelPredictor> {
        TwoLevelPredictor::from_json(&read_text(&self.stage_dir(Stage::TrainPredictor).join("predictor.json"))?)
    }

    fn eval_predictor(&self, dir: &Path) -> Result<()> {
        let data = self.dataset()?;
        let two = self.resolved_predictor_config()?;
        let one = PredictorConfig {
            two_level: false,
            ..two.clone()
        };
        let r2: LomoReport = evaluate_leave_one_mix_out(&data, &two)?;
        let r1: LomoReport = evaluate_leave_one_mix_out(&data, &one)?;
        r2.write_csv(&dir.join("lomo_two_level.csv"))?;
        r1.write_csv(&dir.join("lomo_one_level.csv"))?;
        let summary = PredictorEvalSummary {
            features: two.features.clone(),
            two_level_critical_mae: r2.pooled_critical_mae,
            one_level_critical_mae: r1.pooled_critical_mae,
            two_level_f1: r2.pooled_f1,
            two_level_full_mae: r2.pooled_full_mae,
            one_level_full_mae: r1.pooled_full_mae,
        };
        write_text(&dir.join("summary.json"), &serde_json::to_string_pretty(&summary)?)
    }

    fn fit_normalizer(&self, data: &ProfilingDataset, predictor: Option<&TwoLevelPredictor>) -> Result<StateNormalizer> {
        let counters: Vec<CounterVector> = data.rows.iter().map(|r| r.counters).collect();
        match predictor {
            Some(p) => {
                let preds = data
                    .rows
                    .iter()
                    .map(|r| p.predict_qos(&r.counters, &r.action))
                    .collect::<Result<Vec<f64>>>()?;
                StateNormalizer::fit(&counters, Some(&preds))
            }
            None => StateNormalizer::fit(&counters, None),
        }
    }

    fn agent_dir(&self, kind: AgentKind, seed: u64) -> PathBuf {
        self.stage_dir(Stage::TrainAgent).join(kind.name()).join(format!("seed_{seed}"))
    }

    fn train_agents(&self, _dir: &Path) -> Result<()> {
        let c = &self.cfg;
        let data = self.dataset()?;
        let predictor = self.load_predictor()?;
        let training = self.training_be()?;
        for kind in self.agent_kinds() {
            let pred = (kind == AgentKind::Prompt).then(|| predictor.clone());
            let norm = self.fit_normalizer(&data, pred.as_ref())?;
            for &seed in &c.evaluation.seeds {
                let out = self.agent_dir(kind, seed);
                create_dir(&out)?;
                write_text(&out.join("normalizer.json"), &serde_json::to_string_pretty(&norm)?)?;
                let train_seed = derive_seed(c.seed, S_TRAIN + seed);
                let factory = training_factory(&c.environment.node, &c.environment.hp, &training, train_seed);
                let mut ctl = agent_control(kind, factory, pred.clone(), norm.clone(), c.agent.reward.clone())?;
                let mut rng = seeded(train_seed);
                let model = new_agent_model(&ctl, &c.agent.agent, &mut rng)?;
                info!("train-agent: {} seed {seed}", kind.name());
                let outcome = train_loop(&mut ctl, model, &c.agent.agent, &mut rng, Some(&out))?;
                let step = select_checkpoint(&outcome.log, &outcome.checkpoint_steps(), c.agent.agent.selection_window)?;
                let sel = SelectedCheckpoint {
                    step,
                    file: format!("ckpt_{step}.json"),
                };
                write_text(&out.join("selected.json"), &serde_json::to_string_pretty(&sel)?)?;
            }
        }
        Ok(())
    }

    /// The selected checkpoint and normalizer for one trained agent.
    pub fn load_agent(&self, kind: AgentKind, seed: u64) -> Result<(BdqModel, StateNormalizer)> {
        let (net, norm) = load_agent_dir(&self.agent_dir(kind, seed))?;
        let a = &self.cfg.agent.agent;
        Ok((BdqModel::new(net, a.learning_rate, a.grad_clip), norm))
    }

    fn log_rel(seed: u64, be: &str, controller: ControllerKind) -> String {
        format!("seed_{seed}/{be}/{}.csv", controller.name())
    }

    fn evaluate(&self, dir: &Path) -> Result<()> {
        let c = &self.cfg;
        let ev = &c.evaluation;
        let predictor = self.load_predictor()?;
        let hp = c.hp_for_intervals(ev.episode_intervals);
        let mut episodes = Vec::new();
        for &seed in &ev.seeds {
            let mut agents = BTreeMap::new();
            for kind in self.agent_kinds() {
                agents.insert(kind.name(), self.load_agent(kind, seed)?);
            }
            for (i, be) in self.holdout_be()?.into_iter().enumerate() {
                // identical traces and noise for every controller
                let env_seed = derive_seed(derive_seed(c.seed, S_EVAL + seed), i as u64);
                for &controller in &ev.controllers {
                    let factory = single_factory(&c.environment.node, &hp, &be, env_seed);
                    let log = match controller.agent() {
                        Some(kind) => {
                            let (model, norm) = &agents[kind.name()];
                            let pred = (kind == AgentKind::Prompt).then(|| predictor.clone());
                            let mut ctl = agent_control(kind, factory, pred, norm.clone(), c.agent.reward.clone())?;
                            run_agent(&mut ctl, model, c.agent.agent.smoothing_window, ev.episode_intervals)?
                        }
                        None => {
                            let mut ctl = SimControl::new(
                                factory,
                                None,
                                StateNormalizer::identity(false),
                                c.agent.reward.clone(),
                            )?;
                            let mut rng = seeded(derive_seed(env_seed, S_CLITE));
                            clite_run(&mut ctl, &c.baselines.clite, ev.episode_intervals, &mut rng)?
                        }
                    };
                    let bad = llc_audit_failures(&log);
                    if !bad.is_empty() {
                        return Err(Error::InvalidInput(format!(
                            "{} on {}: LLC partition broken at steps {:?}",
                            controller.name(),
                            be.name,
                            &bad[..bad.len().min(10)]
                        )));
                    }
                    let rel = Self::log_rel(seed, &be.name, controller);
                    let path = dir.join(&rel);
                    create_dir(path.parent().expect("log path has a parent"))?;
                    write_control_log(&log, &path)?;
                    info!("evaluate: seed {seed} {} {}", be.name, controller.name());
                    episodes.push(EpisodeMetrics {
                        seed,
                        be: be.name.clone(),
                        controller,
                        log: rel,
                        metrics: compute_metrics(&log)?,
                        buckets: bucket_counts(&log),
                    });
                }
            }
        }
        write_text(&dir.join("metrics.json"), &serde_json::to_string_pretty(&episodes)?)
    }

    pub fn load_episodes(&self) -> Result<Vec<EpisodeMetrics>> {
        let path = self.stage_dir(Stage::Evaluate).join("metrics.json");
        Ok(serde_json::from_str(&read_text(&path)?)?)
    }

    pub fn load_log(&self, ep: &EpisodeMetrics) -> Result<Vec<ControlRecord>> {
        let path = self.stage_dir(Stage::Evaluate).join(&ep.log);
        if !path.exists() {
            return Err(Error::MissingArtifact(path));
        }
        read_control_log(&path)
    }

    fn compare(&self, dir: &Path) -> Result<()> {
        let ev = &self.cfg.evaluation;
        // recompute from the logs so the tables depend only on them
        let mut episodes = self.load_episodes()?;
        for ep in &mut episodes {
            let log = self.load_log(ep)?;
            ep.metrics = compute_metrics(&log)?;
            ep.buckets = bucket_counts(&log);
        }
        let fmt_t = |t: Option<f64>| t.map_or_else(|| "n/a".to_string(), |v| v.to_string());
        let mut per_run = csv::Writer::from_path(dir.join("metrics.csv"))?;
        per_run.write_record(["controller", "be", "seed", "violation_pct", "tardiness", "be_perf", "power_eff", "actions"])?;
        let mut per_bucket = csv::Writer::from_path(dir.join("buckets.csv"))?;
        per_bucket.write_record(["controller", "bucket", "intervals", "sampling_intervals"])?;
        let mut summaries = Vec::new();
        for &controller in &ev.controllers {
            let mine: Vec<&EpisodeMetrics> = episodes.iter().filter(|e| e.controller == controller).collect();
            let mut per_seed = Vec::new();
            let mut buckets = BucketCounts::default();
            for &seed in &ev.seeds {
                let rows: Vec<&EpisodeMetrics> = mine.iter().copied().filter(|e| e.seed == seed).collect();
                for e in &rows {
                    let m = &e.metrics;
                    per_run.write_record([
                        controller.name().to_string(),
                        e.be.clone(),
                        seed.to_string(),
                        m.violation_pct.to_string(),
                        fmt_t(m.tardiness),
                        m.be_perf.to_string(),
                        m.power_eff.to_string(),
                        m.actions.to_string(),
                    ])?;
                    buckets.add(&e.buckets);
                }
                let items: Vec<Metrics> = rows.iter().map(|e| e.metrics.clone()).collect();
                let agg = aggregate(&items)?;
                per_run.write_record([
                    controller.name().to_string(),
                    "all".to_string(),
                    seed.to_string(),
                    agg.violation_pct.to_string(),
                    fmt_t(agg.tardiness),
                    agg.be_perf.to_string(),
                    agg.power_eff.to_string(),
                    agg.actions.to_string(),
                ])?;
                per_seed.push((seed, agg));
            }
            for (b, name) in BUCKET_NAMES.iter().enumerate() {
                per_bucket.write_record([
                    controller.name().to_string(),
                    name.to_string(),
                    buckets.total[b].to_string(),
                    buckets.sampling[b].to_string(),
                ])?;
            }
            let med = |f: &dyn Fn(&Metrics) -> f64| {
                median(&per_seed.iter().map(|(_, m)| f(m)).collect::<Vec<_>>()).expect("seeds are non-empty")
            };
            summaries.push(ControllerSummary {
                controller,
                median_violation_pct: med(&|m| m.violation_pct),
                median_tardiness: med(&|m| m.tardiness.unwrap_or(1.0)),
                median_be_perf: med(&|m| m.be_perf),
                median_power_eff: med(&|m| m.power_eff),
                per_seed,
                buckets,
            });
        }
        per_run.flush()?;
        per_bucket.flush()?;
        let summary = ComparisonSummary { controllers: summaries };
        write_text(&dir.join("summary.json"), &serde_json::to_string_pretty(&summary)?)
    }

    pub fn load_comparison(&self) -> Result<ComparisonSummary> {
        Ok(serde_json::from_str(&read_text(&self.stage_dir(Stage::Compare).join("summary.json"))?)?)
    }

    fn emit_plots(&self, dir: &Path) -> Result<()> {
        for ep in self.load_episodes()? {
            let log = self.load_log(&ep)?;
            let n_hp = log.iter().map(|r| r.hp + 1).max().unwrap_or(1);
            for h in 0..n_hp {
                let rel = match h {
                    0 => ep.log.clone(),
                    _ => ep.log.replace(".csv", &format!("_hp{h}.csv")),
                };
                let path = dir.join(&rel);
                create_dir(path.parent().expect("plot path has a parent"))?;
                let rows: Vec<ControlRecord> = log.iter().filter(|r| r.hp == h).cloned().collect();
                write_plot_csv(&rows, &path)?;
            }
        }
        Ok(())
    }
}

pub const PLOT_HEADER: [&str; 9] = ["t_s", "demand_pps", "target_dpps", "meas_dpps", "llc", "mbw", "hpcf", "becf", "ucf"];

/// Time series of one HP: demand, target, measured QoS and the five action
/// indices, one row per control interval.
pub fn write_plot_csv(rows: &[ControlRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(PLOT_HEADER)?;
    for r in rows {
        w.write_record([
            r.t_s.to_string(),
            r.demand_pps.to_string(),
            r.target_dpps.to_string(),
            r.meas_dpps.to_string(),
            r.action_llc.to_string(),
            r.action_mbw.to_string(),
            r.action_hpcf.to_string(),
            r.action_becf.to_string(),
            r.action_ucf.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::file(path, e))
}

/// Training environments cycling through `training` BE profiles, one per
/// episode.
pub fn training_factory(
    node: &NodeConfig,
    hp: &[HPWorkloadSpec],
    training: &[BEWorkloadSpec],
    seed: u64,
) -> EnvFactory {
    let (node, hp, training) = (node.clone(), hp.to_vec(), training.to_vec());
    Box::new(move |k| {
        let be = training[(k % training.len() as u64) as usize].clone();
        SimEnv::new(node.clone(), hp.clone(), vec![be], derive_seed(seed, k))
    })
}

/// Reads the selected checkpoint and state normalizer from one trained
/// agent directory (`selected.json`, the checkpoint it names, and
/// `normalizer.json`).
pub fn load_agent_dir(dir: &Path) -> Result<(BdqNetwork, StateNormalizer)> {
    let sel: SelectedCheckpoint = serde_json::from_str(&read_text(&dir.join("selected.json"))?)?;
    let ck = Checkpoint::<BdqNetwork>::from_json(&read_text(&dir.join(&sel.file))?)?;
    let norm: StateNormalizer = serde_json::from_str(&read_text(&dir.join("normalizer.json"))?)?;
    if ck.model.net.input_dim() % norm.block_dim() != 0 {
        return Err(Error::Shape {
            expected: norm.block_dim(),
            actual: ck.model.net.input_dim(),
        });
    }
    Ok((ck.model, norm))
}

/// Environments with a single BE profile.
pub fn single_factory(node: &NodeConfig, hp: &[HPWorkloadSpec], be: &BEWorkloadSpec, seed: u64) -> EnvFactory {
    let (node, hp, be) = (node.clone(), hp.to_vec(), be.clone());
    Box::new(move |k| SimEnv::new(node.clone(), hp.clone(), vec![be.clone()], derive_seed(seed, k)))
}

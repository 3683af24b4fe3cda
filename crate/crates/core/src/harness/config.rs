//! Experiment configuration: one JSON document with a section per stage.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::workloads::{be_catalog, holdout_be_names, profiling_mixes, TRAINING_BE};
use crate::baselines::{AgentKind, ClitePlusConfig};
use crate::controller::{AgentConfig, RewardConfig};
use crate::error::{Error, Result};
use crate::featsel::SelectionConfig;
use crate::qospred::{CollectConfig, Mix, PredictorConfig};
use crate::simenv::{BEWorkloadSpec, DemandSource, HPWorkloadSpec, NodeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControllerKind {
    Prompt,
    TwigPlus,
    ClitePlus,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Prompt => "prompt",
            ControllerKind::TwigPlus => "twig-plus",
            ControllerKind::ClitePlus => "clite-plus",
        }
    }

    /// The learned agent behind this controller, if any.
    pub fn agent(self) -> Option<AgentKind> {
        match self {
            ControllerKind::Prompt => Some(AgentKind::Prompt),
            ControllerKind::TwigPlus => Some(AgentKind::TwigPlus),
            ControllerKind::ClitePlus => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentSection {
    pub node: NodeConfig,
    /// HP workloads, each with its own demand source.
    pub hp: Vec<HPWorkloadSpec>,
    pub be_catalog: Vec<BEWorkloadSpec>,
    /// BE profiles the agents train against, cycled per episode.
    pub training_be: Vec<String>,
    pub profiling_mixes: Vec<Mix>,
}

impl Default for EnvironmentSection {
    fn default() -> Self {
        Self {
            node: NodeConfig::default(),
            hp: vec![HPWorkloadSpec::default()],
            be_catalog: be_catalog(),
            training_be: TRAINING_BE.iter().map(|s| s.to_string()).collect(),
            profiling_mixes: profiling_mixes(),
        }
    }
}

impl EnvironmentSection {
    pub fn find_be(&self, name: &str) -> Result<BEWorkloadSpec> {
        self.be_catalog
            .iter()
            .find(|b| b.name == name)
            .cloned()
            .ok_or_else(|| Error::Config(format!("BE profile {name:?} is not in the catalog")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatselSection {
    /// When false the predictor uses its configured feature list.
    pub enabled: bool,
    pub samples_per_mix: usize,
    pub selection: SelectionConfig,
}

impl Default for FeatselSection {
    fn default() -> Self {
        Self {
            enabled: true,
            samples_per_mix: 100,
            selection: SelectionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorSection {
    pub collect: CollectConfig,
    pub model: PredictorConfig,
}

impl Default for PredictorSection {
    fn default() -> Self {
        Self {
            collect: CollectConfig {
                samples_per_mix: 200,
                ..CollectConfig::default()
            },
            // the controller's gate needs relative accuracy near the target
            model: PredictorConfig {
                coarse_log_target: true,
                ..PredictorConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    pub agent: AgentConfig,
    pub reward: RewardConfig,
}

impl Default for AgentSection {
    fn default() -> Self {
        Self {
            // the selection window spans one training episode so every
            // candidate checkpoint is scored over a full demand cycle
            agent: AgentConfig {
                max_steps: 5000,
                selection_window: 2000,
                ..AgentConfig::default()
            },
            reward: RewardConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub clite: ClitePlusConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub holdout_be: Vec<String>,
    /// Control intervals per evaluation episode.
    pub episode_intervals: usize,
    pub seeds: Vec<u64>,
    pub controllers: Vec<ControllerKind>,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            holdout_be: holdout_be_names(),
            episode_intervals: 2000,
            seeds: (0..5).collect(),
            controllers: vec![ControllerKind::Prompt, ControllerKind::TwigPlus, ControllerKind::ClitePlus],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every stage derives its streams from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub environment: EnvironmentSection,
    pub featsel: FeatselSection,
    pub predictor: PredictorSection,
    pub agent: AgentSection,
    pub baselines: BaselineSection,
    pub evaluation: EvaluationSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            environment: EnvironmentSection::default(),
            featsel: FeatselSection::default(),
            predictor: PredictorSection::default(),
            agent: AgentSection::default(),
            baselines: BaselineSection::default(),
            evaluation: EvaluationSection::default(),
        }
    }
}

impl ExperimentConfig {
    /// Reads and validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// A run small enough for smoke tests: 200 predictor rows, 500 agent
    /// steps, three held-out BEs, one seed.
    pub fn tiny() -> Self {
        let mut c = Self::default();
        c.featsel.samples_per_mix = 40;
        c.predictor.collect.samples_per_mix = 23;
        c.predictor.model.min_side_rows = 10;
        c.agent.agent.max_steps = 500;
        c.agent.agent.batch_size = 32;
        c.agent.agent.checkpoint_every = 100;
        c.agent.agent.selection_window = 100;
        c.evaluation.holdout_be.truncate(3);
        c.evaluation.episode_intervals = 200;
        c.evaluation.seeds = vec![0];
        c.baselines.clite.samples_per_search = 20;
        c.baselines.clite.max_candidates = 2000;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let env = &self.environment;
        env.node.validate()?;
        if env.hp.is_empty() {
            return Err(Error::Config("at least one HP workload is required".into()));
        }
        for h in &env.hp {
            h.validate()?;
            h.demand.validate()?;
        }
        for b in &env.be_catalog {
            b.validate()?;
        }
        let names: BTreeSet<&str> = env.be_catalog.iter().map(|b| b.name.as_str()).collect();
        if names.len() != env.be_catalog.len() {
            return Err(Error::Config("BE catalog names must be unique".into()));
        }
        if env.training_be.is_empty() || env.profiling_mixes.is_empty() {
            return Err(Error::Config("training BE list and profiling mixes must be non-empty".into()));
        }
        for n in env.training_be.iter().chain(&self.evaluation.holdout_be) {
            env.find_be(n)?;
        }
        let training: BTreeSet<&str> = env.training_be.iter().map(String::as_str).collect();
        if let Some(shared) = self.evaluation.holdout_be.iter().find(|b| training.contains(b.as_str())) {
            return Err(Error::Config(format!(
                "BE profile {shared:?} is both a training and an evaluation workload"
            )));
        }
        self.featsel.selection_checks()?;
        self.predictor.model.validate()?;
        if self.predictor.collect.samples_per_mix == 0 {
            return Err(Error::Config("predictor collection needs samples".into()));
        }
        self.agent.agent.validate()?;
        self.agent.reward.validate()?;
        self.baselines.clite.validate()?;
        let ev = &self.evaluation;
        if ev.holdout_be.is_empty() || ev.seeds.is_empty() || ev.controllers.is_empty() {
            return Err(Error::Config("evaluation needs BEs, seeds and controllers".into()));
        }
        if ev.episode_intervals == 0 {
            return Err(Error::Config("evaluation episodes need at least one interval".into()));
        }
        let unique_seeds: BTreeSet<u64> = ev.seeds.iter().copied().collect();
        if unique_seeds.len() != ev.seeds.len() {
            return Err(Error::Config("evaluation seeds must be distinct".into()));
        }
        Ok(())
    }

    /// HP specs whose demand covers `intervals` control intervals after the
    /// priming interval.
    pub fn hp_for_intervals(&self, intervals: usize) -> Vec<HPWorkloadSpec> {
        let secs = ((intervals + 1) as f64 * self.environment.node.control_interval).ceil() as usize;
        self.environment
            .hp
            .iter()
            .map(|h| {
                let mut h = h.clone();
                match &mut h.demand {
                    DemandSource::Diurnal(p) => p.duration_s = secs,
                    DemandSource::Constant { duration_s, .. } => *duration_s = secs,
                    DemandSource::File { .. } => {}
                }
                h
            })
            .collect()
    }
}

impl FeatselSection {
    fn selection_checks(&self) -> Result<()> {
        if self.enabled && self.samples_per_mix == 0 {
            return Err(Error::Config("feature selection needs samples".into()));
        }
        if self.selection.k == 0 {
            return Err(Error::Config("feature selection k must be at least 1".into()));
        }
        Ok(())
    }
}

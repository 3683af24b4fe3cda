//! Agent construction shared by PROMPT and the measured-QoS-only baseline:
//! both go through the same network, replay and training code, differing
//! only in state width and reward inputs.

use serde::{Deserialize, Serialize};

use crate::controller::{AgentConfig, BdqModel, BdqNetwork, EnvFactory, RewardConfig, SimControl, StateNormalizer};
use crate::error::{Error, Result};
use crate::qospred::TwoLevelPredictor;
use crate::rng::Rng;

/// Twig+ uses the controller's hyperparameters unchanged.
pub type TwigPlusConfig = AgentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Prompt,
    TwigPlus,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Prompt => "prompt",
            AgentKind::TwigPlus => "twig-plus",
        }
    }
}

/// Control environment for `kind`. PROMPT requires a predictor and a
/// prediction-aware normalizer; Twig+ takes neither.
pub fn agent_control(
    kind: AgentKind,
    factory: EnvFactory,
    predictor: Option<TwoLevelPredictor>,
    norm: StateNormalizer,
    reward: RewardConfig,
) -> Result<SimControl> {
    match (kind, predictor.is_some()) {
        (AgentKind::Prompt, false) => return Err(Error::Config("PROMPT needs a trained predictor".into())),
        (AgentKind::TwigPlus, true) => return Err(Error::Config("Twig+ has no predictor".into())),
        _ => {}
    }
    SimControl::new(factory, predictor, norm, reward)
}

/// Fresh network sized for `ctl`.
pub fn new_agent_model(ctl: &SimControl, cfg: &AgentConfig, rng: &mut Rng) -> Result<BdqModel> {
    cfg.validate()?;
    let net = BdqNetwork::new(ctl.state_dim(), cfg.hidden_width, &ctl.branch_sizes(), rng)?;
    Ok(BdqModel::new(net, cfg.learning_rate, cfg.grad_clip))
}

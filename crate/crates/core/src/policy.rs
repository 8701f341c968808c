//! Action selection over Q-values and the agents built on it.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::config::{Action, ConfigError, GameConfig, GameKind};
use crate::nn::{ArcaneNet, NnError, Variant};
use crate::obs::{observe, ObsError};
use crate::tiles::{RgbImage, TileCatalog, TILE_SIZE};

pub const DEFAULT_SIGMA: f64 = 10.0;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("empty Q-value vector")]
    Empty,
    #[error("non-finite Q-value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("sigma must be positive and finite, got {0}")]
    BadSigma(f64),
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Obs(#[from] ObsError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("screen size {0:?} px is already registered")]
    DuplicateScreen((usize, usize)),
    #[error("model has {model} outputs but {game} has {game_actions} actions")]
    ActionCount { model: usize, game: GameKind, game_actions: usize },
    #[error("no legal actions")]
    NoLegalActions,
    #[error("bundle {path}: {message}")]
    Bundle { path: PathBuf, message: String },
    #[error("agent failure: {0}")]
    Other(String),
}

fn check_finite(q: &[f64]) -> Result<(), PolicyError> {
    if q.is_empty() {
        return Err(PolicyError::Empty);
    }
    match q.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(PolicyError::NonFinite { index, value: q[index] }),
        None => Ok(()),
    }
}

/// Argmax with ties going to the lowest index.
pub fn act_deterministic(q: &[f64]) -> Result<usize, PolicyError> {
    check_finite(q)?;
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Scaled softmax: centre the values on the midpoint of their range, scale by
/// `sigma / (max - min)`, softmax. Uniform when all values are equal.
pub fn softmax_probs(q: &[f64], sigma: f64) -> Result<Vec<f64>, PolicyError> {
    check_finite(q)?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(PolicyError::BadSigma(sigma));
    }
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = q.iter().copied().fold(f64::INFINITY, f64::min);
    if max == min {
        return Ok(vec![1.0 / q.len() as f64; q.len()]);
    }
    let mid = (max + min) / 2.0;
    let k = sigma / (max - min);
    let exps: Vec<f64> = q.iter().map(|&v| (k * (v - mid)).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Inverse-CDF draw from [`softmax_probs`] using one uniform number.
pub fn act_stochastic(q: &[f64], sigma: f64, rng: &mut impl Rng) -> Result<usize, PolicyError> {
    let p = softmax_probs(q, sigma)?;
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(p.len() - 1)
}

pub fn random_action(legal: &[Action], rng: &mut impl Rng) -> Action {
    legal[rng.gen_range(0..legal.len())]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DecisionPolicy {
    Deterministic,
    Stochastic { sigma: f64 },
}

impl DecisionPolicy {
    pub fn stochastic(sigma: f64) -> Result<Self, PolicyError> {
        if sigma > 0.0 && sigma.is_finite() {
            Ok(DecisionPolicy::Stochastic { sigma })
        } else {
            Err(PolicyError::BadSigma(sigma))
        }
    }

    pub fn select(self, q: &[f64], rng: &mut impl Rng) -> Result<usize, PolicyError> {
        match self {
            DecisionPolicy::Deterministic => act_deterministic(q),
            DecisionPolicy::Stochastic { sigma } => act_stochastic(q, sigma, rng),
        }
    }
}

/// Anything that maps a screen to an action.
pub trait Agent {
    fn id(&self) -> &str;

    fn act(&mut self, screen: &RgbImage, legal: &[Action], rng: &mut ChaCha8Rng) -> Result<Action, AgentError>;

    /// Called before every episode.
    fn reset(&mut self) {}
}

pub struct RandomAgent {
    id: String,
}

impl RandomAgent {
    pub fn new(id: impl Into<String>) -> Self {
        RandomAgent { id: id.into() }
    }
}

impl Agent for RandomAgent {
    fn id(&self) -> &str {
        &self.id
    }

    fn act(&mut self, _: &RgbImage, legal: &[Action], rng: &mut ChaCha8Rng) -> Result<Action, AgentError> {
        if legal.is_empty() {
            return Err(AgentError::NoLegalActions);
        }
        Ok(random_action(legal, rng))
    }
}

/// Plays a fixed action list in a loop, skipping actions the game lacks.
pub struct CycleAgent {
    id: String,
    actions: Vec<Action>,
    next: usize,
}

impl CycleAgent {
    pub fn new(id: impl Into<String>, actions: Vec<Action>) -> Self {
        CycleAgent { id: id.into(), actions, next: 0 }
    }
}

impl Agent for CycleAgent {
    fn id(&self) -> &str {
        &self.id
    }

    fn act(&mut self, _: &RgbImage, legal: &[Action], _: &mut ChaCha8Rng) -> Result<Action, AgentError> {
        for _ in 0..self.actions.len() {
            let a = self.actions[self.next];
            self.next = (self.next + 1) % self.actions.len();
            if legal.contains(&a) {
                return Ok(a);
            }
        }
        Ok(Action::Nil)
    }

    fn reset(&mut self) {
        self.next = 0;
    }
}

/// One trained model for one game.
pub struct QAgent {
    id: String,
    net: ArcaneNet,
    game: GameKind,
    actions: Vec<Action>,
    policy: DecisionPolicy,
    catalog: TileCatalog,
}

impl QAgent {
    pub fn new(id: impl Into<String>, net: ArcaneNet, game: GameKind, policy: DecisionPolicy) -> Result<Self, AgentError> {
        let actions = GameConfig::builtin(game).actions;
        if net.actions() != actions.len() {
            return Err(AgentError::ActionCount { model: net.actions(), game, game_actions: actions.len() });
        }
        Ok(QAgent { id: id.into(), net, game, actions, policy, catalog: TileCatalog::shared().clone() })
    }

    pub fn game(&self) -> GameKind {
        self.game
    }

    pub fn net(&self) -> &ArcaneNet {
        &self.net
    }

    /// Screen size in pixels this model was built for.
    pub fn screen_px(&self) -> (usize, usize) {
        let (gh, gw) = self.net.config().global_dims;
        (gh.div_ceil(2) * TILE_SIZE, gw.div_ceil(2) * TILE_SIZE)
    }

    pub fn q_values(&self, screen: &RgbImage) -> Result<Vec<f64>, AgentError> {
        Ok(self.net.forward(&observe(screen, &self.catalog)?)?)
    }
}

impl Agent for QAgent {
    fn id(&self) -> &str {
        &self.id
    }

    fn act(&mut self, screen: &RgbImage, _: &[Action], rng: &mut ChaCha8Rng) -> Result<Action, AgentError> {
        let q = self.q_values(screen)?;
        Ok(self.actions[self.policy.select(&q, rng)?])
    }
}

/// Dispatches on screen size to a per-game model; unknown sizes fall back
/// to random play.
pub struct MetaAgent {
    id: String,
    table: Vec<((usize, usize), QAgent)>,
    fallback: RandomAgent,
}

impl MetaAgent {
    pub fn new(id: impl Into<String>) -> Self {
        let id = id.into();
        MetaAgent { fallback: RandomAgent::new(format!("{id}/fallback")), id, table: Vec::new() }
    }

    pub fn register(&mut self, agent: QAgent) -> Result<(), AgentError> {
        let px = agent.screen_px();
        if self.table.iter().any(|(d, _)| *d == px) {
            return Err(AgentError::DuplicateScreen(px));
        }
        self.table.push((px, agent));
        Ok(())
    }

    pub fn registered(&self) -> Vec<(usize, usize)> {
        self.table.iter().map(|(d, _)| *d).collect()
    }

    /// Model chosen for a screen of `dims` pixels, if any.
    pub fn model_for(&self, dims: (usize, usize)) -> Option<&QAgent> {
        self.table.iter().find(|(d, _)| *d == dims).map(|(_, a)| a)
    }
}

impl Agent for MetaAgent {
    fn id(&self) -> &str {
        &self.id
    }

    fn act(&mut self, screen: &RgbImage, legal: &[Action], rng: &mut ChaCha8Rng) -> Result<Action, AgentError> {
        let dims = screen.dims();
        match self.table.iter_mut().find(|(d, _)| *d == dims) {
            Some((_, agent)) => agent.act(screen, legal, rng),
            None => self.fallback.act(screen, legal, rng),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleFile {
    id: String,
    kind: String,
    #[serde(default)]
    policy: Option<String>,
    #[serde(default)]
    sigma: Option<f64>,
    #[serde(default)]
    variant: Option<String>,
    #[serde(default)]
    models: Vec<BundleModel>,
    #[serde(default)]
    actions: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleModel {
    game: String,
    path: PathBuf,
}

/// Reads an agent bundle.
///
/// ```toml
/// id = "arcane"
/// kind = "arcane"        # arcane | random | cycle
/// policy = "stoch"       # det | stoch
/// sigma = 10.0
/// variant = "dual"       # dual | global-only
///
/// [[models]]
/// game = "golddigger"
/// path = "golddigger.bin"   # relative to the bundle file
/// ```
///
/// A `cycle` bundle lists `actions = ["RIGHT", "USE"]` instead of models.
pub fn load_bundle(path: &Path) -> Result<Box<dyn Agent>, AgentError> {
    let bundle_err = |message: String| AgentError::Bundle { path: path.to_path_buf(), message };
    let text = std::fs::read_to_string(path).map_err(|e| bundle_err(e.to_string()))?;
    let file: BundleFile = toml::from_str(&text).map_err(|e| bundle_err(e.to_string()))?;
    match file.kind.as_str() {
        "random" => Ok(Box::new(RandomAgent::new(file.id))),
        "cycle" => {
            let actions = file
                .actions
                .iter()
                .map(|a| a.parse::<Action>())
                .collect::<Result<Vec<_>, _>>()?;
            if actions.is_empty() {
                return Err(bundle_err("cycle agent needs a non-empty `actions` list".into()));
            }
            Ok(Box::new(CycleAgent::new(file.id, actions)))
        }
        "arcane" => {
            let policy = match file.policy.as_deref().unwrap_or("stoch") {
                "det" => DecisionPolicy::Deterministic,
                "stoch" => DecisionPolicy::stochastic(file.sigma.unwrap_or(DEFAULT_SIGMA))?,
                other => return Err(bundle_err(format!("unknown policy `{other}`"))),
            };
            let variant: Variant = file.variant.as_deref().unwrap_or("dual").parse()?;
            let base = path.parent().unwrap_or(Path::new("."));
            let mut meta = MetaAgent::new(file.id.clone());
            for m in &file.models {
                let game: GameKind = m.game.parse()?;
                let net = ArcaneNet::load_variant(&base.join(&m.path), variant)?;
                meta.register(QAgent::new(format!("{}/{}", file.id, game.id()), net, game, policy)?)?;
            }
            Ok(Box::new(meta))
        }
        other => Err(bundle_err(format!("unknown agent kind `{other}`"))),
    }
}

//! DQN: epsilon-greedy acting, uniform replay, periodic target sync and
//! level alternation.

use std::collections::VecDeque;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::config::{Action, GameKind};
use crate::game::{reset, GameError, Status};
use crate::level::Level;
use crate::nn::{huber_loss, ArcaneNet, NetConfig, NnError, Optimizer, OptimizerKind, Variant};
use crate::obs::{observe, ObsError, ObservationPair};
use crate::policy::{act_deterministic, PolicyError};
use crate::tiles::{RgbImage, TileCatalog};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no training levels")]
    NoLevels,
    #[error("training levels mix games ({0} and {1})")]
    MixedGames(GameKind, GameKind),
    #[error("training levels must share one size, got {0:?} and {1:?}")]
    MixedSizes((usize, usize), (usize, usize)),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("replay buffer holds {have} transitions, {want} requested")]
    Underfilled { have: usize, want: usize },
    #[error("training diverged at frame {frame} (gradient step {step}): {detail}")]
    Divergence { frame: u64, step: u64, detail: String },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Obs(#[from] ObsError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub total_frames: u64,
    pub eps_initial: f64,
    pub eps_final: f64,
    pub eps_final_frame: u64,
    pub replay_capacity: usize,
    pub replay_start: usize,
    pub batch: usize,
    pub lr: f64,
    pub gamma: f64,
    /// Counted in gradient steps.
    pub target_sync: u64,
    pub update_freq: u64,
    pub alt_epochs: u64,
    pub seed: u64,
    pub variant: Variant,
    pub optimizer: OptimizerKind,
    /// Extra penalty stored with a losing TreasureKeeper transition.
    pub treasurekeeper_loss_penalty: i64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_frames: 200_000,
            eps_initial: 1.0,
            eps_final: 0.1,
            eps_final_frame: 20_000,
            replay_capacity: 40_000,
            replay_start: 200,
            batch: 32,
            lr: 0.001,
            gamma: 0.9,
            target_sync: 300,
            update_freq: 4,
            alt_epochs: 5,
            seed: 0,
            variant: Variant::Dual,
            optimizer: OptimizerKind::ADAM,
            treasurekeeper_loss_penalty: -5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if self.replay_capacity == 0 || self.batch == 0 || self.target_sync == 0 || self.update_freq == 0 || self.alt_epochs == 0 {
            return bad("capacities, batch size and periods must be positive");
        }
        if self.lr.is_nan() || self.lr <= 0.0 || !(0.0..=1.0).contains(&self.gamma) {
            return bad("learning rate must be positive and gamma in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.eps_final) || self.eps_final > self.eps_initial || self.eps_initial > 1.0 {
            return bad("need 0 <= eps_final <= eps_initial <= 1");
        }
        if self.replay_start > self.replay_capacity || self.replay_start == 0 {
            return bad("replay_start must be in 1..=replay_capacity");
        }
        Ok(())
    }
}

/// Linear decay from `eps_initial` to `eps_final` over `eps_final_frame` frames.
pub fn epsilon_at(frame: u64, config: &TrainConfig) -> f64 {
    if frame >= config.eps_final_frame {
        return config.eps_final;
    }
    let f = frame as f64 / config.eps_final_frame as f64;
    config.eps_initial * (1.0 - f) + config.eps_final * f
}

/// Level index for an epoch (one epoch is one episode).
pub fn select_training_level(epoch: u64, n_levels: usize, alt_epochs: u64) -> usize {
    ((epoch / alt_epochs) % n_levels as u64) as usize
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: ObservationPair,
    pub action: usize,
    pub reward: i64,
    pub next_obs: ObservationPair,
    pub terminal: bool,
}

/// FIFO experience store with uniform sampling.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T = Transition> {
    items: VecDeque<T>,
    capacity: usize,
    inserted: u64,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer { items: VecDeque::with_capacity(capacity.min(1 << 16)), capacity, inserted: 0 }
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
        self.inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total pushes so far, including evicted items.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn get(&self, i: usize) -> Option<&T> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    /// `n` uniform draws with replacement.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<&T>, TrainError> {
        if self.items.len() < n || self.items.is_empty() {
            return Err(TrainError::Underfilled { have: self.items.len(), want: n });
        }
        Ok((0..n).map(|_| &self.items[rng.gen_range(0..self.items.len())]).collect())
    }
}

/// `r` for terminal transitions, `r + gamma * max_a Q_target(next)` otherwise.
pub fn td_targets(batch: &[&Transition], target: &ArcaneNet, gamma: f64) -> Result<Vec<f64>, TrainError> {
    let next: Vec<&ObservationPair> = batch.iter().map(|t| &t.next_obs).collect();
    let q = target.forward_batch(&next)?;
    let a = target.actions();
    Ok(batch
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if t.terminal {
                t.reward as f64
            } else {
                let best = q[i * a..(i + 1) * a].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                t.reward as f64 + gamma * best
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogRow {
    pub episode: u64,
    pub level: String,
    pub frames: u64,
    pub epsilon: f64,
    pub score: i64,
    pub length: u32,
    pub win: bool,
    pub loss_mean: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn to_csv(&self) -> Result<String, TrainError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.rows.is_empty() {
            w.write_record(["episode", "level", "frames", "epsilon", "score", "length", "win", "loss_mean"])?;
        }
        for row in &self.rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| TrainError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrainStats {
    pub frames: u64,
    pub episodes: u64,
    pub gradient_steps: u64,
    pub target_syncs: u64,
    /// Frame count at which the buffer first held `replay_start` items.
    pub warmup_frame: Option<u64>,
}

pub struct TrainOutcome {
    pub net: ArcaneNet,
    pub log: TrainLog,
    pub stats: TrainStats,
}

fn check_levels(levels: &[Level]) -> Result<(GameKind, (usize, usize)), TrainError> {
    let first = levels.first().ok_or(TrainError::NoLevels)?;
    for l in levels {
        if l.game() != first.game() {
            return Err(TrainError::MixedGames(first.game(), l.game()));
        }
        if l.dims() != first.dims() {
            return Err(TrainError::MixedSizes(first.dims(), l.dims()));
        }
    }
    Ok((first.game(), first.dims()))
}

struct Learner {
    online: ArcaneNet,
    target: ArcaneNet,
    optimizer: Optimizer,
    losses: Vec<f64>,
}

impl Learner {
    fn step(&mut self, batch: &[&Transition], gamma: f64) -> Result<(), String> {
        let y = td_targets(batch, &self.target, gamma).map_err(|e| e.to_string())?;
        let obs: Vec<&ObservationPair> = batch.iter().map(|t| &t.obs).collect();
        let (q, cache) = self.online.forward_train(&obs).map_err(|e| e.to_string())?;
        let a = self.online.actions();
        let pred: Vec<f64> = batch.iter().enumerate().map(|(i, t)| q[i * a + t.action]).collect();
        let (loss, g) = huber_loss(&pred, &y);
        if !loss.is_finite() {
            return Err(format!("loss is {loss}"));
        }
        let mut dq = vec![0.0; q.len()];
        for (i, t) in batch.iter().enumerate() {
            dq[i * a + t.action] = g[i];
        }
        let grads = self.online.backward(&cache, &dq).map_err(|e| e.to_string())?;
        self.optimizer.apply(&mut self.online, &grads).map_err(|e| e.to_string())?;
        self.losses.push(loss);
        Ok(())
    }
}

/// Trains one model on `levels` (all of one game and size).
pub fn train(levels: &[Level], config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let (game, dims) = check_levels(levels)?;
    let actions: Vec<Action> = crate::config::GameConfig::builtin(game).actions;
    let net_config = NetConfig::for_grid(dims, actions.len(), config.variant);
    let online = ArcaneNet::new(net_config, config.seed)?;
    let mut learner = Learner {
        target: online.clone(),
        online,
        optimizer: Optimizer::new(config.optimizer, config.lr),
        losses: Vec::new(),
    };
    let catalog = TileCatalog::shared();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut buffer: ReplayBuffer<Transition> = ReplayBuffer::new(config.replay_capacity);
    let mut log = TrainLog::default();
    let mut stats = TrainStats::default();
    let mut screen = RgbImage::new(0, 0);

    while stats.frames < config.total_frames {
        let level = &levels[select_training_level(stats.episodes, levels.len(), config.alt_epochs)];
        let mut state = reset(level, rng.gen())?;
        state.render_into(&mut screen);
        let mut obs = observe(&screen, catalog)?;
        learner.losses.clear();
        loop {
            let eps = epsilon_at(stats.frames, config);
            let action = if rng.gen::<f64>() < eps {
                rng.gen_range(0..actions.len())
            } else {
                act_deterministic(&learner.online.forward(&obs)?)?
            };
            let reward = state.advance(actions[action])?;
            state.render_into(&mut screen);
            let next_obs = observe(&screen, catalog)?;
            let status = state.status();
            let mut stored = reward;
            if game == GameKind::TreasureKeeper && status == Status::PlayerLoses {
                stored += config.treasurekeeper_loss_penalty;
            }
            buffer.push(Transition { obs, action, reward: stored, next_obs: next_obs.clone(), terminal: status.is_terminal() });
            obs = next_obs;
            stats.frames += 1;
            if stats.warmup_frame.is_none() && buffer.len() >= config.replay_start {
                stats.warmup_frame = Some(stats.frames);
            }
            if stats.frames % config.update_freq == 0 && buffer.len() >= config.replay_start && buffer.len() >= config.batch {
                let batch = buffer.sample(config.batch, &mut rng)?;
                learner.step(&batch, config.gamma).map_err(|detail| TrainError::Divergence {
                    frame: stats.frames,
                    step: stats.gradient_steps,
                    detail,
                })?;
                stats.gradient_steps += 1;
                if stats.gradient_steps % config.target_sync == 0 {
                    learner.target.copy_params_from(&learner.online)?;
                    stats.target_syncs += 1;
                }
            }
            if status.is_terminal() {
                let loss_mean = if learner.losses.is_empty() {
                    0.0
                } else {
                    learner.losses.iter().sum::<f64>() / learner.losses.len() as f64
                };
                log.rows.push(LogRow {
                    episode: stats.episodes,
                    level: level.name.clone(),
                    frames: stats.frames,
                    epsilon: epsilon_at(stats.frames, config),
                    score: state.score(),
                    length: state.tick(),
                    win: status == Status::PlayerWins,
                    loss_mean,
                });
                stats.episodes += 1;
                break;
            }
            if stats.frames >= config.total_frames {
                break;
            }
        }
    }
    Ok(TrainOutcome { net: learner.online, log, stats })
}

//! Native implementations of GoldDigger, TreasureKeeper and WaterPuzzle.
//!
//! Within one tick the avatar acts first, then every monster moves, then
//! collisions and win/loss conditions are checked, then the periodic reward
//! (TreasureKeeper) is paid and the tick counter advances. An avatar and a
//! monster sharing a cell after either phase is a collision.

use std::fmt;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{Action, GameConfig, GameKind, ScoreParams, TileKind};
use crate::grid::{Grid, Pos};
use crate::level::Level;
use crate::tiles::{render_into, RgbImage, TileCatalog};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GameError {
    #[error("episode already ended with {0}")]
    Terminated(Status),
    #[error("action {action} is not legal in {game}")]
    IllegalAction { action: Action, game: GameKind },
    #[error("level belongs to {level} but the config is for {config}")]
    GameMismatch { level: GameKind, config: GameKind },
    #[error("level has no avatar")]
    NoAvatar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Status {
    Running,
    PlayerWins,
    PlayerLoses,
    NoWinner,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Running => "RUNNING",
            Status::PlayerWins => "PLAYER_WINS",
            Status::PlayerLoses => "PLAYER_LOSES",
            Status::NoWinner => "NO_WINNER",
        }
    }

    pub fn is_terminal(self) -> bool {
        self != Status::Running
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Down, Direction::Left, Direction::Right];

    pub fn delta(self) -> (isize, isize) {
        match self {
            Direction::Up => (-1, 0),
            Direction::Down => (1, 0),
            Direction::Left => (0, -1),
            Direction::Right => (0, 1),
        }
    }

    pub fn from_action(action: Action) -> Option<Direction> {
        match action {
            Action::Up => Some(Direction::Up),
            Action::Down => Some(Direction::Down),
            Action::Left => Some(Direction::Left),
            Action::Right => Some(Direction::Right),
            Action::Nil | Action::Use => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Avatar {
    pub pos: Pos,
    pub facing: Direction,
    pub has_key: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepResult {
    pub screen: RgbImage,
    pub reward: i64,
    pub status: Status,
}

/// One running episode. Single owner; clone to branch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GameState {
    kind: GameKind,
    scores: ScoreParams,
    max_ticks: u32,
    period_ticks: u32,
    actions: Vec<Action>,
    terrain: Grid,
    jewels: Vec<Pos>,
    boxes: Vec<Pos>,
    monsters: Vec<Pos>,
    key: Option<Pos>,
    door: Option<Pos>,
    avatar: Avatar,
    tick: u32,
    score: i64,
    status: Status,
    rng: ChaCha8Rng,
}

/// Starts an episode on `level` with the builtin config of its game.
pub fn reset(level: &Level, seed: u64) -> Result<GameState, GameError> {
    reset_with(level, &GameConfig::builtin(level.game()), seed)
}

pub fn reset_with(level: &Level, config: &GameConfig, seed: u64) -> Result<GameState, GameError> {
    if config.kind != level.game() {
        return Err(GameError::GameMismatch { level: level.game(), config: config.kind });
    }
    let grid = level.grid();
    let floor = TileKind::Floor.code();
    let mut terrain = Grid::filled(grid.rows(), grid.cols(), floor);
    let (mut jewels, mut boxes, mut monsters) = (Vec::new(), Vec::new(), Vec::new());
    let (mut key, mut door, mut avatar) = (None, None, None);
    for pos in grid.positions() {
        match level.kind_at(pos) {
            TileKind::Floor => {}
            k @ (TileKind::Wall | TileKind::Obstacle) => terrain.set(pos, k.code()),
            TileKind::Jewel => jewels.push(pos),
            TileKind::Box => boxes.push(pos),
            TileKind::Monster => monsters.push(pos),
            TileKind::Key => key = key.or(Some(pos)),
            TileKind::Door => door = door.or(Some(pos)),
            TileKind::Avatar => avatar = avatar.or(Some(pos)),
        }
    }
    let pos = avatar.ok_or(GameError::NoAvatar)?;
    Ok(GameState {
        kind: config.kind,
        scores: *level.scores(),
        max_ticks: config.max_ticks,
        period_ticks: config.period_ticks.max(1),
        actions: config.actions.clone(),
        terrain,
        jewels,
        boxes,
        monsters,
        key,
        door,
        avatar: Avatar { pos, facing: Direction::Down, has_key: false },
        tick: 0,
        score: 0,
        status: Status::Running,
        rng: ChaCha8Rng::seed_from_u64(seed),
    })
}

impl GameState {
    pub fn kind(&self) -> GameKind {
        self.kind
    }

    pub fn tick(&self) -> u32 {
        self.tick
    }

    pub fn max_ticks(&self) -> u32 {
        self.max_ticks
    }

    pub fn score(&self) -> i64 {
        self.score
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn avatar(&self) -> &Avatar {
        &self.avatar
    }

    pub fn jewels(&self) -> &[Pos] {
        &self.jewels
    }

    pub fn boxes(&self) -> &[Pos] {
        &self.boxes
    }

    pub fn monsters(&self) -> &[Pos] {
        &self.monsters
    }

    pub fn key(&self) -> Option<Pos> {
        self.key
    }

    pub fn door(&self) -> Option<Pos> {
        self.door
    }

    pub fn legal_actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn dims(&self) -> (usize, usize) {
        self.terrain.dims()
    }

    /// Every non-terrain sprite with its position, avatar last.
    pub fn sprites(&self) -> Vec<(TileKind, Pos)> {
        let mut out = Vec::new();
        out.extend(self.jewels.iter().map(|&p| (TileKind::Jewel, p)));
        out.extend(self.boxes.iter().map(|&p| (TileKind::Box, p)));
        out.extend(self.key.map(|p| (TileKind::Key, p)));
        out.extend(self.door.map(|p| (TileKind::Door, p)));
        out.extend(self.monsters.iter().map(|&p| (TileKind::Monster, p)));
        out.push((TileKind::Avatar, self.avatar.pos));
        out
    }

    /// Tile codes as drawn on screen: the topmost sprite of each cell wins,
    /// with the avatar above monsters above items above terrain.
    pub fn screen_grid(&self) -> Grid {
        let mut g = self.terrain.clone();
        for (kind, pos) in self.sprites() {
            g.set(pos, kind.code());
        }
        g
    }

    pub fn render(&self) -> RgbImage {
        let mut img = RgbImage::new(0, 0);
        self.render_into(&mut img);
        img
    }

    pub fn render_into(&self, img: &mut RgbImage) {
        render_into(&self.screen_grid(), TileCatalog::shared(), img).expect("game tiles are in the builtin catalog");
    }

    fn is_solid(&self, pos: Pos) -> bool {
        TileKind::from_code(self.terrain.get(pos)).is_some_and(TileKind::is_solid_terrain)
    }

    fn neighbor(&self, pos: Pos, dir: Direction) -> Option<Pos> {
        let (dr, dc) = dir.delta();
        pos.offset(dr, dc, self.terrain.rows(), self.terrain.cols())
    }

    fn cell_free_for_box(&self, pos: Pos) -> bool {
        !self.is_solid(pos) && !self.boxes.contains(&pos) && !self.monsters.contains(&pos)
    }

    /// Candidate destinations of the monster at `pos`: staying put first,
    /// then passable neighbours in up/down/left/right order.
    pub fn monster_options(&self, pos: Pos) -> Vec<Pos> {
        let mut options = vec![pos];
        for dir in Direction::ALL {
            let Some(n) = self.neighbor(pos, dir) else { continue };
            if self.is_solid(n) {
                continue;
            }
            let blocked = match self.kind {
                GameKind::GoldDigger => self.jewels.contains(&n),
                // Selecting a box cell is allowed: it ends the game.
                GameKind::TreasureKeeper => false,
                GameKind::WaterPuzzle => self.key == Some(n) || self.door == Some(n),
            };
            if !blocked {
                options.push(n);
            }
        }
        options
    }

    /// Draws one uniform move per monster in roster order. Returns the chosen
    /// destinations without applying them.
    pub fn monster_policy(&mut self) -> Vec<Pos> {
        let mut moves = Vec::with_capacity(self.monsters.len());
        for i in 0..self.monsters.len() {
            let options = self.monster_options(self.monsters[i]);
            moves.push(options[self.rng.gen_range(0..options.len())]);
        }
        moves
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult, GameError> {
        let reward = self.advance(action)?;
        Ok(StepResult { screen: self.render(), reward, status: self.status })
    }

    /// Applies one tick without rendering; returns the score delta.
    pub fn advance(&mut self, action: Action) -> Result<i64, GameError> {
        if self.status.is_terminal() {
            return Err(GameError::Terminated(self.status));
        }
        if !self.actions.contains(&action) {
            return Err(GameError::IllegalAction { action, game: self.kind });
        }
        let before = self.score;
        match self.kind {
            GameKind::GoldDigger => self.tick_golddigger(action),
            GameKind::TreasureKeeper => self.tick_treasurekeeper(action),
            GameKind::WaterPuzzle => self.tick_waterpuzzle(action),
        }
        Ok(self.score - before)
    }

    fn tick_golddigger(&mut self, action: Action) {
        if let Some(dir) = Direction::from_action(action) {
            self.avatar.facing = dir;
            if let Some(target) = self.neighbor(self.avatar.pos, dir) {
                if !self.is_solid(target) {
                    self.avatar.pos = target;
                    if let Some(i) = self.jewels.iter().position(|&p| p == target) {
                        self.jewels.remove(i);
                        self.score += self.scores.jewel;
                    }
                }
            }
        } else if action == Action::Use {
            if let Some(target) = self.neighbor(self.avatar.pos, self.avatar.facing) {
                let before = self.monsters.len();
                self.monsters.retain(|&m| m != target);
                self.score += self.scores.kill * (before - self.monsters.len()) as i64;
            }
        }
        let mut collided = self.monsters.contains(&self.avatar.pos);
        self.monsters = self.monster_policy();
        collided |= self.monsters.contains(&self.avatar.pos);

        if collided {
            self.status = Status::PlayerLoses;
            self.score += self.scores.loss_penalty;
        } else if self.jewels.is_empty() {
            self.status = Status::PlayerWins;
        }
        self.tick += 1;
        if self.status == Status::Running && self.tick >= self.max_ticks {
            self.status = Status::NoWinner;
        }
    }

    fn tick_treasurekeeper(&mut self, action: Action) {
        if let Some(dir) = Direction::from_action(action) {
            self.avatar.facing = dir;
            if let Some(target) = self.neighbor(self.avatar.pos, dir) {
                if !self.is_solid(target) {
                    match self.boxes.iter().position(|&b| b == target) {
                        Some(i) => {
                            let beyond = self.neighbor(target, dir);
                            if let Some(beyond) = beyond.filter(|&b| self.cell_free_for_box(b)) {
                                self.boxes[i] = beyond;
                                self.avatar.pos = target;
                            }
                        }
                        None => self.avatar.pos = target,
                    }
                }
            }
        }
        let mut collided = self.monsters.contains(&self.avatar.pos);
        let mut chest_hit = false;
        let moves = self.monster_policy();
        for (monster, dest) in self.monsters.iter_mut().zip(moves) {
            if self.boxes.contains(&dest) {
                chest_hit = true;
            } else {
                *monster = dest;
            }
        }
        collided |= self.monsters.contains(&self.avatar.pos);

        if collided || chest_hit {
            self.status = Status::PlayerLoses;
        }
        self.tick += 1;
        if self.status == Status::Running {
            if self.tick.is_multiple_of(self.period_ticks) {
                self.score += self.scores.period;
            }
            if self.tick >= self.max_ticks {
                self.status = Status::PlayerWins;
            }
        }
    }

    fn tick_waterpuzzle(&mut self, action: Action) {
        if let Some(dir) = Direction::from_action(action) {
            self.avatar.facing = dir;
            if let Some(target) = self.neighbor(self.avatar.pos, dir) {
                if !self.is_solid(target) {
                    if self.door == Some(target) {
                        if self.avatar.has_key {
                            self.avatar.pos = target;
                            self.score += self.scores.door;
                            self.status = Status::PlayerWins;
                        }
                    } else {
                        self.avatar.pos = target;
                        if self.key == Some(target) {
                            self.key = None;
                            self.avatar.has_key = true;
                            self.score += self.scores.key;
                        }
                    }
                }
            }
        }
        // WaterPuzzle levels carry no monsters, but the rule set tolerates them.
        let mut collided = self.monsters.contains(&self.avatar.pos);
        self.monsters = self.monster_policy();
        collided |= self.monsters.contains(&self.avatar.pos);
        if collided && self.status == Status::Running {
            self.status = Status::PlayerLoses;
        }
        self.tick += 1;
        if self.status == Status::Running && self.tick >= self.max_ticks {
            self.status = Status::PlayerLoses;
        }
    }
}

/// Theoretical `(max, min)` episode score of a level under its parameters.
/// GoldDigger's maximum assumes every jewel is collected and every monster
/// killed.
pub fn score_bounds(level: &Level) -> (i64, i64) {
    let s = level.scores();
    match level.game() {
        GameKind::GoldDigger => (
            level.count(TileKind::Jewel) as i64 * s.jewel + level.count(TileKind::Monster) as i64 * s.kill,
            s.loss_penalty.min(0),
        ),
        GameKind::TreasureKeeper => {
            let cfg = GameConfig::builtin(GameKind::TreasureKeeper);
            ((cfg.max_ticks / cfg.period_ticks) as i64 * s.period, 0)
        }
        GameKind::WaterPuzzle => (s.key + s.door, 0),
    }
}

/// Per-tick episode log: `tick,action,reward,row,col,status`.
#[derive(Clone, Debug, Default)]
pub struct Transcript {
    text: String,
}

impl Transcript {
    pub const HEADER: &'static str = "tick,action,reward,row,col,status";

    pub fn new() -> Self {
        Self { text: format!("{}\n", Self::HEADER) }
    }

    pub fn record(&mut self, state: &GameState, action: Action, reward: i64) {
        let p = state.avatar().pos;
        let _ = writeln!(self.text, "{},{},{},{},{},{}", state.tick(), action, reward, p.row, p.col, state.status());
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

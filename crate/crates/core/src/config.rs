//! Game identities, actions, tile kinds and per-game configuration files.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown game id `{0}`")]
    UnknownGame(String),
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("unknown tile kind `{0}`")]
    UnknownKind(String),
    #[error("legend key `{0}` must be a single character")]
    BadLegendKey(String),
    #[error("legend maps no character to {0}")]
    MissingKind(TileKind),
    #[error("action USE is only legal in GoldDigger")]
    IllegalUse,
    #[error("config parse: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GameKind {
    GoldDigger,
    TreasureKeeper,
    WaterPuzzle,
}

impl GameKind {
    pub const ALL: [GameKind; 3] = [GameKind::GoldDigger, GameKind::TreasureKeeper, GameKind::WaterPuzzle];

    pub fn id(self) -> &'static str {
        match self {
            GameKind::GoldDigger => "golddigger",
            GameKind::TreasureKeeper => "treasurekeeper",
            GameKind::WaterPuzzle => "waterpuzzle",
        }
    }
}

impl fmt::Display for GameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for GameKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        GameKind::ALL
            .into_iter()
            .find(|k| k.id().eq_ignore_ascii_case(s))
            .ok_or_else(|| ConfigError::UnknownGame(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Nil,
    Up,
    Down,
    Left,
    Right,
    Use,
}

impl Action {
    pub fn name(self) -> &'static str {
        match self {
            Action::Nil => "NIL",
            Action::Up => "UP",
            Action::Down => "DOWN",
            Action::Left => "LEFT",
            Action::Right => "RIGHT",
            Action::Use => "USE",
        }
    }

    /// Row/column delta of a movement action.
    pub fn delta(self) -> Option<(isize, isize)> {
        match self {
            Action::Up => Some((-1, 0)),
            Action::Down => Some((1, 0)),
            Action::Left => Some((0, -1)),
            Action::Right => Some((0, 1)),
            Action::Nil | Action::Use => None,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Action {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "NIL" => Ok(Action::Nil),
            "UP" => Ok(Action::Up),
            "DOWN" => Ok(Action::Down),
            "LEFT" => Ok(Action::Left),
            "RIGHT" => Ok(Action::Right),
            "USE" => Ok(Action::Use),
            _ => Err(ConfigError::UnknownAction(s.to_string())),
        }
    }
}

/// What a cell holds. Codes match the builtin tile catalog.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TileKind {
    Floor,
    Monster,
    Wall,
    Obstacle,
    Avatar,
    Door,
    Box,
    Key,
    Jewel,
}

impl TileKind {
    pub const ALL: [TileKind; 9] = [
        TileKind::Floor,
        TileKind::Monster,
        TileKind::Wall,
        TileKind::Obstacle,
        TileKind::Avatar,
        TileKind::Door,
        TileKind::Box,
        TileKind::Key,
        TileKind::Jewel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TileKind::Floor => "floor",
            TileKind::Monster => "monster",
            TileKind::Wall => "wall",
            TileKind::Obstacle => "obstacle",
            TileKind::Avatar => "avatar",
            TileKind::Door => "door",
            TileKind::Box => "box",
            TileKind::Key => "key",
            TileKind::Jewel => "jewel",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            TileKind::Floor => 1,
            TileKind::Monster => 2,
            TileKind::Wall => 3,
            TileKind::Obstacle => 4,
            TileKind::Avatar => 5,
            TileKind::Door => 6,
            TileKind::Box => 7,
            TileKind::Key => 8,
            TileKind::Jewel => 9,
        }
    }

    pub fn from_code(code: u8) -> Option<TileKind> {
        TileKind::ALL.into_iter().find(|k| k.code() == code)
    }

    /// Static terrain that blocks the avatar.
    pub fn is_solid_terrain(self) -> bool {
        matches!(self, TileKind::Wall | TileKind::Obstacle)
    }
}

impl fmt::Display for TileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TileKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TileKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ConfigError::UnknownKind(s.to_string()))
    }
}

/// Bidirectional mapping between level-file characters and tile kinds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Legend {
    entries: Vec<(char, TileKind)>,
}

impl Legend {
    pub fn new(entries: Vec<(char, TileKind)>) -> Self {
        Self { entries }
    }

    pub fn kind(&self, ch: char) -> Option<TileKind> {
        self.entries.iter().find(|(c, _)| *c == ch).map(|&(_, k)| k)
    }

    pub fn char_for(&self, kind: TileKind) -> Option<char> {
        self.entries.iter().find(|(_, k)| *k == kind).map(|&(c, _)| c)
    }

    pub fn char_for_code(&self, code: u8) -> Option<char> {
        TileKind::from_code(code).and_then(|k| self.char_for(k))
    }

    pub fn contains_code(&self, code: u8) -> bool {
        self.char_for_code(code).is_some()
    }

    pub fn entries(&self) -> &[(char, TileKind)] {
        &self.entries
    }
}

/// Score parameters; every game reads only the fields it uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ScoreParams {
    pub jewel: i64,
    pub kill: i64,
    pub loss_penalty: i64,
    pub period: i64,
    pub key: i64,
    pub door: i64,
}

impl Default for ScoreParams {
    fn default() -> Self {
        Self { jewel: 2, kill: 10, loss_penalty: -5, period: 5, key: 5, door: 10 }
    }
}

impl ScoreParams {
    /// Applies a `name = value` override; returns false for unknown names.
    pub fn set(&mut self, name: &str, value: i64) -> bool {
        let slot = match name {
            "jewel_score" => &mut self.jewel,
            "kill_score" => &mut self.kill,
            "loss_penalty" => &mut self.loss_penalty,
            "period_score" => &mut self.period,
            "key_score" => &mut self.key,
            "door_score" => &mut self.door,
            _ => return false,
        };
        *slot = value;
        true
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GameConfig {
    pub kind: GameKind,
    pub max_ticks: u32,
    /// Declared level size in tiles `(rows, cols)`.
    pub screen: Option<(usize, usize)>,
    pub actions: Vec<Action>,
    pub scores: ScoreParams,
    pub legend: Legend,
    /// TreasureKeeper reward period in ticks.
    pub period_ticks: u32,
}

#[derive(Deserialize)]
struct RawConfig {
    id: String,
    max_ticks: u32,
    screen: Option<[usize; 2]>,
    actions: Vec<String>,
    #[serde(default)]
    period_ticks: Option<u32>,
    #[serde(default)]
    scores: BTreeMap<String, i64>,
    legend: BTreeMap<String, String>,
}

const GOLDDIGGER_TOML: &str = include_str!("../assets/games/golddigger.toml");
const TREASUREKEEPER_TOML: &str = include_str!("../assets/games/treasurekeeper.toml");
const WATERPUZZLE_TOML: &str = include_str!("../assets/games/waterpuzzle.toml");

impl GameConfig {
    pub fn builtin(kind: GameKind) -> GameConfig {
        let text = match kind {
            GameKind::GoldDigger => GOLDDIGGER_TOML,
            GameKind::TreasureKeeper => TREASUREKEEPER_TOML,
            GameKind::WaterPuzzle => WATERPUZZLE_TOML,
        };
        GameConfig::from_toml(text).expect("builtin game config is valid")
    }

    pub fn builtin_by_id(id: &str) -> Result<GameConfig, ConfigError> {
        Ok(GameConfig::builtin(id.parse()?))
    }

    pub fn from_toml(text: &str) -> Result<GameConfig, ConfigError> {
        let raw: RawConfig = toml::from_str(text)?;
        let kind: GameKind = raw.id.parse()?;
        let actions = raw.actions.iter().map(|a| a.parse()).collect::<Result<Vec<Action>, _>>()?;
        if kind != GameKind::GoldDigger && actions.contains(&Action::Use) {
            return Err(ConfigError::IllegalUse);
        }
        let mut scores = ScoreParams::default();
        for (name, value) in &raw.scores {
            let key = if name.ends_with("_score") || name == "loss_penalty" {
                name.clone()
            } else {
                format!("{name}_score")
            };
            if !scores.set(&key, *value) {
                return Err(ConfigError::UnknownKind(name.clone()));
            }
        }
        let mut entries = Vec::new();
        for (key, kind_name) in &raw.legend {
            let mut chars = key.chars();
            let ch = match (chars.next(), chars.next()) {
                (Some(c), None) if c != '#' => c,
                _ => return Err(ConfigError::BadLegendKey(key.clone())),
            };
            entries.push((ch, kind_name.parse()?));
        }
        let legend = Legend::new(entries);
        for required in [TileKind::Floor, TileKind::Wall, TileKind::Avatar] {
            if legend.char_for(required).is_none() {
                return Err(ConfigError::MissingKind(required));
            }
        }
        Ok(GameConfig {
            kind,
            max_ticks: raw.max_ticks,
            screen: raw.screen.map(|[r, c]| (r, c)),
            actions,
            scores,
            legend,
            period_ticks: raw.period_ticks.unwrap_or(100),
        })
    }

    pub fn load(path: &Path) -> Result<GameConfig, ConfigError> {
        GameConfig::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// Legal actions of a builtin game.
pub fn legal_actions(game_id: &str) -> Result<Vec<Action>, ConfigError> {
    Ok(GameConfig::builtin_by_id(game_id)?.actions)
}

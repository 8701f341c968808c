//! ASCII level files.
//!
//! A level file is a rectangular block of legend characters, one per tile.
//! Lines starting with `#` are comments and are kept verbatim so a level
//! serializes back to the same text. Comment lines of the form
//! `#! key = value` are directives:
//!
//! * `game = <id>` names the game the level belongs to,
//! * `size = free` lifts the check against the game's declared screen size,
//! * `jewel_score`, `kill_score`, `loss_penalty`, `period_score`,
//!   `key_score`, `door_score` override the game's score parameters.

use std::path::Path;

use thiserror::Error;

use crate::config::{ConfigError, GameConfig, GameKind, Legend, ScoreParams, TileKind};
use crate::grid::{Grid, Pos};

#[derive(Debug, Error)]
pub enum LevelError {
    #[error("level has no rows")]
    Empty,
    #[error("line {line}: row has {found} tiles, expected {expected}")]
    Ragged { line: usize, expected: usize, found: usize },
    #[error("line {line}, column {col}: character `{ch}` is not in the {game} legend")]
    UnknownChar { line: usize, col: usize, ch: char, game: GameKind },
    #[error("level has no avatar")]
    NoAvatar,
    #[error("multiple avatars at {0:?}")]
    MultipleAvatars(Vec<Pos>),
    #[error("level is {found:?} tiles but {game} declares {expected:?}")]
    SizeMismatch { game: GameKind, expected: (usize, usize), found: (usize, usize) },
    #[error("level is for {found} but was loaded as {expected}")]
    GameMismatch { expected: GameKind, found: GameKind },
    #[error("bad directive `{0}`")]
    BadDirective(String),
    #[error("level file does not name its game (add `#! game = <id>`)")]
    MissingGame,
    #[error("tile code {code} at {pos} is not in the {game} legend")]
    UnknownCode { code: u8, pos: Pos, game: GameKind },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Level {
    pub name: String,
    game: GameKind,
    header: Vec<String>,
    grid: Grid,
    legend: Legend,
    scores: ScoreParams,
    free_size: bool,
}

impl Level {
    pub fn game(&self) -> GameKind {
        self.game
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn legend(&self) -> &Legend {
        &self.legend
    }

    pub fn scores(&self) -> &ScoreParams {
        &self.scores
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn free_size(&self) -> bool {
        self.free_size
    }

    pub fn dims(&self) -> (usize, usize) {
        self.grid.dims()
    }

    pub fn kind_at(&self, pos: Pos) -> TileKind {
        TileKind::from_code(self.grid.get(pos)).expect("level codes are legend-valid")
    }

    pub fn avatar(&self) -> Option<Pos> {
        self.grid.find_all(TileKind::Avatar.code()).first().copied()
    }

    pub fn count(&self, kind: TileKind) -> usize {
        self.grid.count(kind.code())
    }

    /// Same level with a different grid. Avatar uniqueness is not checked;
    /// call [`Level::validate`] when it matters.
    pub fn with_grid(&self, grid: Grid) -> Level {
        Level { grid, ..self.clone() }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Level {
        self.name = name.into();
        self
    }

    /// Replaces the plain comment lines of the header with `# text`;
    /// directives are kept.
    pub fn with_description(mut self, text: &str) -> Level {
        self.header.retain(|l| l.starts_with("#!"));
        self.header.insert(0, format!("# {text}"));
        self
    }

    /// Marks the level as exempt from the declared screen size.
    pub fn into_free_size(mut self) -> Level {
        if !self.free_size {
            self.free_size = true;
            self.header.push("#! size = free".to_string());
        }
        self
    }

    /// Checks legend membership and avatar uniqueness.
    pub fn validate(&self) -> Result<(), LevelError> {
        for pos in self.grid.positions() {
            let code = self.grid.get(pos);
            if !self.legend.contains_code(code) {
                return Err(LevelError::UnknownCode { code, pos, game: self.game });
            }
        }
        check_avatars(&self.grid)
    }

    /// Fresh level for `config` from a code grid.
    pub fn from_grid(config: &GameConfig, name: impl Into<String>, grid: Grid) -> Result<Level, LevelError> {
        let level = Level::from_grid_unchecked(config, name, grid);
        level.validate()?;
        Ok(level)
    }

    /// Like [`Level::from_grid`] without the legend and avatar checks.
    pub fn from_grid_unchecked(config: &GameConfig, name: impl Into<String>, grid: Grid) -> Level {
        let mut level = Level {
            name: name.into(),
            game: config.kind,
            header: vec![format!("#! game = {}", config.kind.id())],
            grid,
            legend: config.legend.clone(),
            scores: config.scores,
            free_size: false,
        };
        if config.screen.is_some_and(|s| s != level.grid.dims()) {
            level = level.into_free_size();
        }
        level
    }

    /// Reads a level file whose header names its game, using the builtin configs.
    pub fn load(path: &Path) -> Result<Level, LevelError> {
        let text = std::fs::read_to_string(path)?;
        let game = directive_game(&text)?.ok_or(LevelError::MissingGame)?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(parse_level(&text, &GameConfig::builtin(game))?.with_name(name))
    }

    pub fn save(&self, path: &Path) -> Result<(), LevelError> {
        std::fs::write(path, serialize_level(self))?;
        Ok(())
    }
}

fn check_avatars(grid: &Grid) -> Result<(), LevelError> {
    let avatars = grid.find_all(TileKind::Avatar.code());
    match avatars.len() {
        0 => Err(LevelError::NoAvatar),
        1 => Ok(()),
        _ => Err(LevelError::MultipleAvatars(avatars)),
    }
}

fn split_directive(line: &str) -> Option<(&str, &str)> {
    let body = line.strip_prefix("#!")?;
    let (k, v) = body.split_once('=')?;
    Some((k.trim(), v.trim()))
}

fn directive_game(text: &str) -> Result<Option<GameKind>, LevelError> {
    for line in text.lines().filter(|l| l.starts_with("#!")) {
        if let Some(("game", v)) = split_directive(line) {
            return Ok(Some(v.parse()?));
        }
    }
    Ok(None)
}

pub fn parse_level(text: &str, config: &GameConfig) -> Result<Level, LevelError> {
    let mut header = Vec::new();
    let mut scores = config.scores;
    let mut free_size = false;
    let mut rows: Vec<Vec<u8>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw.starts_with('#') {
            if raw.starts_with("#!") {
                let (key, value) =
                    split_directive(raw).ok_or_else(|| LevelError::BadDirective(raw.to_string()))?;
                match key {
                    "game" => {
                        let found: GameKind = value.parse()?;
                        if found != config.kind {
                            return Err(LevelError::GameMismatch { expected: config.kind, found });
                        }
                    }
                    "size" if value == "free" => free_size = true,
                    _ => {
                        let v: i64 = value.parse().map_err(|_| LevelError::BadDirective(raw.to_string()))?;
                        if !scores.set(key, v) {
                            return Err(LevelError::BadDirective(raw.to_string()));
                        }
                    }
                }
            }
            header.push(raw.to_string());
            continue;
        }
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::with_capacity(line.len());
        for (col, ch) in line.chars().enumerate() {
            let kind = config.legend.kind(ch).ok_or(LevelError::UnknownChar {
                line: line_no,
                col: col + 1,
                ch,
                game: config.kind,
            })?;
            row.push(kind.code());
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(LevelError::Ragged { line: line_no, expected: first.len(), found: row.len() });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(LevelError::Empty);
    }
    let grid = Grid::from_rows(&rows);
    check_avatars(&grid)?;
    if let Some(expected) = config.screen {
        if !free_size && grid.dims() != expected {
            return Err(LevelError::SizeMismatch { game: config.kind, expected, found: grid.dims() });
        }
    }
    Ok(Level {
        name: String::new(),
        game: config.kind,
        header,
        grid,
        legend: config.legend.clone(),
        scores,
        free_size,
    })
}

pub fn serialize_level(level: &Level) -> String {
    let mut out = String::new();
    for line in &level.header {
        out.push_str(line);
        out.push('\n');
    }
    for r in 0..level.grid.rows() {
        for &code in level.grid.row(r) {
            out.push(level.legend.char_for_code(code).unwrap_or('?'));
        }
        out.push('\n');
    }
    out
}

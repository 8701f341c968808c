//! Level perturbation, augmentation, repair and maze generation.

use std::collections::VecDeque;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::config::{GameConfig, GameKind, TileKind};
use crate::grid::{Grid, Pos};
use crate::level::Level;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LevelOpError {
    #[error("edit at {pos} is outside the {rows}x{cols} level")]
    OutOfBounds { pos: Pos, rows: usize, cols: usize },
    #[error("{kind} is not part of the {game} legend")]
    NotInLegend { kind: TileKind, game: GameKind },
    #[error("edit at {0} would delete the avatar")]
    DeletesAvatar(Pos),
    #[error("edit at {0} would add a second avatar")]
    DuplicatesAvatar(Pos),
    #[error("two edits target {0}")]
    DuplicatePosition(Pos),
    #[error("levels belong to different games ({0} and {1})")]
    GameMismatch(GameKind, GameKind),
    #[error("level sizes differ: {0:?} vs {1:?}")]
    SizeMismatch((usize, usize), (usize, usize)),
    #[error("window {window:?} does not tile target {target:?}")]
    NonTiling { window: (usize, usize), target: (usize, usize) },
    #[error("window {window:?} is larger than source {source_dims:?}")]
    WindowTooLarge { window: (usize, usize), source_dims: (usize, usize) },
    #[error("no source levels")]
    NoSources,
    #[error("level cannot be repaired: {0}")]
    Unrepairable(String),
    #[error("maze has {0} cells, need at least 3")]
    TooFewCells(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TileEdit {
    pub pos: Pos,
    pub kind: TileKind,
}

impl TileEdit {
    pub fn new(row: usize, col: usize, kind: TileKind) -> Self {
        TileEdit { pos: Pos::new(row, col), kind }
    }
}

fn apply_edits(level: &Level, edits: &[TileEdit]) -> Result<Level, LevelOpError> {
    let (rows, cols) = level.dims();
    let avatar = TileKind::Avatar.code();
    let mut grid = level.grid().clone();
    for (i, e) in edits.iter().enumerate() {
        if !grid.contains(e.pos) {
            return Err(LevelOpError::OutOfBounds { pos: e.pos, rows, cols });
        }
        if edits[..i].iter().any(|o| o.pos == e.pos) {
            return Err(LevelOpError::DuplicatePosition(e.pos));
        }
        if level.legend().char_for(e.kind).is_none() {
            return Err(LevelOpError::NotInLegend { kind: e.kind, game: level.game() });
        }
        let old = grid.get(e.pos);
        if old == avatar && e.kind != TileKind::Avatar {
            return Err(LevelOpError::DeletesAvatar(e.pos));
        }
        if old != avatar && e.kind == TileKind::Avatar {
            return Err(LevelOpError::DuplicatesAvatar(e.pos));
        }
        grid.set(e.pos, e.kind.code());
    }
    Ok(level.with_grid(grid))
}

pub fn single_tile_change(level: &Level, edit: TileEdit) -> Result<Level, LevelOpError> {
    apply_edits(level, &[edit])
}

pub fn multi_tile_change(level: &Level, edits: &[TileEdit]) -> Result<Level, LevelOpError> {
    apply_edits(level, edits)
}

fn first_floor(grid: &Grid) -> Option<Pos> {
    grid.positions().find(|&p| grid.get(p) == TileKind::Floor.code())
}

/// Top `ceil(H/2)` rows of `a` over the remaining rows of `b`. When the
/// paste does not hold exactly one avatar, all avatars are cleared and one
/// is put on the first floor cell.
pub fn combine(a: &Level, b: &Level) -> Result<Level, LevelOpError> {
    if a.game() != b.game() {
        return Err(LevelOpError::GameMismatch(a.game(), b.game()));
    }
    if a.dims() != b.dims() {
        return Err(LevelOpError::SizeMismatch(a.dims(), b.dims()));
    }
    let (rows, cols) = a.dims();
    let split = rows.div_ceil(2);
    let mut codes = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        codes.extend_from_slice(if r < split { a.grid().row(r) } else { b.grid().row(r) });
    }
    let mut grid = Grid::from_codes(rows, cols, codes);
    let avatar = TileKind::Avatar.code();
    if grid.count(avatar) != 1 {
        for p in grid.find_all(avatar) {
            grid.set(p, TileKind::Floor.code());
        }
        let at = first_floor(&grid).ok_or(LevelOpError::Unrepairable("no floor cell for the avatar".into()))?;
        grid.set(at, avatar);
    }
    let config = GameConfig::builtin(a.game());
    Ok(Level::from_grid_unchecked(&config, format!("{}+{}", a.name, b.name), grid))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Left-right reflection: column `c` goes to `W-1-c`.
    Horizontal,
    /// Top-bottom reflection: row `r` goes to `H-1-r`.
    Vertical,
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "horizontal" | "h" => Ok(Axis::Horizontal),
            "vertical" | "v" => Ok(Axis::Vertical),
            _ => Err(format!("unknown axis `{s}`")),
        }
    }
}

pub fn mirror(level: &Level, axis: Axis) -> Level {
    let g = level.grid();
    let (rows, cols) = g.dims();
    let mut out = g.clone();
    for p in g.positions() {
        let src = match axis {
            Axis::Horizontal => Pos::new(p.row, cols - 1 - p.col),
            Axis::Vertical => Pos::new(rows - 1 - p.row, p.col),
        };
        out.set(p, g.get(src));
    }
    level.with_grid(out)
}

/// Fills a `target` grid with non-overlapping `window` blocks, each copied
/// from a random source at a random offset, then repairs the result.
pub fn window_augment(
    sources: &[Level],
    window: (usize, usize),
    target: (usize, usize),
    rng: &mut impl Rng,
) -> Result<(Level, RepairReport), LevelOpError> {
    let first = sources.first().ok_or(LevelOpError::NoSources)?;
    let (wh, ww) = window;
    if wh == 0 || ww == 0 || !target.0.is_multiple_of(wh) || !target.1.is_multiple_of(ww) || target.0 == 0 || target.1 == 0 {
        return Err(LevelOpError::NonTiling { window, target });
    }
    for s in sources {
        if s.game() != first.game() {
            return Err(LevelOpError::GameMismatch(first.game(), s.game()));
        }
        if s.dims().0 < wh || s.dims().1 < ww {
            return Err(LevelOpError::WindowTooLarge { window, source_dims: s.dims() });
        }
    }
    let mut grid = Grid::filled(target.0, target.1, TileKind::Floor.code());
    for bi in 0..target.0 / wh {
        for bj in 0..target.1 / ww {
            let src = &sources[rng.gen_range(0..sources.len())];
            let (sh, sw) = src.dims();
            let (or, oc) = (rng.gen_range(0..=sh - wh), rng.gen_range(0..=sw - ww));
            for i in 0..wh {
                for j in 0..ww {
                    let code = src.grid().get(Pos::new(or + i, oc + j));
                    grid.set(Pos::new(bi * wh + i, bj * ww + j), code);
                }
            }
        }
    }
    let config = GameConfig::builtin(first.game());
    repair(&Level::from_grid_unchecked(&config, "window", grid))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fix {
    BorderWall(Pos),
    RemovedAvatar(Pos),
    PlacedAvatar(Pos),
    RemovedExtra(TileKind, Pos),
    Placed(TileKind, Pos),
    Relocated { kind: TileKind, from: Pos, to: Pos },
    MovedAvatar { from: Pos, to: Pos },
}

impl fmt::Display for Fix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fix::BorderWall(p) => write!(f, "border {p}: set to wall"),
            Fix::RemovedAvatar(p) => write!(f, "avatar {p}: removed extra avatar"),
            Fix::PlacedAvatar(p) => write!(f, "avatar {p}: placed missing avatar"),
            Fix::RemovedExtra(k, p) => write!(f, "{k} {p}: removed duplicate"),
            Fix::Placed(k, p) => write!(f, "{k} {p}: placed missing tile"),
            Fix::Relocated { kind, from, to } => write!(f, "{kind} {from}: unreachable, moved to {to}"),
            Fix::MovedAvatar { from, to } => write!(f, "avatar {from}: boxed in, moved to {to}"),
        }
    }
}

/// Violations found by [`repair`] and what was done about each.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RepairReport {
    pub fixes: Vec<Fix>,
}

impl RepairReport {
    pub fn is_empty(&self) -> bool {
        self.fixes.is_empty()
    }
}

impl fmt::Display for RepairReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.fixes.is_empty() {
            return writeln!(f, "repair: ok");
        }
        writeln!(f, "repair: {} fix(es)", self.fixes.len())?;
        for fix in &self.fixes {
            writeln!(f, "  - {fix}")?;
        }
        Ok(())
    }
}

/// Cells reachable from `from` through non-wall cells. `blocked` cells are
/// reported as reached but not expanded.
pub fn reachable(grid: &Grid, from: Pos, blocked: &[Pos]) -> Vec<bool> {
    let (rows, cols) = grid.dims();
    let wall = |p: Pos| matches!(TileKind::from_code(grid.get(p)), Some(k) if k.is_solid_terrain());
    let mut seen = vec![false; rows * cols];
    let mut queue = VecDeque::from([from]);
    seen[from.row * cols + from.col] = true;
    while let Some(p) = queue.pop_front() {
        if p != from && blocked.contains(&p) {
            continue;
        }
        for (dr, dc) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
            if let Some(n) = p.offset(dr, dc, rows, cols) {
                if !seen[n.row * cols + n.col] && !wall(n) {
                    seen[n.row * cols + n.col] = true;
                    queue.push_back(n);
                }
            }
        }
    }
    seen
}

fn floor_cells(grid: &Grid) -> Vec<Pos> {
    grid.find_all(TileKind::Floor.code())
}

/// Keeps the first tile of `kind` (row-major) and floors the rest.
fn dedupe(grid: &mut Grid, kind: TileKind, fixes: &mut Vec<Fix>) -> Option<Pos> {
    let found = grid.find_all(kind.code());
    for &p in found.iter().skip(1) {
        grid.set(p, TileKind::Floor.code());
        fixes.push(Fix::RemovedExtra(kind, p));
    }
    found.first().copied()
}

/// Enforces the structural rules: solid border, one avatar, and per game
/// one reachable key and door (WaterPuzzle), at least one jewel
/// (GoldDigger) or box (TreasureKeeper).
pub fn repair(level: &Level) -> Result<(Level, RepairReport), LevelOpError> {
    let mut grid = level.grid().clone();
    let (rows, cols) = grid.dims();
    if rows < 3 || cols < 3 {
        return Err(LevelOpError::Unrepairable(format!("{rows}x{cols} has no interior")));
    }
    for p in grid.positions() {
        let code = grid.get(p);
        if !level.legend().contains_code(code) {
            return Err(LevelOpError::Unrepairable(format!("code {code} at {p} is not in the legend")));
        }
    }
    let mut fixes = Vec::new();
    let wall = TileKind::Wall.code();
    for p in grid.positions().collect::<Vec<_>>() {
        let border = p.row == 0 || p.col == 0 || p.row == rows - 1 || p.col == cols - 1;
        if border && grid.get(p) != wall {
            grid.set(p, wall);
            fixes.push(Fix::BorderWall(p));
        }
    }
    let avatars = grid.find_all(TileKind::Avatar.code());
    let avatar = match avatars.first() {
        Some(&a) => {
            for &p in &avatars[1..] {
                grid.set(p, TileKind::Floor.code());
                fixes.push(Fix::RemovedAvatar(p));
            }
            a
        }
        None => {
            let at = first_floor(&grid).ok_or(LevelOpError::Unrepairable("no floor cell for the avatar".into()))?;
            grid.set(at, TileKind::Avatar.code());
            fixes.push(Fix::PlacedAvatar(at));
            at
        }
    };
    match level.game() {
        GameKind::WaterPuzzle => repair_key_door(&mut grid, avatar, &mut fixes)?,
        GameKind::GoldDigger => ensure_one(&mut grid, avatar, TileKind::Jewel, &mut fixes, |_| true)?,
        GameKind::TreasureKeeper => {
            let g = grid.clone();
            let pushable = move |p: Pos| {
                [(-1, 0), (1, 0), (0, -1), (0, 1)].iter().all(|&(dr, dc)| {
                    p.offset(dr, dc, rows, cols).is_some_and(|n| g.get(n) != wall)
                })
            };
            ensure_one(&mut grid, avatar, TileKind::Box, &mut fixes, pushable)?;
        }
    }
    Ok((level.with_grid(grid), RepairReport { fixes }))
}

/// Places one `kind` when the level has none: on the last floor cell
/// (row-major) reachable from the avatar that satisfies `prefer`, else the
/// last reachable one, else the last floor cell anywhere.
fn ensure_one(
    grid: &mut Grid,
    avatar: Pos,
    kind: TileKind,
    fixes: &mut Vec<Fix>,
    prefer: impl Fn(Pos) -> bool,
) -> Result<(), LevelOpError> {
    if grid.count(kind.code()) > 0 {
        return Ok(());
    }
    let seen = reachable(grid, avatar, &[]);
    let floors = floor_cells(grid);
    let reach: Vec<Pos> = floors.iter().copied().filter(|p| seen[p.row * grid.cols() + p.col]).collect();
    let at = reach
        .iter()
        .rev()
        .find(|&&p| prefer(p))
        .or(reach.last())
        .or(floors.last())
        .copied()
        .ok_or(LevelOpError::Unrepairable(format!("no floor cell for a {kind}")))?;
    grid.set(at, kind.code());
    fixes.push(Fix::Placed(kind, at));
    Ok(())
}

/// Key reachable without passing the door; door reachable at all.
fn key_door_ok(grid: &Grid, avatar: Pos, key: Pos, door: Pos) -> bool {
    let cols = grid.cols();
    reachable(grid, avatar, &[door])[key.row * cols + key.col] && reachable(grid, avatar, &[])[door.row * cols + door.col]
}

/// Floor cells reachable from `from`, excluding `from`, ordered by distance
/// to `near` then row-major.
fn region_by_distance(grid: &Grid, from: Pos, near: Pos) -> Vec<Pos> {
    let seen = reachable(grid, from, &[]);
    let mut cells: Vec<Pos> = floor_cells(grid).into_iter().filter(|p| seen[p.row * grid.cols() + p.col]).collect();
    cells.sort_by_key(|p| (p.manhattan(near), p.row, p.col));
    cells
}

fn repair_key_door(grid: &mut Grid, avatar: Pos, fixes: &mut Vec<Fix>) -> Result<(), LevelOpError> {
    let key = dedupe(grid, TileKind::Key, fixes);
    let door = dedupe(grid, TileKind::Door, fixes);
    if let (Some(k), Some(d)) = (key, door) {
        if key_door_ok(grid, avatar, k, d) {
            return Ok(());
        }
    }
    let floor = TileKind::Floor.code();
    for p in key.into_iter().chain(door) {
        grid.set(p, floor);
    }
    let mut avatar = avatar;
    if region_by_distance(grid, avatar, avatar).len() < 2 {
        // Too little room around the avatar: move it to the largest open region.
        let best = largest_region_start(grid)
            .ok_or(LevelOpError::Unrepairable("no open region with room for a key and a door".into()))?;
        grid.set(avatar, floor);
        grid.set(best, TileKind::Avatar.code());
        fixes.push(Fix::MovedAvatar { from: avatar, to: best });
        avatar = best;
    }
    let keys = region_by_distance(grid, avatar, key.unwrap_or(avatar));
    for &k in &keys {
        grid.set(k, TileKind::Key.code());
        let doors = region_by_distance(grid, avatar, door.unwrap_or(k));
        if let Some(&d) = doors.iter().find(|&&d| key_door_ok(grid, avatar, k, d)) {
            grid.set(d, TileKind::Door.code());
            for (kind, old, new) in [(TileKind::Key, key, k), (TileKind::Door, door, d)] {
                match old {
                    Some(from) if from == new => {}
                    Some(from) => fixes.push(Fix::Relocated { kind, from, to: new }),
                    None => fixes.push(Fix::Placed(kind, new)),
                }
            }
            return Ok(());
        }
        grid.set(k, floor);
    }
    Err(LevelOpError::Unrepairable("no placement makes both key and door reachable".into()))
}

/// First cell (row-major) of the largest 4-connected group of floor cells,
/// if that group has at least three cells.
fn largest_region_start(grid: &Grid) -> Option<Pos> {
    let cols = grid.cols();
    let mut done = vec![false; grid.rows() * cols];
    let mut best: Option<(usize, Pos)> = None;
    for p in floor_cells(grid) {
        if done[p.row * cols + p.col] {
            continue;
        }
        let seen = reachable(grid, p, &[]);
        let members: Vec<Pos> = floor_cells(grid).into_iter().filter(|q| seen[q.row * cols + q.col]).collect();
        for q in &members {
            done[q.row * cols + q.col] = true;
        }
        if members.len() >= 3 && best.is_none_or(|(n, _)| members.len() > n) {
            best = Some((members.len(), p));
        }
    }
    best.map(|(_, p)| p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MazeAlgorithm {
    Prim,
    Division,
    UnionFind,
    Backtrack,
}

impl MazeAlgorithm {
    pub const ALL: [MazeAlgorithm; 4] =
        [MazeAlgorithm::Prim, MazeAlgorithm::Division, MazeAlgorithm::UnionFind, MazeAlgorithm::Backtrack];

    pub fn name(self) -> &'static str {
        match self {
            MazeAlgorithm::Prim => "prim",
            MazeAlgorithm::Division => "division",
            MazeAlgorithm::UnionFind => "unionfind",
            MazeAlgorithm::Backtrack => "backtrack",
        }
    }
}

impl std::str::FromStr for MazeAlgorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MazeAlgorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown maze algorithm `{s}`"))
    }
}

/// Cell maze; each cell records whether it opens east and south.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Maze {
    rows: usize,
    cols: usize,
    east: Vec<bool>,
    south: Vec<bool>,
}

impl Maze {
    fn closed(rows: usize, cols: usize) -> Self {
        Maze { rows, cols, east: vec![false; rows * cols], south: vec![false; rows * cols] }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn open_east(&self, r: usize, c: usize) -> bool {
        self.east[r * self.cols + c]
    }

    pub fn open_south(&self, r: usize, c: usize) -> bool {
        self.south[r * self.cols + c]
    }

    pub fn passages(&self) -> usize {
        self.east.iter().chain(&self.south).filter(|&&o| o).count()
    }

    /// Open neighbours of cell index `i`.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let (r, c) = (i / self.cols, i % self.cols);
        let mut out = Vec::with_capacity(4);
        if r > 0 && self.south[i - self.cols] {
            out.push(i - self.cols);
        }
        if r + 1 < self.rows && self.south[i] {
            out.push(i + self.cols);
        }
        if c > 0 && self.east[i - 1] {
            out.push(i - 1);
        }
        if c + 1 < self.cols && self.east[i] {
            out.push(i + 1);
        }
        out
    }

    fn open(&mut self, a: usize, b: usize) {
        let (lo, hi) = (a.min(b), a.max(b));
        if hi == lo + 1 && lo / self.cols == hi / self.cols {
            self.east[lo] = true;
        } else {
            debug_assert_eq!(hi, lo + self.cols);
            self.south[lo] = true;
        }
    }

    fn adjacent(&self, i: usize) -> Vec<usize> {
        let (r, c) = (i / self.cols, i % self.cols);
        let mut out = Vec::with_capacity(4);
        if r > 0 {
            out.push(i - self.cols);
        }
        if r + 1 < self.rows {
            out.push(i + self.cols);
        }
        if c > 0 {
            out.push(i - 1);
        }
        if c + 1 < self.cols {
            out.push(i + 1);
        }
        out
    }

    /// Tile grid of `(2H+1) x (2W+1)`: cells and open passages are floor,
    /// everything else wall.
    pub fn to_grid(&self) -> Grid {
        let (floor, wall) = (TileKind::Floor.code(), TileKind::Wall.code());
        let mut g = Grid::filled(2 * self.rows + 1, 2 * self.cols + 1, wall);
        for r in 0..self.rows {
            for c in 0..self.cols {
                g.set(Pos::new(2 * r + 1, 2 * c + 1), floor);
                if self.open_east(r, c) {
                    g.set(Pos::new(2 * r + 1, 2 * c + 2), floor);
                }
                if self.open_south(r, c) {
                    g.set(Pos::new(2 * r + 2, 2 * c + 1), floor);
                }
            }
        }
        g
    }

    /// Tile position of cell `i` in [`Maze::to_grid`].
    pub fn cell_pos(&self, i: usize) -> Pos {
        Pos::new(2 * (i / self.cols) + 1, 2 * (i % self.cols) + 1)
    }
}

pub fn gen_maze(rows: usize, cols: usize, algorithm: MazeAlgorithm, rng: &mut impl Rng) -> Maze {
    let rows = rows.max(1);
    let cols = cols.max(1);
    match algorithm {
        MazeAlgorithm::Prim => prim(rows, cols, rng),
        MazeAlgorithm::Division => division(rows, cols, rng),
        MazeAlgorithm::UnionFind => union_find(rows, cols, rng),
        MazeAlgorithm::Backtrack => backtrack(rows, cols, rng),
    }
}

fn prim(rows: usize, cols: usize, rng: &mut impl Rng) -> Maze {
    let mut m = Maze::closed(rows, cols);
    let mut inside = vec![false; rows * cols];
    let start = rng.gen_range(0..rows * cols);
    inside[start] = true;
    let mut frontier: Vec<(usize, usize)> = m.adjacent(start).into_iter().map(|n| (start, n)).collect();
    while !frontier.is_empty() {
        let (from, to) = frontier.swap_remove(rng.gen_range(0..frontier.len()));
        if inside[to] {
            continue;
        }
        inside[to] = true;
        m.open(from, to);
        frontier.extend(m.adjacent(to).into_iter().filter(|&n| !inside[n]).map(|n| (to, n)));
    }
    m
}

fn backtrack(rows: usize, cols: usize, rng: &mut impl Rng) -> Maze {
    let mut m = Maze::closed(rows, cols);
    let mut visited = vec![false; rows * cols];
    let start = rng.gen_range(0..rows * cols);
    visited[start] = true;
    let mut stack = vec![start];
    while let Some(&cur) = stack.last() {
        let options: Vec<usize> = m.adjacent(cur).into_iter().filter(|&n| !visited[n]).collect();
        match options.choose(rng) {
            Some(&next) => {
                m.open(cur, next);
                visited[next] = true;
                stack.push(next);
            }
            None => {
                stack.pop();
            }
        }
    }
    m
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn union_find(rows: usize, cols: usize, rng: &mut impl Rng) -> Maze {
    let mut m = Maze::closed(rows, cols);
    let mut edges = Vec::new();
    for i in 0..rows * cols {
        if i % cols + 1 < cols {
            edges.push((i, i + 1));
        }
        if i / cols + 1 < rows {
            edges.push((i, i + cols));
        }
    }
    edges.shuffle(rng);
    let mut parent: Vec<usize> = (0..rows * cols).collect();
    for (a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            m.open(a, b);
        }
    }
    m
}

/// Recursive division: start fully open, then split each region with a
/// wall that keeps a single gap.
fn division(rows: usize, cols: usize, rng: &mut impl Rng) -> Maze {
    let mut m = Maze::closed(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            m.east[r * cols + c] = c + 1 < cols;
            m.south[r * cols + c] = r + 1 < rows;
        }
    }
    let mut regions = vec![(0usize, 0usize, rows, cols)];
    while let Some((r0, c0, h, w)) = regions.pop() {
        if h < 2 && w < 2 {
            continue;
        }
        let horizontal = if h == w { rng.gen_bool(0.5) } else { h > w };
        if horizontal {
            // Wall below row r0+k, gap at one column.
            let k = rng.gen_range(0..h - 1);
            let gap = rng.gen_range(0..w);
            for c in c0..c0 + w {
                if c - c0 != gap {
                    m.south[(r0 + k) * cols + c] = false;
                }
            }
            regions.push((r0, c0, k + 1, w));
            regions.push((r0 + k + 1, c0, h - k - 1, w));
        } else {
            let k = rng.gen_range(0..w - 1);
            let gap = rng.gen_range(0..h);
            for r in r0..r0 + h {
                if r - r0 != gap {
                    m.east[r * cols + c0 + k] = false;
                }
            }
            regions.push((r0, c0, h, k + 1));
            regions.push((r0, c0 + k + 1, h, w - k - 1));
        }
    }
    m
}

/// WaterPuzzle level from a maze: avatar, key and door on three distinct
/// random cells. If the door would sit on the only path to the key, key and
/// door swap places.
pub fn maze_to_waterpuzzle(maze: &Maze, rng: &mut impl Rng) -> Result<Level, LevelOpError> {
    let n = maze.cells();
    if n < 3 {
        return Err(LevelOpError::TooFewCells(n));
    }
    let picks = rand::seq::index::sample(rng, n, 3).into_vec();
    let mut grid = maze.to_grid();
    let avatar = maze.cell_pos(picks[0]);
    let (mut key, mut door) = (maze.cell_pos(picks[1]), maze.cell_pos(picks[2]));
    grid.set(avatar, TileKind::Avatar.code());
    if !reachable(&grid, avatar, &[door])[key.row * grid.cols() + key.col] {
        std::mem::swap(&mut key, &mut door);
    }
    grid.set(key, TileKind::Key.code());
    grid.set(door, TileKind::Door.code());
    let config = GameConfig::builtin(GameKind::WaterPuzzle);
    Ok(Level::from_grid_unchecked(&config, "maze", grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // Builds the grid straight from the legend so invalid levels are allowed.
    fn raw(game: GameKind, text: &str) -> Level {
        let cfg = GameConfig::builtin(game);
        let rows: Vec<Vec<u8>> = text
            .lines()
            .map(|l| l.chars().map(|c| cfg.legend.kind(c).unwrap().code()).collect())
            .collect();
        Level::from_grid_unchecked(&cfg, "t", Grid::from_rows(&rows))
    }

    fn gd(text: &str) -> Level {
        raw(GameKind::GoldDigger, text)
    }

    fn wp(text: &str) -> Level {
        raw(GameKind::WaterPuzzle, text)
    }

    #[test]
    fn single_edit_contracts() {
        let l = gd("wwwww\nwAxjw\nwwwww\n");
        let out = single_tile_change(&l, TileEdit::new(1, 2, TileKind::Jewel)).unwrap();
        assert_eq!(out.grid().hamming(l.grid()), 1);
        assert_eq!(single_tile_change(&l, TileEdit::new(1, 2, TileKind::Obstacle)).unwrap(), l);
        assert_eq!(
            single_tile_change(&l, TileEdit::new(1, 1, TileKind::Wall)),
            Err(LevelOpError::DeletesAvatar(Pos::new(1, 1)))
        );
        assert!(matches!(
            single_tile_change(&l, TileEdit::new(1, 3, TileKind::Avatar)),
            Err(LevelOpError::DuplicatesAvatar(_))
        ));
        assert!(matches!(
            single_tile_change(&l, TileEdit::new(1, 3, TileKind::Key)),
            Err(LevelOpError::NotInLegend { .. })
        ));
    }

    #[test]
    fn multi_edit_rejects_duplicates() {
        let l = gd("wwwww\nwA..w\nwwwww\n");
        let e = TileEdit::new(1, 2, TileKind::Jewel);
        assert_eq!(multi_tile_change(&l, &[e, e]), Err(LevelOpError::DuplicatePosition(Pos::new(1, 2))));
        assert_eq!(multi_tile_change(&l, &[]).unwrap(), l);
    }

    #[test]
    fn combine_fixes_avatar_count() {
        let a = gd("wwww\nwA.w\nwj.w\nwwww\n");
        let b = gd("wwww\nw.Aw\nw.jw\nwwww\n");
        let c = combine(&a, &b).unwrap();
        assert_eq!(c.grid().row(1), a.grid().row(1));
        assert_eq!(c.grid().row(2), b.grid().row(2));
        assert_eq!(c.avatar(), Some(Pos::new(1, 1)));
        // Both halves carry an avatar.
        let low = gd("wwww\nw..w\nw.Aw\nwwww\n");
        let c = combine(&b, &low).unwrap();
        assert_eq!(c.grid().count(TileKind::Avatar.code()), 1);
        assert_eq!(c.avatar(), Some(Pos::new(1, 1)));
        // Neither does.
        let c = combine(&low, &b).unwrap();
        assert_eq!(c.avatar(), Some(Pos::new(1, 1)));
    }

    #[test]
    fn mirror_moves_avatar_column() {
        let l = gd("wwwww\nwA.jw\nwwwww\n");
        let m = mirror(&l, Axis::Horizontal);
        assert_eq!(m.avatar(), Some(Pos::new(1, 3)));
        assert_eq!(mirror(&m, Axis::Horizontal), l);
        assert_eq!(mirror(&mirror(&l, Axis::Vertical), Axis::Vertical), l);
    }

    #[test]
    fn repair_valid_level_is_untouched() {
        let l = wp("wwwww\nwAkdw\nwwwww\n");
        let (out, report) = repair(&l).unwrap();
        assert!(report.is_empty());
        assert_eq!(out, l);
    }

    #[test]
    fn repair_two_avatars() {
        let l = wp("wwwwww\nwAkdAw\nwwwwww\n");
        let (out, report) = repair(&l).unwrap();
        assert_eq!(report.fixes, vec![Fix::RemovedAvatar(Pos::new(1, 4))]);
        assert_eq!(out.avatar(), Some(Pos::new(1, 1)));
    }

    #[test]
    fn repair_walled_off_key() {
        let l = wp("wwwwwww\nwA.dwkw\nwwwwwww\n");
        let (out, report) = repair(&l).unwrap();
        assert!(matches!(report.fixes[0], Fix::Relocated { kind: TileKind::Key, .. }));
        let key = out.grid().find_all(TileKind::Key.code())[0];
        assert!(key.col < 4);
        assert_eq!(repair(&out).unwrap().1, RepairReport::default());
    }

    #[test]
    fn repair_door_blocking_key() {
        // The door sits in the corridor between the avatar and the key.
        let l = wp("wwwwwww\nwAd.k.w\nwwwwwww\n");
        let (out, report) = repair(&l).unwrap();
        assert_eq!(
            report.fixes,
            vec![Fix::Relocated { kind: TileKind::Door, from: Pos::new(1, 2), to: Pos::new(1, 5) }]
        );
        let (short, _) = repair(&wp("wwwwww\nwAd.kw\nwwwwww\n")).unwrap();
        assert_eq!(short.grid().row(1), wp("wwwwww\nwA.kdw\nwwwwww\n").grid().row(1));
        assert!(matches!(repair(&wp("wwww\nwAdw\nwwww\n")), Err(LevelOpError::Unrepairable(_))));
        let (_, again) = repair(&out).unwrap();
        assert!(again.is_empty());
    }

    #[test]
    fn repair_places_border_and_jewel() {
        let l = gd("..A..\n.....\n.....\n.....\n");
        let (out, report) = repair(&l).unwrap();
        assert!(report.fixes.contains(&Fix::BorderWall(Pos::new(0, 2))));
        assert!(report.fixes.contains(&Fix::PlacedAvatar(Pos::new(1, 1))));
        assert!(report.fixes.contains(&Fix::Placed(TileKind::Jewel, Pos::new(2, 3))));
        assert!(out.validate().is_ok());
        assert!(matches!(repair(&gd("www\nwAw\nwww\n")), Err(LevelOpError::Unrepairable(_))));
    }

    #[test]
    fn maze_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for alg in MazeAlgorithm::ALL {
            let m = gen_maze(1, 1, alg, &mut rng);
            assert_eq!(m.passages(), 0);
            let m = gen_maze(4, 6, alg, &mut rng);
            assert_eq!(m.passages(), 23, "{alg:?}");
        }
        assert!(matches!(
            maze_to_waterpuzzle(&gen_maze(1, 2, MazeAlgorithm::Prim, &mut rng), &mut rng),
            Err(LevelOpError::TooFewCells(2))
        ));
    }
}

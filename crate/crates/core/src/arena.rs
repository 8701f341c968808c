//! Seeded evaluation, per-level ranking and accumulated standings.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{reset, GameError, Status};
use crate::level::Level;
use crate::policy::{Agent, RandomAgent};

/// Points for ranks 1 to 5; every later rank gets 0.
pub const POINTS: [u32; 5] = [25, 18, 15, 12, 10];

pub const DEFAULT_RUNS: usize = 20;

#[derive(Debug, Error)]
pub enum ArenaError {
    #[error("no records to summarize")]
    Empty,
    #[error("records mix {0}")]
    Mixed(&'static str),
    #[error("agent `{0}` appears twice")]
    DuplicateAgent(String),
    #[error("level name `{0}` appears twice")]
    DuplicateLevel(String),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ArenaError + '_ {
    move |source| ArenaError::Io { path: path.to_path_buf(), source }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub agent: String,
    pub game: String,
    pub level: String,
    pub seed: u64,
    pub win: bool,
    pub score: i64,
    pub ticks: u32,
    /// Agent failure that ended the episode early, if any.
    #[serde(skip)]
    pub error: Option<String>,
}

/// Plays one episode. The agent draws from its own stream of the episode
/// seed. An agent error ends the episode as a loss with score 0.
pub fn run_episode(agent: &mut dyn Agent, level: &Level, seed: u64) -> Result<EpisodeRecord, ArenaError> {
    let mut state = reset(level, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    agent.reset();
    let legal = state.legal_actions().to_vec();
    let mut screen = state.render();
    let mut error = None;
    while !state.status().is_terminal() {
        state.render_into(&mut screen);
        let step = agent
            .act(&screen, &legal, &mut rng)
            .map_err(|e| e.to_string())
            .and_then(|a| state.advance(a).map_err(|e| e.to_string()));
        if let Err(e) = step {
            error = Some(e);
            break;
        }
    }
    let record = |win, score, ticks, error| EpisodeRecord {
        agent: agent.id().to_string(),
        game: level.game().id().to_string(),
        level: level.name.clone(),
        seed,
        win,
        score,
        ticks,
        error,
    };
    Ok(match error {
        Some(e) => record(false, 0, state.tick() + 1, Some(e)),
        None => record(state.status() == Status::PlayerWins, state.score(), state.tick(), None),
    })
}

/// Episodes with seeds `base_seed..base_seed + runs`, in seed order.
pub fn evaluate(agent: &mut dyn Agent, level: &Level, runs: usize, base_seed: u64) -> Result<Vec<EpisodeRecord>, ArenaError> {
    (0..runs as u64).map(|i| run_episode(agent, level, base_seed + i)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelResult {
    pub agent: String,
    pub wins: usize,
    pub mean: f64,
    pub std: f64,
    pub mean_ticks: f64,
}

/// Win count, mean score, population standard deviation and mean length.
pub fn summarize(records: &[EpisodeRecord]) -> Result<LevelResult, ArenaError> {
    let first = records.first().ok_or(ArenaError::Empty)?;
    if records.iter().any(|r| r.agent != first.agent) {
        return Err(ArenaError::Mixed("agents"));
    }
    if records.iter().any(|r| r.level != first.level || r.game != first.game) {
        return Err(ArenaError::Mixed("levels"));
    }
    let n = records.len() as f64;
    let mean = records.iter().map(|r| r.score as f64).sum::<f64>() / n;
    let var = records.iter().map(|r| (r.score as f64 - mean).powi(2)).sum::<f64>() / n;
    Ok(LevelResult {
        agent: first.agent.clone(),
        wins: records.iter().filter(|r| r.win).count(),
        mean,
        std: var.sqrt(),
        mean_ticks: records.iter().map(|r| r.ticks as f64).sum::<f64>() / n,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ranked {
    pub rank: usize,
    pub points: u32,
    pub result: LevelResult,
}

fn points_for(rank: usize) -> u32 {
    POINTS.get(rank - 1).copied().unwrap_or(0)
}

/// More wins, then higher mean score, then fewer mean ticks.
fn performance(a: &LevelResult, b: &LevelResult) -> Ordering {
    b.wins
        .cmp(&a.wins)
        .then(b.mean.total_cmp(&a.mean))
        .then(a.mean_ticks.total_cmp(&b.mean_ticks))
}

/// Orders one level's results and hands out points. Agents with identical
/// wins, mean and length share the better rank.
pub fn rank_level(results: &[LevelResult]) -> Result<Vec<Ranked>, ArenaError> {
    if let Some((_, dup)) = results.iter().enumerate().find(|(i, r)| results[..*i].iter().any(|o| o.agent == r.agent)) {
        return Err(ArenaError::DuplicateAgent(dup.agent.clone()));
    }
    let mut sorted = results.to_vec();
    sorted.sort_by(|a, b| performance(a, b).then_with(|| a.agent.cmp(&b.agent)));
    let mut out: Vec<Ranked> = Vec::with_capacity(sorted.len());
    for (i, result) in sorted.into_iter().enumerate() {
        let rank = match out.last() {
            Some(prev) if performance(&prev.result, &result) == Ordering::Equal => prev.rank,
            _ => i + 1,
        };
        out.push(Ranked { rank, points: points_for(rank), result });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Standing {
    pub rank: usize,
    pub agent: String,
    pub points: u32,
    pub wins: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RankTable {
    pub levels: Vec<(String, Vec<Ranked>)>,
    pub standings: Vec<Standing>,
}

/// Sums points and wins per agent across levels.
pub fn accumulate(levels: Vec<(String, Vec<Ranked>)>) -> RankTable {
    let mut totals: BTreeMap<String, (u32, usize)> = BTreeMap::new();
    for (_, ranked) in &levels {
        for r in ranked {
            let t = totals.entry(r.result.agent.clone()).or_default();
            t.0 += r.points;
            t.1 += r.result.wins;
        }
    }
    let mut rows: Vec<(String, u32, usize)> = totals.into_iter().map(|(a, (p, w))| (a, p, w)).collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then(b.2.cmp(&a.2)).then_with(|| a.0.cmp(&b.0)));
    let mut standings: Vec<Standing> = Vec::with_capacity(rows.len());
    for (i, (agent, points, wins)) in rows.into_iter().enumerate() {
        let rank = match standings.last() {
            Some(prev) if prev.points == points && prev.wins == wins => prev.rank,
            _ => i + 1,
        };
        standings.push(Standing { rank, agent, points, wins });
    }
    RankTable { levels, standings }
}

type ByAgent = Vec<(String, Vec<EpisodeRecord>)>;

/// Groups records by level and agent, in order of first appearance, and
/// ranks them.
pub fn rank_records(records: &[EpisodeRecord]) -> Result<RankTable, ArenaError> {
    let mut levels: Vec<(String, ByAgent)> = Vec::new();
    for r in records {
        let li = match levels.iter().position(|(l, _)| *l == r.level) {
            Some(i) => i,
            None => {
                levels.push((r.level.clone(), Vec::new()));
                levels.len() - 1
            }
        };
        let agents = &mut levels[li].1;
        match agents.iter_mut().find(|(a, _)| *a == r.agent) {
            Some((_, recs)) => recs.push(r.clone()),
            None => agents.push((r.agent.clone(), vec![r.clone()])),
        }
    }
    let mut ranked = Vec::with_capacity(levels.len());
    for (level, agents) in levels {
        let results = agents.iter().map(|(_, recs)| summarize(recs)).collect::<Result<Vec<_>, _>>()?;
        ranked.push((level, rank_level(&results)?));
    }
    Ok(accumulate(ranked))
}

pub fn write_episodes(path: &Path, records: &[EpisodeRecord]) -> Result<(), ArenaError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_episodes(path: &Path) -> Result<Vec<EpisodeRecord>, ArenaError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(ArenaError::from)).collect()
}

pub fn write_level_summary(path: &Path, ranked: &[Ranked]) -> Result<(), ArenaError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in ranked {
        w.serialize(&r.result)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_standings(path: &Path, table: &RankTable) -> Result<(), ArenaError> {
    let mut w = csv::Writer::from_path(path)?;
    for s in &table.standings {
        w.serialize(s)?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CompetitionConfig {
    pub runs: usize,
    pub base_seed: u64,
}

impl Default for CompetitionConfig {
    fn default() -> Self {
        CompetitionConfig { runs: DEFAULT_RUNS, base_seed: 0 }
    }
}

pub struct CompetitionReport {
    pub records: Vec<EpisodeRecord>,
    pub table: RankTable,
}

/// Evaluates every agent, plus a random baseline, on every level and writes
/// `episodes.csv`, `levels/<level>.csv` and `standings.csv` under `out`.
pub fn run_competition(
    mut agents: Vec<Box<dyn Agent>>,
    levels: &[Level],
    config: CompetitionConfig,
    out: &Path,
) -> Result<CompetitionReport, ArenaError> {
    if !agents.iter().any(|a| a.id() == "random") {
        agents.push(Box::new(RandomAgent::new("random")));
    }
    for (i, a) in agents.iter().enumerate() {
        if agents[..i].iter().any(|b| b.id() == a.id()) {
            return Err(ArenaError::DuplicateAgent(a.id().to_string()));
        }
    }
    for (i, l) in levels.iter().enumerate() {
        if levels[..i].iter().any(|o| o.name == l.name) {
            return Err(ArenaError::DuplicateLevel(l.name.clone()));
        }
    }
    let mut records = Vec::new();
    for level in levels {
        for agent in agents.iter_mut() {
            records.extend(evaluate(agent.as_mut(), level, config.runs, config.base_seed)?);
        }
    }
    let table = rank_records(&records)?;
    let level_dir = out.join("levels");
    std::fs::create_dir_all(&level_dir).map_err(io_err(&level_dir))?;
    write_episodes(&out.join("episodes.csv"), &records)?;
    for (level, ranked) in &table.levels {
        write_level_summary(&level_dir.join(format!("{level}.csv")), ranked)?;
    }
    write_standings(&out.join("standings.csv"), &table)?;
    Ok(CompetitionReport { records, table })
}

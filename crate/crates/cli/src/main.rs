use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gvgl_core::arena::{self, CompetitionConfig};
use gvgl_core::game::{reset, score_bounds};
use gvgl_core::level::Level;
use gvgl_core::levelgen::{self, Axis, MazeAlgorithm, TileEdit};
use gvgl_core::nn::Variant;
use gvgl_core::obs::observe;
use gvgl_core::policy::load_bundle;
use gvgl_core::tiles::{describe, TileCatalog};
use gvgl_core::trainer::{train, TrainConfig};
use gvgl_core::{Action, TileKind};

#[derive(Parser)]
#[command(name = "gvgl", version, about = "Train, evaluate and rank agents on tile-based games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model on one or more levels of a single game.
    Train {
        #[arg(long = "level", required = true, num_args = 1..)]
        levels: Vec<PathBuf>,
        #[arg(long, default_value_t = 200_000)]
        frames: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "dual")]
        variant: Variant,
        /// Model output file.
        #[arg(long)]
        out: PathBuf,
        /// Per-episode training log (CSV).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Evaluate one agent bundle on one level.
    Eval {
        #[arg(long)]
        agent: PathBuf,
        #[arg(long)]
        level: PathBuf,
        #[arg(long, default_value_t = 20)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank the episode records found in a directory.
    Rank {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate several bundles plus a random baseline on a level set.
    Compete {
        #[arg(long, required = true, num_args = 1..)]
        agents: Vec<PathBuf>,
        #[arg(long, required = true, num_args = 1..)]
        levels: Vec<PathBuf>,
        #[arg(long, default_value_t = 20)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Derive, augment or generate levels.
    Genlevels {
        #[arg(long)]
        op: Op,
        /// Input level(s); `combine` takes two, `window` one or more.
        #[arg(long = "level", num_args = 1..)]
        levels: Vec<PathBuf>,
        /// `row,col,kind`, e.g. `3,4,jewel`. Repeat for `multi`.
        #[arg(long = "edit")]
        edits: Vec<String>,
        #[arg(long, default_value = "horizontal")]
        axis: String,
        /// Window size `HxW` for `window`.
        #[arg(long)]
        window: Option<String>,
        /// Target size `HxW` in tiles for `window`, in maze cells for `maze`.
        #[arg(long)]
        size: Option<String>,
        #[arg(long, default_value = "backtrack")]
        algorithm: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Run the repair rules on the result and print the report.
        #[arg(long)]
        repair: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the observation pair of a level after replaying some actions.
    Observe {
        #[arg(long)]
        level: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated actions to play first, e.g. `RIGHT,RIGHT,USE`.
        #[arg(long, default_value = "")]
        actions: String,
    },
    /// Print the tile catalog, or write it as JSON.
    Catalog {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Theoretical score range of each level.
    Bounds {
        #[arg(required = true)]
        levels: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Op {
    Single,
    Multi,
    Combine,
    Mirror,
    Window,
    Maze,
}

fn load_level(path: &Path) -> Result<Level> {
    Level::load(path).with_context(|| format!("loading {}", path.display()))
}

fn parse_dims(text: &str) -> Result<(usize, usize)> {
    let (h, w) = text.split_once('x').with_context(|| format!("expected HxW, got `{text}`"))?;
    Ok((h.trim().parse()?, w.trim().parse()?))
}

fn parse_edit(text: &str) -> Result<TileEdit> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let [r, c, kind] = parts[..] else { bail!("expected row,col,kind, got `{text}`") };
    Ok(TileEdit::new(r.parse()?, c.parse()?, kind.parse::<TileKind>()?))
}

fn only<'a>(levels: &'a [Level], op: &str) -> Result<&'a Level> {
    match levels {
        [l] => Ok(l),
        _ => bail!("--op {op} takes exactly one --level"),
    }
}

#[allow(clippy::too_many_arguments)]
fn genlevels(
    op: Op,
    paths: &[PathBuf],
    edits: &[String],
    axis: &str,
    window: Option<&str>,
    size: Option<&str>,
    algorithm: &str,
    seed: u64,
    repair: bool,
    out: &Path,
) -> Result<()> {
    let levels = paths.iter().map(|p| load_level(p)).collect::<Result<Vec<_>>>()?;
    let edits = edits.iter().map(|e| parse_edit(e)).collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let name = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let level = match op {
        Op::Single => {
            let [edit] = edits[..] else { bail!("--op single takes exactly one --edit") };
            let src = only(&levels, "single")?;
            levelgen::single_tile_change(src, edit)?.with_description(&format!("Single-tile change of {}.", src.name))
        }
        Op::Multi => {
            let src = only(&levels, "multi")?;
            levelgen::multi_tile_change(src, &edits)?
                .with_description(&format!("{}-tile change of {}.", edits.len(), src.name))
        }
        Op::Combine => {
            let [a, b] = &levels[..] else { bail!("--op combine takes exactly two --level") };
            levelgen::combine(a, b)?.with_description(&format!("Top half of {} over the bottom half of {}.", a.name, b.name))
        }
        Op::Mirror => {
            let src = only(&levels, "mirror")?;
            let axis: Axis = axis.parse().map_err(anyhow::Error::msg)?;
            levelgen::mirror(src, axis).with_description(&format!("{} mirrored ({axis:?}).", src.name))
        }
        Op::Window => {
            let window = parse_dims(window.context("--op window needs --window HxW")?)?;
            let target = parse_dims(size.context("--op window needs --size HxW")?)?;
            let (level, report) = levelgen::window_augment(&levels, window, target, &mut rng)?;
            print!("{report}");
            level.with_description(&format!("Window augmentation, seed {seed}."))
        }
        Op::Maze => {
            let (h, w) = parse_dims(size.context("--op maze needs --size HxW (cells)")?)?;
            let alg: MazeAlgorithm = algorithm.parse().map_err(anyhow::Error::msg)?;
            let maze = levelgen::gen_maze(h, w, alg, &mut rng);
            let level = levelgen::maze_to_waterpuzzle(&maze, &mut rng)?;
            let (_, report) = levelgen::repair(&level)?;
            print!("{report}");
            level.with_description(&format!("{} maze, {h}x{w} cells, seed {seed}.", alg.name()))
        }
    };
    let mut level = level.with_name(name);
    if repair {
        let (fixed, report) = levelgen::repair(&level)?;
        print!("{report}");
        level = fixed;
    }
    level.validate()?;
    level.save(out).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {}", out.display());
    Ok(())
}

fn collect_episode_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let top = dir.join("episodes.csv");
    if top.is_file() {
        files.push(top);
    }
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    files.extend(subdirs.into_iter().map(|d| d.join("episodes.csv")).filter(|p| p.is_file()));
    if files.is_empty() {
        bail!("no episodes.csv under {}", dir.display());
    }
    Ok(files)
}

fn print_standings(table: &arena::RankTable) {
    println!("{:>4}  {:<16} {:>6} {:>5}", "rank", "agent", "points", "wins");
    for s in &table.standings {
        println!("{:>4}  {:<16} {:>6} {:>5}", s.rank, s.agent, s.points, s.wins);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { levels, frames, seed, variant, out, log } => {
            let levels = levels.iter().map(|p| load_level(p)).collect::<Result<Vec<_>>>()?;
            let config = TrainConfig { total_frames: frames, seed, variant, ..TrainConfig::default() };
            let outcome = train(&levels, &config)?;
            outcome.net.save(&out).with_context(|| format!("writing {}", out.display()))?;
            if let Some(log) = log {
                outcome.log.save(&log)?;
            }
            let s = outcome.stats;
            println!(
                "frames {} episodes {} gradient steps {} target syncs {}",
                s.frames, s.episodes, s.gradient_steps, s.target_syncs
            );
            println!("wrote {}", out.display());
        }
        Command::Eval { agent, level, runs, seed, out } => {
            let mut agent = load_bundle(&agent)?;
            let level = load_level(&level)?;
            let records = arena::evaluate(agent.as_mut(), &level, runs, seed)?;
            std::fs::create_dir_all(&out)?;
            arena::write_episodes(&out.join("episodes.csv"), &records)?;
            if !records.is_empty() {
                let s = arena::summarize(&records)?;
                println!("{} on {}: {} wins, mean {:.2} (std {:.2}), mean ticks {:.1}", s.agent, level.name, s.wins, s.mean, s.std, s.mean_ticks);
            }
            for r in records.iter().filter(|r| r.error.is_some()) {
                eprintln!("seed {}: agent failed: {}", r.seed, r.error.as_deref().unwrap_or_default());
            }
        }
        Command::Rank { input, out } => {
            let mut records = Vec::new();
            for f in collect_episode_files(&input)? {
                records.extend(arena::read_episodes(&f)?);
            }
            let table = arena::rank_records(&records)?;
            arena::write_standings(&out, &table)?;
            print_standings(&table);
        }
        Command::Compete { agents, levels, runs, seed, out } => {
            let agents = agents.iter().map(|p| load_bundle(p)).collect::<Result<Vec<_>, _>>()?;
            let levels = levels.iter().map(|p| load_level(p)).collect::<Result<Vec<_>>>()?;
            let report = arena::run_competition(agents, &levels, CompetitionConfig { runs, base_seed: seed }, &out)?;
            let failed = report.records.iter().filter(|r| r.error.is_some()).count();
            if failed > 0 {
                eprintln!("{failed} episode(s) ended by agent failure");
            }
            print_standings(&report.table);
        }
        Command::Genlevels { op, levels, edits, axis, window, size, algorithm, seed, repair, out } => {
            genlevels(op, &levels, &edits, &axis, window.as_deref(), size.as_deref(), &algorithm, seed, repair, &out)?;
        }
        Command::Observe { level, seed, actions } => {
            let level = load_level(&level)?;
            let mut state = reset(&level, seed)?;
            for a in actions.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let action: Action = a.parse()?;
                state.advance(action)?;
            }
            let pair = observe(&state.render(), TileCatalog::shared())?;
            println!("tick {} status {} score {}", state.tick(), state.status(), state.score());
            print!("{}", pair.dump());
        }
        Command::Catalog { out } => {
            let catalog = TileCatalog::shared();
            match out {
                Some(path) => {
                    catalog.save(&path)?;
                    println!("wrote {}", path.display());
                }
                None => print!("{}", describe(catalog)),
            }
        }
        Command::Bounds { levels } => {
            println!("{:<28} {:>5} {:>5}", "level", "max", "min");
            for p in levels {
                let level = load_level(&p)?;
                let (max, min) = score_bounds(&level);
                println!("{:<28} {:>5} {:>5}", level.name, max, min);
            }
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

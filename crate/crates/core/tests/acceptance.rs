//! Acceptance suite. Each test prints one PASS/FAIL line to stderr, outside
//! the test harness capture, and runs under a shared lock so its timing is
//! not inflated by the others.

mod common;

use std::collections::BTreeMap;
use std::io::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gvgl_core::arena::{self, accumulate, rank_level, CompetitionConfig, LevelResult};
use gvgl_core::game::reset;
use gvgl_core::grid::Pos;
use gvgl_core::level::Level;
use gvgl_core::levelgen::{self, Axis, MazeAlgorithm, TileEdit};
use gvgl_core::nn::Variant;
use gvgl_core::obs::{observe_grid, CHANNELS};
use gvgl_core::policy::{act_deterministic, softmax_probs, Agent, CycleAgent, DecisionPolicy, QAgent, DEFAULT_SIGMA};
use gvgl_core::tiles::{decode_screen, render};
use gvgl_core::trainer::{epsilon_at, select_training_level, train, ReplayBuffer, TrainConfig};
use gvgl_core::{Action, GameKind, Status, TileCatalog, TileKind};

use common::{flood, level, random_grid, shipped_levels};

static LOCK: Mutex<()> = Mutex::new(());

fn criterion(n: u32, name: &str, limit: Duration, body: impl FnOnce() -> String) {
    let _guard = LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(body));
    let elapsed = start.elapsed();
    let verdict = match outcome {
        Ok(detail) if elapsed <= limit => Ok(detail),
        Ok(detail) => Err(format!("{detail}; took {elapsed:.1?}, limit {limit:?}")),
        Err(panic) => Err(panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    };
    let line = match &verdict {
        Ok(detail) => format!("[PASS] criterion {n:>2} {name} ({elapsed:.2?}) {detail}\n"),
        Err(why) => format!("[FAIL] criterion {n:>2} {name} ({elapsed:.2?}) {why}\n"),
    };
    let _ = std::io::stderr().write_all(line.as_bytes());
    if let Err(why) = verdict {
        panic!("criterion {n} failed: {why}");
    }
}

#[test]
fn criterion_01_encoding_round_trip() {
    criterion(1, "encoding round trip", Duration::from_secs(5), || {
        let catalog = TileCatalog::shared();
        let levels = shipped_levels();
        for (path, l) in &levels {
            let img = render(l.grid(), catalog).unwrap();
            assert_eq!(&decode_screen(&img, catalog).unwrap(), l.grid(), "{}", path.display());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let top = (catalog.len() - 1) as u8;
        for _ in 0..1000 {
            let (h, w) = (rng.gen_range(1..=16), rng.gen_range(1..=16));
            let g = random_grid(h, w, 0, top, &mut rng);
            assert_eq!(decode_screen(&render(&g, catalog).unwrap(), catalog).unwrap(), g);
        }
        format!("{} shipped levels + 1000 random grids", levels.len())
    });
}

#[test]
fn criterion_02_observation_contract() {
    criterion(2, "observation contract", Duration::from_secs(5), || {
        let (h, w) = (6, 8);
        let avatar = TileKind::Avatar.code();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // Non-avatar background codes 1..=9 without 5, so padding (0) is distinguishable.
        let mut base = random_grid(h, w, 1, 9, &mut rng);
        for p in base.positions().collect::<Vec<_>>() {
            if base.get(p) == avatar {
                base.set(p, TileKind::Floor.code());
            }
        }
        for r in 0..h {
            for c in 0..w {
                let mut g = base.clone();
                g.set(Pos::new(r, c), avatar);
                let pair = observe_grid(&g, avatar).unwrap();
                let (go, lo) = (pair.global_onehot(), pair.local_onehot());
                assert_eq!(go.shape(), (11, 15, CHANNELS));
                assert_eq!(lo.shape(), (5, 5, CHANNELS));
                assert_eq!(go.cell(h - 1, w - 1)[avatar as usize], 1);
                assert_eq!(lo.cell(2, 2)[avatar as usize], 1);
                for i in 0..11 {
                    for j in 0..15 {
                        assert_eq!(go.cell(i, j).iter().map(|&x| x as u32).sum::<u32>(), 1);
                    }
                }
                for p in g.positions() {
                    let at = Pos::new(p.row + h - 1 - r, p.col + w - 1 - c);
                    assert_eq!(pair.global.get(at), g.get(p));
                }
                let inside = pair.global.codes().iter().filter(|&&x| x != 0).count();
                assert_eq!(inside, h * w, "avatar ({r},{c})");
                for i in 0..5 {
                    for j in 0..5 {
                        assert_eq!(pair.local.get(Pos::new(i, j)), pair.global.get(Pos::new(h - 3 + i, w - 3 + j)));
                    }
                }
            }
        }
        format!("{} avatar positions", h * w)
    });
}

#[test]
fn criterion_03_scaled_softmax() {
    criterion(3, "scaled softmax", Duration::from_secs(10), || {
        let sigmas = [0.5, 2.0, 10.0, 50.0];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut worst_sum = 0.0f64;
        let mut worst_affine = 0.0f64;
        for _ in 0..10_000 {
            let len = rng.gen_range(2..=6);
            let q: Vec<f64> = (0..len).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let (a, b) = (rng.gen_range(0.1..10.0), rng.gen_range(-10.0..10.0));
            let moved: Vec<f64> = q.iter().map(|x| a * x + b).collect();
            let best = act_deterministic(&q).unwrap();
            let unique = q.iter().filter(|&&x| x == q[best]).count() == 1;
            let mut prev = 0.0;
            for s in sigmas {
                let p = softmax_probs(&q, s).unwrap();
                worst_sum = worst_sum.max((p.iter().sum::<f64>() - 1.0).abs());
                let pm = softmax_probs(&moved, s).unwrap();
                for (x, y) in p.iter().zip(&pm) {
                    worst_affine = worst_affine.max((x - y).abs());
                }
                if unique {
                    assert_eq!(act_deterministic(&p).unwrap(), best, "q={q:?} sigma={s}");
                }
                assert!(p[best] >= prev, "p_argmax decreased at sigma {s} for {q:?}");
                prev = p[best];
            }
        }
        assert!(worst_sum <= 1e-12, "sum error {worst_sum:e}");
        assert!(worst_affine <= 1e-12, "affine error {worst_affine:e}");
        let p = softmax_probs(&[0.0, 1.0], 2.0).unwrap();
        assert!((p[0] - 0.1192).abs() <= 1e-4 && (p[1] - 0.8808).abs() <= 1e-4, "{p:?}");
        format!("max sum error {worst_sum:.1e}, max affine error {worst_affine:.1e}, q=[0,1] -> [{:.4}, {:.4}]", p[0], p[1])
    });
}

#[test]
fn criterion_04_gradient_check() {
    criterion(4, "gradient check", Duration::from_secs(60), || {
        let mut out = Vec::new();
        for variant in [Variant::Dual, Variant::GlobalOnly] {
            let cfg = common::reduced_config(variant);
            let (seed, report) = common::fd_check_smooth_point(
                |s| gvgl_core::ArcaneNet::new(cfg.clone(), s).unwrap(),
                1e-4,
                |_, _| true,
            );
            assert_eq!(report.checked, gvgl_core::ArcaneNet::new(cfg.clone(), 0).unwrap().param_count());
            assert!(report.max_rel_error < 1e-4, "{variant}: max relative error {:e}", report.max_rel_error);
            out.push(format!("{variant}: {} params, max rel error {:.1e} (seed {seed})", report.checked, report.max_rel_error));
        }
        out.join("; ")
    });
}

#[test]
fn criterion_05_training_schedule() {
    criterion(5, "training schedule conformance", Duration::from_secs(30), || {
        let c = TrainConfig::default();
        assert_eq!(epsilon_at(0, &c), 1.0);
        assert_eq!(epsilon_at(20_000, &c), 0.1);
        assert_eq!(epsilon_at(10_000, &c), 0.55);

        let mut buf = ReplayBuffer::new(40_000);
        for i in 0..40_005u64 {
            buf.push(i);
        }
        assert_eq!(buf.len(), 40_000);
        assert_eq!(buf.get(0), Some(&5));
        assert_eq!(buf.get(39_999), Some(&40_004));

        for n in [2usize, 10] {
            for e in 0..200u64 {
                assert_eq!(select_training_level(e, n, 5), (e / 5) as usize % n);
            }
        }
        assert_eq!((0..12).map(|e| select_training_level(e, 2, 5)).collect::<Vec<_>>(), [0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 0, 0]);

        let frames = 5_000u64;
        let cfg = TrainConfig { total_frames: frames, seed: 5, ..TrainConfig::default() };
        let out = train(&[level("mini/golddigger_corridor.txt")], &cfg).unwrap();
        let s = out.stats;
        let expect_steps = (cfg.replay_start as u64..=frames).filter(|f| f % cfg.update_freq == 0).count() as u64;
        let expect_syncs = expect_steps / cfg.target_sync;
        assert_eq!(s.frames, frames);
        assert!(s.gradient_steps.abs_diff(expect_steps) <= 1, "steps {} vs {expect_steps}", s.gradient_steps);
        assert!(s.target_syncs.abs_diff(expect_syncs) <= 1, "syncs {} vs {expect_syncs}", s.target_syncs);
        format!("{} gradient steps (expected {expect_steps}), {} target syncs (expected {expect_syncs})", s.gradient_steps, s.target_syncs)
    });
}

fn play(l: &Level, seed: u64, script: &[Action], idle: Action) -> gvgl_core::GameState {
    let mut st = reset(l, seed).unwrap();
    let mut i = 0;
    while !st.status().is_terminal() {
        let a = script.get(i).copied().unwrap_or(idle);
        st.advance(a).unwrap();
        i += 1;
    }
    st
}

#[test]
fn criterion_06_game_rule_oracles() {
    criterion(6, "game rule oracles", Duration::from_secs(5), || {
        use Action::*;
        let calm = level("mini/treasurekeeper_calm.txt");
        for seed in 0..3 {
            let st = play(&calm, seed, &[], Nil);
            assert_eq!((st.score(), st.status(), st.tick()), (30, Status::PlayerWins, 600));
        }

        let line = level("mini/waterpuzzle_line.txt");
        let st = play(&line, 0, &[Right, Right, Right, Right], Nil);
        assert_eq!((st.score(), st.status()), (15, Status::PlayerWins));

        let vault = level("mini/golddigger_vault.txt");
        let script = [Right, Right, Right, Right, Down, Down, Left, Left, Left, Left];
        let st = play(&vault, 0, &script, Nil);
        let expected = vault.count(TileKind::Jewel) as i64 * vault.scores().jewel;
        assert_eq!(expected, 8);
        assert_eq!((st.score(), st.status(), st.tick()), (expected, Status::PlayerWins, script.len() as u32));

        let idle = play(&level("waterpuzzle_0.txt"), 0, &[], Nil);
        assert_eq!((idle.score(), idle.status(), idle.tick()), (0, Status::PlayerLoses, 1500));
        "TreasureKeeper 30 @600, WaterPuzzle 15, GoldDigger 4x2 = 8, idle WaterPuzzle loses @1500".into()
    });
}

/// Wins and mean score over 20 evaluation episodes.
fn eval_net(l: &Level, net: gvgl_core::ArcaneNet, policy: DecisionPolicy) -> (usize, f64) {
    let mut agent = QAgent::new("eval", net, l.game(), policy).unwrap();
    let records = arena::evaluate(&mut agent, l, 20, 0).unwrap();
    let s = arena::summarize(&records).unwrap();
    (s.wins, s.mean)
}

#[test]
fn criterion_07_learning_corridor() {
    criterion(7, "desk-scale learning A (corridor)", Duration::from_secs(600), || {
        let l = level("mini/golddigger_corridor.txt");
        assert!(l.dims().0 <= 5 && l.dims().1 <= 9 && l.count(TileKind::Jewel) == 1 && l.count(TileKind::Monster) == 0);
        let mut wins = Vec::new();
        for seed in 0..3 {
            let cfg = TrainConfig { total_frames: 20_000, seed, ..TrainConfig::default() };
            let out = train(std::slice::from_ref(&l), &cfg).unwrap();
            wins.push(eval_net(&l, out.net, DecisionPolicy::Deterministic).0);
        }
        let good = wins.iter().filter(|&&w| w >= 18).count();
        assert!(good >= 2, "greedy wins per seed {wins:?}");
        format!("greedy wins per seed {wins:?}")
    });
}

#[test]
fn criterion_08_local_observation_benefit() {
    criterion(8, "desk-scale learning B (dual vs global-only)", Duration::from_secs(1800), || {
        let l = level("mini/golddigger_hazard.txt");
        assert_eq!(l.count(TileKind::Monster), 1);
        let mut rows = Vec::new();
        let mut better = 0;
        for seed in 0..3 {
            let mut means = [0.0; 2];
            for (k, variant) in [Variant::Dual, Variant::GlobalOnly].into_iter().enumerate() {
                let cfg = TrainConfig { total_frames: 50_000, seed, variant, ..TrainConfig::default() };
                let out = train(std::slice::from_ref(&l), &cfg).unwrap();
                means[k] = eval_net(&l, out.net, DecisionPolicy::stochastic(DEFAULT_SIGMA).unwrap()).1;
            }
            if means[0] > means[1] {
                better += 1;
            }
            rows.push(format!("seed {seed}: dual {:.2} vs global-only {:.2}", means[0], means[1]));
        }
        assert!(better >= 2, "dual ahead on {better}/3 seeds: {}", rows.join(", "));
        rows.join(", ")
    });
}

/// Edges of the passage graph over cell indices.
fn passages(m: &levelgen::Maze) -> Vec<(usize, usize)> {
    let (h, w) = m.dims();
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if c + 1 < w && m.open_east(r, c) {
                out.push((r * w + c, r * w + c + 1));
            }
            if r + 1 < h && m.open_south(r, c) {
                out.push((r * w + c, (r + 1) * w + c));
            }
        }
    }
    out
}

fn root(parent: &[usize], mut x: usize) -> usize {
    while parent[x] != x {
        x = parent[x];
    }
    x
}

#[test]
fn criterion_09_maze_generators() {
    criterion(9, "maze generators", Duration::from_secs(30), || {
        let mut count = 0;
        for alg in MazeAlgorithm::ALL {
            for h in 1..=20 {
                for w in 1..=20 {
                    for seed in 0..20 {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        let m = levelgen::gen_maze(h, w, alg, &mut rng);
                        let n = h * w;
                        let edges = passages(&m);
                        assert_eq!(edges.len(), n - 1, "{alg:?} {h}x{w} seed {seed}");
                        // Union-find: no edge may join an already connected pair.
                        let mut parent: Vec<usize> = (0..n).collect();
                        for &(a, b) in &edges {
                            let (ra, rb) = (root(&parent, a), root(&parent, b));
                            assert_ne!(ra, rb, "{alg:?} {h}x{w} seed {seed}: cycle");
                            parent[ra] = rb;
                        }
                        let g = m.to_grid();
                        let floor = TileKind::Floor.code();
                        let reached = flood(g.rows(), g.cols(), Pos::new(1, 1), |p| g.get(p) == floor);
                        let cells = reached.iter().filter(|p| p.row % 2 == 1 && p.col % 2 == 1).count();
                        assert_eq!(cells, n, "{alg:?} {h}x{w} seed {seed}: disconnected");
                        count += 1;
                    }
                }
            }
        }
        format!("{count} mazes are spanning trees")
    });
}

fn check_repaired(l: &Level) {
    let g = l.grid();
    let (rows, cols) = g.dims();
    let wall = TileKind::Wall.code();
    for p in g.positions() {
        if p.row == 0 || p.col == 0 || p.row == rows - 1 || p.col == cols - 1 {
            assert_eq!(g.get(p), wall, "border {p}");
        }
    }
    let avatars = g.find_all(TileKind::Avatar.code());
    assert_eq!(avatars.len(), 1);
    let solid = |p: Pos| matches!(TileKind::from_code(g.get(p)), Some(TileKind::Wall | TileKind::Obstacle));
    match l.game() {
        GameKind::WaterPuzzle => {
            let keys = g.find_all(TileKind::Key.code());
            let doors = g.find_all(TileKind::Door.code());
            assert_eq!((keys.len(), doors.len()), (1, 1));
            let without_door = flood(rows, cols, avatars[0], |p| !solid(p) && p != doors[0]);
            assert!(without_door.contains(&keys[0]), "key not reachable");
            let all = flood(rows, cols, avatars[0], |p| !solid(p));
            assert!(all.contains(&doors[0]), "door not reachable");
        }
        GameKind::GoldDigger => assert!(l.count(TileKind::Jewel) >= 1),
        GameKind::TreasureKeeper => assert!(l.count(TileKind::Box) >= 1),
    }
}

#[test]
fn criterion_10_level_operators() {
    criterion(10, "level operators", Duration::from_secs(30), || {
        let gd0 = level("golddigger_0.txt");
        let gd1 = level("golddigger_1.txt");
        assert_eq!(gd1.kind_at(Pos::new(1, 6)), TileKind::Obstacle);
        let one = levelgen::single_tile_change(&gd1, TileEdit::new(1, 6, TileKind::Jewel)).unwrap();
        assert_eq!(one.grid().hamming(gd1.grid()), 1);
        assert_eq!(one.grid(), level("golddigger_3.txt").grid());
        let edits = [
            TileEdit::new(2, 3, TileKind::Floor),
            TileEdit::new(4, 5, TileKind::Jewel),
            TileEdit::new(3, 7, TileKind::Monster),
            TileEdit::new(6, 6, TileKind::Floor),
            TileEdit::new(7, 7, TileKind::Obstacle),
        ];
        let five = levelgen::multi_tile_change(&gd0, &edits).unwrap();
        assert_eq!(five.grid().hamming(gd0.grid()), 5);
        assert_eq!(five.grid(), level("golddigger_2.txt").grid());

        let shipped = shipped_levels();
        for (path, l) in &shipped {
            for axis in [Axis::Horizontal, Axis::Vertical] {
                assert_eq!(&levelgen::mirror(&levelgen::mirror(l, axis), axis), l, "{} {axis:?}", path.display());
            }
        }

        let combined = levelgen::combine(&gd0, &gd1).unwrap();
        assert_eq!(combined.grid(), level("golddigger_4.txt").grid(), "combine golden file");

        let sources: BTreeMap<GameKind, Vec<Level>> = [GameKind::GoldDigger, GameKind::TreasureKeeper, GameKind::WaterPuzzle]
            .into_iter()
            .map(|g| (g, (0..2).map(|i| level(&format!("{}_{i}.txt", g.id()))).collect()))
            .collect();
        let mut fixes = 0;
        for seed in 0..100u64 {
            let game = GameKind::ALL[seed as usize % 3];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (l, report) = levelgen::window_augment(&sources[&game], (3, 3), (9, 9), &mut rng).unwrap();
            fixes += report.fixes.len();
            check_repaired(&l);
            let (again, second) = levelgen::repair(&l).unwrap();
            assert!(second.is_empty(), "seed {seed}: repair not idempotent: {second}");
            assert_eq!(again, l);
        }
        format!("mirror on {} levels, 100 augmented levels repaired ({fixes} fixes)", shipped.len())
    });
}

fn files_under(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn criterion_11_harness_and_ranking() {
    criterion(11, "harness determinism and ranking", Duration::from_secs(60), || {
        let levels = [level("golddigger_3.txt"), level("treasurekeeper_4.txt"), level("waterpuzzle_2.txt")];
        let agents = || -> Vec<Box<dyn Agent>> {
            vec![
                Box::new(CycleAgent::new("sweeper", vec![Action::Right, Action::Down, Action::Left, Action::Down])),
                Box::new(CycleAgent::new("digger", vec![Action::Use, Action::Up, Action::Right])),
            ]
        };
        let tmp = tempfile::tempdir().unwrap();
        let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
        let first = arena::run_competition(agents(), &levels, CompetitionConfig::default(), &a).unwrap();
        arena::run_competition(agents(), &levels, CompetitionConfig::default(), &b).unwrap();
        assert_eq!(first.records.len(), 3 * 3 * 20);
        let (fa, fb) = (files_under(&a), files_under(&b));
        assert_eq!(fa.len(), 5);
        assert_eq!(fa, fb, "reports differ between runs");

        let r = |agent: &str, wins, mean| LevelResult { agent: agent.into(), wins, mean, std: 0.0, mean_ticks: 100.0 };
        let ranked = rank_level(&[r("agent1", 5, 10.0), r("agent2", 5, 12.0), r("agent3", 2, 30.0)]).unwrap();
        let got: Vec<(&str, u32)> = ranked.iter().map(|x| (x.result.agent.as_str(), x.points)).collect();
        assert_eq!(got, [("agent2", 25), ("agent1", 18), ("agent3", 15)]);

        let table = accumulate((0..9).map(|i| (format!("level{i}"), rank_level(&[r("solo", 1, 0.0)]).unwrap())).collect());
        assert_eq!(table.standings.len(), 1);
        assert_eq!(table.standings[0].points, 225);
        format!("{} report files identical across reruns, fixture points 25/18/15, 9-level total 225", fa.len())
    });
}

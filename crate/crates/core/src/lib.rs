//! General video game learning arena: three native tile games, tile-vector
//! observation encoding, a small convolutional Q-network trained with DQN,
//! level perturbation tools and a competition evaluation harness.

pub mod arena;
pub mod config;
pub mod game;
pub mod grid;
pub mod level;
pub mod levelgen;
pub mod nn;
pub mod obs;
pub mod policy;
pub mod tiles;
pub mod trainer;

pub use config::{Action, GameConfig, GameKind, TileKind};
pub use game::{GameState, Status, StepResult};
pub use grid::{Grid, Pos};
pub use level::Level;
pub use nn::{ArcaneNet, NetConfig, Variant};
pub use obs::ObservationPair;
pub use tiles::{RgbImage, TileCatalog};

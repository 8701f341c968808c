//! Tile catalog: reference vectors, nearest-tile matching, and the
//! grid <-> pixel conversions built on them.
//!
//! A reference vector samples ten pixels of a 10x10 tile: row 3 at columns
//! 0, 2, 4, 6, 8 followed by column 4 at rows 0, 2, 4, 6, 8. Each sample is
//! the mean of the pixel's three channels. Decoding a screen picks, for
//! every 10x10 block, the catalog entry with the smallest L1 distance.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Grid, Pos};

pub const TILE_SIZE: usize = 10;
pub const REFVEC_LEN: usize = 10;
/// Upper bound on distinct tile codes in one catalog (one-hot channel count).
pub const MAX_CODES: usize = 16;
/// Minimum pairwise L1 distance between reference vectors of a catalog.
pub const MIN_MARGIN: f64 = 10.0;

/// Code reserved for blank space outside the game screen.
pub const BLANK: u8 = 0;

pub type Rgb = [u8; 3];

#[derive(Debug, Error)]
pub enum TileError {
    #[error("catalog holds {0} tiles, at most {MAX_CODES} allowed")]
    TooManyTiles(usize),
    #[error("catalog is empty")]
    EmptyCatalog,
    #[error("tiles {a} and {b} are {distance} apart, below the decoding margin {MIN_MARGIN}")]
    MarginViolated { a: u8, b: u8, distance: f64 },
    #[error("catalog entry {index} has code {code}, expected {index}")]
    BadCode { index: usize, code: u8 },
    #[error("tile {code} pixel data must be 10x10x3")]
    BadPixels { code: u8 },
    #[error("tile {code} stored reference vector disagrees with its pixels")]
    RefvecMismatch { code: u8 },
    #[error("unknown tile code {code} at cell {pos}")]
    UnknownCode { code: u8, pos: Pos },
    #[error("image of {width}x{height} px is not a whole number of 10x10 tiles")]
    NotTileAligned { width: usize, height: usize },
    #[error("catalog format: {0}")]
    Format(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A fixed 10x10 RGB tile.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TileImage {
    pixels: [[Rgb; TILE_SIZE]; TILE_SIZE],
}

impl TileImage {
    pub fn new(pixels: [[Rgb; TILE_SIZE]; TILE_SIZE]) -> Self {
        Self { pixels }
    }

    pub fn filled(color: Rgb) -> Self {
        Self { pixels: [[color; TILE_SIZE]; TILE_SIZE] }
    }

    pub fn pixel(&self, row: usize, col: usize) -> Rgb {
        self.pixels[row][col]
    }

    pub fn set_pixel(&mut self, row: usize, col: usize, rgb: Rgb) {
        self.pixels[row][col] = rgb;
    }

    pub fn pixels(&self) -> &[[Rgb; TILE_SIZE]; TILE_SIZE] {
        &self.pixels
    }
}

/// Ten channel-averaged pixel samples of one tile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefVector(pub [f64; REFVEC_LEN]);

impl RefVector {
    pub fn values(&self) -> &[f64; REFVEC_LEN] {
        &self.0
    }

    pub fn manhattan(&self, other: &RefVector) -> f64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| (a - b).abs()).sum()
    }
}

fn channel_mean(p: Rgb) -> f64 {
    (f64::from(p[0]) + f64::from(p[1]) + f64::from(p[2])) / 3.0
}

/// Sampled pixel coordinates inside a tile, in reference-vector order.
const SAMPLE_POINTS: [(usize, usize); REFVEC_LEN] = [
    (3, 0),
    (3, 2),
    (3, 4),
    (3, 6),
    (3, 8),
    (0, 4),
    (2, 4),
    (4, 4),
    (6, 4),
    (8, 4),
];

pub fn build_reference_vector(tile: &TileImage) -> RefVector {
    refvec_with(|r, c| tile.pixel(r, c))
}

fn refvec_with(pixel: impl Fn(usize, usize) -> Rgb) -> RefVector {
    let mut v = [0.0; REFVEC_LEN];
    for (slot, &(r, c)) in v.iter_mut().zip(SAMPLE_POINTS.iter()) {
        *slot = channel_mean(pixel(r, c));
    }
    RefVector(v)
}

/// Row-major RGB raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, pixels: vec![[0, 0, 0]; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `(height, width)` in pixels.
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn get(&self, row: usize, col: usize) -> Rgb {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, rgb: Rgb) {
        self.pixels[row * self.width + col] = rgb;
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [Rgb] {
        &mut self.pixels
    }

    /// Copy of the 10x10 block whose top-left tile cell is `(tile_row, tile_col)`.
    pub fn block(&self, tile_row: usize, tile_col: usize) -> TileImage {
        let mut px = [[[0u8; 3]; TILE_SIZE]; TILE_SIZE];
        for (r, row) in px.iter_mut().enumerate() {
            for (c, p) in row.iter_mut().enumerate() {
                *p = self.get(tile_row * TILE_SIZE + r, tile_col * TILE_SIZE + c);
            }
        }
        TileImage::new(px)
    }

    /// Plain (ASCII) portable pixmap, for debugging.
    pub fn to_ppm(&self) -> String {
        let mut out = format!("P3\n{} {}\n255\n", self.width, self.height);
        for row in self.pixels.chunks(self.width.max(1)) {
            let line: Vec<String> =
                row.iter().map(|p| format!("{} {} {}", p[0], p[1], p[2])).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CatalogEntry {
    pub code: u8,
    pub name: String,
    pub image: TileImage,
    pub refvec: RefVector,
}

/// Indexed set of tiles. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct TileCatalog {
    entries: Vec<CatalogEntry>,
}

impl TileCatalog {
    /// Assigns codes `0..n` in the given order and validates the catalog.
    pub fn new(tiles: Vec<(String, TileImage)>) -> Result<Self, TileError> {
        if tiles.is_empty() {
            return Err(TileError::EmptyCatalog);
        }
        if tiles.len() > MAX_CODES {
            return Err(TileError::TooManyTiles(tiles.len()));
        }
        let entries: Vec<CatalogEntry> = tiles
            .into_iter()
            .enumerate()
            .map(|(i, (name, image))| {
                let refvec = build_reference_vector(&image);
                CatalogEntry { code: i as u8, name, image, refvec }
            })
            .collect();
        for (i, a) in entries.iter().enumerate() {
            for b in &entries[i + 1..] {
                let distance = a.refvec.manhattan(&b.refvec);
                if distance < MIN_MARGIN {
                    return Err(TileError::MarginViolated { a: a.code, b: b.code, distance });
                }
            }
        }
        Ok(Self { entries })
    }

    /// The tile set shared by all three games.
    pub fn builtin() -> Self {
        let tiles = BUILTIN_TILES
            .iter()
            .map(|&(name, base)| ((*name).to_string(), builtin_tile(name, base)))
            .collect();
        Self::new(tiles).expect("builtin catalog is valid")
    }

    /// Process-wide instance of [`TileCatalog::builtin`].
    pub fn shared() -> &'static TileCatalog {
        static SHARED: OnceLock<TileCatalog> = OnceLock::new();
        SHARED.get_or_init(TileCatalog::builtin)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn entry(&self, code: u8) -> Option<&CatalogEntry> {
        self.entries.get(code as usize)
    }

    pub fn code_of(&self, name: &str) -> Option<u8> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.code)
    }

    /// Smallest pairwise reference-vector distance.
    pub fn margin(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.entries.iter().enumerate() {
            for b in &self.entries[i + 1..] {
                best = best.min(a.refvec.manhattan(&b.refvec));
            }
        }
        best
    }

    /// Nearest entry by L1 distance; ties go to the lowest code.
    pub fn match_vector(&self, v: &RefVector) -> u8 {
        let mut best_code = self.entries[0].code;
        let mut best = f64::INFINITY;
        for e in &self.entries {
            let d = e.refvec.manhattan(v);
            if d < best {
                best = d;
                best_code = e.code;
            }
        }
        best_code
    }

    pub fn match_tile(&self, block: &TileImage) -> u8 {
        self.match_vector(&build_reference_vector(block))
    }

    pub fn to_json(&self) -> String {
        let file = CatalogFile {
            version: 1,
            tiles: self
                .entries
                .iter()
                .map(|e| CatalogFileEntry {
                    code: e.code,
                    name: e.name.clone(),
                    pixels: e.image.pixels().iter().map(|row| row.to_vec()).collect(),
                    refvec: e.refvec.0.to_vec(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("catalog serializes")
    }

    /// Parses a catalog, recomputing every reference vector and checking it
    /// against the stored one.
    pub fn from_json(text: &str) -> Result<Self, TileError> {
        let file: CatalogFile = serde_json::from_str(text)?;
        let mut tiles = Vec::with_capacity(file.tiles.len());
        for (index, t) in file.tiles.iter().enumerate() {
            if t.code as usize != index {
                return Err(TileError::BadCode { index, code: t.code });
            }
            if t.pixels.len() != TILE_SIZE || t.pixels.iter().any(|r| r.len() != TILE_SIZE) {
                return Err(TileError::BadPixels { code: t.code });
            }
            let mut px = [[[0u8; 3]; TILE_SIZE]; TILE_SIZE];
            for (r, row) in t.pixels.iter().enumerate() {
                px[r].copy_from_slice(row);
            }
            let image = TileImage::new(px);
            let recomputed = build_reference_vector(&image);
            let stored_ok = t.refvec.len() == REFVEC_LEN
                && t.refvec.iter().zip(recomputed.0.iter()).all(|(a, b)| (a - b).abs() < 1e-9);
            if !stored_ok {
                return Err(TileError::RefvecMismatch { code: t.code });
            }
            tiles.push((t.name.clone(), image));
        }
        Self::new(tiles)
    }

    pub fn load(path: &Path) -> Result<Self, TileError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), TileError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct CatalogFile {
    version: u32,
    tiles: Vec<CatalogFileEntry>,
}

#[derive(Serialize, Deserialize)]
struct CatalogFileEntry {
    code: u8,
    name: String,
    pixels: Vec<Vec<Rgb>>,
    refvec: Vec<f64>,
}

/// Base colours of the shipped tiles. Channel means are spaced 25 apart, so
/// flat tiles sit at least 250 apart in L1.
const BUILTIN_TILES: &[(&str, Rgb)] = &[
    ("blank", [0, 0, 0]),
    ("floor", [36, 26, 13]),
    ("monster", [40, 110, 0]),
    ("wall", [75, 75, 75]),
    ("obstacle", [140, 100, 60]),
    ("avatar", [235, 70, 70]),
    ("door", [180, 120, 150]),
    ("box", [215, 170, 140]),
    ("key", [250, 220, 130]),
    ("jewel", [190, 240, 245]),
];

/// Flat tile with a darker diagonal accent that avoids row 3 and column 4,
/// so the accent never reaches the reference vector.
fn builtin_tile(name: &str, base: Rgb) -> TileImage {
    let mut tile = TileImage::filled(base);
    if name == "blank" {
        return tile;
    }
    let accent = base.map(|c| (u16::from(c) * 3 / 5) as u8);
    for r in 0..TILE_SIZE {
        for c in 0..TILE_SIZE {
            if r != 3 && c != 4 && (r + c) % 3 == 0 {
                tile.set_pixel(r, c, accent);
            }
        }
    }
    tile
}

/// Paints each cell with its catalog image.
pub fn render(grid: &Grid, catalog: &TileCatalog) -> Result<RgbImage, TileError> {
    let mut image = RgbImage::new(grid.cols() * TILE_SIZE, grid.rows() * TILE_SIZE);
    render_into(grid, catalog, &mut image)?;
    Ok(image)
}

/// Like [`render`] but reuses `image`, resizing it if needed.
pub fn render_into(grid: &Grid, catalog: &TileCatalog, image: &mut RgbImage) -> Result<(), TileError> {
    let (w, h) = (grid.cols() * TILE_SIZE, grid.rows() * TILE_SIZE);
    if image.width != w || image.height != h {
        *image = RgbImage::new(w, h);
    }
    for pos in grid.positions() {
        let code = grid.get(pos);
        let entry = catalog.entry(code).ok_or(TileError::UnknownCode { code, pos })?;
        for (r, row) in entry.image.pixels().iter().enumerate() {
            let start = (pos.row * TILE_SIZE + r) * w + pos.col * TILE_SIZE;
            image.pixels[start..start + TILE_SIZE].copy_from_slice(row);
        }
    }
    Ok(())
}

/// Splits the image into 10x10 blocks and matches each one.
pub fn decode_screen(image: &RgbImage, catalog: &TileCatalog) -> Result<Grid, TileError> {
    if !image.width.is_multiple_of(TILE_SIZE) || !image.height.is_multiple_of(TILE_SIZE) {
        return Err(TileError::NotTileAligned { width: image.width, height: image.height });
    }
    let rows = image.height / TILE_SIZE;
    let cols = image.width / TILE_SIZE;
    let mut codes = Vec::with_capacity(rows * cols);
    for tr in 0..rows {
        for tc in 0..cols {
            let v = refvec_with(|r, c| image.get(tr * TILE_SIZE + r, tc * TILE_SIZE + c));
            codes.push(catalog.match_vector(&v));
        }
    }
    Ok(Grid::from_codes(rows, cols, codes))
}

/// Human-readable one-line summary per tile, used by the CLI.
pub fn describe(catalog: &TileCatalog) -> String {
    let mut out = String::new();
    for e in catalog.entries() {
        let v: Vec<String> = e.refvec.0.iter().map(|x| format!("{x:.2}")).collect();
        let _ = writeln!(out, "{:>2} {:<9} [{}]", e.code, e.name, v.join(", "));
    }
    out
}

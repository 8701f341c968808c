//! Screen -> avatar-centred global/local tile-code observations.
//!
//! The global observation is a `(2H-1) x (2W-1)` window centred on the
//! avatar, so the whole screen stays inside it wherever the avatar stands.
//! The local observation is the 5x5 window around the avatar. Cells outside
//! the screen hold code 0.

use thiserror::Error;

use crate::config::TileKind;
use crate::grid::{Grid, Pos};
use crate::tiles::{decode_screen, RgbImage, TileCatalog, TileError, BLANK, MAX_CODES};

/// Side of the local observation window, in tiles.
pub const LOCAL_SIZE: usize = 5;
/// One-hot channel count.
pub const CHANNELS: usize = MAX_CODES;

#[derive(Debug, Error)]
pub enum ObsError {
    #[error("avatar missing from screen")]
    AvatarMissing,
    #[error("avatar ambiguous: found at {0:?}")]
    AvatarAmbiguous(Vec<Pos>),
    #[error("code {code} at {pos} does not fit in {channels} one-hot channels")]
    ChannelOverflow { code: u8, pos: Pos, channels: usize },
    #[error("catalog has no avatar tile")]
    NoAvatarTile,
    #[error(transparent)]
    Tile(#[from] TileError),
}

pub fn locate_avatar(grid: &Grid, avatar_code: u8) -> Result<Pos, ObsError> {
    let found = grid.find_all(avatar_code);
    match found.len() {
        0 => Err(ObsError::AvatarMissing),
        1 => Ok(found[0]),
        _ => Err(ObsError::AvatarAmbiguous(found)),
    }
}

/// `size.0 x size.1` window whose centre cell is `center`, padded with blank.
fn window(grid: &Grid, center: Pos, size: (usize, usize)) -> Grid {
    let (h, w) = size;
    let (cr, cc) = ((h / 2) as isize, (w / 2) as isize);
    let mut codes = Vec::with_capacity(h * w);
    for i in 0..h as isize {
        for j in 0..w as isize {
            let r = i - cr + center.row as isize;
            let c = j - cc + center.col as isize;
            codes.push(grid.get_checked(r, c).unwrap_or(BLANK));
        }
    }
    Grid::from_codes(h, w, codes)
}

pub fn global_dims(grid_dims: (usize, usize)) -> (usize, usize) {
    (2 * grid_dims.0 - 1, 2 * grid_dims.1 - 1)
}

pub fn transform_global(grid: &Grid, avatar: Pos) -> Grid {
    window(grid, avatar, global_dims(grid.dims()))
}

pub fn transform_local(grid: &Grid, avatar: Pos) -> Grid {
    window(grid, avatar, (LOCAL_SIZE, LOCAL_SIZE))
}

/// Dense `rows x cols x channels` one-hot tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OneHot {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    data: Vec<u8>,
}

impl OneHot {
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.rows, self.cols, self.channels)
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> u8 {
        self.data[(i * self.cols + j) * self.channels + k]
    }

    pub fn cell(&self, i: usize, j: usize) -> &[u8] {
        let start = (i * self.cols + j) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Channel-major `channels x rows x cols` copy as reals.
    pub fn to_planes(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.data.len()];
        let plane = self.rows * self.cols;
        for p in 0..plane {
            for k in 0..self.channels {
                out[k * plane + p] = f64::from(self.data[p * self.channels + k]);
            }
        }
        out
    }
}

pub fn one_hot(codes: &Grid, channels: usize) -> Result<OneHot, ObsError> {
    let mut data = vec![0u8; codes.rows() * codes.cols() * channels];
    for (i, pos) in codes.positions().enumerate() {
        let code = codes.get(pos);
        if code as usize >= channels {
            return Err(ObsError::ChannelOverflow { code, pos, channels });
        }
        data[i * channels + code as usize] = 1;
    }
    Ok(OneHot { rows: codes.rows(), cols: codes.cols(), channels, data })
}

/// Global and local observations of one frame, as tile codes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ObservationPair {
    pub global: Grid,
    pub local: Grid,
}

impl ObservationPair {
    pub fn global_onehot(&self) -> OneHot {
        one_hot(&self.global, CHANNELS).expect("codes validated at construction")
    }

    pub fn local_onehot(&self) -> OneHot {
        one_hot(&self.local, CHANNELS).expect("codes validated at construction")
    }

    /// ASCII dump of both code matrices.
    pub fn dump(&self) -> String {
        format!("GO {}x{}\n{}LO {}x{}\n{}",
            self.global.rows(), self.global.cols(), self.global.to_ascii(),
            self.local.rows(), self.local.cols(), self.local.to_ascii())
    }
}

/// Builds the observation pair straight from a decoded code grid.
pub fn observe_grid(grid: &Grid, avatar_code: u8) -> Result<ObservationPair, ObsError> {
    if let Some(pos) = grid.positions().find(|&p| grid.get(p) as usize >= CHANNELS) {
        return Err(ObsError::ChannelOverflow { code: grid.get(pos), pos, channels: CHANNELS });
    }
    let avatar = locate_avatar(grid, avatar_code)?;
    Ok(ObservationPair { global: transform_global(grid, avatar), local: transform_local(grid, avatar) })
}

/// Full pixel path: decode, locate, transform.
pub fn observe(screen: &RgbImage, catalog: &TileCatalog) -> Result<ObservationPair, ObsError> {
    let avatar_code = catalog.code_of(TileKind::Avatar.name()).ok_or(ObsError::NoAvatarTile)?;
    let grid = decode_screen(screen, catalog)?;
    observe_grid(&grid, avatar_code)
}

#[cfg(test)]
mod tests {
    use super::*;

    const AV: u8 = 5;

    #[test]
    fn locate_errors() {
        let mut g = Grid::filled(3, 3, 1);
        assert!(matches!(locate_avatar(&g, AV), Err(ObsError::AvatarMissing)));
        g.set(Pos::new(1, 2), AV);
        assert_eq!(locate_avatar(&g, AV).unwrap(), Pos::new(1, 2));
        g.set(Pos::new(0, 0), AV);
        assert!(matches!(locate_avatar(&g, AV), Err(ObsError::AvatarAmbiguous(_))));
    }

    #[test]
    fn global_shape_from_pixel_formula() {
        // 90x130 px screen -> 170x250 px global view -> 17x25 tiles.
        let mut g = Grid::filled(9, 13, 1);
        g.set(Pos::new(4, 4), AV);
        let go = transform_global(&g, Pos::new(4, 4));
        assert_eq!(go.dims(), ((2 * 90 - 10) / 10, (2 * 130 - 10) / 10));
        assert_eq!(go.get(Pos::new(8, 12)), AV);
    }

    #[test]
    fn corner_avatar_fills_bottom_right() {
        let mut g = Grid::filled(3, 4, 1);
        g.set(Pos::new(0, 0), AV);
        let go = transform_global(&g, Pos::new(0, 0));
        for p in go.positions() {
            let inside = p.row >= 2 && p.col >= 3;
            assert_eq!(go.get(p) != BLANK, inside, "{p}");
        }
        let lo = transform_local(&g, Pos::new(0, 0));
        for p in lo.positions() {
            if p.row < 2 || p.col < 2 {
                assert_eq!(lo.get(p), BLANK);
            }
        }
        assert_eq!(lo.get(Pos::new(2, 2)), AV);
    }

    #[test]
    fn translation_equivariance() {
        // Two 7x7 grids whose content is the same pattern shifted by (1,2),
        // with the avatar moving along: GO codes match on the overlap.
        let pattern = |r: isize, c: isize| -> u8 { ((r * 3 + c * 5).rem_euclid(4) + 1) as u8 };
        let build = |dr: isize, dc: isize| {
            let mut g = Grid::filled(7, 7, 1);
            for p in g.positions().collect::<Vec<_>>() {
                g.set(p, pattern(p.row as isize - dr, p.col as isize - dc));
            }
            let av = Pos::new((2 + dr) as usize, (2 + dc) as usize);
            g.set(av, AV);
            (g, av)
        };
        let (a, pa) = build(0, 0);
        let (b, pb) = build(1, 2);
        let ga = transform_global(&a, pa);
        let gb = transform_global(&b, pb);
        for p in ga.positions() {
            // Cells that are on-screen in both views must agree.
            let (ra, ca) = (p.row as isize - 6 + pa.row as isize, p.col as isize - 6 + pa.col as isize);
            let (rb, cb) = (p.row as isize - 6 + pb.row as isize, p.col as isize - 6 + pb.col as isize);
            if a.get_checked(ra, ca).is_some() && b.get_checked(rb, cb).is_some() {
                assert_eq!(ga.get(p), gb.get(p), "{p}");
            }
        }
    }

    #[test]
    fn one_hot_counts_and_overflow() {
        let g = Grid::from_rows(&[vec![0, 3, 3], vec![15, 3, 0]]);
        let oh = one_hot(&g, 16).unwrap();
        assert_eq!(oh.shape(), (2, 3, 16));
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(oh.cell(i, j).iter().map(|&x| u32::from(x)).sum::<u32>(), 1);
            }
        }
        for k in 0..16 {
            let total: usize = (0..2).flat_map(|i| (0..3).map(move |j| (i, j))).map(|(i, j)| oh.get(i, j, k) as usize).sum();
            assert_eq!(total, g.count(k as u8));
        }
        assert_eq!(one_hot(&Grid::filled(1, 1, 0), 16).unwrap().cell(0, 0)[0], 1);
        assert!(matches!(one_hot(&Grid::filled(1, 1, 16), 16), Err(ObsError::ChannelOverflow { code: 16, .. })));
    }

    #[test]
    fn planes_layout() {
        let g = Grid::from_rows(&[vec![1, 2]]);
        let p = one_hot(&g, 3).unwrap().to_planes();
        assert_eq!(p, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
    }
}

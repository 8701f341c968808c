use std::fmt;

/// A cell coordinate in tile units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Pos {
    pub row: usize,
    pub col: usize,
}

impl Pos {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// Offset by a signed delta, `None` if the result would leave `rows x cols`.
    pub fn offset(self, dr: isize, dc: isize, rows: usize, cols: usize) -> Option<Pos> {
        let r = self.row as isize + dr;
        let c = self.col as isize + dc;
        if r < 0 || c < 0 || r >= rows as isize || c >= cols as isize {
            None
        } else {
            Some(Pos::new(r as usize, c as usize))
        }
    }

    pub fn manhattan(self, other: Pos) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

/// Row-major matrix of tile codes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Grid {
    rows: usize,
    cols: usize,
    codes: Vec<u8>,
}

impl Grid {
    pub fn filled(rows: usize, cols: usize, code: u8) -> Self {
        Self { rows, cols, codes: vec![code; rows * cols] }
    }

    /// Panics if `codes.len() != rows * cols`.
    pub fn from_codes(rows: usize, cols: usize, codes: Vec<u8>) -> Self {
        assert_eq!(codes.len(), rows * cols, "grid data does not match {rows}x{cols}");
        Self { rows, cols, codes }
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Self {
        let h = rows.len();
        let w = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == w), "ragged rows");
        Self::from_codes(h, w, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn get(&self, pos: Pos) -> u8 {
        self.codes[pos.row * self.cols + pos.col]
    }

    pub fn get_checked(&self, row: isize, col: isize) -> Option<u8> {
        if row < 0 || col < 0 || row >= self.rows as isize || col >= self.cols as isize {
            None
        } else {
            Some(self.codes[row as usize * self.cols + col as usize])
        }
    }

    pub fn set(&mut self, pos: Pos, code: u8) {
        self.codes[pos.row * self.cols + pos.col] = code;
    }

    pub fn contains(&self, pos: Pos) -> bool {
        pos.row < self.rows && pos.col < self.cols
    }

    pub fn positions(&self) -> impl Iterator<Item = Pos> + '_ {
        (0..self.rows).flat_map(move |r| (0..self.cols).map(move |c| Pos::new(r, c)))
    }

    /// Positions holding `code`, row-major.
    pub fn find_all(&self, code: u8) -> Vec<Pos> {
        self.positions().filter(|&p| self.get(p) == code).collect()
    }

    pub fn count(&self, code: u8) -> usize {
        self.codes.iter().filter(|&&c| c == code).count()
    }

    pub fn row(&self, r: usize) -> &[u8] {
        &self.codes[r * self.cols..(r + 1) * self.cols]
    }

    /// Number of cells whose codes differ. Grids must share dimensions.
    pub fn hamming(&self, other: &Grid) -> usize {
        assert_eq!(self.dims(), other.dims());
        self.codes.iter().zip(&other.codes).filter(|(a, b)| a != b).count()
    }

    /// Plain text dump, codes as space separated hex digits.
    pub fn to_ascii(&self) -> String {
        let mut out = String::with_capacity(self.rows * (self.cols * 2 + 1));
        for r in 0..self.rows {
            let line: Vec<String> = self.row(r).iter().map(|c| format!("{c:x}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

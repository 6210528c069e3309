//! Bitboard cell sets over a bounded rectangular grid.
//!
//! Cells are indexed row-major from the floor upward: `index = y * width + x`,
//! with `y = 0` the floor row. A grid may hold at most 128 cells.

use serde::{Deserialize, Serialize};

/// Largest number of cells a [`Grid`] can address.
pub const MAX_CELLS: usize = 128;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellSet(u128);

impl CellSet {
    pub const EMPTY: CellSet = CellSet(0);

    pub fn from_bits(bits: u128) -> Self {
        CellSet(bits)
    }

    pub fn bits(self) -> u128 {
        self.0
    }

    pub fn single(index: usize) -> Self {
        CellSet(1u128 << index)
    }

    pub fn contains(self, index: usize) -> bool {
        index < MAX_CELLS && self.0 & (1u128 << index) != 0
    }

    pub fn insert(&mut self, index: usize) {
        self.0 |= 1u128 << index;
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: CellSet) -> CellSet {
        CellSet(self.0 | other.0)
    }

    pub fn intersection(self, other: CellSet) -> CellSet {
        CellSet(self.0 & other.0)
    }

    pub fn difference(self, other: CellSet) -> CellSet {
        CellSet(self.0 & !other.0)
    }

    pub fn intersects(self, other: CellSet) -> bool {
        self.0 & other.0 != 0
    }

    pub fn is_subset(self, other: CellSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// Indices in ascending order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }

    pub fn lowest(self) -> Option<usize> {
        (self.0 != 0).then(|| self.0.trailing_zeros() as usize)
    }
}

/// Grid dimensions plus the precomputed column masks used for neighbour shifts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "GridDims", into = "GridDims")]
pub struct Grid {
    width: i32,
    height: i32,
    full: u128,
    left_col: u128,
    right_col: u128,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
struct GridDims {
    width: i32,
    height: i32,
}

impl TryFrom<GridDims> for Grid {
    type Error = String;
    fn try_from(d: GridDims) -> Result<Self, String> {
        Grid::new(d.width, d.height)
    }
}

impl From<Grid> for GridDims {
    fn from(g: Grid) -> Self {
        GridDims {
            width: g.width,
            height: g.height,
        }
    }
}

impl Grid {
    pub fn new(width: i32, height: i32) -> Result<Self, String> {
        if width < 1 || height < 1 {
            return Err(format!("grid {width}x{height} has no cells"));
        }
        let cells = (width as usize) * (height as usize);
        if cells > MAX_CELLS {
            return Err(format!(
                "grid {width}x{height} has {cells} cells, more than the supported {MAX_CELLS}"
            ));
        }
        let full = if cells == MAX_CELLS {
            u128::MAX
        } else {
            (1u128 << cells) - 1
        };
        let mut left_col = 0u128;
        let mut right_col = 0u128;
        for y in 0..height {
            left_col |= 1u128 << (y * width) as usize;
            right_col |= 1u128 << (y * width + width - 1) as usize;
        }
        Ok(Grid {
            width,
            height,
            full,
            left_col,
            right_col,
        })
    }

    pub fn width(&self) -> i32 {
        self.width
    }

    pub fn height(&self) -> i32 {
        self.height
    }

    pub fn contains(&self, x: i32, y: i32) -> bool {
        (0..self.width).contains(&x) && (0..self.height).contains(&y)
    }

    pub fn index(&self, x: i32, y: i32) -> Option<usize> {
        self.contains(x, y).then(|| (y * self.width + x) as usize)
    }

    pub fn coords(&self, index: usize) -> (i32, i32) {
        let i = index as i32;
        (i % self.width, i / self.width)
    }

    pub fn all(&self) -> CellSet {
        CellSet(self.full)
    }

    pub fn row(&self, y: i32) -> CellSet {
        if !(0..self.height).contains(&y) {
            return CellSet::EMPTY;
        }
        let row = (1u128 << self.width as usize) - 1;
        CellSet(row << (y * self.width) as usize)
    }

    /// Cells sharing an edge with some cell of `set` (excluding `set` itself
    /// unless a member neighbours another member).
    pub fn neighbours(&self, set: CellSet) -> CellSet {
        let s = set.0;
        let w = self.width as u32;
        let east = (s & !self.right_col) << 1;
        let west = (s & !self.left_col) >> 1;
        let north = s.checked_shl(w).unwrap_or(0);
        let south = s >> w;
        CellSet((east | west | north | south) & self.full)
    }

    /// Cells of `within` reachable from `seeds` through 4-connected steps inside `within`.
    pub fn flood(&self, seeds: CellSet, within: CellSet) -> CellSet {
        let mut reached = seeds.intersection(within);
        loop {
            let next = reached.union(self.neighbours(reached)).intersection(within);
            if next == reached {
                return reached;
            }
            reached = next;
        }
    }

    pub fn is_connected(&self, set: CellSet) -> bool {
        match set.lowest() {
            None => true,
            Some(i) => self.flood(CellSet::single(i), set) == set,
        }
    }
}

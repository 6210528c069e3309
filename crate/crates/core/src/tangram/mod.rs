//! The Sticky Tangram construction task.
//!
//! A target silhouette is rebuilt block by block on a discrete grid. Every
//! placement must lie inside the silhouette, must not overlap earlier blocks,
//! must rest on the floor (first block) or share an edge with the construction
//! (later blocks), and must not cut off a region of the silhouette that no
//! later block could reach. Each inventory block is used at most once.

mod cells;
mod shapes;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::habits::{ActionToken, Vocab};

pub use cells::{CellSet, Grid, MAX_CELLS};
pub use shapes::{BlockShape, Inventory};

/// Default grid width in cells.
pub const DEFAULT_WIDTH: i32 = 10;
/// Default grid height in cells.
pub const DEFAULT_HEIGHT: i32 = 6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleViolation {
    #[error("unknown block {0}")]
    UnknownBlock(u8),
    #[error("block reuse: block {0} is already placed")]
    BlockReuse(u8),
    #[error("placement leaves the grid")]
    OutOfGrid,
    #[error("placement extends outside the silhouette")]
    OutsideSilhouette,
    #[error("placement overlaps a placed block")]
    Overlap,
    #[error("first block must rest on the floor")]
    NotOnFloor,
    #[error("block does not touch the construction")]
    Floating,
    #[error("placement cuts off a part of the silhouette that cannot be reached")]
    DisjointRemainder,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TangramError {
    #[error("invalid shape {name}: {reason}")]
    BadShape { name: String, reason: String },
    #[error("inventory is empty")]
    EmptyInventory,
    #[error("inventory has {0} blocks; at most 16 are supported")]
    InventoryTooLarge(usize),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("invalid silhouette: {0}")]
    BadSilhouette(String),
    #[error("silhouette is {found:?} but the environment grid is {expected:?}")]
    GridMismatch {
        expected: (i32, i32),
        found: (i32, i32),
    },
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Rule(#[from] RuleViolation),
}

/// A block placed with its anchor cell at an absolute grid position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Placement {
    pub block: u8,
    pub x: i32,
    pub y: i32,
}

impl Placement {
    pub fn new(block: u8, x: i32, y: i32) -> Self {
        Placement { block, x, y }
    }
}

/// The target shape to rebuild.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Silhouette {
    grid: Grid,
    mask: CellSet,
    floor_y: i32,
}

#[derive(Serialize, Deserialize)]
struct SilhouetteRepr {
    width: i32,
    height: i32,
    cells: Vec<(i32, i32)>,
}

impl Serialize for Silhouette {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        SilhouetteRepr {
            width: self.grid.width(),
            height: self.grid.height(),
            cells: self.cells(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Silhouette {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = SilhouetteRepr::deserialize(d)?;
        let grid = Grid::new(r.width, r.height).map_err(serde::de::Error::custom)?;
        Silhouette::from_cells(grid, &r.cells).map_err(serde::de::Error::custom)
    }
}

impl Silhouette {
    pub fn from_mask(grid: Grid, mask: CellSet) -> Result<Self, TangramError> {
        if mask.is_empty() {
            return Err(TangramError::BadSilhouette("empty mask".into()));
        }
        if !mask.is_subset(grid.all()) {
            return Err(TangramError::BadSilhouette("mask leaves the grid".into()));
        }
        if !grid.is_connected(mask) {
            return Err(TangramError::BadSilhouette(
                "mask is not 4-connected".into(),
            ));
        }
        let floor_y = mask
            .iter()
            .map(|i| grid.coords(i).1)
            .min()
            .expect("mask is non-empty");
        Ok(Silhouette {
            grid,
            mask,
            floor_y,
        })
    }

    pub fn from_cells(grid: Grid, cells: &[(i32, i32)]) -> Result<Self, TangramError> {
        let mut mask = CellSet::EMPTY;
        for &(x, y) in cells {
            let i = grid
                .index(x, y)
                .ok_or_else(|| TangramError::BadSilhouette(format!("cell ({x},{y}) off grid")))?;
            mask.insert(i);
        }
        Silhouette::from_mask(grid, mask)
    }

    /// Parses rows of `#` (inside) and `.` (outside), top row first.
    pub fn from_rows(grid: Grid, rows: &[&str]) -> Result<Self, TangramError> {
        let h = rows.len() as i32;
        let mut cells = Vec::new();
        for (r, row) in rows.iter().enumerate() {
            let y = h - 1 - r as i32;
            for (x, ch) in row.chars().enumerate() {
                if ch == '#' {
                    cells.push((x as i32, y));
                }
            }
        }
        Silhouette::from_cells(grid, &cells)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn mask(&self) -> CellSet {
        self.mask
    }

    pub fn floor_y(&self) -> i32 {
        self.floor_y
    }

    pub fn width(&self) -> i32 {
        self.grid.width()
    }

    pub fn height(&self) -> i32 {
        self.grid.height()
    }

    pub fn cells(&self) -> Vec<(i32, i32)> {
        self.mask.iter().map(|i| self.grid.coords(i)).collect()
    }

    pub fn floor_cells(&self) -> CellSet {
        self.mask.intersection(self.grid.row(self.floor_y))
    }

    /// The leftmost mask cell on the floor row; the reference point for the
    /// first action's token offset.
    pub fn leftmost_floor_cell(&self) -> (i32, i32) {
        let i = self.floor_cells().lowest().expect("floor row is non-empty");
        self.grid.coords(i)
    }
}

/// A silhouette together with the blocks placed so far.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BoardState {
    silhouette: Silhouette,
    placements: Vec<Placement>,
    occupied: CellSet,
    used: u16,
}

impl BoardState {
    pub fn new(silhouette: Silhouette) -> Self {
        BoardState {
            silhouette,
            placements: Vec::new(),
            occupied: CellSet::EMPTY,
            used: 0,
        }
    }

    pub fn silhouette(&self) -> &Silhouette {
        &self.silhouette
    }

    pub fn placements(&self) -> &[Placement] {
        &self.placements
    }

    pub fn occupied(&self) -> CellSet {
        self.occupied
    }

    pub fn is_used(&self, block: u8) -> bool {
        block < 16 && self.used & (1 << block) != 0
    }

    pub fn is_goal(&self) -> bool {
        self.occupied == self.silhouette.mask
    }

    pub fn empty_cells(&self) -> CellSet {
        self.silhouette.mask.difference(self.occupied)
    }
}

/// The environment: grid, inventory and the precomputed placement table.
#[derive(Clone, Debug)]
pub struct Tangram {
    grid: Grid,
    inventory: Inventory,
    /// Per block, every in-grid placement with its cells, ordered by anchor (x, then y).
    table: Vec<Vec<(Placement, CellSet)>>,
}

impl Default for Tangram {
    fn default() -> Self {
        Tangram::new(
            Grid::new(DEFAULT_WIDTH, DEFAULT_HEIGHT).expect("default grid"),
            Inventory::default(),
        )
    }
}

impl Tangram {
    pub fn new(grid: Grid, inventory: Inventory) -> Self {
        let table = (0..inventory.len())
            .map(|b| {
                let shape = &inventory.shapes[b];
                let mut out = Vec::new();
                for x in 0..grid.width() {
                    for y in 0..grid.height() {
                        if let Some(cells) = shape_cells(&grid, shape, x, y) {
                            out.push((Placement::new(b as u8, x, y), cells));
                        }
                    }
                }
                out
            })
            .collect();
        Tangram {
            grid,
            inventory,
            table,
        }
    }

    pub fn with_size(width: i32, height: i32, inventory: Inventory) -> Result<Self, TangramError> {
        let grid = Grid::new(width, height).map_err(TangramError::Grid)?;
        Ok(Tangram::new(grid, inventory))
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn inventory(&self) -> &Inventory {
        &self.inventory
    }

    pub fn num_blocks(&self) -> usize {
        self.inventory.len()
    }

    pub fn vocab(&self) -> Vocab {
        Vocab::new(
            self.inventory.len() as u8,
            self.grid.width(),
            self.grid.height(),
        )
    }

    /// Fresh board for `silhouette`, checking it was drawn on this grid.
    pub fn initial(&self, silhouette: Silhouette) -> Result<BoardState, TangramError> {
        if silhouette.grid() != self.grid {
            return Err(TangramError::GridMismatch {
                expected: (self.grid.width(), self.grid.height()),
                found: (silhouette.width(), silhouette.height()),
            });
        }
        Ok(BoardState::new(silhouette))
    }

    /// Cells covered by `p`, or `None` when the block is unknown or leaves the grid.
    pub fn cells_of(&self, p: Placement) -> Option<CellSet> {
        let shape = self.inventory.shape(p.block)?;
        shape_cells(&self.grid, shape, p.x, p.y)
    }

    /// Blocks not yet placed.
    pub fn remaining_blocks(&self, state: &BoardState) -> usize {
        (0..self.inventory.len() as u8)
            .filter(|&b| !state.is_used(b))
            .count()
    }

    /// Checks every rule for `p` in `state`, returning the covered cells.
    pub fn check(&self, state: &BoardState, p: Placement) -> Result<CellSet, RuleViolation> {
        if p.block as usize >= self.inventory.len() {
            return Err(RuleViolation::UnknownBlock(p.block));
        }
        if state.is_used(p.block) {
            return Err(RuleViolation::BlockReuse(p.block));
        }
        let cells = self.cells_of(p).ok_or(RuleViolation::OutOfGrid)?;
        let sums = self.fillable_sizes(state.used | (1 << p.block));
        self.check_cells(state, cells, &self.grid.neighbours(state.occupied), sums)?;
        Ok(cells)
    }

    /// Bit `k` set iff some subset of the blocks absent from `used` covers `k` cells.
    fn fillable_sizes(&self, used: u16) -> u128 {
        let mut sums = 1u128;
        for (b, shape) in self.inventory.shapes.iter().enumerate() {
            if used & (1 << b) == 0 {
                sums |= sums.checked_shl(shape.size() as u32).unwrap_or(0);
            }
        }
        sums
    }

    fn check_cells(
        &self,
        state: &BoardState,
        cells: CellSet,
        touching: &CellSet,
        fillable: u128,
    ) -> Result<(), RuleViolation> {
        let sil = &state.silhouette;
        if !cells.is_subset(sil.mask) {
            return Err(RuleViolation::OutsideSilhouette);
        }
        if cells.intersects(state.occupied) {
            return Err(RuleViolation::Overlap);
        }
        if state.placements.is_empty() {
            if !cells.intersects(sil.floor_cells()) {
                return Err(RuleViolation::NotOnFloor);
            }
        } else if !cells.intersects(*touching) {
            return Err(RuleViolation::Floating);
        }
        // Every empty region left behind must border the construction and be
        // coverable, by cell count, with the blocks still in the inventory.
        let built = state.occupied.union(cells);
        let mut empty = sil.mask.difference(built);
        let frontier = self.grid.neighbours(built).intersection(empty);
        if self.grid.flood(frontier, empty) != empty {
            return Err(RuleViolation::DisjointRemainder);
        }
        while let Some(i) = empty.lowest() {
            let part = self.grid.flood(CellSet::single(i), empty);
            if fillable & (1u128 << part.len()) == 0 {
                return Err(RuleViolation::DisjointRemainder);
            }
            empty = empty.difference(part);
        }
        Ok(())
    }

    /// Every valid placement, ordered by block id then anchor (x, then y).
    pub fn valid_actions(&self, state: &BoardState) -> Vec<Placement> {
        let touching = self.grid.neighbours(state.occupied);
        let mut out = Vec::new();
        for (b, options) in self.table.iter().enumerate() {
            if state.is_used(b as u8) {
                continue;
            }
            let sums = self.fillable_sizes(state.used | (1 << b));
            for &(p, cells) in options {
                if self.check_cells(state, cells, &touching, sums).is_ok() {
                    out.push(p);
                }
            }
        }
        out
    }

    /// Applies a placement, returning the successor; `state` is left untouched.
    pub fn apply(&self, state: &BoardState, p: Placement) -> Result<BoardState, RuleViolation> {
        let cells = self.check(state, p)?;
        let mut next = state.clone();
        next.placements.push(p);
        next.occupied = next.occupied.union(cells);
        next.used |= 1 << p.block;
        Ok(next)
    }

    /// Applies a sequence of placements, failing on the first invalid one.
    pub fn apply_all(
        &self,
        state: &BoardState,
        placements: &[Placement],
    ) -> Result<BoardState, RuleViolation> {
        let mut s = state.clone();
        for &p in placements {
            s = self.apply(&s, p)?;
        }
        Ok(s)
    }

    fn reference_point(state: &BoardState) -> (i32, i32) {
        match state.placements.last() {
            Some(prev) => (prev.x, prev.y),
            None => state.silhouette.leftmost_floor_cell(),
        }
    }

    /// State-independent encoding of `p`: block id plus the anchor displacement
    /// from the previous placement (or from the leftmost floor cell).
    pub fn tokenize(&self, state: &BoardState, p: Placement) -> ActionToken {
        let (rx, ry) = Self::reference_point(state);
        ActionToken::new(p.block, (p.x - rx) as i8, (p.y - ry) as i8)
    }

    pub fn detokenize(&self, state: &BoardState, token: ActionToken) -> Placement {
        let (rx, ry) = Self::reference_point(state);
        Placement::new(token.block, rx + token.dx as i32, ry + token.dy as i32)
    }

    /// Tokens for a placement sequence applied from `state` (validity not checked).
    pub fn tokenize_sequence(
        &self,
        state: &BoardState,
        placements: &[Placement],
    ) -> Vec<ActionToken> {
        let mut prev = Self::reference_point(state);
        placements
            .iter()
            .map(|p| {
                let t = ActionToken::new(p.block, (p.x - prev.0) as i8, (p.y - prev.1) as i8);
                prev = (p.x, p.y);
                t
            })
            .collect()
    }

    /// ASCII picture, top row first: `.` outside the silhouette, `+` empty
    /// silhouette cell, otherwise the tag of the covering block.
    pub fn render(&self, state: &BoardState) -> String {
        let mut owner = vec![None; (self.grid.width() * self.grid.height()) as usize];
        for p in &state.placements {
            if let Some(cells) = self.cells_of(*p) {
                for i in cells.iter() {
                    owner[i] = Some(p.block);
                }
            }
        }
        let mask = state.silhouette.mask;
        let mut out = String::new();
        for y in (0..self.grid.height()).rev() {
            for x in 0..self.grid.width() {
                let i = self.grid.index(x, y).expect("in grid");
                let ch = match owner[i] {
                    Some(b) => self.inventory.shapes[b as usize].tag,
                    None if mask.contains(i) => '+',
                    None => '.',
                };
                out.push(ch);
            }
            let _ = writeln!(out);
        }
        out
    }
}

fn shape_cells(grid: &Grid, shape: &BlockShape, x: i32, y: i32) -> Option<CellSet> {
    let mut set = CellSet::EMPTY;
    for &(cx, cy) in &shape.cells {
        set.insert(grid.index(x + cx, y + cy)?);
    }
    Some(set)
}

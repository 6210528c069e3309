use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TangramError;

/// One building block: a polyomino given as cell offsets from its anchor.
///
/// The anchor is the lexicographically smallest cell (x first, then y), so
/// `(0, 0)` is always a member and no other cell has a negative x.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockShape {
    pub name: String,
    pub cells: Vec<(i32, i32)>,
    /// Single character used when printing boards.
    pub tag: char,
}

impl BlockShape {
    pub fn new(name: &str, cells: &[(i32, i32)], tag: char) -> Result<Self, TangramError> {
        let shape = BlockShape {
            name: name.to_string(),
            cells: cells.to_vec(),
            tag,
        };
        shape.validate()?;
        Ok(shape)
    }

    fn validate(&self) -> Result<(), TangramError> {
        let bad = |why: &str| TangramError::BadShape {
            name: self.name.clone(),
            reason: why.to_string(),
        };
        let set: BTreeSet<(i32, i32)> = self.cells.iter().copied().collect();
        if set.is_empty() {
            return Err(bad("no cells"));
        }
        if set.len() != self.cells.len() {
            return Err(bad("duplicate cells"));
        }
        if set.iter().next() != Some(&(0, 0)) {
            return Err(bad(
                "anchor (0,0) must be the lexicographically smallest cell",
            ));
        }
        // 4-connectivity
        let mut seen = BTreeSet::from([(0, 0)]);
        let mut stack = vec![(0, 0)];
        while let Some((x, y)) = stack.pop() {
            for n in [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)] {
                if set.contains(&n) && seen.insert(n) {
                    stack.push(n);
                }
            }
        }
        if seen.len() != set.len() {
            return Err(bad("cells are not 4-connected"));
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.cells.len()
    }
}

/// The blocks available in every episode; block ids are positions in this list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inventory {
    pub shapes: Vec<BlockShape>,
}

impl Default for Inventory {
    /// Seven polyominoes: monomino, horizontal and vertical dominoes, a
    /// straight tromino, the square tetromino and two mirrored L-trominoes.
    fn default() -> Self {
        let specs: [(&str, &[(i32, i32)], char); 7] = [
            ("mono", &[(0, 0)], 'A'),
            ("hdomino", &[(0, 0), (1, 0)], 'B'),
            ("vdomino", &[(0, 0), (0, 1)], 'C'),
            ("bar3", &[(0, 0), (1, 0), (2, 0)], 'D'),
            ("square", &[(0, 0), (1, 0), (0, 1), (1, 1)], 'E'),
            ("ell", &[(0, 0), (1, 0), (0, 1)], 'F'),
            ("jay", &[(0, 0), (1, 0), (1, 1)], 'G'),
        ];
        let shapes = specs
            .iter()
            .map(|(n, c, t)| BlockShape::new(n, c, *t).expect("built-in shape is valid"))
            .collect();
        Inventory { shapes }
    }
}

impl Inventory {
    pub fn new(shapes: Vec<BlockShape>) -> Result<Self, TangramError> {
        if shapes.is_empty() {
            return Err(TangramError::EmptyInventory);
        }
        if shapes.len() > 16 {
            return Err(TangramError::InventoryTooLarge(shapes.len()));
        }
        for s in &shapes {
            s.validate()?;
        }
        Ok(Inventory { shapes })
    }

    /// Reads a JSON shapes file: `{"shapes": [{"name", "cells": [[x, y], ...], "tag"}, ...]}`.
    pub fn from_file(path: &Path) -> Result<Self, TangramError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TangramError::Io(format!("{}: {e}", path.display())))?;
        let inv: Inventory = serde_json::from_str(&text)
            .map_err(|e| TangramError::Io(format!("{}: {e}", path.display())))?;
        Inventory::new(inv.shapes)
    }

    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    pub fn shape(&self, block: u8) -> Option<&BlockShape> {
        self.shapes.get(block as usize)
    }
}

use std::fmt;

use serde::{Deserialize, Serialize};

/// One block placement encoded independently of absolute position: the block
/// id and the anchor displacement from the previous placement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionToken {
    pub block: u8,
    pub dx: i8,
    pub dy: i8,
}

impl ActionToken {
    pub fn new(block: u8, dx: i8, dy: i8) -> Self {
        ActionToken { block, dx, dy }
    }
}

impl fmt::Display for ActionToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@({},{})", self.block, self.dx, self.dy)
    }
}

/// The finite token alphabet: every block id combined with every offset that
/// fits inside a `width` x `height` grid (|dx| < width, |dy| < height).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    pub blocks: u8,
    pub width: i32,
    pub height: i32,
}

impl Vocab {
    pub fn new(blocks: u8, width: i32, height: i32) -> Self {
        Vocab {
            blocks,
            width,
            height,
        }
    }

    fn span_x(&self) -> usize {
        (2 * self.width - 1) as usize
    }

    fn span_y(&self) -> usize {
        (2 * self.height - 1) as usize
    }

    pub fn len(&self) -> usize {
        self.blocks as usize * self.span_x() * self.span_y()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, t: ActionToken) -> bool {
        t.block < self.blocks
            && (t.dx as i32).abs() < self.width
            && (t.dy as i32).abs() < self.height
    }

    pub fn index(&self, t: ActionToken) -> Option<u32> {
        if !self.contains(t) {
            return None;
        }
        let x = (t.dx as i32 + self.width - 1) as usize;
        let y = (t.dy as i32 + self.height - 1) as usize;
        Some(((t.block as usize * self.span_x() + x) * self.span_y() + y) as u32)
    }

    pub fn token(&self, index: u32) -> ActionToken {
        let i = index as usize;
        let y = i % self.span_y();
        let rest = i / self.span_y();
        let x = rest % self.span_x();
        let block = rest / self.span_x();
        ActionToken::new(
            block as u8,
            (x as i32 - self.width + 1) as i8,
            (y as i32 - self.height + 1) as i8,
        )
    }

    pub fn tokens(&self) -> impl Iterator<Item = ActionToken> + '_ {
        (0..self.len() as u32).map(|i| self.token(i))
    }
}

/// Preceding actions, most recent last.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Context(pub Vec<ActionToken>);

impl Context {
    pub fn new(tokens: Vec<ActionToken>) -> Self {
        Context(tokens)
    }

    pub fn tokens(&self) -> &[ActionToken] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Drops the earliest token.
    pub fn truncated(&self) -> Context {
        Context(self.0.iter().skip(1).copied().collect())
    }

    /// The most recent `n` tokens.
    pub fn suffix(&self, n: usize) -> Context {
        let start = self.0.len().saturating_sub(n);
        Context(self.0[start..].to_vec())
    }

    pub fn push(&mut self, t: ActionToken) {
        self.0.push(t);
    }
}

impl From<&[ActionToken]> for Context {
    fn from(s: &[ActionToken]) -> Self {
        Context(s.to_vec())
    }
}

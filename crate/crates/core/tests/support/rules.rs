//! An independent placement-rule checker written over plain coordinate
//! sets, and random silhouettes to run it on.

use std::collections::{BTreeSet, HashSet};

use mcts_habits::tangram::{BoardState, Inventory, Placement, Silhouette, Tangram};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Cell = (i32, i32);

pub const W: i32 = 10;
pub const H: i32 = 6;

pub fn env() -> Tangram {
    Tangram::with_size(W, H, Inventory::default()).unwrap()
}

pub fn adjacent((x, y): Cell) -> [Cell; 4] {
    [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)]
}

pub fn component(start: Cell, within: &HashSet<Cell>) -> HashSet<Cell> {
    let mut seen = HashSet::from([start]);
    let mut stack = vec![start];
    while let Some(c) = stack.pop() {
        for n in adjacent(c) {
            if within.contains(&n) && seen.insert(n) {
                stack.push(n);
            }
        }
    }
    seen
}

pub fn subset_sums(sizes: &[usize]) -> HashSet<usize> {
    let mut sums = HashSet::from([0]);
    for &s in sizes {
        let next: Vec<usize> = sums.iter().map(|t| t + s).collect();
        sums.extend(next);
    }
    sums
}

/// The covered cells when `p` obeys every rule, else `None`.
pub fn oracle(
    inv: &Inventory,
    sil: &HashSet<Cell>,
    placed: &[Placement],
    p: Placement,
) -> Option<HashSet<Cell>> {
    let shape = inv.shapes.get(p.block as usize)?;
    if placed.iter().any(|q| q.block == p.block) {
        return None;
    }
    let cells_of = |q: &Placement| -> Vec<Cell> {
        inv.shapes[q.block as usize]
            .cells
            .iter()
            .map(|&(dx, dy)| (q.x + dx, q.y + dy))
            .collect()
    };
    let built: HashSet<Cell> = placed.iter().flat_map(cells_of).collect();
    let cells: HashSet<Cell> = cells_of(&p).into_iter().collect();
    debug_assert_eq!(cells.len(), shape.cells.len());
    // inside the grid and the silhouette, no overlap
    if !cells.iter().all(|c| sil.contains(c)) || cells.iter().any(|c| built.contains(c)) {
        return None;
    }
    if placed.is_empty() {
        let floor = sil.iter().map(|c| c.1).min().unwrap();
        if !cells.iter().any(|c| c.1 == floor) {
            return None;
        }
    } else if !cells
        .iter()
        .any(|&c| adjacent(c).iter().any(|n| built.contains(n)))
    {
        return None;
    }
    let after: HashSet<Cell> = built.union(&cells).copied().collect();
    let empty: HashSet<Cell> = sil.difference(&after).copied().collect();
    let left: Vec<usize> = (0..inv.shapes.len())
        .filter(|&b| b != p.block as usize && placed.iter().all(|q| q.block as usize != b))
        .map(|b| inv.shapes[b].cells.len())
        .collect();
    let sums = subset_sums(&left);
    let mut seen: HashSet<Cell> = HashSet::new();
    for &c in &empty {
        if seen.contains(&c) {
            continue;
        }
        let region = component(c, &empty);
        let borders = region
            .iter()
            .any(|&r| adjacent(r).iter().any(|n| after.contains(n)));
        if !borders || !sums.contains(&region.len()) {
            return None;
        }
        seen.extend(region);
    }
    Some(cells)
}

pub fn blob(rng: &mut ChaCha8Rng) -> Vec<Cell> {
    let size = rng.gen_range(1..=20);
    let mut cells = vec![(rng.gen_range(0..W), rng.gen_range(0..H))];
    let mut set: HashSet<Cell> = cells.iter().copied().collect();
    while cells.len() < size {
        let c = *cells.choose(rng).unwrap();
        let n = *adjacent(c).choose(rng).unwrap();
        if (0..W).contains(&n.0) && (0..H).contains(&n.1) && set.insert(n) {
            cells.push(n);
        }
    }
    cells
}

/// Blocks glued together at random, ignoring the rules, so most are buildable.
pub fn glued(rng: &mut ChaCha8Rng, inv: &Inventory) -> Vec<Cell> {
    let mut set: BTreeSet<Cell> = BTreeSet::new();
    let mut blocks: Vec<usize> = (0..inv.shapes.len()).collect();
    blocks.shuffle(rng);
    let n = rng.gen_range(1..=blocks.len());
    for &b in &blocks[..n] {
        for _ in 0..200 {
            let (x, y) = (rng.gen_range(0..W), rng.gen_range(0..H));
            let cells: Vec<Cell> = inv.shapes[b]
                .cells
                .iter()
                .map(|&(dx, dy)| (x + dx, y + dy))
                .collect();
            let fits = cells.iter().all(|&(cx, cy)| {
                (0..W).contains(&cx) && (0..H).contains(&cy) && !set.contains(&(cx, cy))
            });
            let touches = set.is_empty()
                || cells
                    .iter()
                    .any(|&c| adjacent(c).iter().any(|a| set.contains(a)));
            if fits && touches {
                set.extend(cells);
                break;
            }
        }
    }
    set.into_iter().collect()
}

pub fn every_placement(blocks: u8) -> impl Iterator<Item = Placement> {
    (0..=blocks).flat_map(|b| {
        (-3..W + 3).flat_map(move |x| (-3..H + 3).map(move |y| Placement::new(b, x, y)))
    })
}

pub fn compare(env: &Tangram, state: &BoardState) -> Vec<Placement> {
    let inv = env.inventory();
    let sil: HashSet<Cell> = state.silhouette().cells().into_iter().collect();
    let mut valid = Vec::new();
    for p in every_placement(inv.len() as u8) {
        let want = oracle(inv, &sil, state.placements(), p);
        let got = env.check(state, p);
        assert_eq!(
            got.is_ok(),
            want.is_some(),
            "{p:?} on {:?}: {got:?}",
            state.placements()
        );
        if let (Ok(cells), Some(want)) = (got, want) {
            let cells: HashSet<Cell> = cells.iter().map(|i| env.grid().coords(i)).collect();
            assert_eq!(cells, want);
            valid.push(p);
        }
    }
    let mut listed = env.valid_actions(state);
    let mut expected = valid.clone();
    listed.sort_by_key(|p| (p.block, p.x, p.y));
    expected.sort_by_key(|p| (p.block, p.x, p.y));
    assert_eq!(listed, expected);
    valid
}

/// Walks random silhouettes with random valid moves, comparing every
/// placement on every visited state; returns (states, goals, valid moves).
pub fn check_random_states(count: usize) -> (usize, usize, usize) {
    let env = env();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut states, mut goals, mut moves) = (0, 0, 0);
    while states < count {
        let cells = if rng.gen_bool(0.5) {
            blob(&mut rng)
        } else {
            glued(&mut rng, env.inventory())
        };
        let sil = Silhouette::from_cells(env.grid(), &cells).unwrap();
        let mut state = env.initial(sil).unwrap();
        loop {
            let valid = compare(&env, &state);
            states += 1;
            moves += valid.len();
            let Some(&p) = valid.choose(&mut rng) else {
                break;
            };
            let next = env.apply(&state, p).unwrap();
            assert_eq!(
                next.occupied(),
                state.occupied().union(env.cells_of(p).unwrap())
            );
            assert_eq!(next.placements().len(), state.placements().len() + 1);
            state = next;
            if state.is_goal() {
                goals += 1;
                assert!(env.valid_actions(&state).is_empty());
            }
        }
    }
    (states, goals, moves)
}

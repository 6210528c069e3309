use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Problem, TaskgenError, DEFAULT_COMPLEXITY_CAP};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// Largest admissible complexity.
    pub cap: u32,
    /// Largest complexity difference between paired chunky and random problems.
    pub max_gap: u32,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            cap: DEFAULT_COMPLEXITY_CAP,
            max_gap: 5,
        }
    }
}

/// Picks one problem per slot so that chunky and random complexities match.
///
/// Each slot is a pool of interchangeable candidates (same block
/// composition). Chunky slot `i` is paired with random slot `i % n_random`;
/// for every random slot the candidate minimising the worst gap to its
/// paired chunky slots' nearest candidates is taken. The result is shuffled.
pub fn match_sets<R: Rng + ?Sized>(
    chunky: &[Vec<Problem>],
    random: &[Vec<Problem>],
    config: MatchConfig,
    rng: &mut R,
) -> Result<Vec<Problem>, TaskgenError> {
    let pairing = Pairing::new(chunky, random, config)?;
    let mut trials = pairing.problems();
    trials.shuffle(rng);
    Ok(trials)
}

/// Like [`match_sets`], then swaps candidates within their slots (keeping
/// every pair within the gap) while that lowers the block-usage deviation.
pub fn match_balanced<R: Rng + ?Sized>(
    chunky: &[Vec<Problem>],
    random: &[Vec<Problem>],
    config: MatchConfig,
    num_blocks: usize,
    rng: &mut R,
) -> Result<(Vec<Problem>, BlockBalance), TaskgenError> {
    let mut pairing = Pairing::new(chunky, random, config)?;
    pairing.rebalance(num_blocks, REBALANCE_STEPS, rng);
    let mut trials = pairing.problems();
    let balance = balance_report(&trials, num_blocks);
    trials.shuffle(rng);
    Ok((trials, balance))
}

/// Annealing steps of the balancing search.
const REBALANCE_STEPS: usize = 20_000;

struct Pairing {
    chunky: Vec<Vec<Problem>>,
    random: Vec<Vec<Problem>>,
    pick_c: Vec<usize>,
    pick_r: Vec<usize>,
    config: MatchConfig,
}

impl Pairing {
    fn new(
        chunky: &[Vec<Problem>],
        random: &[Vec<Problem>],
        config: MatchConfig,
    ) -> Result<Self, TaskgenError> {
        if chunky.is_empty() || random.is_empty() {
            return Err(TaskgenError::PoolTooSmall(format!(
                "{} chunky and {} random slots given, need at least one of each",
                chunky.len(),
                random.len()
            )));
        }
        let admissible = |pool: &Vec<Problem>| -> Vec<Problem> {
            pool.iter()
                .filter(|p| p.complexity <= config.cap)
                .cloned()
                .collect()
        };
        let chunky: Vec<Vec<Problem>> = chunky.iter().map(admissible).collect();
        let random: Vec<Vec<Problem>> = random.iter().map(admissible).collect();

        let mut pick_c = vec![0; chunky.len()];
        let mut pick_r = Vec::with_capacity(random.len());
        let mut failed = Vec::new();
        for (j, pool) in random.iter().enumerate() {
            let partners: Vec<usize> = (j..chunky.len()).step_by(random.len()).collect();
            let mut best: Option<(u32, usize, Vec<usize>)> = None;
            for (ri, r) in pool.iter().enumerate() {
                let mut worst = 0;
                let mut picks = Vec::new();
                for &i in &partners {
                    let nearest = chunky[i]
                        .iter()
                        .enumerate()
                        .min_by_key(|(_, c)| (c.complexity.abs_diff(r.complexity), c.complexity));
                    match nearest {
                        Some((ci, c)) => {
                            worst = worst.max(c.complexity.abs_diff(r.complexity));
                            picks.push(ci);
                        }
                        None => worst = u32::MAX,
                    }
                }
                if worst <= config.max_gap && best.as_ref().map_or(true, |b| worst < b.0) {
                    best = Some((worst, ri, picks));
                }
            }
            match best {
                Some((_, ri, picks)) => {
                    pick_r.push(ri);
                    for (&i, ci) in partners.iter().zip(picks) {
                        pick_c[i] = ci;
                    }
                }
                None => failed.push(j),
            }
        }
        if !failed.is_empty() {
            let matched = random.len() - failed.len();
            return Err(TaskgenError::PoolTooSmall(format!(
                "only {matched} of {} random slots could be matched within a gap of {} at cap {}",
                random.len(),
                config.max_gap,
                config.cap
            )));
        }
        Ok(Pairing {
            chunky,
            random,
            pick_c,
            pick_r,
            config,
        })
    }

    fn problems(&self) -> Vec<Problem> {
        let c = self
            .pick_c
            .iter()
            .enumerate()
            .map(|(i, &k)| self.chunky[i][k].clone());
        let r = self
            .pick_r
            .iter()
            .enumerate()
            .map(|(j, &k)| self.random[j][k].clone());
        c.chain(r).collect()
    }

    /// Simulated annealing on the squared relative deviation of per-block
    /// usage, keeping the candidate with the lowest (max, total) deviation.
    /// A move redraws one slot; redrawing a random slot also redraws any
    /// chunky partner it no longer fits.
    fn rebalance<R: Rng + ?Sized>(&mut self, num_blocks: usize, steps: usize, rng: &mut R) {
        let usage = |pools: &Vec<Vec<Problem>>| -> Vec<Vec<Vec<f64>>> {
            pools
                .iter()
                .map(|pool| pool.iter().map(|p| block_usage(p, num_blocks)).collect())
                .collect()
        };
        let usage_c = usage(&self.chunky);
        let usage_r = usage(&self.random);
        let n_r = self.random.len();
        let totals = |pc: &[usize], pr: &[usize]| -> Vec<f64> {
            let mut f = vec![0.0; num_blocks];
            let rows = pc
                .iter()
                .enumerate()
                .map(|(i, &k)| &usage_c[i][k])
                .chain(pr.iter().enumerate().map(|(j, &k)| &usage_r[j][k]));
            for u in rows {
                for (a, b) in f.iter_mut().zip(u) {
                    *a += b;
                }
            }
            f
        };
        let energy = |f: &[f64]| -> f64 {
            let mean = f.iter().sum::<f64>() / f.len().max(1) as f64;
            if mean <= 0.0 {
                return 0.0;
            }
            f.iter().map(|x| ((x - mean) / mean).powi(2)).sum()
        };
        let gap = self.config.max_gap;
        let fitting = |i: usize, r: u32| -> Vec<usize> {
            (0..self.chunky[i].len())
                .filter(|&k| self.chunky[i][k].complexity.abs_diff(r) <= gap)
                .collect()
        };
        let (mut pc, mut pr) = (self.pick_c.clone(), self.pick_r.clone());
        let mut f = totals(&pc, &pr);
        let mut e = energy(&f);
        let mut best = (deviation(&f), pc.clone(), pr.clone());
        let mut temperature = 0.05;
        let cooling = (1e-4f64 / temperature).powf(1.0 / steps.max(1) as f64);
        let slots = pc.len() + n_r;
        for _ in 0..steps {
            temperature *= cooling;
            let (mut c, mut r) = (pc.clone(), pr.clone());
            let s = rng.gen_range(0..slots);
            if s < pc.len() {
                let rc = self.random[s % n_r][r[s % n_r]].complexity;
                match fitting(s, rc).choose(rng) {
                    Some(&k) => c[s] = k,
                    None => continue,
                }
            } else {
                let j = s - pc.len();
                r[j] = rng.gen_range(0..self.random[j].len());
                let rc = self.random[j][r[j]].complexity;
                let mut ok = true;
                for i in (j..c.len()).step_by(n_r) {
                    if self.chunky[i][c[i]].complexity.abs_diff(rc) <= gap {
                        continue;
                    }
                    match fitting(i, rc).choose(rng) {
                        Some(&k) => c[i] = k,
                        None => {
                            ok = false;
                            break;
                        }
                    }
                }
                if !ok {
                    continue;
                }
            }
            let nf = totals(&c, &r);
            let ne = energy(&nf);
            if ne <= e || rng.gen::<f64>() < ((e - ne) / temperature).exp() {
                pc = c;
                pr = r;
                f = nf;
                e = ne;
                let d = deviation(&f);
                if lex_less(d, best.0) {
                    best = (d, pc.clone(), pr.clone());
                }
            }
        }
        self.pick_c = best.1;
        self.pick_r = best.2;
    }
}

fn lex_less(a: (f64, f64), b: (f64, f64)) -> bool {
    const EPS: f64 = 1e-12;
    a.0 < b.0 - EPS || ((a.0 - b.0).abs() <= EPS && a.1 < b.1 - EPS)
}

/// (largest relative deviation from the mean, summed absolute deviation).
fn deviation(frequency: &[f64]) -> (f64, f64) {
    if frequency.is_empty() {
        return (0.0, 0.0);
    }
    let mean = frequency.iter().sum::<f64>() / frequency.len() as f64;
    if mean <= 0.0 {
        return (0.0, 0.0);
    }
    let max = frequency
        .iter()
        .map(|f| (f - mean).abs() / mean)
        .fold(0.0, f64::max);
    let sum = frequency.iter().map(|f| (f - mean).abs()).sum();
    (max, sum)
}

/// Mean count of each block over a problem's certified solutions.
pub fn block_usage(problem: &Problem, num_blocks: usize) -> Vec<f64> {
    let mut u = vec![0.0; num_blocks];
    let n = problem.solutions.len().max(1) as f64;
    for s in &problem.solutions {
        for pl in s {
            if let Some(x) = u.get_mut(pl.block as usize) {
                *x += 1.0 / n;
            }
        }
    }
    u
}

/// Per-block usage over a set of problems. Each problem contributes its
/// solutions' block counts averaged over its certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockBalance {
    pub frequency: BTreeMap<u8, f64>,
    pub mean: f64,
    /// Largest relative deviation from the mean.
    pub max_deviation: f64,
}

pub fn balance_report(problems: &[Problem], num_blocks: usize) -> BlockBalance {
    let mut f = vec![0.0; num_blocks];
    for p in problems {
        for (a, b) in f.iter_mut().zip(block_usage(p, num_blocks)) {
            *a += b;
        }
    }
    let mean = if f.is_empty() {
        0.0
    } else {
        f.iter().sum::<f64>() / f.len() as f64
    };
    BlockBalance {
        frequency: f.iter().enumerate().map(|(b, &x)| (b as u8, x)).collect(),
        mean,
        max_deviation: deviation(&f).0,
    }
}

/// All `k`-element subsets of `pool`, in lexicographic order of positions.
pub fn combinations(pool: &[u8], k: usize) -> Vec<Vec<u8>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    if pool.len() < k {
        return Vec::new();
    }
    let mut out = Vec::new();
    for mut c in combinations(&pool[1..], k - 1) {
        c.insert(0, pool[0]);
        out.push(c);
    }
    out.extend(combinations(&pool[1..], k));
    out
}

/// Picks `n` block compositions from `options` keeping per-block usage level:
/// each pick minimises the summed (then maximal) usage count of its blocks,
/// breaking ties at random, then picks are swapped for other options while
/// that lowers the sum of squared usage counts. `counts` carries usage
/// across calls.
pub fn balanced_compositions<R: Rng + ?Sized>(
    options: &[Vec<u8>],
    n: usize,
    counts: &mut BTreeMap<u8, usize>,
    rng: &mut R,
) -> Vec<Vec<u8>> {
    let mut out = Vec::with_capacity(n);
    if options.is_empty() {
        return out;
    }
    for _ in 0..n {
        let cost = |o: &Vec<u8>| {
            let c: Vec<usize> = o
                .iter()
                .map(|b| counts.get(b).copied().unwrap_or(0))
                .collect();
            (
                c.iter().sum::<usize>(),
                c.iter().copied().max().unwrap_or(0),
            )
        };
        let best = options.iter().map(cost).min().expect("options non-empty");
        let ties: Vec<&Vec<u8>> = options.iter().filter(|o| cost(o) == best).collect();
        let pick = (*ties.choose(rng).expect("at least one tie")).clone();
        for b in &pick {
            *counts.entry(*b).or_default() += 1;
        }
        out.push(pick);
    }
    let square = |c: usize| (c * c) as i64;
    let mut improved = true;
    while improved {
        improved = false;
        for i in 0..out.len() {
            for o in options {
                let mut delta = 0i64;
                let mut next = counts.clone();
                for b in &out[i] {
                    let c = next.get_mut(b).expect("picked block counted");
                    delta += square(*c - 1) - square(*c);
                    *c -= 1;
                }
                for b in o {
                    let c = next.entry(*b).or_default();
                    delta += square(*c + 1) - square(*c);
                    *c += 1;
                }
                if delta < 0 {
                    *counts = next;
                    out[i] = o.clone();
                    improved = true;
                }
            }
        }
    }
    out
}

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mcts_habits::harness::{HarnessConfig, Variant, VariantConfig};
use mcts_habits::taskgen::Condition;

/// Settings shared by every subcommand, after merging defaults, an optional
/// key-value file and command-line flags (flags win).
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub condition: Option<Condition>,
    pub trials: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub budget: u32,
    pub c: f64,
    pub h: f64,
    pub omega: f64,
    pub alpha: f64,
    pub grid: (i32, i32),
    pub shapes: Option<PathBuf>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub workers: Option<usize>,
    pub master_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let full = VariantConfig::of(Variant::Full);
        RunConfig {
            condition: None,
            trials: None,
            seeds: None,
            budget: full.budget,
            c: full.exploration,
            h: full.habit,
            omega: full.omega,
            alpha: full.alpha.unwrap_or(1.0),
            grid: (10, 6),
            shapes: None,
            input: None,
            output: None,
            workers: None,
            master_seed: 0,
        }
    }
}

/// Every key a config file may set; the same names as the long flags.
pub const KEYS: [&str; 14] = [
    "condition",
    "trials",
    "seeds",
    "budget",
    "c",
    "h",
    "omega",
    "alpha",
    "grid",
    "shapes",
    "in",
    "out",
    "workers",
    "master-seed",
];

/// Reads `key = value` lines; `#` starts a comment.
pub fn parse_kv(text: &str, origin: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("{origin}:{}: expected key = value", n + 1))?;
        let key = k.trim().replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            return Err(format!("{origin}:{}: unknown key '{}'", n + 1, k.trim()));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

pub fn read_kv(path: &Path) -> Result<BTreeMap<String, String>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_kv(&text, &path.display().to_string())
}

fn finite_nonneg(name: &str, v: f64) -> Result<f64, String> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{name} must be finite and >= 0, got {v}"))
    }
}

fn number<T: std::str::FromStr>(name: &str, s: &str) -> Result<T, String> {
    s.trim()
        .parse()
        .map_err(|_| format!("{name}: cannot parse '{s}'"))
}

/// `N` is seeds `0..N`; `a..b` is a half-open range; `a,b,c` is a list
/// (`a,` selects the single seed `a`).
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let s = s.trim();
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (number("seeds", a)?, number("seeds", b)?);
        (a..b).collect()
    } else if s.contains(',') {
        s.split(',')
            .filter(|x| !x.trim().is_empty())
            .map(|x| number("seeds", x))
            .collect::<Result<_, _>>()?
    } else {
        (0..number::<u64>("seeds", s)?).collect()
    };
    if seeds.is_empty() {
        return Err(format!("seeds: '{s}' selects no seeds"));
    }
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return Err(format!("seeds: '{s}' repeats a seed"));
    }
    Ok(seeds)
}

/// `WxH`, e.g. `10x6`.
pub fn parse_grid(s: &str) -> Result<(i32, i32), String> {
    let (w, h) = s
        .trim()
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("grid: expected WIDTHxHEIGHT, got '{s}'"))?;
    let (w, h): (i32, i32) = (number("grid", w)?, number("grid", h)?);
    if w < 1 || h < 1 || w * h > 128 {
        return Err(format!("grid: {w}x{h} must have 1..=128 cells"));
    }
    Ok((w, h))
}

impl RunConfig {
    /// Applies one key; values are validated as they are set.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "condition" => self.condition = Some(value.trim().parse()?),
            "trials" => {
                let t: usize = number(key, value)?;
                if t < 1 {
                    return Err("trials must be at least 1".into());
                }
                self.trials = Some(t);
            }
            "seeds" => self.seeds = Some(parse_seeds(value)?),
            "budget" => {
                let b: u32 = number(key, value)?;
                if b < 1 {
                    return Err("budget must be at least 1".into());
                }
                self.budget = b;
            }
            "c" => self.c = finite_nonneg(key, number(key, value)?)?,
            "h" => self.h = finite_nonneg(key, number(key, value)?)?,
            "omega" => self.omega = finite_nonneg(key, number(key, value)?)?,
            "alpha" => {
                let a: f64 = number(key, value)?;
                if !(a > 0.0 && a.is_finite()) {
                    return Err(format!("alpha must be positive and finite, got {a}"));
                }
                self.alpha = a;
            }
            "grid" => self.grid = parse_grid(value)?,
            "shapes" => self.shapes = Some(PathBuf::from(value.trim())),
            "in" => self.input = Some(PathBuf::from(value.trim())),
            "out" => self.output = Some(PathBuf::from(value.trim())),
            "workers" => {
                let w: usize = number(key, value)?;
                if w < 1 {
                    return Err("workers must be at least 1".into());
                }
                self.workers = Some(w);
            }
            "master-seed" => self.master_seed = number(key, value)?,
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    pub fn apply(&mut self, layer: &BTreeMap<String, String>) -> Result<(), String> {
        for (k, v) in layer {
            self.set(k, v)?;
        }
        Ok(())
    }

    /// The variant table with overrides: budget, `c` and `alpha` apply to
    /// every variant, `h` and `omega` to the full variant.
    pub fn variants(&self) -> Vec<VariantConfig> {
        VariantConfig::table()
            .into_iter()
            .map(|mut v| {
                v.budget = self.budget;
                v.exploration = self.c;
                v.alpha = v.alpha.map(|_| self.alpha);
                if v.variant == Variant::Full {
                    v.habit = self.h;
                    v.omega = self.omega;
                }
                v
            })
            .collect()
    }

    pub fn harness(&self, default_seeds: Vec<u64>) -> HarnessConfig {
        HarnessConfig {
            variants: self.variants(),
            seeds: self.seeds.clone().unwrap_or(default_seeds),
            master_seed: self.master_seed,
            workers: self.workers,
            ..HarnessConfig::default()
        }
    }

    /// The experiment settings as a key-value file, for reuse by later steps.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        if let Some(c) = self.condition {
            let _ = writeln!(out, "condition = {c}");
        }
        if let Some(s) = &self.seeds {
            let list: Vec<String> = s.iter().map(u64::to_string).collect();
            let tail = if list.len() == 1 { "," } else { "" };
            let _ = writeln!(out, "seeds = {}{tail}", list.join(","));
        }
        let _ = writeln!(out, "budget = {}", self.budget);
        let _ = writeln!(out, "c = {}", self.c);
        let _ = writeln!(out, "h = {}", self.h);
        let _ = writeln!(out, "omega = {}", self.omega);
        let _ = writeln!(out, "alpha = {}", self.alpha);
        let _ = writeln!(out, "master-seed = {}", self.master_seed);
        out
    }
}

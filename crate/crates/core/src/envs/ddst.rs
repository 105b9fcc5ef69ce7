//! Dangerous Deep Sea Treasure: a submarine looks for treasure on a stepped
//! seabed while some cells are patrolled by sharks.
//!
//! Maps are JSON documents whose `grid` rows hold whitespace-separated
//! glyphs:
//!
//! | glyph    | cell                                           |
//! |----------|------------------------------------------------|
//! | `.`      | open water                                     |
//! | `#`      | seabed (impassable)                            |
//! | `T<v>`   | treasure worth `v`, terminal                   |
//! | `s`      | shark hitting with the map's `p_shark`         |
//! | `s<p>`   | shark hitting with probability `p`             |
//! | `X`      | shark that always hits                         |

use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Enumerable, Outcome};
use crate::error::{Error, Result};
use crate::mo::{Environment, ReturnVector, StateKey, Step};

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;

const DEFAULT_MAP: &str = include_str!("../../assets/ddst-default.json");

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Water,
    Seabed,
    Treasure(f64),
    /// Hit probability; `None` defers to the map-wide `p_shark`.
    Shark(Option<f64>),
    TerminalShark,
}

impl Cell {
    fn parse(token: &str) -> Option<Cell> {
        match token {
            "." => Some(Cell::Water),
            "#" => Some(Cell::Seabed),
            "X" => Some(Cell::TerminalShark),
            "s" => Some(Cell::Shark(None)),
            _ => {
                if let Some(v) = token.strip_prefix('T') {
                    v.parse().ok().filter(|v: &f64| v.is_finite()).map(Cell::Treasure)
                } else if let Some(p) = token.strip_prefix('s') {
                    p.parse()
                        .ok()
                        .filter(|p: &f64| (0.0..=1.0).contains(p))
                        .map(|p| Cell::Shark(Some(p)))
                } else {
                    None
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapFile {
    grid: Vec<String>,
    start: [usize; 2],
    horizon: usize,
    p_shark: f64,
    #[serde(default = "default_damage")]
    shark_damage: f64,
    #[serde(default = "default_damage")]
    damage_threshold: f64,
}

fn default_damage() -> f64 {
    10.0
}

/// A validated map. Rewards are `[treasure, damage, time]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DdstMap {
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
    grid: Vec<String>,
    pub start: (usize, usize),
    pub horizon: usize,
    pub p_shark: f64,
    /// Damage of a single hit, as a positive magnitude.
    pub shark_damage: f64,
    /// The submarine is destroyed once accumulated damage reaches this.
    pub damage_threshold: f64,
}

impl DdstMap {
    /// The shipped 12 × 10 map.
    pub fn default_map() -> Self {
        Self::from_json(DEFAULT_MAP).expect("shipped map is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MapFile = serde_json::from_str(text)?;
        Self::from_file(file)
    }

    fn from_file(file: MapFile) -> Result<Self> {
        let mut cells = Vec::new();
        let mut cols = None;
        for (r, line) in file.grid.iter().enumerate() {
            let row: Vec<Cell> = line
                .split_whitespace()
                .map(|t| {
                    Cell::parse(t).ok_or_else(|| Error::config(format!("ddst map row {r}: bad glyph {t:?}")))
                })
                .collect::<Result<_>>()?;
            match cols {
                None => cols = Some(row.len()),
                Some(c) if c != row.len() => {
                    return Err(Error::config(format!(
                        "ddst map row {r} has {} cells, expected {c}",
                        row.len()
                    )))
                }
                _ => {}
            }
            cells.extend(row);
        }
        let cols = cols.filter(|c| *c > 0).ok_or_else(|| Error::config("ddst map is empty"))?;
        let rows = file.grid.len();
        let [sr, sc] = file.start;
        if sr >= rows || sc >= cols || cells[sr * cols + sc] != Cell::Water {
            return Err(Error::config("ddst start must be an open water cell"));
        }
        if file.horizon == 0 {
            return Err(Error::config("ddst horizon must be at least 1"));
        }
        if !(0.0..=1.0).contains(&file.p_shark) {
            return Err(Error::config("ddst p_shark must lie in [0, 1]"));
        }
        if !(file.shark_damage > 0.0 && file.damage_threshold > 0.0) {
            return Err(Error::config("ddst damage values must be positive"));
        }
        Ok(DdstMap {
            rows,
            cols,
            cells,
            grid: file.grid,
            start: (sr, sc),
            horizon: file.horizon,
            p_shark: file.p_shark,
            shark_damage: file.shark_damage,
            damage_threshold: file.damage_threshold,
        })
    }

    /// Serialises back to the JSON map format.
    pub fn to_json(&self) -> String {
        let file = MapFile {
            grid: self.grid.clone(),
            start: [self.start.0, self.start.1],
            horizon: self.horizon,
            p_shark: self.p_shark,
            shark_damage: self.shark_damage,
            damage_threshold: self.damage_threshold,
        };
        serde_json::to_string_pretty(&file).expect("map serialises")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell(&self, pos: (usize, usize)) -> Cell {
        self.cells[pos.0 * self.cols + pos.1]
    }

    /// Hit probability of a cell, zero for non-shark cells.
    pub fn hit_probability(&self, pos: (usize, usize)) -> f64 {
        match self.cell(pos) {
            Cell::Shark(p) => p.unwrap_or(self.p_shark),
            Cell::TerminalShark => 1.0,
            _ => 0.0,
        }
    }

    /// Where `action` leads from `pos`; blocked moves stay put.
    pub fn destination(&self, pos: (usize, usize), action: usize) -> Result<(usize, usize)> {
        let (r, c) = pos;
        let next = match action {
            UP => r.checked_sub(1).map(|r| (r, c)),
            DOWN => (r + 1 < self.rows).then_some((r + 1, c)),
            LEFT => c.checked_sub(1).map(|c| (r, c)),
            RIGHT => (c + 1 < self.cols).then_some((r, c + 1)),
            _ => return Err(Error::InvalidAction { action, available: 4 }),
        };
        Ok(match next {
            Some(p) if self.cell(p) != Cell::Seabed => p,
            _ => pos,
        })
    }

    pub fn treasures(&self) -> Vec<((usize, usize), f64)> {
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| (r, c)))
            .filter_map(|p| match self.cell(p) {
                Cell::Treasure(v) => Some((p, v)),
                _ => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct DangerousDst {
    map: Arc<DdstMap>,
    pos: (usize, usize),
    damage: f64,
    t: usize,
    done: bool,
}

impl DangerousDst {
    pub fn new(map: DdstMap) -> Self {
        DangerousDst {
            pos: map.start,
            map: Arc::new(map),
            damage: 0.0,
            t: 0,
            done: false,
        }
    }

    pub fn map(&self) -> &DdstMap {
        &self.map
    }

    pub fn position(&self) -> (usize, usize) {
        self.pos
    }

    /// Accumulated damage as a positive magnitude.
    pub fn damage(&self) -> f64 {
        self.damage
    }

    fn hits(&self) -> u64 {
        (self.damage / self.map.shark_damage).round() as u64
    }

    /// Applies a move whose shark hit, if any, is already decided.
    fn apply(&mut self, dest: (usize, usize), hit: bool) -> ReturnVector {
        self.pos = dest;
        self.t += 1;
        let mut reward = ReturnVector::from([0.0, 0.0, -1.0]);
        match self.map.cell(dest) {
            Cell::Treasure(v) => {
                reward = ReturnVector::from([v, 0.0, -1.0]);
                self.done = true;
            }
            _ if hit => {
                self.damage += self.map.shark_damage;
                reward = ReturnVector::from([0.0, -self.map.shark_damage, -1.0]);
                if self.damage >= self.map.damage_threshold {
                    self.done = true;
                }
            }
            _ => {}
        }
        if self.t >= self.map.horizon {
            self.done = true;
        }
        reward
    }
}

impl Environment for DangerousDst {
    fn objectives(&self) -> usize {
        3
    }

    fn num_actions(&self) -> usize {
        4
    }

    fn horizon(&self) -> usize {
        self.map.horizon
    }

    fn reset<R: Rng + ?Sized>(&mut self, _rng: &mut R) -> StateKey {
        self.pos = self.map.start;
        self.damage = 0.0;
        self.t = 0;
        self.done = false;
        self.state()
    }

    fn state(&self) -> StateKey {
        let cell = (self.pos.0 * self.map.cols + self.pos.1) as u64;
        (cell << 8) | self.hits().min(255)
    }

    fn timestep(&self) -> usize {
        self.t
    }

    fn is_terminal(&self) -> bool {
        self.done
    }

    fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> Result<Step> {
        if self.done {
            return Err(Error::contract("ddst episode already terminated"));
        }
        let dest = self.map.destination(self.pos, action)?;
        let hit = match self.map.cell(dest) {
            Cell::Shark(p) => rng.gen::<f64>() < p.unwrap_or(self.map.p_shark),
            Cell::TerminalShark => true,
            _ => false,
        };
        let reward = self.apply(dest, hit);
        Ok(Step {
            state: self.state(),
            reward,
            terminal: self.done,
        })
    }
}

impl Enumerable for DangerousDst {
    fn outcomes(&self, action: usize) -> Result<Vec<Outcome<Self>>> {
        let dest = self.map.destination(self.pos, action)?;
        let p_hit = match self.map.cell(dest) {
            Cell::Treasure(_) => 0.0,
            _ => self.map.hit_probability(dest),
        };
        let mut out = Vec::with_capacity(2);
        for (hit, p) in [(true, p_hit), (false, 1.0 - p_hit)] {
            if p > 0.0 {
                let mut next = self.clone();
                let reward = next.apply(dest, hit);
                out.push(Outcome {
                    probability: p,
                    reward,
                    next,
                });
            }
        }
        Ok(out)
    }
}

//! Tabular grid environments and their random-walk chains.
//!
//! Cells are addressed as `(row, col)` with row 0 at the top; "north" moves to
//! the previous row. A move into a wall or off the grid leaves the agent in
//! place, so the probability of a blocked direction becomes self-loop mass.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ChainError, MarkovChain};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MazeError {
    #[error("grid must be at least 1x1, got {width}x{height}")]
    EmptyGrid { width: usize, height: usize },
    #[error("wall {0:?} lies outside the grid")]
    WallOutOfBounds((usize, usize)),
    #[error("maze has no free cells")]
    NoFreeCells,
    #[error("free cells form {0} connected components")]
    Disconnected(usize),
    #[error("move probabilities must be non-negative and sum to 1 (sum {0})")]
    BadMoveProbs(f64),
    #[error("U-maze size must be odd and at least 7, got {0}")]
    BadUMazeSize(usize),
    #[error("expected {expected} values, one per free cell, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Chain(#[from] ChainError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    North,
    South,
    East,
    West,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::North, Direction::South, Direction::East, Direction::West];

    pub fn index(self) -> usize {
        self as usize
    }

    fn offset(self) -> (isize, isize) {
        match self {
            Direction::North => (-1, 0),
            Direction::South => (1, 0),
            Direction::East => (0, 1),
            Direction::West => (0, -1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoveProbs {
    #[serde(rename = "N")]
    pub north: f64,
    #[serde(rename = "S")]
    pub south: f64,
    #[serde(rename = "E")]
    pub east: f64,
    #[serde(rename = "W")]
    pub west: f64,
}

impl MoveProbs {
    pub const UNIFORM: MoveProbs = MoveProbs { north: 0.25, south: 0.25, east: 0.25, west: 0.25 };
    pub const NORTH_EAST_BIASED: MoveProbs = MoveProbs { north: 0.375, south: 0.125, east: 0.375, west: 0.125 };

    pub fn get(&self, d: Direction) -> f64 {
        match d {
            Direction::North => self.north,
            Direction::South => self.south,
            Direction::East => self.east,
            Direction::West => self.west,
        }
    }

    fn validate(&self) -> Result<(), MazeError> {
        let all = [self.north, self.south, self.east, self.west];
        let sum: f64 = all.iter().sum();
        if all.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
            return Err(MazeError::BadMoveProbs(sum));
        }
        Ok(())
    }
}

/// JSON maze description: `{width, height, walls: [[r, c], ...], move_probs: {N, S, E, W}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MazeSpec {
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub walls: Vec<[usize; 2]>,
    pub move_probs: MoveProbs,
}

#[derive(Debug, Clone)]
pub struct GridMaze {
    width: usize,
    height: usize,
    walls: BTreeSet<(usize, usize)>,
    cells: Vec<(usize, usize)>,
    index: Vec<Option<usize>>,
    move_probs: MoveProbs,
    start: usize,
    tracked_goals: Vec<usize>,
}

impl GridMaze {
    pub fn from_spec(spec: &MazeSpec) -> Result<Self, MazeError> {
        let (width, height) = (spec.width, spec.height);
        if width == 0 || height == 0 {
            return Err(MazeError::EmptyGrid { width, height });
        }
        spec.move_probs.validate()?;
        let mut walls = BTreeSet::new();
        for &[r, c] in &spec.walls {
            if r >= height || c >= width {
                return Err(MazeError::WallOutOfBounds((r, c)));
            }
            walls.insert((r, c));
        }
        let mut cells = Vec::new();
        let mut index = vec![None; width * height];
        for r in 0..height {
            for c in 0..width {
                if !walls.contains(&(r, c)) {
                    index[r * width + c] = Some(cells.len());
                    cells.push((r, c));
                }
            }
        }
        if cells.is_empty() {
            return Err(MazeError::NoFreeCells);
        }
        let maze = Self { width, height, walls, cells, index, move_probs: spec.move_probs, start: 0, tracked_goals: Vec::new() };
        let components = maze.component_count();
        if components != 1 {
            return Err(MazeError::Disconnected(components));
        }
        Ok(maze)
    }

    pub fn to_spec(&self) -> MazeSpec {
        MazeSpec {
            width: self.width,
            height: self.height,
            walls: self.walls.iter().map(|&(r, c)| [r, c]).collect(),
            move_probs: self.move_probs,
        }
    }

    fn component_count(&self) -> usize {
        let n = self.n_states();
        let mut seen = vec![false; n];
        let mut count = 0;
        for s in 0..n {
            if seen[s] {
                continue;
            }
            count += 1;
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(u) = stack.pop() {
                for d in Direction::ALL {
                    let v = self.step(u, d);
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        count
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_states(&self) -> usize {
        self.cells.len()
    }

    pub fn move_probs(&self) -> MoveProbs {
        self.move_probs
    }

    pub fn walls(&self) -> &BTreeSet<(usize, usize)> {
        &self.walls
    }

    pub fn is_wall(&self, row: usize, col: usize) -> bool {
        self.walls.contains(&(row, col))
    }

    pub fn cell(&self, state: usize) -> (usize, usize) {
        self.cells[state]
    }

    pub fn state_at(&self, row: usize, col: usize) -> Option<usize> {
        if row >= self.height || col >= self.width {
            return None;
        }
        self.index[row * self.width + col]
    }

    /// Start state for goal-reaching episodes (first free cell unless set by a builder).
    pub fn start(&self) -> usize {
        self.start
    }

    /// Fixed diagnostic goals chosen by the builder (empty for generic mazes).
    pub fn tracked_goals(&self) -> &[usize] {
        &self.tracked_goals
    }

    /// Deterministic move; blocked moves stay in place.
    pub fn step(&self, state: usize, dir: Direction) -> usize {
        let (r, c) = self.cells[state];
        let (dr, dc) = dir.offset();
        let nr = r as isize + dr;
        let nc = c as isize + dc;
        if nr < 0 || nc < 0 {
            return state;
        }
        self.state_at(nr as usize, nc as usize).unwrap_or(state)
    }

    pub fn transition_matrix(&self) -> DMatrix<f64> {
        let n = self.n_states();
        let mut p = DMatrix::zeros(n, n);
        for s in 0..n {
            for d in Direction::ALL {
                p[(s, self.step(s, d))] += self.move_probs.get(d);
            }
        }
        p
    }

    /// Chain induced by the random-walk policy with this maze's move probabilities.
    pub fn random_walk_chain(&self) -> Result<MarkovChain, MazeError> {
        Ok(MarkovChain::new(self.transition_matrix())?)
    }

    /// Euclidean distance between cell centres.
    pub fn grid_l2(&self, a: usize, b: usize) -> f64 {
        let (ra, ca) = self.cells[a];
        let (rb, cb) = self.cells[b];
        let dr = ra as f64 - rb as f64;
        let dc = ca as f64 - cb as f64;
        (dr * dr + dc * dc).sqrt()
    }
}

fn open_grid(size: usize, probs: MoveProbs) -> GridMaze {
    GridMaze::from_spec(&MazeSpec { width: size, height: size, walls: Vec::new(), move_probs: probs })
        .expect("open grid is always valid")
}

/// 5x5 open grid with equal move probabilities.
pub fn build_uniform_maze() -> (GridMaze, MarkovChain) {
    let maze = open_grid(5, MoveProbs::UNIFORM);
    let chain = maze.random_walk_chain().expect("open grid chain is irreducible");
    (maze, chain)
}

/// 5x5 open grid drifting north-east (N, E 0.375; S, W 0.125).
pub fn build_biased_maze() -> (GridMaze, MarkovChain) {
    let maze = open_grid(5, MoveProbs::NORTH_EAST_BIASED);
    let chain = maze.random_walk_chain().expect("open grid chain is irreducible");
    (maze, chain)
}

/// `size x size` grid with a three-column wall slab hanging from the top edge
/// down to two rows above the bottom, leaving a U-shaped corridor.
///
/// The start is the top-left corner. Tracked goals are a cell two steps below
/// the start, the bottom-middle cell, and the top of the far arm.
pub fn build_u_maze(size: usize) -> Result<GridMaze, MazeError> {
    if size < 7 || size % 2 == 0 {
        return Err(MazeError::BadUMazeSize(size));
    }
    let mid = size / 2;
    let mut walls = Vec::new();
    for r in 0..size - 2 {
        for c in mid - 1..=mid + 1 {
            walls.push([r, c]);
        }
    }
    let mut maze = GridMaze::from_spec(&MazeSpec { width: size, height: size, walls, move_probs: MoveProbs::UNIFORM })?;
    maze.start = maze.state_at(0, 0).expect("corner is free");
    maze.tracked_goals = vec![
        maze.state_at(2, 0).expect("arm cell is free"),
        maze.state_at(size - 1, mid).expect("bottom cell is free"),
        maze.state_at(0, size - 1).expect("far arm is free"),
    ];
    Ok(maze)
}

/// Grayscale rendering of one scalar per free cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    width: usize,
    height: usize,
    /// Gray level per grid cell in row-major order; `None` marks a wall.
    levels: Vec<Option<u8>>,
}

/// Darkest to lightest gray used for cell values; walls use [`WALL_LEVEL`].
pub const MAX_VALUE_LEVEL: u8 = 220;
pub const WALL_LEVEL: u8 = 255;
const FLAT_LEVEL: u8 = 128;

/// Renders `values[state]` so that smaller values are darker.
pub fn reference_state_heatmap(maze: &GridMaze, values: &[f64]) -> Result<Heatmap, MazeError> {
    if values.len() != maze.n_states() {
        return Err(MazeError::ShapeMismatch { expected: maze.n_states(), got: values.len() });
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let mut levels = vec![None; maze.width * maze.height];
    for (s, &v) in values.iter().enumerate() {
        let (r, c) = maze.cell(s);
        let level = if span > 0.0 && span.is_finite() {
            ((v - lo) / span * f64::from(MAX_VALUE_LEVEL)).round() as u8
        } else {
            FLAT_LEVEL
        };
        levels[r * maze.width + c] = Some(level);
    }
    Ok(Heatmap { width: maze.width, height: maze.height, levels })
}

impl Heatmap {
    pub fn level(&self, row: usize, col: usize) -> Option<u8> {
        self.levels[row * self.width + col]
    }

    /// Plain-text PGM (P2), one pixel per cell.
    pub fn to_pgm(&self) -> String {
        let mut out = format!("P2\n{} {}\n{}\n", self.width, self.height, WALL_LEVEL);
        for r in 0..self.height {
            let row: Vec<String> = (0..self.width)
                .map(|c| self.level(r, c).unwrap_or(WALL_LEVEL).to_string())
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn to_svg(&self, cell_px: usize) -> String {
        let (w, h) = (self.width * cell_px, self.height * cell_px);
        let mut out = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n");
        for r in 0..self.height {
            for c in 0..self.width {
                let (x, y) = (c * cell_px, r * cell_px);
                let fill = match self.level(r, c) {
                    Some(g) => format!("rgb({g},{g},{g})"),
                    None => "#3b5b92".to_string(),
                };
                let _ = writeln!(out, "  <rect x=\"{x}\" y=\"{y}\" width=\"{cell_px}\" height=\"{cell_px}\" fill=\"{fill}\"/>");
            }
        }
        out.push_str("</svg>\n");
        out
    }
}

//! Text gridworlds.
//!
//! Glyphs: `.` empty, `#` wall, `W` water, `G` goal. Every non-wall cell is
//! a state. The four actions move up, down, left and right; bumping into a
//! wall or the border leaves the agent in place. The reward of `(s, a)` is
//! decided by the destination cell. Goal cells are absorbing with zero reward.

use ndarray::{Array1, Array2, Array3};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

pub const ACTION_NAMES: [&str; 4] = ["up", "down", "left", "right"];
const MOVES: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

/// Bundled layout: a water column between the start area and the goal.
pub const DEFAULT_GRID: &str = "\
........
..W.....
..W..#..
..W..#..
..W..#.G
........
";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Empty,
    Wall,
    Water,
    Goal,
}

impl Cell {
    fn parse(c: char) -> Option<Cell> {
        match c {
            '.' => Some(Cell::Empty),
            '#' => Some(Cell::Wall),
            'W' => Some(Cell::Water),
            'G' => Some(Cell::Goal),
            _ => None,
        }
    }

    pub fn glyph(self) -> char {
        match self {
            Cell::Empty => '.',
            Cell::Wall => '#',
            Cell::Water => 'W',
            Cell::Goal => 'G',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridParams {
    pub gamma: f64,
    pub water_reward: f64,
    pub goal_reward: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            water_reward: -1.0,
            goal_reward: 5.0,
        }
    }
}

/// A parsed grid together with its MDP.
#[derive(Debug, Clone)]
pub struct Gridworld {
    pub mdp: TabularMdp,
    pub rows: usize,
    pub cols: usize,
    /// `(row, col)` of each state, in row-major order of the grid.
    pub positions: Vec<(usize, usize)>,
    /// Cell kind of each state.
    pub cells: Vec<Cell>,
}

impl Gridworld {
    pub fn is_goal(&self, s: usize) -> bool {
        self.cells[s] == Cell::Goal
    }
}

/// Parses a grid and builds its MDP.
pub fn load_gridworld(text: &str, params: &GridParams) -> Result<Gridworld> {
    let lines: Vec<&str> = text
        .lines()
        .map(|l| l.trim_end_matches('\r'))
        .collect();
    let last = lines.iter().rposition(|l| !l.trim().is_empty()).ok_or(Error::Parse {
        line: 1,
        column: 1,
        message: "empty grid".into(),
    })?;
    let lines = &lines[..=last];

    let mut grid: Vec<Vec<Cell>> = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        let mut row = Vec::new();
        for (j, c) in line.chars().enumerate() {
            row.push(Cell::parse(c).ok_or_else(|| Error::Parse {
                line: i + 1,
                column: j + 1,
                message: format!("unexpected character {c:?}"),
            })?);
        }
        if row.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                column: 1,
                message: "empty row".into(),
            });
        }
        if let Some(first) = grid.first() {
            if row.len() != first.len() {
                return Err(Error::Parse {
                    line: i + 1,
                    column: row.len().min(first.len()) + 1,
                    message: format!("row has {} cells, expected {}", row.len(), first.len()),
                });
            }
        }
        grid.push(row);
    }
    let rows = grid.len();
    let cols = grid[0].len();

    let mut index = vec![vec![None; cols]; rows];
    let mut positions = Vec::new();
    let mut cells = Vec::new();
    for (i, row) in grid.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            if *cell != Cell::Wall {
                index[i][j] = Some(positions.len());
                positions.push((i, j));
                cells.push(*cell);
            }
        }
    }
    if !cells.contains(&Cell::Goal) {
        return Err(Error::InvalidInput("grid has no goal cell".into()));
    }
    let n_start = cells.iter().filter(|c| **c != Cell::Goal).count();
    if n_start == 0 {
        return Err(Error::InvalidInput("grid has no non-goal cell to start from".into()));
    }

    let n = positions.len();
    let mut transition = Array3::zeros((n, 4, n));
    let mut reward = Array2::zeros((n, 4));
    for (s, &(i, j)) in positions.iter().enumerate() {
        for (a, (di, dj)) in MOVES.iter().enumerate() {
            if cells[s] == Cell::Goal {
                transition[[s, a, s]] = 1.0;
                continue;
            }
            let (ni, nj) = (i as isize + di, j as isize + dj);
            let dest = if ni >= 0 && nj >= 0 && (ni as usize) < rows && (nj as usize) < cols {
                index[ni as usize][nj as usize].unwrap_or(s)
            } else {
                s
            };
            transition[[s, a, dest]] = 1.0;
            reward[[s, a]] = match cells[dest] {
                Cell::Water => params.water_reward,
                Cell::Goal => params.goal_reward,
                _ => 0.0,
            };
        }
    }
    let nu0 = Array1::from_iter(
        cells
            .iter()
            .map(|c| if *c == Cell::Goal { 0.0 } else { 1.0 / n_start as f64 }),
    );
    let mdp = TabularMdp::new(transition, reward, nu0, params.gamma)?;
    Ok(Gridworld {
        mdp,
        rows,
        cols,
        positions,
        cells,
    })
}

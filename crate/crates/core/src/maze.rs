//! Deterministic 8-action grid mazes.
//!
//! Maps are ASCII: `#` wall, ` ` open, `S` start, `G` goal, `D` doorway (an
//! open cell whose position is recorded). Border cells must be walls and the
//! goal must be reachable from the start under 8-connected moves. A move is
//! blocked only when its target cell is a wall, so diagonal moves may pass
//! between two wall corners.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NUM_ACTIONS: usize = 8;
pub const DEFAULT_HORIZON: usize = 1000;

pub const WALL_REWARD: f64 = -1.0;
pub const GOAL_REWARD: f64 = 1.0;
pub const STEP_REWARD: f64 = -0.01;

pub const FOUR_ROOMS: &str = "\
#############
#     #     #
#     #    G#
#     D     #
#     #     #
#     #     #
##D####     #
#     ###D###
#     #     #
#     #     #
#     D     #
#S    #     #
#############
";

pub const ONE_ROOM_TEN_OBS: &str = "\
#############
#          G#
#   #       #
#        #  #
#     #     #
#  #        #
#       #   #
#    #      #
# #       # #
#      #    #
#   #       #
#S          #
#############
";

pub const ONE_ROOM_ONE_OBS: &str = "\
#############
#          G#
#           #
#     #     #
#     #     #
#     #     #
#     #     #
#     #     #
#     #     #
#     #     #
#           #
#S          #
#############
";

/// Open 13×13 room with start and goal in opposite corners.
pub const EMPTY_ROOM: &str = "\
#############
#          G#
#           #
#           #
#           #
#           #
#           #
#           #
#           #
#           #
#           #
#S          #
#############
";

/// Mazes used by the experiments.
pub const BUILTIN_MAZES: [&str; 3] = ["one-room-ten-obs", "one-room-one-obs", "four-rooms"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

/// Compass moves, indexed 0..8 clockwise from north.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    North,
    NorthEast,
    East,
    SouthEast,
    South,
    SouthWest,
    West,
    NorthWest,
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [
        Action::North,
        Action::NorthEast,
        Action::East,
        Action::SouthEast,
        Action::South,
        Action::SouthWest,
        Action::West,
        Action::NorthWest,
    ];

    pub fn from_index(index: usize) -> Option<Action> {
        Self::ALL.get(index).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// (row delta, column delta); north is decreasing row.
    pub fn delta(self) -> (isize, isize) {
        match self {
            Action::North => (-1, 0),
            Action::NorthEast => (-1, 1),
            Action::East => (0, 1),
            Action::SouthEast => (1, 1),
            Action::South => (1, 0),
            Action::SouthWest => (1, -1),
            Action::West => (0, -1),
            Action::NorthWest => (-1, -1),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MazeError {
    #[error("empty map")]
    Empty,
    #[error("non-rectangular map: row {row} has width {width}, expected {expected}")]
    NonRectangular { row: usize, width: usize, expected: usize },
    #[error("unknown map character {ch:?} at ({row},{col})")]
    UnknownChar { ch: char, row: usize, col: usize },
    #[error("missing start marker 'S'")]
    MissingStart,
    #[error("missing goal marker 'G'")]
    MissingGoal,
    #[error("more than one {0:?} marker")]
    DuplicateMarker(char),
    #[error("border cell {0} is not a wall")]
    OpenBorder(Cell),
    #[error("goal unreachable from start")]
    GoalUnreachable,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnvError {
    #[error("step called on a finished episode")]
    StepAfterDone,
    #[error("action index {0} out of range 0..8")]
    InvalidAction(usize),
}

/// Immutable validated maze.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MazeSpec {
    name: String,
    width: usize,
    height: usize,
    walls: Vec<bool>,
    start: Cell,
    goal: Cell,
    doorways: Vec<(String, Cell)>,
}

impl MazeSpec {
    /// Parse an ASCII map. Doorways are named `door-<k>` in reading order.
    pub fn parse(name: &str, text: &str) -> Result<Self, MazeError> {
        let lines: Vec<&str> = text.lines().collect();
        let lines: Vec<&str> = match lines.iter().rposition(|l| !l.is_empty()) {
            Some(last) => lines[..=last].to_vec(),
            None => return Err(MazeError::Empty),
        };
        let height = lines.len();
        let width = lines[0].chars().count();
        if width == 0 {
            return Err(MazeError::Empty);
        }
        let mut walls = vec![false; width * height];
        let mut start = None;
        let mut goal = None;
        let mut doorways = Vec::new();
        for (row, line) in lines.iter().enumerate() {
            let w = line.chars().count();
            if w != width {
                return Err(MazeError::NonRectangular {
                    row,
                    width: w,
                    expected: width,
                });
            }
            for (col, ch) in line.chars().enumerate() {
                let cell = Cell::new(row, col);
                match ch {
                    '#' => walls[row * width + col] = true,
                    ' ' => {}
                    'S' => {
                        if start.replace(cell).is_some() {
                            return Err(MazeError::DuplicateMarker('S'));
                        }
                    }
                    'G' => {
                        if goal.replace(cell).is_some() {
                            return Err(MazeError::DuplicateMarker('G'));
                        }
                    }
                    'D' => {
                        let k = doorways.len();
                        doorways.push((format!("door-{k}"), cell));
                    }
                    other => return Err(MazeError::UnknownChar { ch: other, row, col }),
                }
            }
        }
        let start = start.ok_or(MazeError::MissingStart)?;
        let goal = goal.ok_or(MazeError::MissingGoal)?;
        for row in 0..height {
            for col in 0..width {
                let border = row == 0 || col == 0 || row + 1 == height || col + 1 == width;
                if border && !walls[row * width + col] {
                    return Err(MazeError::OpenBorder(Cell::new(row, col)));
                }
            }
        }
        let maze = Self {
            name: name.to_string(),
            width,
            height,
            walls,
            start,
            goal,
            doorways,
        };
        if maze.distances_from(start)[maze.index(goal)].is_none() {
            return Err(MazeError::GoalUnreachable);
        }
        Ok(maze)
    }

    pub fn builtin(name: &str) -> Option<Self> {
        let text = match name {
            "four-rooms" => FOUR_ROOMS,
            "one-room-ten-obs" => ONE_ROOM_TEN_OBS,
            "one-room-one-obs" => ONE_ROOM_ONE_OBS,
            "empty-room" => EMPTY_ROOM,
            _ => return None,
        };
        Some(Self::parse(name, text).expect("built-in maps are valid"))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn start(&self) -> Cell {
        self.start
    }

    pub fn goal(&self) -> Cell {
        self.goal
    }

    pub fn doorways(&self) -> &[(String, Cell)] {
        &self.doorways
    }

    pub fn num_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    pub fn is_wall(&self, cell: Cell) -> bool {
        cell.row >= self.height || cell.col >= self.width || self.walls[self.index(cell)]
    }

    pub fn walls(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height)
            .flat_map(move |row| (0..self.width).map(move |col| Cell::new(row, col)))
            .filter(move |&c| self.walls[self.index(c)])
    }

    pub fn wall_count(&self) -> usize {
        self.walls.iter().filter(|&&w| w).count()
    }

    /// Cell reached by `action`, or `None` if it leaves the grid.
    pub fn neighbor(&self, cell: Cell, action: Action) -> Option<Cell> {
        let (dr, dc) = action.delta();
        let row = cell.row.checked_add_signed(dr)?;
        let col = cell.col.checked_add_signed(dc)?;
        (row < self.height && col < self.width).then_some(Cell::new(row, col))
    }

    /// Breadth-first step counts from `source` to every cell (None for walls
    /// and unreachable cells).
    pub fn distances_from(&self, source: Cell) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.num_cells()];
        if self.is_wall(source) {
            return dist;
        }
        dist[self.index(source)] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(cell) = queue.pop_front() {
            let d = dist[self.index(cell)].expect("queued cells have distances");
            for action in Action::ALL {
                if let Some(next) = self.neighbor(cell, action) {
                    let i = self.index(next);
                    if !self.walls[i] && dist[i].is_none() {
                        dist[i] = Some(d + 1);
                        queue.push_back(next);
                    }
                }
            }
        }
        dist
    }

    /// Map text in the load format.
    pub fn to_ascii(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for row in 0..self.height {
            for col in 0..self.width {
                let cell = Cell::new(row, col);
                let ch = if cell == self.start {
                    'S'
                } else if cell == self.goal {
                    'G'
                } else if self.doorways.iter().any(|(_, d)| *d == cell) {
                    'D'
                } else if self.walls[self.index(cell)] {
                    '#'
                } else {
                    ' '
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }
}

/// Built-in name, or else map text.
pub fn load_maze(source: &str) -> Result<MazeSpec, MazeError> {
    match MazeSpec::builtin(source) {
        Some(m) => Ok(m),
        None => MazeSpec::parse("custom", source),
    }
}

/// Fewest 8-connected moves from start to goal.
pub fn shortest_path_length(maze: &MazeSpec) -> usize {
    maze.distances_from(maze.start)[maze.index(maze.goal)].expect("goal reachability is checked at load")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvState {
    pub cell: Cell,
    pub steps: usize,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ObservationMode {
    #[default]
    OneHot,
    Coords,
}

impl ObservationMode {
    pub fn dim(self, maze: &MazeSpec) -> usize {
        match self {
            ObservationMode::OneHot => maze.num_cells(),
            ObservationMode::Coords => 2,
        }
    }
}

/// Encoded state fed to the networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn encode_cell(cell: Cell, maze: &MazeSpec, mode: ObservationMode) -> Observation {
    match mode {
        ObservationMode::OneHot => {
            let mut v = vec![0.0; maze.num_cells()];
            v[maze.index(cell)] = 1.0;
            Observation(v)
        }
        ObservationMode::Coords => Observation(vec![
            cell.col as f64 / (maze.width - 1) as f64,
            cell.row as f64 / (maze.height - 1) as f64,
        ]),
    }
}

pub fn observe(state: &EnvState, maze: &MazeSpec, mode: ObservationMode) -> Observation {
    encode_cell(state.cell, maze, mode)
}

pub fn reset(maze: &MazeSpec) -> (EnvState, Observation) {
    let state = EnvState {
        cell: maze.start,
        steps: 0,
        done: false,
    };
    (state, observe(&state, maze, ObservationMode::OneHot))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub reward: f64,
    pub done: bool,
    pub reached_goal: bool,
    pub hit_wall: bool,
}

pub fn step(
    state: &EnvState,
    maze: &MazeSpec,
    action: usize,
    horizon: usize,
) -> Result<StepOutcome, EnvError> {
    if state.done {
        return Err(EnvError::StepAfterDone);
    }
    let action = Action::from_index(action).ok_or(EnvError::InvalidAction(action))?;
    let target = maze.neighbor(state.cell, action).filter(|&c| !maze.is_wall(c));
    let (cell, reward, reached_goal, hit_wall) = match target {
        None => (state.cell, WALL_REWARD, false, true),
        Some(c) if c == maze.goal => (c, GOAL_REWARD, true, false),
        Some(c) => (c, STEP_REWARD, false, false),
    };
    let steps = state.steps + 1;
    let done = reached_goal || steps >= horizon;
    Ok(StepOutcome {
        state: EnvState { cell, steps, done },
        reward,
        done,
        reached_goal,
        hit_wall,
    })
}

/// A maze plus the mutable episode state, for agent loops.
#[derive(Debug, Clone)]
pub struct MazeEnv {
    maze: Arc<MazeSpec>,
    horizon: usize,
    mode: ObservationMode,
    state: EnvState,
}

impl MazeEnv {
    pub fn new(maze: Arc<MazeSpec>, horizon: usize, mode: ObservationMode) -> Self {
        let (state, _) = reset(&maze);
        Self {
            maze,
            horizon,
            mode,
            state,
        }
    }

    pub fn maze(&self) -> &Arc<MazeSpec> {
        &self.maze
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn mode(&self) -> ObservationMode {
        self.mode
    }

    pub fn state(&self) -> EnvState {
        self.state
    }

    pub fn observation_dim(&self) -> usize {
        self.mode.dim(&self.maze)
    }

    pub fn observe(&self) -> Observation {
        observe(&self.state, &self.maze, self.mode)
    }

    pub fn reset(&mut self) -> Observation {
        self.state = reset(&self.maze).0;
        self.observe()
    }

    pub fn step(&mut self, action: usize) -> Result<StepOutcome, EnvError> {
        let outcome = step(&self.state, &self.maze, action, self.horizon)?;
        self.state = outcome.state;
        Ok(outcome)
    }
}

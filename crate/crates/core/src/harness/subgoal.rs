//! Hand-set sub-goal plans that replace learned option selection and termination.

use thiserror::Error;

use crate::maze::{encode_cell, Cell, MazeSpec, ObservationMode};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum MatchMode {
    #[default]
    ExactCell,
    /// Cosine similarity between coordinate encodings must reach the threshold.
    Cosine { threshold: f64 },
}

pub const DEFAULT_COSINE_THRESHOLD: f64 = 0.999;

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("sub-goal plan is empty")]
    Empty,
    #[error("plan has {len} sub-goals but only {options} options")]
    TooManySubgoals { len: usize, options: usize },
    #[error("plan must end at the goal {goal}, ends at {last}")]
    DoesNotEndAtGoal { goal: Cell, last: Cell },
    #[error("sub-goal {0} is a wall")]
    WallSubgoal(Cell),
    #[error("cosine threshold {0} outside (0, 1]")]
    BadThreshold(f64),
}

/// Ordered sub-goals; option `i` runs segment `i` and ends at sub-goal `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ManualSubgoalPlan {
    subgoals: Vec<Cell>,
    mode: MatchMode,
    width: usize,
    height: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubgoalDecision {
    pub terminate: bool,
    pub next_option: usize,
}

impl ManualSubgoalPlan {
    pub fn new(
        subgoals: Vec<Cell>,
        mode: MatchMode,
        maze: &MazeSpec,
        num_options: usize,
    ) -> Result<Self, PlanError> {
        let last = *subgoals.last().ok_or(PlanError::Empty)?;
        if subgoals.len() > num_options {
            return Err(PlanError::TooManySubgoals {
                len: subgoals.len(),
                options: num_options,
            });
        }
        if last != maze.goal() {
            return Err(PlanError::DoesNotEndAtGoal {
                goal: maze.goal(),
                last,
            });
        }
        if let Some(&wall) = subgoals.iter().find(|&&c| maze.is_wall(c)) {
            return Err(PlanError::WallSubgoal(wall));
        }
        if let MatchMode::Cosine { threshold } = mode {
            if !(threshold > 0.0 && threshold <= 1.0) {
                return Err(PlanError::BadThreshold(threshold));
            }
        }
        Ok(Self {
            subgoals,
            mode,
            width: maze.width(),
            height: maze.height(),
        })
    }

    /// SW room → doorway (10,6) → SE room → doorway (7,9) → NE room → goal.
    pub fn four_rooms_doorways(maze: &MazeSpec, mode: MatchMode, num_options: usize) -> Result<Self, PlanError> {
        Self::new(vec![Cell::new(10, 6), Cell::new(7, 9), maze.goal()], mode, maze, num_options)
    }

    pub fn subgoals(&self) -> &[Cell] {
        &self.subgoals
    }

    pub fn mode(&self) -> MatchMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.subgoals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subgoals.is_empty()
    }

    fn reached(&self, cell: Cell, segment: usize) -> bool {
        let target = self.subgoals[segment];
        match self.mode {
            MatchMode::ExactCell => cell == target,
            MatchMode::Cosine { threshold } => {
                let enc = |c: Cell| {
                    [
                        c.col as f64 / (self.width - 1) as f64,
                        c.row as f64 / (self.height - 1) as f64,
                    ]
                };
                cosine_similarity(&enc(cell), &enc(target)) >= threshold
            }
        }
    }
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Decide whether the option bound to `segment` ends in `cell`. The segment
/// index doubles as the option index.
///
/// Panics if `segment` is not a valid segment of `plan`.
pub fn manual_subgoal_controller(plan: &ManualSubgoalPlan, cell: Cell, segment: usize) -> SubgoalDecision {
    assert!(segment < plan.len(), "segment {segment} out of range");
    let terminate = plan.reached(cell, segment);
    let next_option = if terminate {
        (segment + 1).min(plan.len() - 1)
    } else {
        segment
    };
    SubgoalDecision {
        terminate,
        next_option,
    }
}

/// Coordinate observation of `cell`, as the cosine mode compares it.
pub fn coordinate_encoding(cell: Cell, maze: &MazeSpec) -> Vec<f64> {
    encode_cell(cell, maze, ObservationMode::Coords).0
}

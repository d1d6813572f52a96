//! Single-robot grid navigation with goals and obstacles.
//!
//! Coordinates are `[row, column]` with the origin in the top-left corner, so
//! `Move up` decrements the row. In the ordered variant goals must be picked
//! in index order.

use std::collections::{BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::parse::first_braced;
use crate::{Applied, EnvError, ErrorKind, Result, Task};

pub type Cell = [i32; 2];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridGoal {
    pub index: usize,
    pub pos: Cell,
    pub picked: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridState {
    pub rows: i32,
    pub cols: i32,
    pub robot: Cell,
    pub goals: Vec<GridGoal>,
    pub obstacles: Vec<Cell>,
    /// Goals must be picked in ascending index order.
    pub ordered: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GridAction {
    Move(Direction),
    Pick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    fn delta(self) -> Cell {
        match self {
            Direction::Up => [-1, 0],
            Direction::Down => [1, 0],
            Direction::Left => [0, -1],
            Direction::Right => [0, 1],
        }
    }

    fn name(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }
}

impl GridAction {
    fn parse(s: &str) -> Option<Self> {
        let words: Vec<String> = s.split_whitespace().map(str::to_ascii_lowercase).collect();
        let words: Vec<&str> = words.iter().map(String::as_str).collect();
        Some(match words.as_slice() {
            ["move", "up"] => GridAction::Move(Direction::Up),
            ["move", "down"] => GridAction::Move(Direction::Down),
            ["move", "left"] => GridAction::Move(Direction::Left),
            ["move", "right"] => GridAction::Move(Direction::Right),
            ["pick", "goal"] | ["pick", "up", "goal"] | ["visit", "goal"] => GridAction::Pick,
            _ => return None,
        })
    }

    fn label(self) -> String {
        match self {
            GridAction::Move(d) => format!("Move {}", d.name()),
            GridAction::Pick => "Pick goal".to_string(),
        }
    }
}

fn cell(c: Cell) -> String {
    format!("[{},{}]", c[0], c[1])
}

impl GridState {
    pub fn in_bounds(&self, c: Cell) -> bool {
        (0..self.rows).contains(&c[0]) && (0..self.cols).contains(&c[1])
    }

    pub fn is_obstacle(&self, c: Cell) -> bool {
        self.obstacles.contains(&c)
    }

    fn next_goal(&self) -> Option<&GridGoal> {
        self.goals.iter().filter(|g| !g.picked).min_by_key(|g| g.index)
    }

    pub(crate) fn generate(
        rng: &mut impl Rng,
        rows: i32,
        cols: i32,
        goals: usize,
        obstacles: usize,
        ordered: bool,
    ) -> Result<Self> {
        if rows < 1 || cols < 1 || goals < 1 {
            return Err(EnvError::Infeasible(
                "grid needs at least one row, one column and one goal".into(),
            ));
        }
        let cells = (rows * cols) as usize;
        if 1 + goals + obstacles > cells {
            return Err(EnvError::Infeasible(format!(
                "{rows}x{cols} grid cannot hold a robot, {goals} goals and {obstacles} obstacles"
            )));
        }
        let mut all: Vec<Cell> = (0..rows).flat_map(|r| (0..cols).map(move |c| [r, c])).collect();
        for _ in 0..1000 {
            all.shuffle(rng);
            let state = GridState {
                rows,
                cols,
                robot: all[0],
                goals: all[1..=goals]
                    .iter()
                    .enumerate()
                    .map(|(index, &pos)| GridGoal {
                        index,
                        pos,
                        picked: false,
                    })
                    .collect(),
                obstacles: {
                    let mut obs = all[1 + goals..1 + goals + obstacles].to_vec();
                    obs.sort();
                    obs
                },
                ordered,
            };
            if state.all_goals_reachable() {
                return Ok(state);
            }
        }
        Err(EnvError::Infeasible("could not place goals reachable from the robot".into()))
    }

    fn all_goals_reachable(&self) -> bool {
        let mut seen = BTreeSet::from([self.robot]);
        let mut queue = VecDeque::from([self.robot]);
        while let Some(c) = queue.pop_front() {
            for d in [Direction::Up, Direction::Down, Direction::Left, Direction::Right] {
                let n = [c[0] + d.delta()[0], c[1] + d.delta()[1]];
                if self.in_bounds(n) && !self.is_obstacle(n) && seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        self.goals.iter().all(|g| seen.contains(&g.pos))
    }
}

impl Task for GridState {
    fn observe(&self) -> String {
        let mut out = format!(
            "The field has {} rows and {} columns (rows 0-{}, columns 0-{}). The robot is at {}.\n",
            self.rows,
            self.cols,
            self.rows - 1,
            self.cols - 1,
            cell(self.robot)
        );
        let obstacles: Vec<String> = self.obstacles.iter().map(|&c| cell(c)).collect();
        out.push_str(&format!(
            "Obstacles are at: {}.\n",
            if obstacles.is_empty() {
                "none".to_string()
            } else {
                obstacles.join(", ")
            }
        ));
        let remaining: Vec<String> = self
            .goals
            .iter()
            .filter(|g| !g.picked)
            .map(|g| {
                if self.ordered {
                    format!("goal_{} at {}", g.index, cell(g.pos))
                } else {
                    cell(g.pos)
                }
            })
            .collect();
        out.push_str(&format!(
            "Goals not yet picked: {}.\n",
            if remaining.is_empty() {
                "none".to_string()
            } else {
                remaining.join(", ")
            }
        ));
        let (done, total) = self.subgoals();
        out.push_str(&format!("Goals picked: {done} of {total}."));
        if self.ordered {
            if let Some(next) = self.next_goal() {
                out.push_str(&format!(" The next goal to pick is goal_{}.", next.index));
            }
        }
        out
    }

    fn apply(&mut self, reply: &str) -> Applied {
        let Some(action) = first_braced(reply, GridAction::parse) else {
            return Applied::syntactic(
                "No valid action was found. Reply with exactly one of {Move up}, {Move down}, {Move left}, {Move right}, {Pick goal}.",
            );
        };
        let label = action.label();
        match action {
            GridAction::Move(dir) => {
                let d = dir.delta();
                let target = [self.robot[0] + d[0], self.robot[1] + d[1]];
                if !self.in_bounds(target) {
                    return Applied::fail(
                        Some(label),
                        ErrorKind::OutOfGrid,
                        format!("Moving {} from {} leaves the field.", dir.name(), cell(self.robot)),
                    );
                }
                if self.is_obstacle(target) {
                    return Applied::fail(
                        Some(label),
                        ErrorKind::Collision,
                        format!(
                            "Moving {} from {} hits the obstacle at {}.",
                            dir.name(),
                            cell(self.robot),
                            cell(target)
                        ),
                    );
                }
                self.robot = target;
                Applied::ok(label, format!("The robot moved {} to {}.", dir.name(), cell(target)))
            }
            GridAction::Pick => {
                let here = self.robot;
                let next_index = self.next_goal().map(|g| g.index);
                let Some(goal) = self.goals.iter_mut().find(|g| !g.picked && g.pos == here) else {
                    return Applied::ok(label, format!("There is no goal at {} to pick.", cell(here)));
                };
                if self.ordered && Some(goal.index) != next_index {
                    let idx = goal.index;
                    return Applied::fail(
                        Some(label),
                        ErrorKind::WrongOrder,
                        format!(
                            "goal_{idx} at {} cannot be picked yet; goal_{} must be picked first.",
                            cell(here),
                            next_index.unwrap_or_default()
                        ),
                    );
                }
                goal.picked = true;
                let msg = if self.ordered {
                    format!("Picked goal_{} at {}.", goal.index, cell(here))
                } else {
                    format!("Picked the goal at {}.", cell(here))
                };
                Applied::ok(label, msg)
            }
        }
    }

    fn subgoals(&self) -> (usize, usize) {
        (self.goals.iter().filter(|g| g.picked).count(), self.goals.len())
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(EnvError::Invalid(m));
        if self.rows < 1 || self.cols < 1 {
            return bad("grid must be at least 1x1".into());
        }
        if self.goals.is_empty() {
            return bad("at least one goal is required".into());
        }
        if !self.in_bounds(self.robot) || self.is_obstacle(self.robot) {
            return bad(format!("robot at {} is off the grid or on an obstacle", cell(self.robot)));
        }
        let mut seen = BTreeSet::new();
        for o in &self.obstacles {
            if !self.in_bounds(*o) {
                return bad(format!("obstacle {} is off the grid", cell(*o)));
            }
        }
        let mut indices: Vec<usize> = self.goals.iter().map(|g| g.index).collect();
        indices.sort_unstable();
        if indices != (0..self.goals.len()).collect::<Vec<_>>() {
            return bad("goal indices must be 0..n".into());
        }
        for g in &self.goals {
            if !self.in_bounds(g.pos) || self.is_obstacle(g.pos) {
                return bad(format!(
                    "goal_{} at {} is off the grid or on an obstacle",
                    g.index,
                    cell(g.pos)
                ));
            }
            if !seen.insert(g.pos) {
                return bad(format!("two goals share {}", cell(g.pos)));
            }
        }
        Ok(())
    }
}

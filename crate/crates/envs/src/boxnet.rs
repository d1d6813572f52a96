//! Robot arms moving coloured boxes to matching targets on a cell grid.
//!
//! One arm sits in every cell. Cells are named by their centre,
//! `square[r+0.5, c+0.5]`. In the first variant boxes live inside cells and
//! move to neighbouring cells; in the second they sit on cell corners,
//! `position[r, c]`, and each corner holds at most one box.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use rand::seq::SliceRandom;
use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::parse::first_mapping;
use crate::{Applied, EnvError, ErrorKind, Result, Task};

pub const BOX_COLORS: [&str; 8] = ["red", "blue", "green", "yellow", "purple", "orange", "pink", "brown"];

pub type Coord = [u32; 2];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetBox {
    pub color: String,
    /// Cell (first variant) or corner (second variant); `None` once matched.
    pub at: Option<Coord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetTarget {
    pub color: String,
    pub cell: Coord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxNet1State {
    pub rows: u32,
    pub cols: u32,
    pub boxes: Vec<NetBox>,
    pub targets: Vec<NetTarget>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxNet2State {
    pub rows: u32,
    pub cols: u32,
    pub boxes: Vec<NetBox>,
    pub targets: Vec<NetTarget>,
}

#[derive(Debug, Clone, PartialEq)]
enum Dest {
    Target(String),
    Square(f64, f64),
    Position(f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
struct NetMove {
    agent: (f64, f64),
    color: String,
    dest: Dest,
}

static AGENT_KEY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^agent\s*\[\s*([0-9]+(?:\.[0-9]+)?)\s*,\s*([0-9]+(?:\.[0-9]+)?)\s*\]$").unwrap());
static MOVE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^move\s*\(\s*box_([a-z]+)\s*,\s*(?:target_([a-z]+)|(square|position)\s*\[\s*([0-9]+(?:\.[0-9]+)?)\s*,\s*([0-9]+(?:\.[0-9]+)?)\s*\])\s*\)$").unwrap()
});

fn parse_plan(reply: &str) -> Option<Vec<NetMove>> {
    first_mapping(reply)?
        .into_iter()
        .map(|(k, v)| {
            let a = AGENT_KEY.captures(&k)?;
            let m = MOVE.captures(&v)?;
            let agent = (a[1].parse().ok()?, a[2].parse().ok()?);
            let dest = match (m.get(2), m.get(3)) {
                (Some(t), _) => Dest::Target(t.as_str().to_lowercase()),
                (None, Some(kind)) => {
                    let (x, y) = (m[4].parse().ok()?, m[5].parse().ok()?);
                    if kind.as_str().eq_ignore_ascii_case("square") {
                        Dest::Square(x, y)
                    } else {
                        Dest::Position(x, y)
                    }
                }
                _ => return None,
            };
            Some(NetMove {
                agent,
                color: m[1].to_lowercase(),
                dest,
            })
        })
        .collect()
}

/// Cell whose centre is `(x, y)`, if it is on the grid.
fn cell_from_centre(rows: u32, cols: u32, (x, y): (f64, f64)) -> Option<Coord> {
    let (r, c) = (x - 0.5, y - 0.5);
    let ok = |v: f64, n: u32| v >= 0.0 && v.fract().abs() < 1e-9 && (v as u32) < n;
    (ok(r, rows) && ok(c, cols)).then_some([r as u32, c as u32])
}

fn corner_from(rows: u32, cols: u32, (x, y): (f64, f64)) -> Option<Coord> {
    let ok = |v: f64, n: u32| v >= 0.0 && v.fract().abs() < 1e-9 && (v as u32) <= n;
    (ok(x, rows) && ok(y, cols)).then_some([x as u32, y as u32])
}

pub fn square_label(c: Coord) -> String {
    format!("square[{:.1}, {:.1}]", c[0] as f64 + 0.5, c[1] as f64 + 0.5)
}

pub fn agent_label(c: Coord) -> String {
    format!("Agent[{:.1}, {:.1}]", c[0] as f64 + 0.5, c[1] as f64 + 0.5)
}

pub fn position_label(c: Coord) -> String {
    format!("position[{:.1}, {:.1}]", c[0] as f64, c[1] as f64)
}

fn corners_of(cell: Coord) -> [Coord; 4] {
    let [r, c] = cell;
    [[r, c], [r, c + 1], [r + 1, c], [r + 1, c + 1]]
}

fn neighbours(rows: u32, cols: u32, cell: Coord) -> Vec<Coord> {
    let [r, c] = cell;
    let mut out = Vec::new();
    if r > 0 {
        out.push([r - 1, c]);
    }
    if r + 1 < rows {
        out.push([r + 1, c]);
    }
    if c > 0 {
        out.push([r, c - 1]);
    }
    if c + 1 < cols {
        out.push([r, c + 1]);
    }
    out
}

fn move_label(m: &NetMove) -> String {
    let dest = match &m.dest {
        Dest::Target(t) => format!("target_{t}"),
        Dest::Square(x, y) => format!("square[{x:.1}, {y:.1}]"),
        Dest::Position(x, y) => format!("position[{x:.1}, {y:.1}]"),
    };
    format!("'Agent[{:.1}, {:.1}]':'move(box_{}, {dest})'", m.agent.0, m.agent.1, m.color)
}

fn plan_label(plan: &[NetMove]) -> String {
    format!("{{{}}}", plan.iter().map(move_label).collect::<Vec<_>>().join(", "))
}

/// Agent listed twice or a box moved twice.
fn conflict(plan: &[NetMove]) -> Option<String> {
    let mut agents = BTreeSet::new();
    let mut boxes = BTreeSet::new();
    for m in plan {
        let key = format!("{:.1},{:.1}", m.agent.0, m.agent.1);
        if !agents.insert(key) {
            return Some(format!(
                "Agent[{:.1}, {:.1}] was given more than one action, so the whole plan was rejected.",
                m.agent.0, m.agent.1
            ));
        }
        if !boxes.insert(m.color.clone()) {
            return Some(format!(
                "box_{} was moved by more than one agent, so the whole plan was rejected.",
                m.color
            ));
        }
    }
    None
}

fn syntactic(example: &str) -> Applied {
    Applied::syntactic(format!("No valid action plan was found. Use a mapping like {example}."))
}

fn shuffled_colors(rng: &mut impl Rng, n: usize) -> Vec<String> {
    let mut colors: Vec<String> = BOX_COLORS.iter().map(|s| s.to_string()).collect();
    colors.shuffle(rng);
    colors.truncate(n);
    colors
}

fn validate_common(rows: u32, cols: u32, boxes: &[NetBox], targets: &[NetTarget]) -> Result<()> {
    let bad = |m: String| Err(EnvError::Invalid(m));
    if rows == 0 || cols == 0 || boxes.is_empty() {
        return bad("grid must be non-empty and hold at least one box".into());
    }
    let colors: BTreeSet<&String> = boxes.iter().map(|b| &b.color).collect();
    if colors.len() != boxes.len() {
        return bad("box colours must be unique".into());
    }
    let target_colors: BTreeSet<&String> = targets.iter().map(|t| &t.color).collect();
    if target_colors != colors || targets.len() != boxes.len() {
        return bad("every box needs exactly one target of its colour".into());
    }
    if targets.iter().any(|t| t.cell[0] >= rows || t.cell[1] >= cols) {
        return bad("target outside the grid".into());
    }
    Ok(())
}

impl BoxNet1State {
    pub(crate) fn generate(rng: &mut impl Rng, rows: u32, cols: u32, boxes: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || boxes == 0 || boxes > BOX_COLORS.len() {
            return Err(EnvError::Infeasible(format!(
                "boxnet needs a non-empty grid and 1 to {} boxes",
                BOX_COLORS.len()
            )));
        }
        let colors = shuffled_colors(rng, boxes);
        let mut random_cell = || [rng.random_range(0..rows), rng.random_range(0..cols)];
        let mut out_boxes = Vec::new();
        let mut targets = Vec::new();
        for color in colors {
            out_boxes.push(NetBox {
                color: color.clone(),
                at: Some(random_cell()),
            });
            targets.push(NetTarget {
                color,
                cell: random_cell(),
            });
        }
        Ok(BoxNet1State {
            rows,
            cols,
            boxes: out_boxes,
            targets,
        })
    }
}

impl Task for BoxNet1State {
    fn observe(&self) -> String {
        let mut lines = Vec::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let cell = [r, c];
                let here: Vec<&NetBox> = self.boxes.iter().filter(|b| b.at == Some(cell)).collect();
                let mut seen: Vec<String> = here.iter().map(|b| format!("'box_{}'", b.color)).collect();
                seen.extend(
                    self.targets
                        .iter()
                        .filter(|t| t.cell == cell)
                        .map(|t| format!("'target_{}'", t.color)),
                );
                let mut can = Vec::new();
                for b in &here {
                    for n in neighbours(self.rows, self.cols, cell) {
                        can.push(format!("'move(box_{}, {})'", b.color, square_label(n)));
                    }
                    if self.targets.iter().any(|t| t.cell == cell && t.color == b.color) {
                        can.push(format!("'move(box_{}, target_{})'", b.color, b.color));
                    }
                }
                lines.push(format!(
                    "{}: I am in {}, I can observe [{}], I can do [{}]",
                    agent_label(cell),
                    square_label(cell),
                    seen.join(", "),
                    can.join(", ")
                ));
            }
        }
        let (done, total) = self.subgoals();
        lines.push(format!("Boxes matched to targets: {done} of {total}."));
        lines.join("\n")
    }

    fn apply(&mut self, reply: &str) -> Applied {
        let Some(plan) = parse_plan(reply) else {
            return syntactic(
                "{'Agent[0.5, 0.5]':'move(box_blue, square[0.5, 1.5])', 'Agent[1.5, 0.5]':'move(box_red, target_red)'}",
            );
        };
        let label = plan_label(&plan);
        if let Some(why) = conflict(&plan) {
            return Applied::ok(label, why);
        }
        let mut notes = Vec::new();
        let mut effects: Vec<(usize, Option<Coord>)> = Vec::new();
        for m in &plan {
            let Some(cell) = cell_from_centre(self.rows, self.cols, m.agent) else {
                notes.push(format!("There is no agent at [{:.1}, {:.1}].", m.agent.0, m.agent.1));
                continue;
            };
            let Some(idx) = self.boxes.iter().position(|b| b.color == m.color && b.at == Some(cell)) else {
                notes.push(format!(
                    "{} cannot reach box_{}: it is not in its square.",
                    agent_label(cell),
                    m.color
                ));
                continue;
            };
            match &m.dest {
                Dest::Target(t) => {
                    if *t == m.color && self.targets.iter().any(|x| x.color == *t && x.cell == cell) {
                        effects.push((idx, None));
                        notes.push(format!("box_{} reached target_{t}.", m.color));
                    } else {
                        notes.push(format!("target_{t} for box_{} is not in {}.", m.color, square_label(cell)));
                    }
                }
                Dest::Square(x, y) => match cell_from_centre(self.rows, self.cols, (*x, *y)) {
                    Some(to) if neighbours(self.rows, self.cols, cell).contains(&to) => {
                        effects.push((idx, Some(to)));
                        notes.push(format!("box_{} moved to {}.", m.color, square_label(to)));
                    }
                    _ => notes.push(format!(
                        "square[{x:.1}, {y:.1}] is not a neighbour of {}.",
                        square_label(cell)
                    )),
                },
                Dest::Position(..) => notes.push("Boxes move between squares, not corner positions.".to_string()),
            }
        }
        for (idx, to) in effects {
            self.boxes[idx].at = to;
        }
        if notes.is_empty() {
            notes.push("No actions were given.".to_string());
        }
        Applied::ok(label, notes.join(" "))
    }

    fn subgoals(&self) -> (usize, usize) {
        (self.boxes.iter().filter(|b| b.at.is_none()).count(), self.boxes.len())
    }

    fn validate(&self) -> Result<()> {
        validate_common(self.rows, self.cols, &self.boxes, &self.targets)?;
        if self
            .boxes
            .iter()
            .flat_map(|b| b.at)
            .any(|c| c[0] >= self.rows || c[1] >= self.cols)
        {
            return Err(EnvError::Invalid("box outside the grid".into()));
        }
        Ok(())
    }
}

impl BoxNet2State {
    pub(crate) fn generate(rng: &mut impl Rng, rows: u32, cols: u32, boxes: usize) -> Result<Self> {
        let corners = ((rows + 1) * (cols + 1)) as usize;
        if rows == 0 || cols == 0 || boxes == 0 || boxes > BOX_COLORS.len() || boxes > corners {
            return Err(EnvError::Infeasible(format!(
                "boxnet2 needs a non-empty grid and 1 to {} boxes",
                BOX_COLORS.len().min(corners)
            )));
        }
        let colors = shuffled_colors(rng, boxes);
        let mut all: Vec<Coord> = (0..=rows).flat_map(|r| (0..=cols).map(move |c| [r, c])).collect();
        all.shuffle(rng);
        let mut out_boxes = Vec::new();
        let mut targets = Vec::new();
        for (color, corner) in colors.into_iter().zip(all) {
            out_boxes.push(NetBox {
                color: color.clone(),
                at: Some(corner),
            });
            targets.push(NetTarget {
                color,
                cell: [rng.random_range(0..rows), rng.random_range(0..cols)],
            });
        }
        Ok(BoxNet2State {
            rows,
            cols,
            boxes: out_boxes,
            targets,
        })
    }

    pub fn occupied(&self, corner: Coord) -> bool {
        self.boxes.iter().any(|b| b.at == Some(corner))
    }
}

impl Task for BoxNet2State {
    fn observe(&self) -> String {
        let mut lines = Vec::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let cell = [r, c];
                let corners = corners_of(cell);
                let here: Vec<&NetBox> = self
                    .boxes
                    .iter()
                    .filter(|b| b.at.is_some_and(|p| corners.contains(&p)))
                    .collect();
                let mut seen: Vec<String> = here
                    .iter()
                    .map(|b| format!("'box_{}' at {}", b.color, position_label(b.at.unwrap())))
                    .collect();
                seen.extend(
                    self.targets
                        .iter()
                        .filter(|t| t.cell == cell)
                        .map(|t| format!("'target_{}'", t.color)),
                );
                let mut can = Vec::new();
                for b in &here {
                    for &p in corners.iter().filter(|&&p| Some(p) != b.at) {
                        can.push(format!("'move(box_{}, {})'", b.color, position_label(p)));
                    }
                    if self.targets.iter().any(|t| t.cell == cell && t.color == b.color) {
                        can.push(format!("'move(box_{}, target_{})'", b.color, b.color));
                    }
                }
                lines.push(format!(
                    "{}: I am in {}, I can observe [{}], I can do [{}]",
                    agent_label(cell),
                    square_label(cell),
                    seen.join(", "),
                    can.join(", ")
                ));
            }
        }
        let (done, total) = self.subgoals();
        lines.push(format!("Boxes matched to targets: {done} of {total}."));
        lines.join("\n")
    }

    fn apply(&mut self, reply: &str) -> Applied {
        let Some(plan) = parse_plan(reply) else {
            return syntactic(
                "{'Agent[0.5, 0.5]':'move(box_blue, position[0.0, 1.0])', 'Agent[1.5, 0.5]':'move(box_red, target_red)'}",
            );
        };
        let label = plan_label(&plan);
        if let Some(why) = conflict(&plan) {
            return Applied::ok(label, why);
        }
        let mut notes = Vec::new();
        let mut effects: Vec<(usize, Option<Coord>)> = Vec::new();
        for m in &plan {
            let Some(cell) = cell_from_centre(self.rows, self.cols, m.agent) else {
                notes.push(format!("There is no agent at [{:.1}, {:.1}].", m.agent.0, m.agent.1));
                continue;
            };
            let corners = corners_of(cell);
            let Some(idx) = self
                .boxes
                .iter()
                .position(|b| b.color == m.color && b.at.is_some_and(|p| corners.contains(&p)))
            else {
                notes.push(format!(
                    "{} cannot reach box_{}: it is not on a corner of its square.",
                    agent_label(cell),
                    m.color
                ));
                continue;
            };
            match &m.dest {
                Dest::Target(t) => {
                    if *t == m.color && self.targets.iter().any(|x| x.color == *t && x.cell == cell) {
                        effects.push((idx, None));
                        notes.push(format!("box_{} reached target_{t}.", m.color));
                    } else {
                        notes.push(format!("target_{t} for box_{} is not in {}.", m.color, square_label(cell)));
                    }
                }
                Dest::Position(x, y) => match corner_from(self.rows, self.cols, (*x, *y)) {
                    Some(to) if corners.contains(&to) && Some(to) != self.boxes[idx].at => {
                        effects.push((idx, Some(to)));
                        notes.push(format!("box_{} moved to {}.", m.color, position_label(to)));
                    }
                    _ => notes.push(format!(
                        "position[{x:.1}, {y:.1}] is not another corner of {}.",
                        square_label(cell)
                    )),
                },
                Dest::Square(..) => notes.push("Boxes move between corner positions, not squares.".to_string()),
            }
        }
        let mut seen = BTreeSet::new();
        for (idx, to) in &effects {
            let Some(to) = to else { continue };
            if self.occupied(*to) || !seen.insert(*to) {
                return Applied::fail(
                    Some(label),
                    ErrorKind::Collision,
                    format!(
                        "Moving box_{} to {} collides with another box; each corner holds at most one box.",
                        self.boxes[*idx].color,
                        position_label(*to)
                    ),
                );
            }
        }
        for (idx, to) in effects {
            self.boxes[idx].at = to;
        }
        if notes.is_empty() {
            notes.push("No actions were given.".to_string());
        }
        Applied::ok(label, notes.join(" "))
    }

    fn subgoals(&self) -> (usize, usize) {
        (self.boxes.iter().filter(|b| b.at.is_none()).count(), self.boxes.len())
    }

    fn validate(&self) -> Result<()> {
        validate_common(self.rows, self.cols, &self.boxes, &self.targets)?;
        let mut seen = BTreeSet::new();
        for c in self.boxes.iter().flat_map(|b| b.at) {
            if c[0] > self.rows || c[1] > self.cols {
                return Err(EnvError::Invalid("box corner outside the grid".into()));
            }
            if !seen.insert(c) {
                return Err(EnvError::Invalid(format!("two boxes share {}", position_label(c))));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net1() -> BoxNet1State {
        BoxNet1State {
            rows: 2,
            cols: 2,
            boxes: vec![
                NetBox {
                    color: "red".into(),
                    at: Some([0, 0]),
                },
                NetBox {
                    color: "blue".into(),
                    at: Some([1, 1]),
                },
            ],
            targets: vec![
                NetTarget {
                    color: "red".into(),
                    cell: [0, 1],
                },
                NetTarget {
                    color: "blue".into(),
                    cell: [1, 1],
                },
            ],
        }
    }

    fn net2() -> BoxNet2State {
        BoxNet2State {
            rows: 1,
            cols: 2,
            boxes: vec![
                NetBox {
                    color: "red".into(),
                    at: Some([0, 0]),
                },
                NetBox {
                    color: "blue".into(),
                    at: Some([0, 2]),
                },
            ],
            targets: vec![
                NetTarget {
                    color: "red".into(),
                    cell: [0, 1],
                },
                NetTarget {
                    color: "blue".into(),
                    cell: [0, 0],
                },
            ],
        }
    }

    #[test]
    fn boxnet1_moves_and_matches() {
        let mut s = net1();
        let a = s.apply("{'Agent[0.5, 0.5]':'move(box_red, square[0.5, 1.5])', 'Agent[1.5, 1.5]':'move(box_blue, target_blue)'}");
        assert_eq!(a.error, None, "{}", a.feedback);
        assert_eq!(s.boxes[0].at, Some([0, 1]));
        assert_eq!(s.subgoals(), (1, 2));
    }

    #[test]
    fn boxnet1_rejects_far_square() {
        let mut s = net1();
        let before = s.clone();
        s.apply("{'Agent[0.5, 0.5]':'move(box_red, square[1.5, 1.5])'}");
        assert_eq!(s, before);
    }

    #[test]
    fn boxnet2_same_corner_is_collision() {
        let mut s = net2();
        let before = s.clone();
        let a = s.apply(
            "{'Agent[0.5, 0.5]':'move(box_red, position[1.0, 1.0])', 'Agent[0.5, 1.5]':'move(box_blue, position[1.0, 1.0])'}",
        );
        assert_eq!(a.error, Some(ErrorKind::Collision));
        assert_eq!(s, before);
    }

    #[test]
    fn boxnet2_occupied_corner_is_collision() {
        let mut s = net2();
        s.boxes[1].at = Some([0, 1]);
        let a = s.apply("{'Agent[0.5, 0.5]':'move(box_red, position[0.0, 1.0])'}");
        assert_eq!(a.error, Some(ErrorKind::Collision));
    }

    #[test]
    fn boxnet2_shared_corner_reachable_by_both_arms() {
        let mut s = net2();
        s.apply("{'Agent[0.5, 0.5]':'move(box_red, position[0.0, 1.0])'}");
        assert_eq!(s.boxes[0].at, Some([0, 1]));
        let a = s.apply("{'Agent[0.5, 1.5]':'move(box_red, target_red)'}");
        assert_eq!(a.error, None);
        assert_eq!(s.subgoals(), (1, 2));
    }
}

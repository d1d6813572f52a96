//! Mobile agents on horizontal tracks carrying boxes into a target region.
//!
//! Track `t` runs along row `t`; shelf rows sit half-way between tracks, so a
//! box named `box_{r}.5_{c}.0` can be picked from track `r` or `r + 1` at
//! column `c`. The target region is reached from column 0 of any track.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use rand::seq::SliceRandom;
use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::parse::first_mapping;
use crate::{Applied, EnvError, ErrorKind, Result, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarehousePos {
    Track { track: u32, column: u32 },
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WarehouseBox {
    /// The box sits at row `row + 0.5`.
    pub row: u32,
    pub column: u32,
}

impl WarehouseBox {
    pub fn name(&self) -> String {
        format!("box_{}.5_{}.0", self.row, self.column)
    }

    fn reachable_from(&self, pos: WarehousePos) -> bool {
        match pos {
            WarehousePos::Track { track, column } => column == self.column && (self.row == track || self.row + 1 == track),
            WarehousePos::Target => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarehouseAgent {
    pub pos: WarehousePos,
    pub carrying: Option<WarehouseBox>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarehouseState {
    pub tracks: u32,
    pub columns: u32,
    pub agents: Vec<WarehouseAgent>,
    /// Boxes still on the shelves.
    pub boxes: Vec<WarehouseBox>,
    pub poured: usize,
    pub total_boxes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum WhAction {
    Left,
    Right,
    ToTarget,
    ToTrack(u32),
    Pick(WarehouseBox),
}

static AGENT_KEY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^agent\s*_?(\d+)$").unwrap());
static TRACK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^move to track_(\d+)$").unwrap());
static PICK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^pick (?:up )?box_(\d+)\.5_(\d+)(?:\.0)?$").unwrap());

impl WhAction {
    fn parse(s: &str) -> Option<Self> {
        let s = s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        Some(match s.as_str() {
            "move left" => WhAction::Left,
            "move right" => WhAction::Right,
            "move to target" => WhAction::ToTarget,
            _ => {
                if let Some(c) = TRACK.captures(&s) {
                    WhAction::ToTrack(c[1].parse().ok()?)
                } else {
                    let c = PICK.captures(&s)?;
                    WhAction::Pick(WarehouseBox {
                        row: c[1].parse().ok()?,
                        column: c[2].parse().ok()?,
                    })
                }
            }
        })
    }

    fn label(&self) -> String {
        match self {
            WhAction::Left => "move left".into(),
            WhAction::Right => "move right".into(),
            WhAction::ToTarget => "move to target".into(),
            WhAction::ToTrack(t) => format!("move to track_{t}"),
            WhAction::Pick(b) => format!("pick {}", b.name()),
        }
    }
}

fn parse_plan(reply: &str) -> Option<Vec<(usize, WhAction)>> {
    first_mapping(reply)?
        .into_iter()
        .map(|(k, v)| Some((AGENT_KEY.captures(k.trim())?[1].parse().ok()?, WhAction::parse(&v)?)))
        .collect()
}

fn pos_label(p: WarehousePos) -> String {
    match p {
        WarehousePos::Track { track, column } => format!("track_{track} column_{column}"),
        WarehousePos::Target => "the target".into(),
    }
}

impl WarehouseState {
    pub(crate) fn generate(rng: &mut impl Rng, tracks: u32, columns: u32, agents: usize, boxes: usize) -> Result<Self> {
        if tracks == 0 || columns == 0 || agents == 0 || boxes == 0 {
            return Err(EnvError::Infeasible(
                "warehouse needs tracks, columns, agents and boxes".into(),
            ));
        }
        let cells = (tracks * columns) as usize;
        let shelves = ((tracks + 1) * columns) as usize;
        if agents > cells || boxes > shelves {
            return Err(EnvError::Infeasible(format!(
                "{tracks} tracks x {columns} columns hold at most {cells} agents and {shelves} boxes"
            )));
        }
        let mut track_cells: Vec<WarehousePos> = (1..=tracks)
            .flat_map(|track| (0..columns).map(move |column| WarehousePos::Track { track, column }))
            .collect();
        track_cells.shuffle(rng);
        let mut shelf: Vec<WarehouseBox> = (0..=tracks)
            .flat_map(|row| (0..columns).map(move |column| WarehouseBox { row, column }))
            .collect();
        shelf.shuffle(rng);
        let mut boxes_out = shelf[..boxes].to_vec();
        boxes_out.sort();
        Ok(WarehouseState {
            tracks,
            columns,
            agents: track_cells[..agents]
                .iter()
                .map(|&pos| WarehouseAgent { pos, carrying: None })
                .collect(),
            boxes: boxes_out,
            poured: 0,
            total_boxes: boxes,
        })
    }

    fn options(&self, agent: &WarehouseAgent) -> Vec<WhAction> {
        let mut out = Vec::new();
        match agent.pos {
            WarehousePos::Target => out.extend((1..=self.tracks).map(WhAction::ToTrack)),
            WarehousePos::Track { column, .. } => {
                if column > 0 {
                    out.push(WhAction::Left);
                }
                if column + 1 < self.columns {
                    out.push(WhAction::Right);
                }
                if column == 0 {
                    out.push(WhAction::ToTarget);
                }
                if agent.carrying.is_none() {
                    out.extend(
                        self.boxes
                            .iter()
                            .filter(|b| b.reachable_from(agent.pos))
                            .map(|&b| WhAction::Pick(b)),
                    );
                }
            }
        }
        out
    }

    /// Result of one agent's action from the start-of-step state, or why it is not doable.
    fn resolve(&self, agent: &WarehouseAgent, action: &WhAction) -> std::result::Result<WarehouseAgent, String> {
        let mut next = agent.clone();
        match (agent.pos, action) {
            (WarehousePos::Track { track, column }, WhAction::Left) if column > 0 => {
                next.pos = WarehousePos::Track {
                    track,
                    column: column - 1,
                };
            }
            (WarehousePos::Track { track, column }, WhAction::Right) if column + 1 < self.columns => {
                next.pos = WarehousePos::Track {
                    track,
                    column: column + 1,
                };
            }
            (WarehousePos::Track { column: 0, .. }, WhAction::ToTarget) => {
                next.pos = WarehousePos::Target;
                next.carrying = None;
            }
            (WarehousePos::Target, WhAction::ToTrack(t)) if (1..=self.tracks).contains(t) => {
                next.pos = WarehousePos::Track { track: *t, column: 0 };
            }
            (pos @ WarehousePos::Track { .. }, WhAction::Pick(b))
                if agent.carrying.is_none() && b.reachable_from(pos) && self.boxes.contains(b) =>
            {
                next.carrying = Some(*b);
            }
            (pos, a) => return Err(format!("'{}' is not doable from {}", a.label(), pos_label(pos))),
        }
        Ok(next)
    }
}

impl Task for WarehouseState {
    fn observe(&self) -> String {
        let mut lines = Vec::new();
        for (i, a) in self.agents.iter().enumerate() {
            let carrying = a.carrying.map_or("nothing".to_string(), |b| b.name());
            let can: Vec<String> = self.options(a).iter().map(|o| format!("'{}'", o.label())).collect();
            lines.push(format!(
                "agent{i}: at {}, carrying {carrying}, can do [{}]",
                pos_label(a.pos),
                can.join(", ")
            ));
        }
        let left: Vec<String> = self.boxes.iter().map(WarehouseBox::name).collect();
        lines.push(format!(
            "Boxes left on the shelves: {}.",
            if left.is_empty() {
                "none".to_string()
            } else {
                left.join(", ")
            }
        ));
        lines.push(format!(
            "The playground has tracks 1-{} and columns 0-{}.",
            self.tracks,
            self.columns - 1
        ));
        let (done, total) = self.subgoals();
        lines.push(format!("Boxes poured into the target: {done} of {total}."));
        lines.join("\n")
    }

    fn apply(&mut self, reply: &str) -> Applied {
        let Some(plan) = parse_plan(reply) else {
            return Applied::syntactic(
                "No valid action plan was found. Use a mapping like {'agent0':'move left', 'agent1':'move to track_1', 'agent2':'pick box_1.5_1.0', 'agent3':'move to target'}.",
            );
        };
        let label = format!(
            "{{{}}}",
            plan.iter()
                .map(|(i, a)| format!("'agent{i}':'{}'", a.label()))
                .collect::<Vec<_>>()
                .join(", ")
        );
        let mut agents_seen = BTreeSet::new();
        let mut picked = BTreeSet::new();
        for (i, a) in &plan {
            if !agents_seen.insert(*i) {
                return Applied::ok(
                    label,
                    format!("agent{i} was given more than one action, so the whole plan was rejected."),
                );
            }
            if let WhAction::Pick(b) = a {
                if !picked.insert(*b) {
                    return Applied::ok(
                        label,
                        format!(
                            "{} was picked by more than one agent, so the whole plan was rejected.",
                            b.name()
                        ),
                    );
                }
            }
        }

        let mut next = self.agents.clone();
        let mut notes = Vec::new();
        let mut poured = 0;
        for (i, action) in &plan {
            let Some(agent) = self.agents.get(*i) else {
                notes.push(format!("agent{i} does not exist."));
                continue;
            };
            match self.resolve(agent, action) {
                Ok(moved) => {
                    if moved.pos == WarehousePos::Target && agent.pos != WarehousePos::Target {
                        if let Some(b) = agent.carrying {
                            poured += 1;
                            notes.push(format!("agent{i} poured {} into the target.", b.name()));
                        } else {
                            notes.push(format!("agent{i} moved to the target."));
                        }
                    } else if moved.carrying != agent.carrying {
                        notes.push(format!(
                            "agent{i} picked {}.",
                            moved.carrying.map(|b| b.name()).unwrap_or_default()
                        ));
                    } else {
                        notes.push(format!("agent{i} moved to {}.", pos_label(moved.pos)));
                    }
                    next[*i] = moved;
                }
                Err(why) => notes.push(format!("agent{i}: {why}.")),
            }
        }

        let mut cells: BTreeMap<WarehousePos, usize> = BTreeMap::new();
        for (i, a) in next.iter().enumerate() {
            if a.pos == WarehousePos::Target {
                continue;
            }
            if let Some(j) = cells.insert(a.pos, i) {
                return Applied::fail(
                    Some(label),
                    ErrorKind::Collision,
                    format!(
                        "agent{j} and agent{i} would both be at {}; each position holds one agent per step.",
                        pos_label(a.pos)
                    ),
                );
            }
        }

        for a in &next {
            if let Some(b) = a.carrying {
                self.boxes.retain(|x| *x != b);
            }
        }
        self.agents = next;
        self.poured += poured;
        if notes.is_empty() {
            notes.push("No actions were given.".to_string());
        }
        Applied::ok(label, notes.join(" "))
    }

    fn subgoals(&self) -> (usize, usize) {
        (self.poured, self.total_boxes)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(EnvError::Invalid(m));
        if self.tracks == 0 || self.columns == 0 || self.agents.is_empty() || self.total_boxes == 0 {
            return bad("warehouse needs tracks, columns, agents and boxes".into());
        }
        let carried = self.agents.iter().filter(|a| a.carrying.is_some()).count();
        if self.boxes.len() + carried + self.poured != self.total_boxes {
            return bad("box accounting does not add up".into());
        }
        let mut shelf = BTreeSet::new();
        for b in self
            .boxes
            .iter()
            .chain(self.agents.iter().filter_map(|a| a.carrying.as_ref()))
        {
            if b.row > self.tracks || b.column >= self.columns || !shelf.insert(*b) {
                return bad(format!("{} is off the shelves or duplicated", b.name()));
            }
        }
        let mut cells = BTreeSet::new();
        for a in &self.agents {
            if let WarehousePos::Track { track, column } = a.pos {
                if track == 0 || track > self.tracks || column >= self.columns {
                    return bad(format!("agent off the playground at {}", pos_label(a.pos)));
                }
                if !cells.insert(a.pos) {
                    return bad(format!("two agents share {}", pos_label(a.pos)));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> WarehouseState {
        WarehouseState {
            tracks: 2,
            columns: 3,
            agents: vec![
                WarehouseAgent {
                    pos: WarehousePos::Track { track: 1, column: 1 },
                    carrying: None,
                },
                WarehouseAgent {
                    pos: WarehousePos::Track { track: 2, column: 0 },
                    carrying: None,
                },
            ],
            boxes: vec![WarehouseBox { row: 0, column: 1 }, WarehouseBox { row: 2, column: 2 }],
            poured: 0,
            total_boxes: 2,
        }
    }

    #[test]
    fn pick_carry_and_pour() {
        let mut s = state();
        let a = s.apply("{'agent0':'pick box_0.5_1.0'}");
        assert_eq!(a.error, None, "{}", a.feedback);
        assert_eq!(s.boxes.len(), 1);
        s.apply("{'agent0':'move left', 'agent1':'move right'}");
        let a = s.apply("{'agent0':'move to target'}");
        assert!(a.feedback.contains("poured"));
        assert_eq!(s.subgoals(), (1, 2));
        s.apply("{'agent0':'move to track_1'}");
        assert_eq!(s.agents[0].pos, WarehousePos::Track { track: 1, column: 0 });
    }

    #[test]
    fn shared_cell_is_collision() {
        let mut s = state();
        s.agents[1].pos = WarehousePos::Track { track: 1, column: 2 };
        let before = s.clone();
        let a = s.apply("{'agent0':'move right'}");
        assert_eq!(a.error, Some(ErrorKind::Collision));
        assert_eq!(s, before);
    }

    #[test]
    fn out_of_reach_pick_is_skipped() {
        let mut s = state();
        let before = s.clone();
        let a = s.apply("{'agent1':'pick box_0.5_1.0'}");
        assert_eq!(a.error, None);
        assert!(a.feedback.contains("not doable"));
        assert_eq!(s, before);
    }

    #[test]
    fn target_only_from_column_zero() {
        let mut s = state();
        s.apply("{'agent0':'move to target'}");
        assert_eq!(s.agents[0].pos, WarehousePos::Track { track: 1, column: 1 });
    }
}

//! Single-arm block stacking.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use rand::seq::SliceRandom;
use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::parse::normalize;
use crate::{Applied, EnvError, ErrorKind, Result, Task};

pub const BLOCK_COLORS: [&str; 8] = ["red", "blue", "green", "yellow", "orange", "purple", "white", "black"];

pub const TABLE: &str = "table";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlocksState {
    /// Block names, in listing order.
    pub blocks: Vec<String>,
    /// What each block not in the hand rests on: [`TABLE`] or another block.
    pub on: BTreeMap<String, String>,
    pub holding: Option<String>,
    /// Required `(upper, lower)` stacking relations.
    pub goal: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum BlockAction {
    PickUp(String),
    PutDown(String),
    Stack(String, String),
    Unstack(String, String),
}

impl BlockAction {
    fn label(&self) -> String {
        match self {
            BlockAction::PickUp(x) => format!("pick up the {x} block"),
            BlockAction::PutDown(x) => format!("put down the {x} block"),
            BlockAction::Stack(x, y) => format!("stack the {x} block on top of the {y} block"),
            BlockAction::Unstack(x, y) => format!("unstack the {x} block from on top of the {y} block"),
        }
    }
}

static PATTERNS: LazyLock<[Regex; 4]> = LazyLock::new(|| {
    [
        Regex::new(r"\bpick up the (\w+)(?: block)?").unwrap(),
        Regex::new(r"\bput down the (\w+)(?: block)?").unwrap(),
        Regex::new(r"\bstack the (\w+)(?: block)? on top of the (\w+)(?: block)?").unwrap(),
        Regex::new(r"\bunstack the (\w+)(?: block)? from on top of the (\w+)(?: block)?").unwrap(),
    ]
});

fn parse_action(reply: &str) -> Option<BlockAction> {
    let text = normalize(reply);
    let (_, which, caps) = PATTERNS
        .iter()
        .enumerate()
        .filter_map(|(i, re)| re.captures(&text).map(|c| (c.get(0).unwrap().start(), i, c)))
        .min_by_key(|(start, i, _)| (*start, *i))?;
    let a = caps[1].to_string();
    let b = caps.get(2).map(|m| m.as_str().to_string());
    Some(match (which, b) {
        (0, _) => BlockAction::PickUp(a),
        (1, _) => BlockAction::PutDown(a),
        (2, Some(b)) => BlockAction::Stack(a, b),
        (3, Some(b)) => BlockAction::Unstack(a, b),
        _ => return None,
    })
}

impl BlocksState {
    pub fn has_block(&self, name: &str) -> bool {
        self.blocks.iter().any(|b| b == name)
    }

    /// No block on top and not held.
    pub fn is_clear(&self, name: &str) -> bool {
        self.holding.as_deref() != Some(name) && !self.on.values().any(|v| v == name)
    }

    pub fn all_on_table(names: &[&str], goal: Vec<(String, String)>) -> Self {
        BlocksState {
            blocks: names.iter().map(|s| s.to_string()).collect(),
            on: names.iter().map(|s| (s.to_string(), TABLE.to_string())).collect(),
            holding: None,
            goal,
        }
    }

    fn satisfied(&self) -> usize {
        self.goal.iter().filter(|(x, y)| self.on.get(x) == Some(y)).count()
    }

    pub(crate) fn generate(rng: &mut impl Rng, count: usize) -> Result<Self> {
        if !(2..=BLOCK_COLORS.len()).contains(&count) {
            return Err(EnvError::Infeasible(format!(
                "blocksworld needs 2 to {} blocks, got {count}",
                BLOCK_COLORS.len()
            )));
        }
        let blocks: Vec<String> = BLOCK_COLORS[..count].iter().map(|s| s.to_string()).collect();
        let start = random_stacks(rng, &blocks);
        for _ in 0..1000 {
            let target = random_stacks(rng, &blocks);
            let goal: Vec<(String, String)> = target
                .iter()
                .filter(|(_, below)| below.as_str() != TABLE)
                .map(|(x, y)| (x.clone(), y.clone()))
                .collect();
            if !goal.is_empty() && goal.iter().all(|(x, y)| start.get(x) != Some(y)) {
                return Ok(BlocksState {
                    blocks,
                    on: start,
                    holding: None,
                    goal,
                });
            }
        }
        Err(EnvError::Infeasible("could not draw a non-trivial goal".into()))
    }
}

fn random_stacks(rng: &mut impl Rng, blocks: &[String]) -> BTreeMap<String, String> {
    let mut order = blocks.to_vec();
    order.shuffle(rng);
    let mut on = BTreeMap::new();
    let mut below: Option<String> = None;
    for b in order {
        // Start a new stack with probability one half.
        let base = match below.take() {
            Some(prev) if rng.random_bool(0.5) => prev,
            _ => TABLE.to_string(),
        };
        on.insert(b.clone(), base);
        below = Some(b);
    }
    on
}

impl Task for BlocksState {
    fn observe(&self) -> String {
        let mut facts = Vec::new();
        for b in &self.blocks {
            if self.is_clear(b) {
                facts.push(format!("the {b} block is clear"));
            }
        }
        match &self.holding {
            Some(h) => facts.push(format!("the hand is holding the {h} block")),
            None => facts.push("the hand is empty".to_string()),
        }
        for b in &self.blocks {
            match self.on.get(b).map(String::as_str) {
                Some(TABLE) => facts.push(format!("the {b} block is on the table")),
                Some(y) => facts.push(format!("the {b} block is on top of the {y} block")),
                None => {}
            }
        }
        let goal: Vec<String> = self
            .goal
            .iter()
            .map(|(x, y)| format!("the {x} block is on top of the {y} block"))
            .collect();
        format!(
            "As current state: {}.\nMy goal is to have: {}.\nGoal relations satisfied: {} of {}.",
            facts.join(", "),
            goal.join(", "),
            self.satisfied(),
            self.goal.len()
        )
    }

    fn apply(&mut self, reply: &str) -> Applied {
        let Some(action) = parse_action(reply) else {
            return Applied::syntactic(
                "No valid action was found. Use: pick up the {} block, put down the {} block, stack the {} block on top of the {} block, unstack the {} block from on top of the {} block.",
            );
        };
        let label = action.label();
        let invalid = |why: String| Applied::fail(Some(label.clone()), ErrorKind::InvalidAction, why);
        let names: Vec<&String> = match &action {
            BlockAction::PickUp(x) | BlockAction::PutDown(x) => vec![x],
            BlockAction::Stack(x, y) | BlockAction::Unstack(x, y) => vec![x, y],
        };
        if let Some(unknown) = names.iter().find(|n| !self.has_block(n)) {
            return invalid(format!("There is no {unknown} block."));
        }
        match &action {
            BlockAction::PickUp(x) => {
                if let Some(h) = &self.holding {
                    return invalid(format!("Cannot pick up the {x} block: the hand is holding the {h} block."));
                }
                if self.on.get(x).map(String::as_str) != Some(TABLE) {
                    return invalid(format!("Cannot pick up the {x} block: it is not on the table."));
                }
                if !self.is_clear(x) {
                    return invalid(format!("Cannot pick up the {x} block: it is not clear."));
                }
                self.on.remove(x);
                self.holding = Some(x.clone());
            }
            BlockAction::Unstack(x, y) => {
                if let Some(h) = &self.holding {
                    return invalid(format!("Cannot unstack the {x} block: the hand is holding the {h} block."));
                }
                if self.on.get(x) != Some(y) {
                    return invalid(format!("Cannot unstack the {x} block: it is not on top of the {y} block."));
                }
                if !self.is_clear(x) {
                    return invalid(format!("Cannot unstack the {x} block: it is not clear."));
                }
                self.on.remove(x);
                self.holding = Some(x.clone());
            }
            BlockAction::PutDown(x) => {
                if self.holding.as_ref() != Some(x) {
                    return invalid(format!("Cannot put down the {x} block: it is not being held."));
                }
                self.holding = None;
                self.on.insert(x.clone(), TABLE.to_string());
            }
            BlockAction::Stack(x, y) => {
                if self.holding.as_ref() != Some(x) {
                    return invalid(format!("Cannot stack the {x} block: it is not being held."));
                }
                if x == y || !self.is_clear(y) {
                    return invalid(format!("Cannot stack onto the {y} block: it is not clear."));
                }
                self.holding = None;
                self.on.insert(x.clone(), y.clone());
            }
        }
        Applied::ok(label.clone(), format!("Done: {label}."))
    }

    fn subgoals(&self) -> (usize, usize) {
        (self.satisfied(), self.goal.len())
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(EnvError::Invalid(m));
        let names: BTreeSet<&String> = self.blocks.iter().collect();
        if names.len() != self.blocks.len() || names.is_empty() {
            return bad("block names must be unique and non-empty".into());
        }
        if self.goal.is_empty() {
            return bad("goal must contain at least one relation".into());
        }
        for b in &self.blocks {
            let held = self.holding.as_ref() == Some(b);
            if held == self.on.contains_key(b) {
                return bad(format!("the {b} block must be either held or placed"));
            }
        }
        if self.on.len() + usize::from(self.holding.is_some()) != self.blocks.len() {
            return bad("placement references unknown blocks".into());
        }
        let mut supporting = BTreeSet::new();
        for (x, y) in &self.on {
            if y != TABLE {
                if !names.contains(y) || x == y || self.holding.as_ref() == Some(y) {
                    return bad(format!("the {x} block rests on an invalid support {y}"));
                }
                if !supporting.insert(y) {
                    return bad(format!("two blocks rest on the {y} block"));
                }
            }
        }
        // Every chain must reach the table.
        for start in self.on.keys() {
            let mut cur = start;
            for _ in 0..=self.blocks.len() {
                match self.on.get(cur) {
                    Some(y) if y == TABLE => break,
                    Some(y) => cur = y,
                    None => return bad("broken stack".into()),
                }
            }
            if self.on.get(cur).map(String::as_str) != Some(TABLE) {
                return bad("stacks contain a cycle".into());
            }
        }
        let mut uppers = BTreeSet::new();
        let mut lowers = BTreeSet::new();
        for (x, y) in &self.goal {
            if !names.contains(x) || !names.contains(y) || x == y {
                return bad(format!("goal relation {x} on {y} is invalid"));
            }
            if !uppers.insert(x) || !lowers.insert(y) {
                return bad("goal places a block on two supports or two blocks on one".into());
            }
        }
        let goal_map: BTreeMap<&String, &String> = self.goal.iter().map(|(x, y)| (x, y)).collect();
        for start in goal_map.keys() {
            let mut cur = *start;
            for _ in 0..=self.blocks.len() {
                match goal_map.get(cur) {
                    Some(y) => cur = y,
                    None => break,
                }
            }
            if goal_map.contains_key(cur) {
                return bad("goal contains a cycle".into());
            }
        }
        Ok(())
    }
}

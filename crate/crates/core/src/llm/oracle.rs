//! Policies that read the observation text and answer with a good action.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use promst_envs::{oracle, BlocksState, EnvInstance, EnvKind, GridGoal, GridState, TaskState};
use regex::Regex;

use super::{ChatBackend, ChatRequest, LlmError};

/// Solves gridworld and blocksworld observations by search and answers
/// boxlift observations by putting every agent on the largest box.
pub struct OracleBackend;

const SEARCH_LIMIT: usize = 200_000;

impl ChatBackend for OracleBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let obs = request.last_user_text();
        let reply = if let Some(state) = parse_grid(obs) {
            plan_first(EnvKind::Gridworld1, TaskState::Grid(state))
        } else if let Some(state) = parse_blocks(obs) {
            plan_first(EnvKind::Blocksworld, TaskState::Blocks(state))
        } else {
            lift_largest(obs)
        };
        Ok(reply.unwrap_or_else(|| "{}".to_string()))
    }
}

fn plan_first(kind: EnvKind, state: TaskState) -> Option<String> {
    let kind = match (&state, kind) {
        (TaskState::Grid(g), _) if g.ordered => EnvKind::Gridworld2,
        _ => kind,
    };
    let inst = EnvInstance::from_state(kind, &state).ok()?;
    oracle::solve(&inst, SEARCH_LIMIT)?.into_iter().next()
}

fn re(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).expect("static pattern"))
}

fn cells(text: &str) -> Vec<[i32; 2]> {
    static CELL: OnceLock<Regex> = OnceLock::new();
    re(&CELL, r"\[(\d+),(\d+)\]")
        .captures_iter(text)
        .map(|c| [c[1].parse().unwrap_or(0), c[2].parse().unwrap_or(0)])
        .collect()
}

fn line_after<'a>(obs: &'a str, prefix: &str) -> Option<&'a str> {
    obs.lines().find_map(|l| l.strip_prefix(prefix))
}

pub fn parse_grid(obs: &str) -> Option<GridState> {
    static HEAD: OnceLock<Regex> = OnceLock::new();
    static GOAL: OnceLock<Regex> = OnceLock::new();
    let head = re(
        &HEAD,
        r"The field has (\d+) rows and (\d+) columns .*The robot is at \[(\d+),(\d+)\]",
    )
    .captures(obs)?;
    let rows = head[1].parse().ok()?;
    let cols = head[2].parse().ok()?;
    let robot = [head[3].parse().ok()?, head[4].parse().ok()?];
    let obstacles = cells(line_after(obs, "Obstacles are at: ")?);
    let goal_line = line_after(obs, "Goals not yet picked: ")?;
    let ordered = goal_line.contains("goal_");
    // Remaining goals are renumbered from 0, keeping their pick order.
    let positions = if ordered {
        let mut indexed: Vec<(usize, [i32; 2])> = re(&GOAL, r"goal_(\d+) at \[(\d+),(\d+)\]")
            .captures_iter(goal_line)
            .map(|c| {
                (
                    c[1].parse().unwrap_or(0),
                    [c[2].parse().unwrap_or(0), c[3].parse().unwrap_or(0)],
                )
            })
            .collect();
        indexed.sort_unstable();
        indexed.into_iter().map(|(_, pos)| pos).collect()
    } else {
        cells(goal_line)
    };
    let goals = positions
        .into_iter()
        .enumerate()
        .map(|(index, pos)| GridGoal {
            index,
            pos,
            picked: false,
        })
        .collect();
    Some(GridState {
        rows,
        cols,
        robot,
        goals,
        obstacles,
        ordered,
    })
}

pub fn parse_blocks(obs: &str) -> Option<BlocksState> {
    static ON: OnceLock<Regex> = OnceLock::new();
    static HOLD: OnceLock<Regex> = OnceLock::new();
    let current = line_after(obs, "As current state: ")?;
    let goal_text = line_after(obs, "My goal is to have: ")?;
    let on_re = re(&ON, r"the (\w+) block is on (?:the (table)|top of the (\w+) block)");
    let mut blocks = Vec::new();
    let mut on = BTreeMap::new();
    for c in on_re.captures_iter(current) {
        let x = c[1].to_string();
        let below = c.get(2).or(c.get(3)).map(|m| m.as_str().to_string())?;
        if !blocks.contains(&x) {
            blocks.push(x.clone());
        }
        on.insert(x, below);
    }
    let holding = re(&HOLD, r"the hand is holding the (\w+) block")
        .captures(current)
        .map(|c| c[1].to_string());
    if let Some(h) = &holding {
        blocks.push(h.clone());
    }
    let goal = on_re
        .captures_iter(goal_text)
        .filter_map(|c| c.get(3).map(|y| (c[1].to_string(), y.as_str().to_string())))
        .collect();
    Some(BlocksState {
        blocks,
        on,
        holding,
        goal,
    })
}

fn lift_largest(obs: &str) -> Option<String> {
    static BOX: OnceLock<Regex> = OnceLock::new();
    static AGENT: OnceLock<Regex> = OnceLock::new();
    let boxes = line_after(obs, "Boxes left to lift: ")?;
    let agents = line_after(obs, "Available lifting agents: ")?;
    let largest = re(&BOX, r"box\[([\d.]+)V\]")
        .captures_iter(boxes)
        .filter_map(|c| c[1].parse::<f64>().ok().map(|v| (v, c[1].to_string())))
        .max_by(|a, b| a.0.total_cmp(&b.0))?;
    let agents: Vec<String> = re(&AGENT, r"agent\[[\d.]+W\]")
        .find_iter(agents)
        .map(|m| m.as_str().to_string())
        .collect();
    Some(format!("{{'box[{}V]':'{}'}}", largest.1, agents.join(", ")))
}

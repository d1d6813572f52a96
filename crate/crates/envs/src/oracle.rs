//! Breadth-first solvers for the single-agent environments.
//!
//! The search runs over the environments' own transitions, so a found tape is
//! accepted step by step by [`Episode`](crate::Episode).

use std::collections::{HashMap, VecDeque};

use crate::{EnvInstance, TaskState};

/// Every action worth trying from `state`, as reply text. Empty for
/// environments whose joint plans are too large to enumerate.
pub fn candidate_actions(state: &TaskState) -> Vec<String> {
    match state {
        TaskState::Grid(_) => ["Move up", "Move down", "Move left", "Move right", "Pick goal"]
            .iter()
            .map(|a| format!("{{{a}}}"))
            .collect(),
        TaskState::Blocks(s) => {
            let mut out = Vec::new();
            for x in &s.blocks {
                out.push(format!("pick up the {x} block"));
                out.push(format!("put down the {x} block"));
                for y in s.blocks.iter().filter(|y| *y != x) {
                    out.push(format!("stack the {x} block on top of the {y} block"));
                    out.push(format!("unstack the {x} block from on top of the {y} block"));
                }
            }
            out
        }
        _ => Vec::new(),
    }
}

/// Shortest action tape completing every sub-goal, or `None` when the
/// environment is unsupported, unsolvable, or larger than `max_states`.
pub fn solve(instance: &EnvInstance, max_states: usize) -> Option<Vec<String>> {
    let start = instance.state().ok()?;
    let actions = candidate_actions(&start);
    if actions.is_empty() {
        return None;
    }
    let solved = |s: &TaskState| {
        let (d, t) = s.subgoals();
        d == t
    };
    if solved(&start) {
        return Some(Vec::new());
    }
    let key = |s: &TaskState| s.to_value().to_string();
    let mut parent: HashMap<String, (String, usize)> = HashMap::new();
    let mut keys = vec![key(&start)];
    parent.insert(keys[0].clone(), (String::new(), usize::MAX));
    let mut queue = VecDeque::from([(start, 0usize)]);
    while let Some((state, idx)) = queue.pop_front() {
        for a in &actions {
            let mut next = state.clone();
            if next.task_mut().apply(a).error.is_some() {
                continue;
            }
            let k = key(&next);
            if parent.contains_key(&k) {
                continue;
            }
            if parent.len() >= max_states {
                return None;
            }
            parent.insert(k.clone(), (a.clone(), idx));
            keys.push(k);
            let here = keys.len() - 1;
            if solved(&next) {
                let mut tape = Vec::new();
                let mut at = here;
                while at != 0 {
                    let (a, up) = &parent[&keys[at]];
                    tape.push(a.clone());
                    at = *up;
                }
                tape.reverse();
                return Some(tape);
            }
            queue.push_back((next, here));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{BlocksState, EnvKind, Episode};

    #[test]
    fn tower_of_three() {
        let goal = vec![
            ("red".to_string(), "blue".to_string()),
            ("blue".to_string(), "green".to_string()),
        ];
        let s = BlocksState::all_on_table(&["red", "blue", "green"], goal);
        let inst = EnvInstance::from_state(EnvKind::Blocksworld, &TaskState::Blocks(s)).unwrap();
        let tape = solve(&inst, 10_000).unwrap();
        assert_eq!(tape.len(), 4);
        let (mut ep, _) = Episode::reset(&inst).unwrap();
        let last = tape.iter().map(|a| ep.step(a).unwrap()).last().unwrap();
        assert!(last.done && last.subgoals_done == 2);
    }
}

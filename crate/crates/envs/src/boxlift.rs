//! Cooperative lifting of boxes whose true weights are hidden.
//!
//! Observations expose only box volumes; each weight is the volume scaled by
//! a hidden factor in `[0.7, 1.3]`. A box is lifted when the summed capacity
//! of its assigned agents strictly exceeds its weight.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::parse::{first_mapping, fmt1};
use crate::{Applied, EnvError, Result, Task};

/// Half-width of the uniform weight noise around the volume.
pub const WEIGHT_NOISE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftBox {
    pub volume: f64,
    pub weight: f64,
    pub lifted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxLiftState {
    pub boxes: Vec<LiftBox>,
    /// Lifting capability of each agent.
    pub agents: Vec<f64>,
}

static BOX_KEY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^box\s*\[\s*([0-9]+(?:\.[0-9]+)?)\s*v\s*\]$").unwrap());
static AGENT_ITEM: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^agent\s*\[\s*([0-9]+(?:\.[0-9]+)?)\s*w\s*\]$").unwrap());

/// Parsed plan: box label followed by agent labels.
type LiftPlan = Vec<(String, Vec<String>)>;

fn parse_plan(reply: &str) -> Option<LiftPlan> {
    let mapping = first_mapping(reply)?;
    mapping
        .into_iter()
        .map(|(k, v)| {
            let volume: f64 = BOX_KEY.captures(&k)?[1].parse().ok()?;
            let agents = v
                .split(',')
                .map(|item| {
                    let cap: f64 = AGENT_ITEM.captures(item.trim())?[1].parse().ok()?;
                    Some(fmt1(cap))
                })
                .collect::<Option<Vec<_>>>()?;
            Some((fmt1(volume), agents))
        })
        .collect()
}

pub fn box_label(volume: f64) -> String {
    format!("box[{}V]", fmt1(volume))
}

pub fn agent_label(capacity: f64) -> String {
    format!("agent[{}W]", fmt1(capacity))
}

fn one_decimal(rng: &mut impl Rng, lo: u32, hi: u32) -> f64 {
    rng.random_range(lo..=hi) as f64 / 10.0
}

impl BoxLiftState {
    pub(crate) fn generate(rng: &mut impl Rng, boxes: usize, agents: usize) -> Result<Self> {
        if boxes < 1 || agents < 1 {
            return Err(EnvError::Infeasible("boxlift needs at least one box and one agent".into()));
        }
        if boxes > 91 || agents > 71 {
            return Err(EnvError::Infeasible(
                "too many distinct box volumes or agent capacities".into(),
            ));
        }
        let mut volumes = BTreeSet::new();
        let mut boxes_out = Vec::new();
        while boxes_out.len() < boxes {
            let volume = one_decimal(rng, 10, 100);
            if volumes.insert(fmt1(volume)) {
                let eta = rng.random_range(-WEIGHT_NOISE..=WEIGHT_NOISE);
                boxes_out.push(LiftBox {
                    volume,
                    weight: volume * (1.0 + eta),
                    lifted: false,
                });
            }
        }
        let heaviest = boxes_out.iter().map(|b| b.weight).fold(0.0, f64::max);
        for _ in 0..1000 {
            let mut caps = BTreeSet::new();
            let mut agents_out = Vec::new();
            while agents_out.len() < agents {
                let cap = one_decimal(rng, 10, 80);
                if caps.insert(fmt1(cap)) {
                    agents_out.push(cap);
                }
            }
            if agents_out.iter().sum::<f64>() > heaviest {
                return Ok(BoxLiftState {
                    boxes: boxes_out,
                    agents: agents_out,
                });
            }
        }
        Err(EnvError::Infeasible("agents can never lift the heaviest box".into()))
    }

    fn remaining(&self) -> impl Iterator<Item = &LiftBox> {
        self.boxes.iter().filter(|b| !b.lifted)
    }
}

impl Task for BoxLiftState {
    fn observe(&self) -> String {
        let boxes: Vec<String> = self.remaining().map(|b| box_label(b.volume)).collect();
        let agents: Vec<String> = self.agents.iter().map(|&a| agent_label(a)).collect();
        let (done, total) = self.subgoals();
        format!(
            "Boxes left to lift: {}.\nAvailable lifting agents: {}.\nBoxes lifted: {done} of {total}.",
            if boxes.is_empty() {
                "none".to_string()
            } else {
                boxes.join(", ")
            },
            agents.join(", ")
        )
    }

    fn apply(&mut self, reply: &str) -> Applied {
        let Some(plan) = parse_plan(reply) else {
            return Applied::syntactic(
                "No valid action plan was found. Use a mapping like {'box[1.7V]':'agent[1.5W]', 'box[3.0V]':'agent[1.5W], agent[2.5W]'}.",
            );
        };
        let label = plan
            .iter()
            .map(|(b, agents)| {
                let agents: Vec<String> = agents.iter().map(|a| format!("agent[{a}W]")).collect();
                format!("'box[{b}V]':'{}'", agents.join(", "))
            })
            .collect::<Vec<_>>()
            .join(", ");
        let label = format!("{{{label}}}");

        let mut used = BTreeSet::new();
        for (_, agents) in &plan {
            for a in agents {
                if !used.insert(a.clone()) {
                    return Applied::ok(
                        label,
                        format!("agent[{a}W] was assigned more than once; each agent can be used only once per step, so nothing was lifted."),
                    );
                }
            }
        }

        let mut notes = Vec::new();
        let mut lifted_now = Vec::new();
        for (b, agents) in &plan {
            let Some(idx) = self.boxes.iter().position(|x| !x.lifted && fmt1(x.volume) == *b) else {
                notes.push(format!("box[{b}V] is not among the remaining boxes."));
                continue;
            };
            let mut capacity = 0.0;
            let mut unknown = None;
            for a in agents {
                match self.agents.iter().find(|&&c| fmt1(c) == *a) {
                    Some(c) => capacity += c,
                    None => unknown = Some(a.clone()),
                }
            }
            if let Some(a) = unknown {
                notes.push(format!("agent[{a}W] does not exist, so box[{b}V] was not lifted."));
                continue;
            }
            if capacity > self.boxes[idx].weight {
                lifted_now.push(idx);
                notes.push(format!("box[{b}V] was lifted."));
            } else {
                notes.push(format!("box[{b}V] was not lifted: the agents were not strong enough."));
            }
        }
        for idx in lifted_now {
            self.boxes[idx].lifted = true;
        }
        if notes.is_empty() {
            notes.push("No boxes were assigned.".to_string());
        }
        Applied::ok(label, notes.join(" "))
    }

    fn subgoals(&self) -> (usize, usize) {
        (self.boxes.iter().filter(|b| b.lifted).count(), self.boxes.len())
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(EnvError::Invalid(m.to_string()));
        if self.boxes.is_empty() || self.agents.is_empty() {
            return bad("boxlift needs at least one box and one agent");
        }
        let vols: BTreeSet<String> = self.boxes.iter().map(|b| fmt1(b.volume)).collect();
        let caps: BTreeSet<String> = self.agents.iter().map(|&c| fmt1(c)).collect();
        if vols.len() != self.boxes.len() || caps.len() != self.agents.len() {
            return bad("box volumes and agent capacities must be distinct at one decimal");
        }
        if self.boxes.iter().any(|b| !(b.volume > 0.0 && b.weight > 0.0)) || self.agents.iter().any(|&c| c <= 0.0) {
            return bad("volumes, weights and capacities must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> BoxLiftState {
        BoxLiftState {
            boxes: vec![
                LiftBox {
                    volume: 3.0,
                    weight: 3.0,
                    lifted: false,
                },
                LiftBox {
                    volume: 1.7,
                    weight: 2.0,
                    lifted: false,
                },
            ],
            agents: vec![1.5, 2.5],
        }
    }

    #[test]
    fn cooperative_lift() {
        let mut s = state();
        let a = s.apply("Plan: {'box[3.0V]':'agent[1.5W], agent[2.5W]'}");
        assert_eq!(a.error, None);
        assert_eq!(s.subgoals(), (1, 2));
    }

    #[test]
    fn overweight_is_not_lifted() {
        let mut s = state();
        let a = s.apply("{\"box[3.0V]\": \"agent[2.5W]\"}");
        assert_eq!(a.error, None);
        assert!(a.feedback.contains("not strong enough"));
        assert_eq!(s.subgoals(), (0, 2));
    }

    #[test]
    fn agent_reuse_voids_step() {
        let mut s = state();
        let before = s.clone();
        s.apply("{'box[3.0V]':'agent[1.5W], agent[2.5W]', 'box[1.7V]':'agent[2.5W]'}");
        assert_eq!(s, before);
    }

    #[test]
    fn observation_hides_weights() {
        let mut s = state();
        s.boxes[1].weight = 2.3456;
        let obs = s.observe();
        assert!(obs.contains("box[1.7V]"));
        assert!(!obs.contains("2.3"));
    }

    #[test]
    fn malformed_plan_is_syntactic() {
        let mut s = state();
        assert_eq!(
            s.apply("{'crate[3.0V]':'agent[1.5W]'}").error,
            Some(crate::ErrorKind::Syntactic)
        );
        assert_eq!(s.apply("lift everything").error, Some(crate::ErrorKind::Syntactic));
    }
}

//! Randomized legality audit shared by the environment tests and the
//! acceptance suite.
//!
//! Each case replays a short random episode. Every accepted transition is
//! checked against predicates written directly from the task rules, and every
//! rejected one must leave the state untouched.

use std::collections::BTreeSet;

use promst_envs::{EnvInstance, EnvKind, Episode, SizeParams, TaskState, WarehousePos};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Default, Clone, Copy)]
pub struct Audit {
    pub cases: usize,
    pub accepted: usize,
    pub rejected: usize,
}

const POOL: usize = 64;
const STEPS: usize = 6;

fn small_size(kind: EnvKind, rng: &mut ChaCha8Rng) -> SizeParams {
    let mut s = SizeParams::default();
    match kind {
        EnvKind::Gridworld1 | EnvKind::Gridworld2 => {
            s = SizeParams::grid(
                rng.random_range(2..=4),
                rng.random_range(2..=4),
                rng.random_range(1..=2),
                rng.random_range(0..=2),
            );
        }
        EnvKind::Blocksworld => s.blocks = Some(rng.random_range(2..=4)),
        EnvKind::Boxlift => {
            s.boxes = Some(rng.random_range(1..=4));
            s.agents = Some(rng.random_range(1..=4));
        }
        EnvKind::Boxnet1 | EnvKind::Boxnet2 => {
            s.rows = Some(rng.random_range(1..=2));
            s.cols = Some(rng.random_range(1..=3));
            s.boxes = Some(rng.random_range(1..=4));
        }
        EnvKind::Warehouse => {
            s.tracks = Some(rng.random_range(1..=2));
            s.columns = Some(rng.random_range(2..=4));
            s.agents = Some(rng.random_range(1..=3));
            s.boxes = Some(rng.random_range(1..=3));
        }
        EnvKind::Logistics => {
            s.cities = Some(rng.random_range(1..=2));
            s.locations_per_city = Some(rng.random_range(2..=3));
            s.airplanes = Some(1);
            s.packages = Some(rng.random_range(1..=2));
        }
    }
    s
}

fn pool(kind: EnvKind, rng: &mut ChaCha8Rng) -> Vec<EnvInstance> {
    let mut out = Vec::new();
    while out.len() < POOL {
        let size = small_size(kind, rng);
        if let Ok(inst) = EnvInstance::generate(kind, rng.random(), &size) {
            out.push(inst);
        }
    }
    out
}

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &'a [String]) -> &'a str {
    xs.choose(rng).map(String::as_str).unwrap_or("")
}

fn random_reply(state: &TaskState, rng: &mut ChaCha8Rng) -> String {
    match state {
        TaskState::Grid(_) => {
            let opts = [
                "{Move up}",
                "{Move down}",
                "{Move left}",
                "{Move right}",
                "{Pick goal}",
                "{Jump}",
                "go up",
            ];
            opts.choose(rng).unwrap().to_string()
        }
        TaskState::Blocks(s) => {
            let mut names = s.blocks.clone();
            names.push("pink".into());
            let x = pick(rng, &names);
            let y = pick(rng, &names);
            match rng.random_range(0..5) {
                0 => format!("pick up the {x} block"),
                1 => format!("put down the {x} block"),
                2 => format!("stack the {x} block on top of the {y} block"),
                3 => format!("unstack the {x} block from on top of the {y} block"),
                _ => "wave at the blocks".into(),
            }
        }
        TaskState::BoxLift(s) => {
            let mut entries = Vec::new();
            for b in &s.boxes {
                if !rng.random_bool(0.6) {
                    continue;
                }
                let mut agents = Vec::new();
                for a in &s.agents {
                    if rng.random_bool(0.5) {
                        agents.push(format!("agent[{a:.1}W]"));
                    }
                }
                if !agents.is_empty() {
                    entries.push(format!("'box[{:.1}V]':'{}'", b.volume, agents.join(", ")));
                }
            }
            if rng.random_bool(0.05) {
                return "lift them all".into();
            }
            format!("{{{}}}", entries.join(", "))
        }
        TaskState::BoxNet1(s) => {
            let colors: Vec<String> = s.boxes.iter().map(|b| b.color.clone()).collect();
            let mut entries = Vec::new();
            for _ in 0..rng.random_range(0..=3) {
                let r = rng.random_range(0..s.rows);
                let c = rng.random_range(0..s.cols);
                let color = pick(rng, &colors).to_string();
                let dest = if rng.random_bool(0.3) {
                    format!("target_{}", pick(rng, &colors))
                } else {
                    let dr = rng.random_range(-1i64..=1) + r as i64;
                    let dc = rng.random_range(-1i64..=1) + c as i64;
                    format!("square[{}.5, {}.5]", dr.max(0), dc.max(0))
                };
                entries.push(format!("'Agent[{r}.5, {c}.5]':'move(box_{color}, {dest})'"));
            }
            format!("{{{}}}", entries.join(", "))
        }
        TaskState::BoxNet2(s) => {
            let colors: Vec<String> = s.boxes.iter().map(|b| b.color.clone()).collect();
            let mut entries = Vec::new();
            for _ in 0..rng.random_range(0..=3) {
                let r = rng.random_range(0..s.rows);
                let c = rng.random_range(0..s.cols);
                let color = pick(rng, &colors).to_string();
                let dest = if rng.random_bool(0.3) {
                    format!("target_{}", pick(rng, &colors))
                } else {
                    format!(
                        "position[{}.0, {}.0]",
                        r + rng.random_range(0..=1),
                        c + rng.random_range(0..=1)
                    )
                };
                entries.push(format!("'Agent[{r}.5, {c}.5]':'move(box_{color}, {dest})'"));
            }
            format!("{{{}}}", entries.join(", "))
        }
        TaskState::Warehouse(s) => {
            let mut entries = Vec::new();
            for i in 0..s.agents.len() {
                if rng.random_bool(0.3) {
                    continue;
                }
                let action = match rng.random_range(0..5) {
                    0 => "move left".to_string(),
                    1 => "move right".to_string(),
                    2 => "move to target".to_string(),
                    3 => format!("move to track_{}", rng.random_range(1..=s.tracks)),
                    _ => format!(
                        "pick box_{}.5_{}.0",
                        rng.random_range(0..=s.tracks),
                        rng.random_range(0..s.columns)
                    ),
                };
                entries.push(format!("'agent{i}':'{action}'"));
            }
            format!("{{{}}}", entries.join(", "))
        }
        TaskState::Logistics(s) => {
            let locs: Vec<String> = (0..s.cities)
                .flat_map(|c| (0..s.locations_per_city).map(move |i| format!("l{c}-{i}")))
                .collect();
            let vehicles: Vec<String> = s.trucks.iter().chain(&s.airplanes).map(|v| v.name.clone()).collect();
            let pkgs: Vec<String> = s.packages.iter().map(|p| p.name.clone()).collect();
            let cities: Vec<String> = (0..s.cities).map(|c| format!("c{c}")).collect();
            let (p, v, a, b, c) = (
                pick(rng, &pkgs),
                pick(rng, &vehicles),
                pick(rng, &locs),
                pick(rng, &locs),
                pick(rng, &cities),
            );
            match rng.random_range(0..4) {
                0 => format!("load {p} into {v} at {a}"),
                1 => format!("unload {p} from {v} at {a}"),
                2 => format!("drive {v} from {a} to {b} in {c}"),
                _ => format!("fly {v} from {a} to {b}"),
            }
        }
    }
}

fn manhattan(a: [i64; 2], b: [i64; 2]) -> i64 {
    (a[0] - b[0]).abs() + (a[1] - b[1]).abs()
}

/// Rule check for one accepted transition.
fn check(before: &TaskState, after: &TaskState, reply: &str) -> Result<(), String> {
    match (before, after) {
        (TaskState::Grid(b), TaskState::Grid(a)) => {
            let in_bounds = (0..a.rows).contains(&a.robot[0]) && (0..a.cols).contains(&a.robot[1]);
            if !in_bounds || a.obstacles.contains(&a.robot) {
                return Err(format!("robot at {:?} is off the grid or on an obstacle", a.robot));
            }
            let to64 = |c: [i32; 2]| [c[0] as i64, c[1] as i64];
            if manhattan(to64(b.robot), to64(a.robot)) > 1 {
                return Err("robot jumped".into());
            }
            for (gb, ga) in b.goals.iter().zip(&a.goals) {
                if gb.picked && !ga.picked {
                    return Err("goal un-picked".into());
                }
                if !gb.picked && ga.picked && ga.pos != a.robot {
                    return Err("goal picked from a distance".into());
                }
            }
            if a.ordered {
                let picked: Vec<usize> = a.goals.iter().filter(|g| g.picked).map(|g| g.index).collect();
                let mut sorted = picked.clone();
                sorted.sort();
                if sorted != (0..picked.len()).collect::<Vec<_>>() {
                    return Err("goals picked out of order".into());
                }
            }
        }
        (TaskState::Blocks(b), TaskState::Blocks(a)) => {
            let clear_in =
                |s: &promst_envs::BlocksState, x: &str| !s.on.values().any(|v| v == x) && s.holding.as_deref() != Some(x);
            match (&b.holding, &a.holding) {
                (None, Some(x)) => {
                    if !clear_in(b, x) {
                        return Err(format!("took the {x} block while something was on it"));
                    }
                    let mut rest = b.on.clone();
                    rest.remove(x);
                    if rest != a.on {
                        return Err("other blocks moved".into());
                    }
                }
                (Some(x), None) => {
                    let Some(y) = a.on.get(x) else {
                        return Err("released block vanished".into());
                    };
                    if y != "table" && !clear_in(b, y) {
                        return Err(format!("stacked onto the non-clear {y} block"));
                    }
                    let mut rest = a.on.clone();
                    rest.remove(x);
                    if rest != b.on {
                        return Err("other blocks moved".into());
                    }
                }
                _ => return Err(format!("accepted '{reply}' without changing the hand")),
            }
        }
        (TaskState::BoxLift(b), TaskState::BoxLift(a)) => {
            for (bb, ba) in b.boxes.iter().zip(&a.boxes) {
                if bb.lifted && !ba.lifted {
                    return Err("box dropped".into());
                }
                if !bb.lifted && ba.lifted {
                    let key = format!("'box[{:.1}V]':'", bb.volume);
                    let Some(start) = reply.find(&key) else {
                        return Err("lifted an unassigned box".into());
                    };
                    let rest = &reply[start + key.len()..];
                    let list = &rest[..rest.find('\'').unwrap_or(rest.len())];
                    let caps: BTreeSet<String> = list.split(',').map(|s| s.trim().to_string()).collect();
                    let total: f64 = b.agents.iter().filter(|c| caps.contains(&format!("agent[{c:.1}W]"))).sum();
                    if total <= bb.weight {
                        return Err(format!("lifted weight {} with capacity {total}", bb.weight));
                    }
                }
            }
            if a.boxes.iter().filter(|x| x.lifted).count() > b.boxes.iter().filter(|x| x.lifted).count() {
                let mut seen = BTreeSet::new();
                for item in reply.split(['\'', ',']).map(str::trim).filter(|s| s.starts_with("agent[")) {
                    if !seen.insert(item.to_string()) {
                        return Err("an agent lifted two boxes in one step".into());
                    }
                }
            }
        }
        (TaskState::BoxNet1(b), TaskState::BoxNet1(a)) => {
            for (bb, ba) in b.boxes.iter().zip(&a.boxes) {
                match (bb.at, ba.at) {
                    (None, Some(_)) => return Err("matched box came back".into()),
                    (Some(from), None) => {
                        let t = b.targets.iter().find(|t| t.color == bb.color).unwrap();
                        if t.cell != from {
                            return Err(format!("box_{} matched away from its target", bb.color));
                        }
                    }
                    (Some(from), Some(to)) => {
                        let d = manhattan([from[0] as i64, from[1] as i64], [to[0] as i64, to[1] as i64]);
                        if d > 1 || to[0] >= a.rows || to[1] >= a.cols {
                            return Err(format!("box_{} jumped", bb.color));
                        }
                    }
                    (None, None) => {}
                }
            }
        }
        (TaskState::BoxNet2(b), TaskState::BoxNet2(a)) => {
            let mut corners = BTreeSet::new();
            for x in a.boxes.iter().filter_map(|x| x.at) {
                if !corners.insert(x) {
                    return Err(format!("two boxes on corner {x:?}"));
                }
                if x[0] > a.rows || x[1] > a.cols {
                    return Err("box off the grid".into());
                }
            }
            for (bb, ba) in b.boxes.iter().zip(&a.boxes) {
                match (bb.at, ba.at) {
                    (None, Some(_)) => return Err("matched box came back".into()),
                    (Some(from), None) => {
                        let t = b.targets.iter().find(|t| t.color == bb.color).unwrap();
                        let [r, c] = t.cell;
                        if !(from[0] == r || from[0] == r + 1) || !(from[1] == c || from[1] == c + 1) {
                            return Err(format!("box_{} matched away from its target", bb.color));
                        }
                    }
                    (Some(from), Some(to)) => {
                        if from[0].abs_diff(to[0]) > 1 || from[1].abs_diff(to[1]) > 1 {
                            return Err(format!("box_{} jumped", bb.color));
                        }
                    }
                    (None, None) => {}
                }
            }
        }
        (TaskState::Warehouse(b), TaskState::Warehouse(a)) => {
            let mut cells = BTreeSet::new();
            for x in &a.agents {
                if let WarehousePos::Track { track, column } = x.pos {
                    if !cells.insert((track, column)) {
                        return Err(format!("two agents on track_{track} column_{column}"));
                    }
                    if track == 0 || track > a.tracks || column >= a.columns {
                        return Err("agent off the playground".into());
                    }
                }
            }
            let mut poured = 0;
            for (xb, xa) in b.agents.iter().zip(&a.agents) {
                match (xb.pos, xa.pos) {
                    (WarehousePos::Track { track: t1, column: c1 }, WarehousePos::Track { track: t2, column: c2 }) => {
                        if t1 != t2 || c1.abs_diff(c2) > 1 {
                            return Err("agent jumped along the tracks".into());
                        }
                    }
                    (WarehousePos::Track { column, .. }, WarehousePos::Target) => {
                        if column != 0 {
                            return Err("entered the target away from column 0".into());
                        }
                        poured += usize::from(xb.carrying.is_some());
                    }
                    (WarehousePos::Target, WarehousePos::Track { column, .. }) => {
                        if column != 0 {
                            return Err("left the target to a far column".into());
                        }
                    }
                    (WarehousePos::Target, WarehousePos::Target) => {}
                }
                if xb.carrying.is_none() {
                    if let Some(bx) = xa.carrying {
                        let WarehousePos::Track { track, column } = xb.pos else {
                            return Err("picked from the target".into());
                        };
                        if bx.column != column || !(bx.row == track || bx.row + 1 == track) || !b.boxes.contains(&bx) {
                            return Err(format!("picked unreachable {}", bx.name()));
                        }
                    }
                }
            }
            if a.poured != b.poured + poured {
                return Err("poured count does not match deliveries".into());
            }
        }
        (TaskState::Logistics(b), TaskState::Logistics(a)) => {
            for t in &a.trucks {
                let city: usize = t.name[1..].parse().unwrap();
                if a.city_of(&t.at) != Some(city) {
                    return Err(format!("{} left its city", t.name));
                }
            }
            if let Some(p) = a.airplanes.iter().find(|p| !a.is_airport(&p.at)) {
                return Err(format!("{} is away from an airport", p.name));
            }
            let where_is = |s: &promst_envs::LogisticsState, v: &str| {
                s.trucks
                    .iter()
                    .chain(&s.airplanes)
                    .find(|x| x.name == v)
                    .map(|x| x.at.clone())
            };
            for (pb, pa) in b.packages.iter().zip(&a.packages) {
                match (&pb.carried_by, &pa.carried_by) {
                    (None, Some(v)) => {
                        if pb.at != where_is(b, v) {
                            return Err(format!("{} loaded from a distance", pb.name));
                        }
                    }
                    (Some(v), None) => {
                        if pa.at != where_is(a, v) {
                            return Err(format!("{} unloaded away from its vehicle", pb.name));
                        }
                    }
                    (None, None) if pb.at != pa.at => return Err(format!("{} moved on its own", pb.name)),
                    _ => {}
                }
            }
        }
        _ => return Err("state changed variant".into()),
    }
    Ok(())
}

/// Run `cases` random episodes of `kind` and report the first violation.
pub fn audit(kind: EnvKind, cases: usize, seed: u64) -> Result<Audit, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ kind as u64);
    let instances = pool(kind, &mut rng);
    let mut stats = Audit {
        cases,
        ..Audit::default()
    };
    for case in 0..cases {
        let inst = &instances[case % instances.len()];
        let (mut ep, _) = Episode::reset(inst).map_err(|e| e.to_string())?;
        for _ in 0..STEPS {
            if ep.is_done() {
                break;
            }
            let before = ep.state().clone();
            let reply = if rng.random_bool(0.03) {
                "I am not sure what to do.".to_string()
            } else {
                random_reply(&before, &mut rng)
            };
            let out = ep.step(&reply).map_err(|e| e.to_string())?;
            if let Some(e) = out.error {
                if *ep.state() != before {
                    return Err(format!("{kind}: rejected '{reply}' ({e}) but the state changed"));
                }
                if !kind.error_vocabulary().contains(&e) {
                    return Err(format!("{kind}: tag {e} outside the vocabulary"));
                }
                stats.rejected += 1;
            } else {
                check(&before, ep.state(), &reply).map_err(|m| format!("{kind}: '{reply}': {m}"))?;
                ep.state()
                    .validate()
                    .map_err(|m| format!("{kind}: '{reply}' produced an invalid state: {m}"))?;
                stats.accepted += 1;
            }
        }
    }
    Ok(stats)
}

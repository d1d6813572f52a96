use std::fs;
use std::path::PathBuf;

use promst_envs::{oracle, EnvInstance, EnvKind, Episode, SizeParams};

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Observation after reset and after each step of the oracle tape.
fn transcript(inst: &EnvInstance) -> String {
    let tape = oracle::solve(inst, 100_000).expect("instance is solvable");
    let (mut ep, first) = Episode::reset(inst).unwrap();
    let mut out = format!("== reset\n{}\n", first.observation);
    for action in &tape {
        let o = ep.step(action).unwrap();
        out.push_str(&format!(
            "== step {} {action}\nfeedback: {}\n{}\n",
            o.step_index, o.env_feedback, o.observation
        ));
    }
    out
}

fn check_golden(name: &str, actual: &str) {
    let path = golden_path(name);
    if std::env::var_os("PROMST_BLESS").is_some() {
        fs::write(&path, actual).unwrap();
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden file {}", path.display()));
    assert_eq!(actual, expected, "transcript drifted from {}", path.display());
}

#[test]
fn gridworld1_seed7_transcript() {
    let inst = EnvInstance::generate(EnvKind::Gridworld1, 7, &SizeParams::grid(5, 5, 2, 3)).unwrap();
    let (_, first) = Episode::reset(&inst).unwrap();
    assert_eq!((first.subgoals_done, first.subgoals_total, first.step_index), (0, 2, 0));
    assert!(first.observation.contains("The robot is at"));
    assert!(first.observation.contains("Obstacles are at"));
    check_golden("gridworld1_5x5_g2_o3_seed7.txt", &transcript(&inst));
}

#[test]
fn gridworld1_seed7_instance_file() {
    let inst = EnvInstance::generate(EnvKind::Gridworld1, 7, &SizeParams::grid(5, 5, 2, 3)).unwrap();
    check_golden(
        "gridworld1_5x5_g2_o3_seed7.json",
        &(serde_json::to_string_pretty(&inst).unwrap() + "\n"),
    );
    let reloaded: EnvInstance =
        serde_json::from_str(&fs::read_to_string(golden_path("gridworld1_5x5_g2_o3_seed7.json")).unwrap()).unwrap();
    assert!(reloaded.reproducible());
}

#[test]
fn flat_blocksworld_is_all_clear() {
    let goal = vec![("red".to_string(), "blue".to_string())];
    let s = promst_envs::BlocksState::all_on_table(&["red", "blue", "green"], goal);
    let inst = EnvInstance::from_state(EnvKind::Blocksworld, &promst_envs::TaskState::Blocks(s)).unwrap();
    let (_, first) = Episode::reset(&inst).unwrap();
    for b in ["red", "blue", "green"] {
        assert!(
            first.observation.contains(&format!("the {b} block is clear")),
            "{}",
            first.observation
        );
    }
}

#[test]
fn boxlift_hides_weights() {
    let inst = &promst_envs::generate_instances(EnvKind::Boxlift, 1, 1, &SizeParams::boxes(4)).unwrap()[0];
    let (ep, first) = Episode::reset(inst).unwrap();
    assert_eq!(first.subgoals_total, 4);
    let promst_envs::TaskState::BoxLift(s) = ep.state() else {
        unreachable!()
    };
    for b in &s.boxes {
        assert!(first.observation.contains(&format!("box[{:.1}V]", b.volume)));
        assert!(!first.observation.contains(&format!("{:.2}", b.weight)));
        assert!(!first.observation.contains("weight"));
    }
}

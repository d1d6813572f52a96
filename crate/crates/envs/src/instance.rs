use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{
    BlocksState, BoxLiftState, BoxNet1State, BoxNet2State, EnvError, EnvKind, GridState, LogisticsState, Result, Task,
    WarehouseState,
};

/// Environment dimensions. Unset fields take the per-environment default.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SizeParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cols: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub goals: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub obstacles: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blocks: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boxes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agents: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cities: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub locations_per_city: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub airplanes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub packages: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tracks: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub columns: Option<u32>,
}

impl SizeParams {
    pub fn grid(rows: u32, cols: u32, goals: usize, obstacles: usize) -> Self {
        SizeParams {
            rows: Some(rows),
            cols: Some(cols),
            goals: Some(goals),
            obstacles: Some(obstacles),
            ..Self::default()
        }
    }

    pub fn blocks(n: usize) -> Self {
        SizeParams {
            blocks: Some(n),
            ..Self::default()
        }
    }

    pub fn boxes(n: usize) -> Self {
        SizeParams {
            boxes: Some(n),
            ..Self::default()
        }
    }

    /// Keep only the fields `kind` uses and fill each missing one with its default.
    pub fn resolved(&self, kind: EnvKind) -> Self {
        let d = Self::defaults(kind);
        let pick = |mine: Option<usize>, def: Option<usize>| def.map(|v| mine.unwrap_or(v));
        let pick32 = |mine: Option<u32>, def: Option<u32>| def.map(|v| mine.unwrap_or(v));
        SizeParams {
            rows: pick32(self.rows, d.rows),
            cols: pick32(self.cols, d.cols),
            goals: pick(self.goals, d.goals),
            obstacles: pick(self.obstacles, d.obstacles),
            blocks: pick(self.blocks, d.blocks),
            boxes: pick(self.boxes, d.boxes),
            agents: pick(self.agents, d.agents),
            cities: pick(self.cities, d.cities),
            locations_per_city: pick(self.locations_per_city, d.locations_per_city),
            airplanes: pick(self.airplanes, d.airplanes),
            packages: pick(self.packages, d.packages),
            tracks: pick32(self.tracks, d.tracks),
            columns: pick32(self.columns, d.columns),
        }
    }

    pub fn defaults(kind: EnvKind) -> Self {
        match kind {
            EnvKind::Gridworld1 | EnvKind::Gridworld2 => Self::grid(5, 5, 3, 4),
            EnvKind::Blocksworld => Self::blocks(4),
            EnvKind::Boxlift => SizeParams {
                boxes: Some(6),
                agents: Some(4),
                ..Self::default()
            },
            EnvKind::Boxnet1 | EnvKind::Boxnet2 => SizeParams {
                rows: Some(2),
                cols: Some(3),
                boxes: Some(4),
                ..Self::default()
            },
            EnvKind::Logistics => SizeParams {
                cities: Some(2),
                locations_per_city: Some(2),
                airplanes: Some(1),
                packages: Some(2),
                ..Self::default()
            },
            EnvKind::Warehouse => SizeParams {
                tracks: Some(2),
                columns: Some(6),
                agents: Some(2),
                boxes: Some(3),
                ..Self::default()
            },
        }
    }
}

/// Live state of any environment.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskState {
    Grid(GridState),
    Blocks(BlocksState),
    Logistics(LogisticsState),
    BoxLift(BoxLiftState),
    BoxNet1(BoxNet1State),
    BoxNet2(BoxNet2State),
    Warehouse(WarehouseState),
}

impl TaskState {
    pub(crate) fn task(&self) -> &dyn Task {
        match self {
            TaskState::Grid(s) => s,
            TaskState::Blocks(s) => s,
            TaskState::Logistics(s) => s,
            TaskState::BoxLift(s) => s,
            TaskState::BoxNet1(s) => s,
            TaskState::BoxNet2(s) => s,
            TaskState::Warehouse(s) => s,
        }
    }

    pub(crate) fn task_mut(&mut self) -> &mut dyn Task {
        match self {
            TaskState::Grid(s) => s,
            TaskState::Blocks(s) => s,
            TaskState::Logistics(s) => s,
            TaskState::BoxLift(s) => s,
            TaskState::BoxNet1(s) => s,
            TaskState::BoxNet2(s) => s,
            TaskState::Warehouse(s) => s,
        }
    }

    pub fn observe(&self) -> String {
        self.task().observe()
    }

    pub fn subgoals(&self) -> (usize, usize) {
        self.task().subgoals()
    }

    pub fn validate(&self) -> Result<()> {
        self.task().validate()
    }

    pub fn to_value(&self) -> serde_json::Value {
        let v = match self {
            TaskState::Grid(s) => serde_json::to_value(s),
            TaskState::Blocks(s) => serde_json::to_value(s),
            TaskState::Logistics(s) => serde_json::to_value(s),
            TaskState::BoxLift(s) => serde_json::to_value(s),
            TaskState::BoxNet1(s) => serde_json::to_value(s),
            TaskState::BoxNet2(s) => serde_json::to_value(s),
            TaskState::Warehouse(s) => serde_json::to_value(s),
        };
        v.expect("environment states serialize to JSON")
    }

    pub fn from_value(kind: EnvKind, value: &serde_json::Value) -> Result<Self> {
        let err = |e: serde_json::Error| EnvError::State {
            kind,
            reason: e.to_string(),
        };
        let v = value.clone();
        let state = match kind {
            EnvKind::Gridworld1 | EnvKind::Gridworld2 => {
                let s: GridState = serde_json::from_value(v).map_err(err)?;
                if s.ordered != (kind == EnvKind::Gridworld2) {
                    return Err(EnvError::State {
                        kind,
                        reason: "ordered flag does not match the variant".into(),
                    });
                }
                TaskState::Grid(s)
            }
            EnvKind::Blocksworld => TaskState::Blocks(serde_json::from_value(v).map_err(err)?),
            EnvKind::Logistics => TaskState::Logistics(serde_json::from_value(v).map_err(err)?),
            EnvKind::Boxlift => TaskState::BoxLift(serde_json::from_value(v).map_err(err)?),
            EnvKind::Boxnet1 => TaskState::BoxNet1(serde_json::from_value(v).map_err(err)?),
            EnvKind::Boxnet2 => TaskState::BoxNet2(serde_json::from_value(v).map_err(err)?),
            EnvKind::Warehouse => TaskState::Warehouse(serde_json::from_value(v).map_err(err)?),
        };
        state.validate()?;
        Ok(state)
    }
}

/// A seeded, serializable initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvInstance {
    pub env_kind: EnvKind,
    pub seed: u64,
    pub size_params: SizeParams,
    pub initial_state: serde_json::Value,
}

fn need<T>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| EnvError::Infeasible(format!("missing size parameter {name}")))
}

impl EnvInstance {
    pub fn generate(kind: EnvKind, seed: u64, size: &SizeParams) -> Result<Self> {
        let size = size.resolved(kind);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rng = &mut rng;
        let state = match kind {
            EnvKind::Gridworld1 | EnvKind::Gridworld2 => {
                let rows = need(size.rows, "rows")?;
                let cols = need(size.cols, "cols")?;
                if rows > i32::MAX as u32 / 2 || cols > i32::MAX as u32 / 2 {
                    return Err(EnvError::Infeasible("grid too large".into()));
                }
                TaskState::Grid(GridState::generate(
                    rng,
                    rows as i32,
                    cols as i32,
                    need(size.goals, "goals")?,
                    need(size.obstacles, "obstacles")?,
                    kind == EnvKind::Gridworld2,
                )?)
            }
            EnvKind::Blocksworld => TaskState::Blocks(BlocksState::generate(rng, need(size.blocks, "blocks")?)?),
            EnvKind::Logistics => TaskState::Logistics(LogisticsState::generate(
                rng,
                need(size.cities, "cities")?,
                need(size.locations_per_city, "locations_per_city")?,
                need(size.airplanes, "airplanes")?,
                need(size.packages, "packages")?,
            )?),
            EnvKind::Boxlift => TaskState::BoxLift(BoxLiftState::generate(
                rng,
                need(size.boxes, "boxes")?,
                need(size.agents, "agents")?,
            )?),
            EnvKind::Boxnet1 => TaskState::BoxNet1(BoxNet1State::generate(
                rng,
                need(size.rows, "rows")?,
                need(size.cols, "cols")?,
                need(size.boxes, "boxes")?,
            )?),
            EnvKind::Boxnet2 => TaskState::BoxNet2(BoxNet2State::generate(
                rng,
                need(size.rows, "rows")?,
                need(size.cols, "cols")?,
                need(size.boxes, "boxes")?,
            )?),
            EnvKind::Warehouse => TaskState::Warehouse(WarehouseState::generate(
                rng,
                need(size.tracks, "tracks")?,
                need(size.columns, "columns")?,
                need(size.agents, "agents")?,
                need(size.boxes, "boxes")?,
            )?),
        };
        state.validate()?;
        Ok(EnvInstance {
            env_kind: kind,
            seed,
            size_params: size,
            initial_state: state.to_value(),
        })
    }

    /// Hand-built instance; `seed` is 0 and `size_params` empty.
    pub fn from_state(kind: EnvKind, state: &TaskState) -> Result<Self> {
        let value = state.to_value();
        TaskState::from_value(kind, &value)?;
        Ok(EnvInstance {
            env_kind: kind,
            seed: 0,
            size_params: SizeParams::default(),
            initial_state: value,
        })
    }

    pub fn state(&self) -> Result<TaskState> {
        TaskState::from_value(self.env_kind, &self.initial_state)
    }

    /// Regenerate from `(env_kind, seed, size_params)` and compare.
    pub fn reproducible(&self) -> bool {
        EnvInstance::generate(self.env_kind, self.seed, &self.size_params).is_ok_and(|g| g == *self)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `index`-th instance derived from a run seed.
pub fn instance_seed(seed: u64, index: usize) -> u64 {
    splitmix64(seed ^ splitmix64(index as u64))
}

pub fn generate_instances(kind: EnvKind, seed: u64, count: usize, size: &SizeParams) -> Result<Vec<EnvInstance>> {
    if count == 0 {
        return Err(EnvError::Invalid("count must be at least 1".into()));
    }
    (0..count)
        .map(|i| EnvInstance::generate(kind, instance_seed(seed, i), size))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_kind_generates_with_defaults() {
        for kind in EnvKind::ALL {
            let inst = EnvInstance::generate(kind, 3, &SizeParams::default()).unwrap();
            assert!(inst.reproducible(), "{kind}");
            let (done, total) = inst.state().unwrap().subgoals();
            assert!(total > 0 && done <= total, "{kind}");
        }
    }

    #[test]
    fn same_inputs_same_lists() {
        let size = SizeParams::grid(5, 5, 2, 3);
        let a = generate_instances(EnvKind::Gridworld1, 42, 10, &size).unwrap();
        let b = generate_instances(EnvKind::Gridworld1, 42, 10, &size).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn infeasible_grid_is_rejected() {
        let size = SizeParams::grid(2, 2, 1, 4);
        assert!(matches!(
            generate_instances(EnvKind::Gridworld1, 0, 1, &size),
            Err(EnvError::Infeasible(_))
        ));
    }

    #[test]
    fn resolved_drops_foreign_fields() {
        let size = SizeParams {
            blocks: Some(3),
            rows: Some(9),
            ..SizeParams::default()
        }
        .resolved(EnvKind::Blocksworld);
        assert_eq!(size, SizeParams::blocks(3));
    }

    #[test]
    fn wrong_kind_state_is_rejected() {
        let inst = EnvInstance::generate(EnvKind::Gridworld1, 1, &SizeParams::default()).unwrap();
        assert!(TaskState::from_value(EnvKind::Gridworld2, &inst.initial_state).is_err());
        assert!(TaskState::from_value(EnvKind::Blocksworld, &inst.initial_state).is_err());
    }
}

//! Package delivery with trucks inside cities and airplanes between airports.
//!
//! Naming: cities `c0..`, locations `l{city}-{index}` where index 0 is the
//! city's airport, one truck `t{city}` per city, airplanes `a0..`, packages
//! `p0..`.

use std::sync::LazyLock;

use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::parse::normalize;
use crate::{Applied, EnvError, ErrorKind, Result, Task};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vehicle {
    pub name: String,
    pub at: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogisticsPackage {
    pub name: String,
    /// Location when on the ground, `None` while loaded.
    pub at: Option<String>,
    /// Vehicle carrying the package, if any.
    pub carried_by: Option<String>,
    pub goal: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogisticsState {
    pub cities: usize,
    pub locations_per_city: usize,
    pub trucks: Vec<Vehicle>,
    pub airplanes: Vec<Vehicle>,
    pub packages: Vec<LogisticsPackage>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum LogAction {
    Load {
        pkg: String,
        vehicle: String,
        at: String,
    },
    Unload {
        pkg: String,
        vehicle: String,
        at: String,
    },
    Drive {
        truck: String,
        from: String,
        to: String,
        city: String,
    },
    Fly {
        plane: String,
        from: String,
        to: String,
    },
}

impl LogAction {
    fn label(&self) -> String {
        match self {
            LogAction::Load { pkg, vehicle, at } => format!("load {pkg} into {vehicle} at {at}"),
            LogAction::Unload { pkg, vehicle, at } => format!("unload {pkg} from {vehicle} at {at}"),
            LogAction::Drive { truck, from, to, city } => format!("drive {truck} from {from} to {to} in {city}"),
            LogAction::Fly { plane, from, to } => format!("fly {plane} from {from} to {to}"),
        }
    }
}

const NAME: &str = r"([a-z0-9_-]+)";

static PATTERNS: LazyLock<[Regex; 4]> = LazyLock::new(|| {
    [
        Regex::new(&format!(r"\bload {NAME} into {NAME} at {NAME}")).unwrap(),
        Regex::new(&format!(r"\bunload {NAME} from {NAME} at {NAME}")).unwrap(),
        Regex::new(&format!(r"\bdrive {NAME} from {NAME} to {NAME} in {NAME}")).unwrap(),
        Regex::new(&format!(r"\bfly {NAME} from {NAME} to {NAME}")).unwrap(),
    ]
});

fn parse_action(reply: &str) -> Option<LogAction> {
    let text = normalize(reply);
    let (_, which, c) = PATTERNS
        .iter()
        .enumerate()
        .filter_map(|(i, re)| re.captures(&text).map(|c| (c.get(0).unwrap().start(), i, c)))
        .min_by_key(|(s, i, _)| (*s, *i))?;
    let s = |i: usize| c[i].to_string();
    Some(match which {
        0 => LogAction::Load {
            pkg: s(1),
            vehicle: s(2),
            at: s(3),
        },
        1 => LogAction::Unload {
            pkg: s(1),
            vehicle: s(2),
            at: s(3),
        },
        2 => LogAction::Drive {
            truck: s(1),
            from: s(2),
            to: s(3),
            city: s(4),
        },
        _ => LogAction::Fly {
            plane: s(1),
            from: s(2),
            to: s(3),
        },
    })
}

pub fn location_name(city: usize, index: usize) -> String {
    format!("l{city}-{index}")
}

impl LogisticsState {
    fn locations(&self) -> impl Iterator<Item = String> + '_ {
        (0..self.cities).flat_map(move |c| (0..self.locations_per_city).map(move |i| location_name(c, i)))
    }

    /// City index of a location name, if it exists.
    pub fn city_of(&self, loc: &str) -> Option<usize> {
        let (c, i) = loc.strip_prefix('l')?.split_once('-')?;
        let (c, i): (usize, usize) = (c.parse().ok()?, i.parse().ok()?);
        (c < self.cities && i < self.locations_per_city && location_name(c, i) == loc).then_some(c)
    }

    pub fn is_airport(&self, loc: &str) -> bool {
        self.city_of(loc).is_some() && loc.ends_with("-0")
    }

    fn is_city(&self, name: &str) -> bool {
        (0..self.cities).any(|c| format!("c{c}") == name)
    }

    fn truck(&self, name: &str) -> Option<usize> {
        self.trucks.iter().position(|t| t.name == name)
    }

    fn plane(&self, name: &str) -> Option<usize> {
        self.airplanes.iter().position(|a| a.name == name)
    }

    fn package(&self, name: &str) -> Option<usize> {
        self.packages.iter().position(|p| p.name == name)
    }

    fn vehicle_at(&self, name: &str) -> Option<&str> {
        self.trucks
            .iter()
            .chain(&self.airplanes)
            .find(|v| v.name == name)
            .map(|v| v.at.as_str())
    }

    fn delivered(&self) -> usize {
        self.packages
            .iter()
            .filter(|p| p.at.as_deref() == Some(p.goal.as_str()))
            .count()
    }

    pub(crate) fn generate(
        rng: &mut impl Rng,
        cities: usize,
        locations_per_city: usize,
        airplanes: usize,
        packages: usize,
    ) -> Result<Self> {
        if cities < 1 || locations_per_city < 1 || packages < 1 {
            return Err(EnvError::Infeasible(
                "logistics needs at least one city, one location and one package".into(),
            ));
        }
        if cities * locations_per_city < 2 {
            return Err(EnvError::Infeasible("packages need somewhere to go".into()));
        }
        if cities > 1 && airplanes == 0 {
            return Err(EnvError::Infeasible("several cities require an airplane".into()));
        }
        let random_loc =
            |rng: &mut dyn rand::RngCore| location_name(rng.random_range(0..cities), rng.random_range(0..locations_per_city));
        let trucks = (0..cities)
            .map(|c| Vehicle {
                name: format!("t{c}"),
                at: location_name(c, rng.random_range(0..locations_per_city)),
            })
            .collect();
        let airplanes = (0..airplanes)
            .map(|a| Vehicle {
                name: format!("a{a}"),
                at: location_name(rng.random_range(0..cities), 0),
            })
            .collect();
        let packages = (0..packages)
            .map(|p| {
                let at = random_loc(rng);
                let goal = loop {
                    let g = random_loc(rng);
                    if g != at {
                        break g;
                    }
                };
                LogisticsPackage {
                    name: format!("p{p}"),
                    at: Some(at),
                    carried_by: None,
                    goal,
                }
            })
            .collect();
        Ok(LogisticsState {
            cities,
            locations_per_city,
            trucks,
            airplanes,
            packages,
        })
    }

    fn exec(&mut self, action: &LogAction) -> std::result::Result<String, (ErrorKind, String)> {
        let wrong = |m: String| Err((ErrorKind::WrongObject, m));
        let invalid = |m: String| Err((ErrorKind::InvalidAction, m));
        match action {
            LogAction::Load { pkg, vehicle, at } | LogAction::Unload { pkg, vehicle, at } => {
                let loading = matches!(action, LogAction::Load { .. });
                let Some(p) = self.package(pkg) else {
                    return wrong(format!("{pkg} is not a package."));
                };
                if self.truck(vehicle).is_none() && self.plane(vehicle).is_none() {
                    return wrong(format!("{vehicle} is not a truck or an airplane."));
                }
                if self.city_of(at).is_none() {
                    return wrong(format!("{at} is not a location."));
                }
                if self.vehicle_at(vehicle) != Some(at.as_str()) {
                    return invalid(format!("{vehicle} is not at {at}."));
                }
                let package = &mut self.packages[p];
                if loading {
                    if package.at.as_deref() != Some(at.as_str()) {
                        return invalid(format!("{pkg} is not at {at}."));
                    }
                    package.at = None;
                    package.carried_by = Some(vehicle.clone());
                    Ok(format!("{pkg} is now in {vehicle}."))
                } else {
                    if package.carried_by.as_deref() != Some(vehicle.as_str()) {
                        return invalid(format!("{pkg} is not in {vehicle}."));
                    }
                    package.carried_by = None;
                    package.at = Some(at.clone());
                    Ok(format!("{pkg} is now at {at}."))
                }
            }
            LogAction::Drive { truck, from, to, city } => {
                let Some(t) = self.truck(truck) else {
                    return wrong(format!("{truck} is not a truck."));
                };
                let (Some(cf), Some(ct)) = (self.city_of(from), self.city_of(to)) else {
                    return wrong(format!("{from} or {to} is not a location."));
                };
                if !self.is_city(city) {
                    return wrong(format!("{city} is not a city."));
                }
                if self.trucks[t].at != *from {
                    return invalid(format!("{truck} is not at {from}."));
                }
                if cf != ct || format!("c{cf}") != *city {
                    return invalid(format!(
                        "{from} and {to} are not both in {city}; trucks cannot leave their city."
                    ));
                }
                if from == to {
                    return invalid(format!("{truck} is already at {to}."));
                }
                self.trucks[t].at = to.clone();
                Ok(format!("{truck} is now at {to}."))
            }
            LogAction::Fly { plane, from, to } => {
                let Some(a) = self.plane(plane) else {
                    return wrong(format!("{plane} is not an airplane."));
                };
                if self.city_of(from).is_none() || self.city_of(to).is_none() {
                    return wrong(format!("{from} or {to} is not a location."));
                }
                if !self.is_airport(from) || !self.is_airport(to) {
                    return invalid(format!("{from} and {to} must both be airports."));
                }
                if self.airplanes[a].at != *from {
                    return invalid(format!("{plane} is not at {from}."));
                }
                if from == to {
                    return invalid(format!("{plane} is already at {to}."));
                }
                self.airplanes[a].at = to.clone();
                Ok(format!("{plane} is now at {to}."))
            }
        }
    }
}

impl Task for LogisticsState {
    fn observe(&self) -> String {
        let cities: Vec<String> = (0..self.cities)
            .map(|c| {
                let locs: Vec<String> = (0..self.locations_per_city).map(|i| location_name(c, i)).collect();
                format!("c{c} has locations {} (airport {})", locs.join(", "), location_name(c, 0))
            })
            .collect();
        let vehicles: Vec<String> = self
            .trucks
            .iter()
            .map(|t| format!("truck {} is at {}", t.name, t.at))
            .chain(self.airplanes.iter().map(|a| format!("airplane {} is at {}", a.name, a.at)))
            .collect();
        let packages: Vec<String> = self
            .packages
            .iter()
            .map(|p| match (&p.at, &p.carried_by) {
                (Some(at), _) => format!("{} is at {}", p.name, at),
                (None, Some(v)) => format!("{} is in {}", p.name, v),
                _ => format!("{} is nowhere", p.name),
            })
            .collect();
        let goals: Vec<String> = self.packages.iter().map(|p| format!("{} at {}", p.name, p.goal)).collect();
        format!(
            "Cities: {}.\nVehicles: {}.\nPackages: {}.\nGoal: {}.\nPackages delivered: {} of {}.",
            cities.join("; "),
            vehicles.join(", "),
            packages.join(", "),
            goals.join(", "),
            self.delivered(),
            self.packages.len()
        )
    }

    fn apply(&mut self, reply: &str) -> Applied {
        let Some(action) = parse_action(reply) else {
            return Applied::syntactic(
                "No valid action was found. Use: load {} into {} at {}, unload {} from {} at {}, drive {} from {} to {} in {}, fly {} from {} to {}.",
            );
        };
        let label = action.label();
        let mut next = self.clone();
        match next.exec(&action) {
            Ok(msg) => {
                *self = next;
                Applied::ok(label, msg)
            }
            Err((kind, msg)) => Applied::fail(Some(label), kind, msg),
        }
    }

    fn subgoals(&self) -> (usize, usize) {
        (self.delivered(), self.packages.len())
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(EnvError::Invalid(m));
        if self.packages.is_empty() {
            return bad("at least one package is required".into());
        }
        if self.trucks.len() != self.cities {
            return bad("exactly one truck per city is required".into());
        }
        for (c, t) in self.trucks.iter().enumerate() {
            if t.name != format!("t{c}") || self.city_of(&t.at) != Some(c) {
                return bad(format!("truck {} must be named t{c} and stay in c{c}", t.name));
            }
        }
        for (i, a) in self.airplanes.iter().enumerate() {
            if a.name != format!("a{i}") || !self.is_airport(&a.at) {
                return bad(format!("airplane {} must be named a{i} and sit at an airport", a.name));
            }
        }
        let all_locs: Vec<String> = self.locations().collect();
        for (i, p) in self.packages.iter().enumerate() {
            if p.name != format!("p{i}") {
                return bad(format!("package {} must be named p{i}", p.name));
            }
            if !all_locs.contains(&p.goal) {
                return bad(format!("goal {} of {} is not a location", p.goal, p.name));
            }
            match (&p.at, &p.carried_by) {
                (Some(at), None) if all_locs.contains(at) => {}
                (None, Some(v)) if self.truck(v).is_some() || self.plane(v).is_some() => {}
                _ => return bad(format!("{} must be at a location or in a vehicle", p.name)),
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world() -> LogisticsState {
        LogisticsState {
            cities: 2,
            locations_per_city: 2,
            trucks: vec![
                Vehicle {
                    name: "t0".into(),
                    at: "l0-1".into(),
                },
                Vehicle {
                    name: "t1".into(),
                    at: "l1-0".into(),
                },
            ],
            airplanes: vec![Vehicle {
                name: "a0".into(),
                at: "l0-0".into(),
            }],
            packages: vec![LogisticsPackage {
                name: "p0".into(),
                at: Some("l0-1".into()),
                carried_by: None,
                goal: "l1-1".into(),
            }],
        }
    }

    #[test]
    fn delivers_across_cities() {
        let mut s = world();
        assert!(s.validate().is_ok());
        for step in [
            "load p0 into t0 at l0-1",
            "drive t0 from l0-1 to l0-0 in c0",
            "unload p0 from t0 at l0-0",
            "load p0 into a0 at l0-0",
            "fly a0 from l0-0 to l1-0",
            "unload p0 from a0 at l1-0",
            "load p0 into t1 at l1-0",
            "drive t1 from l1-0 to l1-1 in c1",
            "unload p0 from t1 at l1-1",
        ] {
            let a = s.apply(&format!("Next: {{{step}}}"));
            assert_eq!(a.error, None, "{step}: {}", a.feedback);
        }
        assert_eq!(s.subgoals(), (1, 1));
    }

    #[test]
    fn truck_cannot_leave_city() {
        let mut s = world();
        let before = s.clone();
        let a = s.apply("drive t0 from l0-1 to l1-1 in c0");
        assert_eq!(a.error, Some(ErrorKind::InvalidAction));
        assert_eq!(s, before);
    }

    #[test]
    fn wrong_object_types() {
        let mut s = world();
        assert_eq!(
            s.apply("drive a0 from l0-0 to l0-1 in c0").error,
            Some(ErrorKind::WrongObject)
        );
        assert_eq!(s.apply("fly t0 from l0-1 to l1-0").error, Some(ErrorKind::WrongObject));
        assert_eq!(s.apply("load t0 into p0 at l0-1").error, Some(ErrorKind::WrongObject));
    }

    #[test]
    fn fly_needs_airports() {
        let mut s = world();
        assert_eq!(s.apply("fly a0 from l0-0 to l1-1").error, Some(ErrorKind::InvalidAction));
    }
}

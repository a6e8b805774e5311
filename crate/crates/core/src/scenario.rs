//! Scenario documents (TOML): workspace, obstacles, formation and parameters.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geom2d::{ConvexRegion, Point2};
use crate::model::{ArmSpec, BaseSpec, FormationSpec, RobotSpec};
use crate::params::PlannerParams;
use crate::world::{DynamicObstacle, MotionScript, StaticObstacle, World};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
}

// `deny_unknown_fields` does not combine with `flatten`.
#[derive(Debug, Clone, Deserialize)]
struct RawDynamic {
    radius: f64,
    #[serde(flatten)]
    script: MotionScript,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawFormation {
    /// Number of robots for the regular-polygon shorthand.
    robots: usize,
    object_radius: f64,
    grasp_radius: f64,
    /// Explicit object outline; overrides the shorthand.
    object: Option<Vec<Point2>>,
    /// Explicit grasp points, one per robot; overrides the shorthand.
    grasp: Option<Vec<Point2>>,
    base: BaseSpec,
    arm: ArmSpec,
}

impl Default for RawFormation {
    fn default() -> Self {
        RawFormation {
            robots: 5,
            object_radius: 0.25,
            grasp_radius: 0.25,
            object: None,
            grasp: None,
            base: BaseSpec::default(),
            arm: ArmSpec::default(),
        }
    }
}

impl RawFormation {
    fn build(self) -> FormationSpec {
        let mut spec = FormationSpec::regular(
            self.robots,
            self.object_radius,
            self.grasp_radius,
            self.base.clone(),
            self.arm,
        );
        if let Some(obj) = self.object {
            spec.object = obj;
        }
        if let Some(g) = self.grasp {
            spec.robots = g
                .into_iter()
                .map(|grasp| RobotSpec {
                    grasp,
                    base: self.base.clone(),
                    arm: self.arm,
                })
                .collect();
        }
        spec
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    name: String,
    bounds: Vec<Point2>,
    #[serde(default)]
    static_obstacles: Vec<Vec<Point2>>,
    #[serde(default)]
    dynamic_obstacles: Vec<RawDynamic>,
    start: Point2,
    goal: Point2,
    /// Object heading at the start.
    #[serde(default)]
    start_heading: f64,
    #[serde(default)]
    formation: RawFormation,
    #[serde(default)]
    planner_params: PlannerParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub world: World,
    pub formation: FormationSpec,
    pub params: PlannerParams,
    pub start_heading: f64,
    /// SHA-256 of the canonical document after overrides.
    pub hash: String,
}

/// Parses a scenario document and validates every invariant.
pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    load_scenario_with(text, &[])
}

/// Like [`load_scenario`], applying `key.path=value` overrides first. Path
/// segments address tables by key and arrays by index; values are TOML.
pub fn load_scenario_with(
    text: &str,
    overrides: &[(String, String)],
) -> Result<Scenario, ScenarioError> {
    let mut doc: toml::Table = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    for (k, v) in overrides {
        apply_override(&mut doc, k, v)?;
    }
    let canonical = toml::to_string(&doc).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    let hash = hex::encode(Sha256::digest(canonical.as_bytes()));
    let raw: RawScenario = toml::Value::Table(doc)
        .try_into()
        .map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string()))?;
    build(raw, hash)
}

/// Parses a `key=value` override string.
pub fn parse_override(s: &str) -> Result<(String, String), ScenarioError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| ScenarioError::Parse(format!("override `{s}` is not key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn parse_value(v: &str) -> toml::Value {
    #[derive(Deserialize)]
    struct Wrap {
        v: toml::Value,
    }
    match toml::from_str::<Wrap>(&format!("v = {v}")) {
        Ok(w) => w.v,
        Err(_) => toml::Value::String(v.to_string()),
    }
}

fn apply_override(doc: &mut toml::Table, key: &str, value: &str) -> Result<(), ScenarioError> {
    let bad = |msg: &str| ScenarioError::Parse(format!("override `{key}`: {msg}"));
    let parts: Vec<&str> = key.split('.').collect();
    let (last, path) = parts.split_last().ok_or_else(|| bad("empty key"))?;
    let mut cur: &mut toml::Value = doc
        .entry(path.first().copied().unwrap_or(last).to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    if path.is_empty() {
        *cur = parse_value(value);
        return Ok(());
    }
    for seg in &path[1..] {
        cur = match cur {
            toml::Value::Table(t) => t
                .entry(seg.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new())),
            toml::Value::Array(a) => {
                let i: usize = seg.parse().map_err(|_| bad("array index expected"))?;
                a.get_mut(i).ok_or_else(|| bad("array index out of range"))?
            }
            _ => return Err(bad("path runs through a scalar")),
        };
    }
    match cur {
        toml::Value::Table(t) => {
            t.insert(last.to_string(), parse_value(value));
        }
        toml::Value::Array(a) => {
            let i: usize = last.parse().map_err(|_| bad("array index expected"))?;
            *a.get_mut(i).ok_or_else(|| bad("array index out of range"))? = parse_value(value);
        }
        _ => return Err(bad("path runs through a scalar")),
    }
    Ok(())
}

fn build(raw: RawScenario, hash: String) -> Result<Scenario, ScenarioError> {
    let mut problems = Vec::new();
    let bounds = match ConvexRegion::from_vertices(&raw.bounds) {
        Ok(b) => Some(b),
        Err(e) => {
            problems.push(format!("bounds: {e}"));
            None
        }
    };
    let mut statics = Vec::new();
    for (id, shape) in raw.static_obstacles.into_iter().enumerate() {
        match StaticObstacle::new(id, shape) {
            Ok(o) => statics.push(o),
            Err(e) => problems.push(e.to_string().replace("validation error: ", "")),
        }
    }
    let dynamics: Vec<DynamicObstacle> = raw
        .dynamic_obstacles
        .into_iter()
        .enumerate()
        .map(|(id, d)| DynamicObstacle {
            id,
            radius: d.radius,
            script: d.script,
        })
        .collect();
    let formation = raw.formation.build();
    if let Err(e) = formation.validate() {
        problems.push(format!("formation: {e}"));
    }
    problems.extend(raw.planner_params.violations().into_iter().map(|m| format!("planner_params: {m}")));
    if !raw.start_heading.is_finite() || raw.start_heading.abs() > 4.0 * PI {
        problems.push("start_heading must be a finite angle".into());
    }
    let world = bounds.map(|bounds| World {
        bounds,
        statics,
        dynamics,
        start: raw.start,
        goal: raw.goal,
    });
    if let Some(w) = &world {
        problems.extend(w.violations());
    }
    if !problems.is_empty() {
        return Err(ScenarioError::Validation(problems));
    }
    Ok(Scenario {
        name: raw.name,
        world: world.expect("bounds valid when no problems"),
        formation,
        params: raw.planner_params,
        start_heading: raw.start_heading,
        hash,
    })
}

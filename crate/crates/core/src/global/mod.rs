//! Global planning: formation poses at region intersections, the formation
//! graph, its shortest path and the smoothed reference trajectory.

mod bezier;
mod formation;
mod graph;
mod plan;

use thiserror::Error;

pub use bezier::{bezier_derivative, bezier_point, smooth_path, ReferenceTrajectory};
pub use formation::{contain_circles, fixed_pose, formation_pose_opt, FormationNode, PoseContext, POSE_FEAS_TOL};
pub use graph::{build_graph, dijkstra_path, shortest_path, FormationGraph, GlobalPath, GraphEdge, GOAL, START};
pub use plan::{plan_scenario, solver_options, PlanFile, PLAN_FORMAT_VERSION};

use crate::geom2d::GeomError;
use crate::model::ModelError;
use crate::regions::RegionError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GlobalError {
    #[error("no feasible formation at the start")]
    NoStartFormation,
    #[error("no feasible formation at the goal")]
    NoGoalFormation,
    #[error("no path from start to goal")]
    NoPath,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Geometry(#[from] GeomError),
}

//! Motion planning for a rigid formation of mobile manipulators that carry a
//! shared object through a planar workspace with static and moving obstacles.

pub mod geom2d;
pub mod world;
pub mod model;
pub mod params;
pub mod scenario;
pub mod seeding;
pub mod regions;
pub mod nlp;
pub mod global;
pub mod nmpc;
pub mod sim;

pub use geom2d::{Circle, ConvexRegion, Halfspace, Point2};
pub use global::{plan_scenario, GlobalError, PlanFile, ReferenceTrajectory};
pub use model::{FormationConfig, FormationSpec, MmrState};
pub use nmpc::{plan_horizon, HorizonPlan, NmpcError};
pub use params::PlannerParams;
pub use scenario::{load_scenario, load_scenario_with, Scenario, ScenarioError};
pub use sim::{audit, run, AuditReport, SimLog, SimStatus};
pub use world::World;

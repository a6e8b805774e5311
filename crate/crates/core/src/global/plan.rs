//! Plan files: everything the local planner and the CLI need from global planning.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bezier::{smooth_path, ReferenceTrajectory};
use super::formation::PoseContext;
use super::graph::{build_graph, shortest_path, FormationGraph, GlobalPath, GOAL, START};
use super::GlobalError;
use crate::geom2d::{ConvexRegion, Point2};
use crate::model::FormationConfig;
use crate::nlp::SolverOptions;
use crate::params::PlannerParams;
use crate::regions::{fill_region_set, RegionBuilder, RegionOptions, RegionSet};
use crate::scenario::Scenario;
use crate::seeding::{seed_points, SeedList};

pub const PLAN_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub format_version: u32,
    pub scenario_name: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub params: PlannerParams,
    pub seeds: SeedList,
    pub regions: RegionSet,
    pub graph: FormationGraph,
    pub path: GlobalPath,
    pub reference: ReferenceTrajectory,
}

impl PlanFile {
    pub fn start_config(&self) -> &FormationConfig {
        &self.graph.nodes[START].config
    }

    pub fn goal_config(&self) -> &FormationConfig {
        &self.graph.nodes[GOAL].config
    }

    /// Tracking regions in path order.
    pub fn corridor(&self) -> Vec<ConvexRegion> {
        self.path.corridor.iter().map(|&k| self.regions.regions[k].clone()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

pub fn solver_options(params: &PlannerParams) -> SolverOptions {
    SolverOptions {
        max_outer: params.solver_max_outer,
        max_inner: params.solver_max_inner,
        ..SolverOptions::default()
    }
}

/// Seeds, regions, formation graph, shortest path and reference for a scenario.
pub fn plan_scenario(sc: &Scenario, seed: u64) -> Result<PlanFile, GlobalError> {
    let world = &sc.world;
    let params = &sc.params;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds = seed_points(world, &mut rng)?;
    let obstacles: Vec<Vec<Point2>> = world.statics.iter().map(|o| o.shape.clone()).collect();
    let opts = RegionOptions {
        coverage_target: params.coverage_target,
        max_regions: params.max_regions,
        coverage_samples: params.coverage_samples,
    };
    let mut builder = RegionBuilder::new(&obstacles, &world.bounds, opts.coverage_samples, &mut rng);
    fill_region_set(&mut builder, &seeds.points(), &mut rng, opts)?;
    if builder.set().coverage < params.coverage_target {
        log::warn!(
            "region coverage {:.3} below target {:.3}",
            builder.set().coverage,
            params.coverage_target
        );
    }
    let ctx = PoseContext {
        spec: &sc.formation,
        p_s: world.start,
        p_g: world.goal,
        d_safe: params.d_safe,
        psi_ref: sc.start_heading,
        opts: solver_options(params),
    };
    // Coverage alone can leave a passage without a region; keep growing the
    // set while the graph is disconnected and the region budget allows.
    let reach = sc.formation.footprint_radius();
    let mut centered = [false; 2];
    let (graph, path) = loop {
        // A formation at an endpoint needs one region holding all of it;
        // a region grown from the endpoint itself is the best candidate.
        let graph = match build_graph(&ctx, &builder.set().regions) {
            Err(e @ (GlobalError::NoStartFormation | GlobalError::NoGoalFormation)) => {
                let end = matches!(e, GlobalError::NoGoalFormation) as usize;
                if centered[end] {
                    return Err(e);
                }
                centered[end] = true;
                builder.add_at([world.start, world.goal][end])?;
                log::info!("{e}, added region {} at the endpoint", builder.set().len() - 1);
                continue;
            }
            g => g?,
        };
        match shortest_path(&graph) {
            Ok(path) => break (graph, path),
            Err(GlobalError::NoPath) if builder.set().len() < params.max_regions => {
                let grown = builder.add_random(&mut rng)? || builder.add_shallow(reach, &mut rng)?;
                if !grown {
                    return Err(GlobalError::NoPath);
                }
                log::info!("graph disconnected, added region {}", builder.set().len() - 1);
            }
            Err(e) => return Err(e),
        }
    };
    let regions = builder.finish(params.coverage_target);
    let hosts: Vec<Vec<ConvexRegion>> = path
        .edge_regions
        .iter()
        .map(|ids| ids.iter().map(|&k| regions.regions[k].clone()).collect())
        .collect();
    let reference = smooth_path(&path.waypoints, &hosts, params.v_op);
    Ok(PlanFile {
        format_version: PLAN_FORMAT_VERSION,
        scenario_name: sc.name.clone(),
        scenario_hash: sc.hash.clone(),
        seed,
        params: params.clone(),
        seeds,
        regions,
        graph,
        path,
        reference,
    })
}

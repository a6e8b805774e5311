//! Formation graph over region intersections and the shortest CoM path.

use petgraph::graph::{NodeIndex, UnGraph};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::formation::{contain_circles, fixed_pose, formation_pose_opt, FormationNode, PoseContext};
use super::GlobalError;
use crate::geom2d::{ConvexRegion, Point2};
use crate::model::bounding_circles;

/// Slack on CoM-in-region tests for graph edges.
pub const EDGE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub a: usize,
    pub b: usize,
    /// Distance between the endpoint CoMs, m.
    pub weight: f64,
    /// Every region holding both endpoint CoMs and both endpoint formations.
    pub regions: Vec<usize>,
    /// Region used for tracking along the edge, the first of `regions`.
    pub region: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationGraph {
    /// Start at index 0, goal at index 1, then one node per feasible intersection.
    pub nodes: Vec<FormationNode>,
    pub edges: Vec<GraphEdge>,
    /// Intersecting region pairs with no feasible formation.
    pub skipped: Vec<(usize, usize)>,
}

pub const START: usize = 0;
pub const GOAL: usize = 1;

impl FormationGraph {
    pub fn com(&self, k: usize) -> Point2 {
        self.nodes[k].config.p
    }
}

fn endpoint_node(
    ctx: &PoseContext<'_>,
    regions: &[ConvexRegion],
    p: Point2,
) -> Result<Option<FormationNode>, GlobalError> {
    for (k, r) in regions.iter().enumerate() {
        if let Some(node) = fixed_pose(ctx, p, (k, r))? {
            return Ok(Some(node));
        }
    }
    Ok(None)
}

/// Builds the formation graph: start and goal nodes with the CoM pinned,
/// one node per pairwise intersection that admits a formation, and an edge
/// between every two nodes whose CoMs share a region that also contains
/// both nodes' formations.
pub fn build_graph(ctx: &PoseContext<'_>, regions: &[ConvexRegion]) -> Result<FormationGraph, GlobalError> {
    let start = endpoint_node(ctx, regions, ctx.p_s)?.ok_or(GlobalError::NoStartFormation)?;
    let goal = endpoint_node(ctx, regions, ctx.p_g)?.ok_or(GlobalError::NoGoalFormation)?;
    let pairs: Vec<(usize, usize)> = (0..regions.len())
        .flat_map(|a| (a + 1..regions.len()).map(move |b| (a, b)))
        .collect();
    let solved: Vec<((usize, usize), Option<Result<Option<FormationNode>, GlobalError>>)> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let res = regions[a].intersect(&regions[b]).map(|inter| {
                formation_pose_opt(ctx, &inter, [(a, &regions[a]), (b, &regions[b])])
                    .map_err(GlobalError::from)
            });
            ((a, b), res)
        })
        .collect();
    let mut nodes = vec![start, goal];
    let mut skipped = Vec::new();
    for ((a, b), res) in solved {
        match res {
            None => {}
            Some(Ok(Some(node))) => nodes.push(node),
            Some(Ok(None)) => {
                log::debug!("no formation fits the intersection of regions {a} and {b}");
                skipped.push((a, b));
            }
            Some(Err(e)) => return Err(e),
        }
    }
    let circles: Vec<_> = nodes
        .iter()
        .map(|n| bounding_circles(&n.config, ctx.spec).map(|b| b.all()))
        .collect::<Result<_, _>>()?;
    let mut edges = Vec::new();
    for i in 0..nodes.len() {
        for j in i + 1..nodes.len() {
            let (pi, pj) = (nodes[i].config.p, nodes[j].config.p);
            let fits = |r: usize, k: usize| contain_circles(&regions[r], &circles[k], ctx.d_safe).0;
            let shared: Vec<usize> = (0..regions.len())
                .filter(|&r| regions[r].contains(pi, EDGE_SLACK) && regions[r].contains(pj, EDGE_SLACK))
                .filter(|&r| fits(r, i) && fits(r, j))
                .collect();
            let Some(&region) = shared.first() else {
                continue;
            };
            edges.push(GraphEdge {
                a: i,
                b: j,
                weight: pi.dist(pj),
                regions: shared,
                region,
            });
        }
    }
    Ok(FormationGraph { nodes, edges, skipped })
}

/// Dijkstra over `n` nodes and weighted undirected edges; `None` if `t` is
/// unreachable from `s`.
pub fn dijkstra_path(n: usize, edges: &[(usize, usize, f64)], s: usize, t: usize) -> Option<(Vec<usize>, f64)> {
    let mut g: UnGraph<(), f64> = UnGraph::with_capacity(n, edges.len());
    for _ in 0..n {
        g.add_node(());
    }
    for &(a, b, w) in edges {
        g.add_edge(NodeIndex::new(a), NodeIndex::new(b), w);
    }
    petgraph::algo::astar(&g, NodeIndex::new(s), |v| v == NodeIndex::new(t), |e| *e.weight(), |_| 0.0)
        .map(|(cost, path)| (path.into_iter().map(|v| v.index()).collect(), cost))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalPath {
    /// Node ids from start to goal.
    pub nodes: Vec<usize>,
    /// Object CoM at each node.
    pub waypoints: Vec<Point2>,
    /// Per path edge, every region holding both endpoints.
    pub edge_regions: Vec<Vec<usize>>,
    /// Tracking region per path edge.
    pub edge_region: Vec<usize>,
    /// Tracking regions in path order, consecutive repeats removed.
    pub corridor: Vec<usize>,
    /// Per path edge, its position in `corridor`.
    pub edge_corridor: Vec<usize>,
    pub length: f64,
}

/// Shortest start-to-goal path by summed CoM distances.
pub fn shortest_path(graph: &FormationGraph) -> Result<GlobalPath, GlobalError> {
    let e: Vec<(usize, usize, f64)> = graph.edges.iter().map(|e| (e.a, e.b, e.weight)).collect();
    let (nodes, length) = dijkstra_path(graph.nodes.len(), &e, START, GOAL).ok_or(GlobalError::NoPath)?;
    let mut edge_regions = Vec::new();
    let mut edge_region = Vec::new();
    for w in nodes.windows(2) {
        let (a, b) = (w[0].min(w[1]), w[0].max(w[1]));
        let edge = graph
            .edges
            .iter()
            .find(|e| e.a == a && e.b == b)
            .expect("path edges come from the graph");
        edge_regions.push(edge.regions.clone());
        edge_region.push(edge.region);
    }
    let mut corridor: Vec<usize> = Vec::new();
    let mut edge_corridor = Vec::new();
    for &r in &edge_region {
        if corridor.last() != Some(&r) {
            corridor.push(r);
        }
        edge_corridor.push(corridor.len() - 1);
    }
    Ok(GlobalPath {
        waypoints: nodes.iter().map(|&k| graph.com(k)).collect(),
        nodes,
        edge_regions,
        edge_region,
        corridor,
        edge_corridor,
        length,
    })
}

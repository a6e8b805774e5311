//! Targeted seed points in narrow gaps between static obstacles.
//!
//! Every pair of obstacles contributes its closest-point gap edge; a sparse
//! subset of short edges that touches every obstacle is then selected by
//! growing a frontier from the globally shortest edge, and the midpoints of
//! the selected edges (shortest first) become seeds for region inflation.

use std::cmp::Ordering;

use log::debug;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geom2d::{closest_point_pair, point_in_convex, GeomError, Point2};
use crate::world::World;

/// Thickness of the slabs that stand in for the workspace boundary.
pub const WALL_THICKNESS: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapEdge {
    pub i: usize,
    pub j: usize,
    pub p_i: Point2,
    pub p_j: Point2,
    pub length: f64,
}

impl GapEdge {
    pub fn midpoint(&self) -> Point2 {
        self.p_i.lerp(self.p_j, 0.5)
    }

    fn touches(&self, k: usize) -> bool {
        self.i == k || self.j == k
    }

    fn other(&self, k: usize) -> usize {
        if self.i == k {
            self.j
        } else {
            self.i
        }
    }
}

/// Orders edges by length, then by `(i, j)`.
fn edge_order(a: &GapEdge, b: &GapEdge) -> Ordering {
    a.length
        .total_cmp(&b.length)
        .then(a.i.cmp(&b.i))
        .then(a.j.cmp(&b.j))
}

/// One gap edge per unordered obstacle pair, in `(i, j)` order.
pub fn all_gap_edges(obstacles: &[Vec<Point2>]) -> Result<Vec<GapEdge>, GeomError> {
    let n = obstacles.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    pairs
        .par_iter()
        .map(|&(i, j)| {
            let c = closest_point_pair(&obstacles[i], &obstacles[j])?;
            Ok(GapEdge {
                i,
                j,
                p_i: c.a,
                p_j: c.b,
                length: c.dist,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Connection {
    pub edges: Vec<GapEdge>,
    /// Times the frontier emptied and an unconnected obstacle was drawn.
    pub fallback_draws: usize,
    /// Edges added afterwards to join components the frontier left apart.
    pub bridges: usize,
}

/// Frontier-growing selection of short edges touching every obstacle.
///
/// Starts from the globally shortest edge; each frontier obstacle then takes
/// its shortest remaining edge. When the frontier runs dry with obstacles
/// still unconnected, one of them is drawn from `rng`. If the resulting edge
/// graph is still split, the shortest edge between components is added until
/// it is connected.
pub fn connect_static_obstacles<R: Rng + ?Sized>(
    n_obstacles: usize,
    edges: &[GapEdge],
    rng: &mut R,
) -> Connection {
    let mut remaining: Vec<GapEdge> = edges.to_vec();
    remaining.sort_by(edge_order);
    let mut out = Connection {
        edges: Vec::new(),
        fallback_draws: 0,
        bridges: 0,
    };
    if remaining.is_empty() {
        return out;
    }
    let first = remaining.remove(0);
    let mut connected = vec![false; n_obstacles];
    connected[first.i] = true;
    connected[first.j] = true;
    let mut frontier = vec![first.i, first.j];
    out.edges.push(first);

    while !frontier.is_empty() {
        let mut fresh = Vec::new();
        for &o in &frontier {
            // `remaining` stays sorted, so the first incident edge is the shortest.
            let Some(pos) = remaining.iter().position(|e| e.touches(o)) else {
                continue;
            };
            let e = remaining.remove(pos);
            fresh.push(e.other(o));
            out.edges.push(e);
        }
        frontier.clear();
        for o in fresh {
            if !connected[o] && !frontier.contains(&o) {
                frontier.push(o);
            }
        }
        if !frontier.is_empty() {
            for &o in &frontier {
                connected[o] = true;
            }
        } else {
            let loose: Vec<usize> = (0..n_obstacles).filter(|&o| !connected[o]).collect();
            if !loose.is_empty() {
                let o = loose[rng.random_range(0..loose.len())];
                out.fallback_draws += 1;
                connected[o] = true;
                frontier.push(o);
            }
        }
    }

    // Join any components the frontier left apart.
    loop {
        let comp = components(n_obstacles, &out.edges);
        let Some(e) = remaining
            .iter()
            .position(|e| comp[e.i] != comp[e.j])
        else {
            break;
        };
        out.edges.push(remaining.remove(e));
        out.bridges += 1;
    }
    out
}

/// Component label per obstacle for the graph formed by `edges`.
pub fn components(n: usize, edges: &[GapEdge]) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for e in edges {
        let (a, b) = (find(&mut parent, e.i), find(&mut parent, e.j));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    (0..n).map(|x| find(&mut parent, x)).collect()
}

/// The static obstacles plus one slab outside each boundary edge.
pub fn seeding_obstacles(world: &World) -> Vec<Vec<Point2>> {
    let mut out: Vec<Vec<Point2>> = world.statics.iter().map(|o| o.shape.clone()).collect();
    let vs = world.bounds.vertices();
    for k in 0..vs.len() {
        let a = vs[k];
        let b = vs[(k + 1) % vs.len()];
        let d = b - a;
        // Outward normal of a counter-clockwise polygon edge.
        let n = Point2::new(d.y, -d.x) / d.norm() * WALL_THICKNESS;
        out.push(vec![a, a + n, b + n, b]);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seed {
    pub point: Point2,
    pub edge: GapEdge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedList {
    /// Usable seeds, by source-edge length ascending.
    pub seeds: Vec<Seed>,
    /// Midpoints that fell inside an obstacle or outside the bounds.
    pub dropped: Vec<Seed>,
    pub connection: Connection,
}

impl SeedList {
    pub fn points(&self) -> Vec<Point2> {
        self.seeds.iter().map(|s| s.point).collect()
    }
}

/// Gap-edge midpoints to seed narrow regions, shortest edge first.
pub fn seed_points<R: Rng + ?Sized>(world: &World, rng: &mut R) -> Result<SeedList, GeomError> {
    let obstacles = seeding_obstacles(world);
    let edges = all_gap_edges(&obstacles)?;
    let connection = connect_static_obstacles(obstacles.len(), &edges, rng);
    let mut chosen = connection.edges.clone();
    chosen.sort_by(edge_order);
    let mut seeds = Vec::new();
    let mut dropped = Vec::new();
    for e in chosen {
        let s = Seed {
            point: e.midpoint(),
            edge: e,
        };
        let blocked = world.bounds.margin(s.point) <= 0.0
            || world.statics.iter().any(|o| point_in_convex(s.point, &o.shape));
        if blocked {
            debug!(
                "dropping seed ({:.3}, {:.3}) between obstacles {} and {}: not in free space",
                s.point.x, s.point.y, e.i, e.j
            );
            dropped.push(s);
        } else {
            seeds.push(s);
        }
    }
    Ok(SeedList {
        seeds,
        dropped,
        connection,
    })
}

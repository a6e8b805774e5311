//! Convex obstacle-free regions grown from seed points.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom2d::{
    chebyshev_center_near, closest_point_on_segment, point_in_convex, ConvexRegion, GeomError,
    Halfspace, Point2,
};

pub const MAX_INFLATE_ITERS: usize = 20;
pub const CENTER_TOL: f64 = 1e-4;
/// Radius slack when choosing among Chebyshev centers.
const RECENTER_TOL: f64 = 1e-3;
/// Random seed attempts per new region before giving up.
const MAX_SEED_ATTEMPTS: usize = 2000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegionError {
    #[error("seed ({0}, {1}) is inside an obstacle or outside the bounds")]
    SeedBlocked(f64, f64),
    #[error(transparent)]
    Geometry(#[from] GeomError),
}

/// Closest point of a convex polygon's boundary to `p`.
fn closest_on_polygon(p: Point2, poly: &[Point2]) -> Point2 {
    let n = poly.len();
    let mut best = poly[0];
    let mut best_d = f64::INFINITY;
    for k in 0..n {
        let q = closest_point_on_segment(p, poly[k], poly[(k + 1) % n]);
        let d = q.dist(p);
        if d < best_d {
            best_d = d;
            best = q;
        }
    }
    best
}

/// Halfspace through the point of `poly` nearest `from`, facing away from it.
fn separating_plane(from: Point2, poly: &[Point2]) -> Option<Halfspace> {
    let q = closest_on_polygon(from, poly);
    let d = q - from;
    if d.norm() < 1e-12 {
        return None;
    }
    Halfspace::through(q, d).ok()
}

/// Whether some halfspace already puts the whole polygon on its far side.
fn excluded(poly: &[Point2], hs: &[Halfspace]) -> bool {
    hs.iter().any(|h| poly.iter().all(|&v| h.margin(v) <= 1e-12))
}

/// Grows an obstacle-free convex region around `seed`.
///
/// Each round separates every obstacle not already cut away by a halfspace
/// through its point nearest the current center (nearest obstacles first),
/// falling back to the point nearest the seed if that plane would cut the
/// seed off; then recenters at the Chebyshev center closest to the previous
/// center. Stops once the center moves less than 1e-4 m or after 20 rounds.
pub fn inflate_region(
    seed: Point2,
    obstacles: &[Vec<Point2>],
    bounds: &ConvexRegion,
) -> Result<ConvexRegion, RegionError> {
    let blocked = bounds.margin(seed) <= 0.0 || obstacles.iter().any(|o| point_in_convex(seed, o));
    if blocked {
        return Err(RegionError::SeedBlocked(seed.x, seed.y));
    }
    let mut center = seed;
    let mut hs = Vec::new();
    for _ in 0..MAX_INFLATE_ITERS {
        hs = bounds.halfspaces().to_vec();
        let mut order: Vec<(f64, usize)> = obstacles
            .iter()
            .enumerate()
            .map(|(k, o)| (closest_on_polygon(center, o).dist(center), k))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, k) in &order {
            let o = &obstacles[k];
            if excluded(o, &hs) {
                continue;
            }
            let plane = match separating_plane(center, o) {
                Some(h) if h.margin(seed) > 0.0 => Some(h),
                _ => separating_plane(seed, o),
            };
            if let Some(h) = plane {
                hs.push(h);
            }
        }
        let (next, _) = chebyshev_center_near(&hs, center, RECENTER_TOL)?;
        let moved = next.dist(center);
        center = next;
        if moved < CENTER_TOL {
            break;
        }
    }
    Ok(ConvexRegion::from_halfspaces(&hs)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Targeted,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSet {
    pub regions: Vec<ConvexRegion>,
    pub provenance: Vec<Provenance>,
    pub seeds: Vec<Point2>,
    /// Estimated free-space coverage after each region was added.
    pub coverage_history: Vec<f64>,
    pub coverage: f64,
    /// False when `max_regions` was hit (or no seed could be found) below target.
    pub target_reached: bool,
    /// Targeted seeds skipped because an earlier region already held them.
    pub skipped_seeds: Vec<Point2>,
}

impl RegionSet {
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn containing(&self, p: Point2) -> Vec<usize> {
        (0..self.regions.len())
            .filter(|&k| self.regions[k].contains(p, 0.0))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionOptions {
    pub coverage_target: f64,
    pub max_regions: usize,
    pub coverage_samples: usize,
}

fn uniform_in<R: Rng + ?Sized>(bounds: &ConvexRegion, rng: &mut R) -> Point2 {
    let (lo, hi) = bounds.bbox();
    loop {
        let p = Point2::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
        if bounds.contains(p, 0.0) {
            return p;
        }
    }
}

/// Incremental region-set construction with a fixed Monte-Carlo sample of
/// free space for coverage accounting.
pub struct RegionBuilder<'a> {
    obstacles: &'a [Vec<Point2>],
    bounds: &'a ConvexRegion,
    samples: Vec<Point2>,
    covered: Vec<bool>,
    n_covered: usize,
    set: RegionSet,
}

impl<'a> RegionBuilder<'a> {
    pub fn new<R: Rng + ?Sized>(
        obstacles: &'a [Vec<Point2>],
        bounds: &'a ConvexRegion,
        coverage_samples: usize,
        rng: &mut R,
    ) -> Self {
        let mut b = RegionBuilder {
            obstacles,
            bounds,
            samples: Vec::with_capacity(coverage_samples),
            covered: vec![false; coverage_samples],
            n_covered: 0,
            set: RegionSet {
                regions: Vec::new(),
                provenance: Vec::new(),
                seeds: Vec::new(),
                coverage_history: Vec::new(),
                coverage: 0.0,
                target_reached: false,
                skipped_seeds: Vec::new(),
            },
        };
        while b.samples.len() < coverage_samples {
            let p = uniform_in(bounds, rng);
            if b.is_free(p) {
                b.samples.push(p);
            }
        }
        b
    }

    fn is_free(&self, p: Point2) -> bool {
        !self.obstacles.iter().any(|o| point_in_convex(p, o))
    }

    pub fn set(&self) -> &RegionSet {
        &self.set
    }

    fn push(&mut self, r: ConvexRegion, prov: Provenance, seed: Point2) {
        for (k, s) in self.samples.iter().enumerate() {
            if !self.covered[k] && r.contains(*s, 0.0) {
                self.covered[k] = true;
                self.n_covered += 1;
            }
        }
        let set = &mut self.set;
        set.coverage = self.n_covered as f64 / self.samples.len().max(1) as f64;
        set.coverage_history.push(set.coverage);
        set.regions.push(r);
        set.provenance.push(prov);
        set.seeds.push(seed);
    }

    /// Inflates from `s` unless an existing region already holds it.
    pub fn add_targeted(&mut self, s: Point2) -> Result<(), RegionError> {
        if self.set.regions.iter().any(|r| r.contains(s, 0.0)) {
            self.set.skipped_seeds.push(s);
            return Ok(());
        }
        match inflate_region(s, self.obstacles, self.bounds) {
            Ok(r) => self.push(r, Provenance::Targeted, s),
            Err(RegionError::SeedBlocked(..)) => self.set.skipped_seeds.push(s),
            Err(e) => return Err(e),
        }
        Ok(())
    }

    /// Inflates from `s` even when an existing region already holds it.
    pub fn add_at(&mut self, s: Point2) -> Result<(), RegionError> {
        let r = inflate_region(s, self.obstacles, self.bounds)?;
        self.push(r, Provenance::Targeted, s);
        Ok(())
    }

    /// Adds one region from a uniform seed outside every existing region;
    /// false when no such seed was found.
    pub fn add_random<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<bool, RegionError> {
        for _ in 0..MAX_SEED_ATTEMPTS {
            let s = uniform_in(self.bounds, rng);
            if !self.is_free(s) || self.set.regions.iter().any(|r| r.contains(s, 0.0)) {
                continue;
            }
            match inflate_region(s, self.obstacles, self.bounds) {
                Ok(r) => {
                    self.push(r, Provenance::Random, s);
                    return Ok(true);
                }
                // Seeds hugging an obstacle can give an empty region; draw again.
                Err(RegionError::Geometry(GeomError::Empty)) => continue,
                Err(e) => return Err(e),
            }
        }
        Ok(false)
    }

    /// Like [`add_random`](Self::add_random) but also accepts seeds lying
    /// less than `depth` inside every existing region.
    pub fn add_shallow<R: Rng + ?Sized>(&mut self, depth: f64, rng: &mut R) -> Result<bool, RegionError> {
        for _ in 0..MAX_SEED_ATTEMPTS {
            let s = uniform_in(self.bounds, rng);
            if !self.is_free(s) || self.set.regions.iter().any(|r| r.margin(s) >= depth) {
                continue;
            }
            match inflate_region(s, self.obstacles, self.bounds) {
                Ok(r) => {
                    self.push(r, Provenance::Random, s);
                    return Ok(true);
                }
                Err(RegionError::Geometry(GeomError::Empty)) => continue,
                Err(e) => return Err(e),
            }
        }
        Ok(false)
    }

    pub fn finish(mut self, coverage_target: f64) -> RegionSet {
        self.set.target_reached = self.set.coverage >= coverage_target;
        self.set
    }
}

/// Targeted seeds first, then uniform random seeds until the estimated
/// coverage of free space reaches the target or `max_regions` is hit.
pub fn build_region_set<R: Rng + ?Sized>(
    targeted: &[Point2],
    obstacles: &[Vec<Point2>],
    bounds: &ConvexRegion,
    rng: &mut R,
    opts: RegionOptions,
) -> Result<RegionSet, RegionError> {
    let mut b = RegionBuilder::new(obstacles, bounds, opts.coverage_samples, rng);
    fill_region_set(&mut b, targeted, rng, opts)?;
    Ok(b.finish(opts.coverage_target))
}

/// The two phases of [`build_region_set`] on an existing builder.
pub fn fill_region_set<R: Rng + ?Sized>(
    b: &mut RegionBuilder<'_>,
    targeted: &[Point2],
    rng: &mut R,
    opts: RegionOptions,
) -> Result<(), RegionError> {
    for &s in targeted {
        if b.set.regions.len() >= opts.max_regions {
            break;
        }
        b.add_targeted(s)?;
    }
    while b.set.coverage < opts.coverage_target && b.set.regions.len() < opts.max_regions {
        if !b.add_random(rng)? {
            break;
        }
    }
    Ok(())
}

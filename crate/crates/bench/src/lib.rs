//! Shared fixtures for the criterion benches.

use std::path::Path;

use cotransport::{load_scenario, Point2, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A bundled scenario by file name.
pub fn scenario(name: &str) -> Scenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    let text = std::fs::read_to_string(&path).expect("bundled scenario");
    load_scenario(&text).expect("valid scenario")
}

/// Convex polygon with `n` vertices on a jittered circle, counter-clockwise.
pub fn random_polygon(n: usize, center: Point2, radius: f64, seed: u64) -> Vec<Point2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut angles: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    angles.sort_by(f64::total_cmp);
    angles.into_iter().map(|a| center + Point2::from_angle(a) * radius).collect()
}

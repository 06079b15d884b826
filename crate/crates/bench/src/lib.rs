//! Inputs shared by the benchmarks.

use coshflows::fokker_planck_1d::{FVProblem, Grid, Scheme};
use coshflows::graph_system::MarkovGraph;

/// Positive probability vector with a smooth bump, length `n`.
pub fn bump(n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 / n as f64 * 6.0).sin().powi(2)).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|r| r / z).collect()
}

/// Unit-rate cycle on `n` nodes with uniform `pi`.
pub fn cycle(n: usize) -> MarkovGraph {
    let k: Vec<(usize, usize, f64)> =
        (0..n).map(|i| (i.min((i + 1) % n), i.max((i + 1) % n), 1.0 / n as f64)).collect();
    MarkovGraph::from_conductances(MarkovGraph::default_ids(n), vec![1.0 / n as f64; n], &k).expect("cycle graph")
}

/// Tilted periodic potential on `n` cells of the unit interval.
pub fn fv_problem(n: usize, scheme: Scheme) -> FVProblem {
    let grid = Grid::uniform(0.0, 1.0, n).expect("grid");
    FVProblem::from_fns(
        grid,
        |x| (2.0 * std::f64::consts::PI * x).cos() + 0.5 * x,
        |x| 1.0 + 0.5 * (3.0 * x).sin(),
        0.5,
        scheme,
    )
    .expect("fv problem")
}

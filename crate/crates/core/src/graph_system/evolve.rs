use super::{divergence, master_flux, MarkovGraph};
use crate::error::{Error, Result};
use crate::numerics::{dopri5, OdeOptions};
use nalgebra::{DMatrix, DVector};

/// Time grid with states and per-pair net fluxes.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub fluxes: Vec<Vec<f64>>,
}

impl Trajectory {
    /// Checks shapes, monotone times, non-negativity and mass conservation (1e-9).
    pub fn new(g: &MarkovGraph, times: Vec<f64>, states: Vec<Vec<f64>>, fluxes: Vec<Vec<f64>>) -> Result<Self> {
        let t = Trajectory { times, states, fluxes };
        t.validate(g)?;
        Ok(t)
    }

    pub fn validate(&self, g: &MarkovGraph) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidTrajectory(m));
        if self.times.len() < 2 {
            return bad("need at least two time points".into());
        }
        if self.states.len() != self.times.len() || self.fluxes.len() != self.times.len() {
            return bad("times, states and fluxes differ in length".into());
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("times must be strictly increasing".into());
        }
        let m0: f64 = self.states[0].iter().sum();
        for (i, (s, f)) in self.states.iter().zip(&self.fluxes).enumerate() {
            if s.len() != g.len() || f.len() != g.edges().len() {
                return bad(format!("wrong state or flux length at index {i}"));
            }
            if s.iter().any(|&r| !(r >= 0.0)) {
                return bad(format!("negative or NaN state at index {i}"));
            }
            let m: f64 = s.iter().sum();
            if (m - m0).abs() > 1e-9 * m0.max(1.0) {
                return bad(format!("mass drift {:.3e} at index {i}", m - m0));
            }
        }
        Ok(())
    }

    /// Largest residual of `rho_{i+1} - rho_i + dt div((j_i + j_{i+1})/2)`.
    pub fn continuity_residual(&self, g: &MarkovGraph) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.times.len() - 1 {
            let dt = self.times[i + 1] - self.times[i];
            let jbar: Vec<f64> = self.fluxes[i].iter().zip(&self.fluxes[i + 1]).map(|(a, b)| 0.5 * (a + b)).collect();
            let d = divergence(g, &jbar);
            for x in 0..g.len() {
                worst = worst.max((self.states[i + 1][x] - self.states[i][x] + dt * d[x]).abs());
            }
        }
        worst
    }

    /// Builds states from fluxes by exact discrete continuity with averaged
    /// interval flux, starting at `rho0`.
    pub fn from_fluxes(g: &MarkovGraph, times: Vec<f64>, rho0: Vec<f64>, fluxes: Vec<Vec<f64>>) -> Result<Self> {
        if fluxes.len() != times.len() {
            return Err(Error::InvalidTrajectory("one flux per time point required".into()));
        }
        let mut states = vec![rho0];
        for i in 0..times.len() - 1 {
            let dt = times[i + 1] - times[i];
            let jbar: Vec<f64> = fluxes[i].iter().zip(&fluxes[i + 1]).map(|(a, b)| 0.5 * (a + b)).collect();
            let d = divergence(g, &jbar);
            let next: Vec<f64> = states[i].iter().zip(d).map(|(r, dv)| r - dt * dv).collect();
            states.push(next);
        }
        Trajectory::new(g, times, states, fluxes)
    }
}

const DENSE_LIMIT: usize = 200;

/// Solves the master equation `d rho/dt = A rho` on `output_grid` (which must
/// start at 0 and end at `t_end`). Dense matrix exponentials up to 200 nodes,
/// an adaptive Runge-Kutta pair beyond.
pub fn evolve(g: &MarkovGraph, rho0: &[f64], t_end: f64, output_grid: &[f64]) -> Result<Trajectory> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidArgument(format!("T must be positive, got {t_end}")));
    }
    g.check_state(rho0)?;
    if output_grid.len() < 2 || output_grid[0] != 0.0 {
        return Err(Error::InvalidArgument("output grid must start at 0 with at least two points".into()));
    }
    if output_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("output grid must be strictly increasing".into()));
    }
    if (output_grid[output_grid.len() - 1] - t_end).abs() > 1e-12 * t_end {
        return Err(Error::InvalidArgument("output grid must end at T".into()));
    }
    let states = if g.len() <= DENSE_LIMIT {
        propagate_dense(g, rho0, output_grid)
    } else {
        let a = g.generator();
        let qmax = g.exit_rates().into_iter().fold(0.0, f64::max);
        let opts = OdeOptions {
            rtol: 1e-10,
            atol: 1e-14,
            max_step: if qmax > 0.0 { 0.5 / qmax } else { f64::INFINITY },
            positivity_floor: Some(-1e-14),
            ..OdeOptions::default()
        };
        dopri5(
            |y, out| {
                let v = &a * DVector::from_column_slice(y);
                out.copy_from_slice(v.as_slice());
            },
            rho0,
            output_grid,
            opts,
        )?
    };
    let fluxes = states.iter().map(|s| master_flux(g, s)).collect();
    Ok(Trajectory { times: output_grid.to_vec(), states, fluxes })
}

fn propagate_dense(g: &MarkovGraph, rho0: &[f64], grid: &[f64]) -> Vec<Vec<f64>> {
    let a = g.generator();
    let mut out = Vec::with_capacity(grid.len());
    let mut cur = DVector::from_column_slice(rho0);
    out.push(rho0.to_vec());
    let mut cached: Option<(f64, DMatrix<f64>)> = None;
    for w in grid.windows(2) {
        let dt = w[1] - w[0];
        let reuse = matches!(&cached, Some((h, _)) if (h - dt).abs() <= 1e-13 * dt);
        if !reuse {
            cached = Some((dt, (&a * dt).exp()));
        }
        let p = &cached.as_ref().unwrap().1;
        cur = p * cur;
        for v in cur.iter_mut() {
            if *v < 0.0 && *v > -1e-14 {
                *v = 0.0;
            }
        }
        out.push(cur.as_slice().to_vec());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two() -> MarkovGraph {
        MarkovGraph::new(MarkovGraph::default_ids(2), vec![0.5, 0.5], &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap()
    }

    fn uniform(t: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|i| t * i as f64 / n as f64).collect()
    }

    #[test]
    fn two_node_closed_form() {
        let g = two();
        let grid = uniform(3.0, 30);
        let tr = evolve(&g, &[0.9, 0.1], 3.0, &grid).unwrap();
        for (t, s) in tr.times.iter().zip(&tr.states) {
            let exact = 0.5 + 0.4 * (-2.0 * t).exp();
            assert!((s[0] - exact).abs() < 1e-10);
            assert!((s[0] + s[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn stationary_stays_put() {
        let g = two();
        let tr = evolve(&g, &[0.5, 0.5], 1.0, &uniform(1.0, 4)).unwrap();
        for s in &tr.states {
            assert!((s[0] - 0.5).abs() < 1e-15);
        }
        assert!(tr.fluxes.iter().all(|f| f[0].abs() < 1e-15));
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = two();
        assert!(evolve(&g, &[1.0, 0.0], 0.0, &[0.0, 1.0]).is_err());
        assert!(evolve(&g, &[1.0, 0.0], 1.0, &[0.5, 1.0]).is_err());
        assert!(evolve(&g, &[-1.0, 2.0], 1.0, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn large_chain_uses_adaptive_path() {
        let n = 220;
        let pi = vec![1.0 / n as f64; n];
        let k: Vec<(usize, usize, f64)> = (0..n - 1).map(|i| (i, i + 1, 1.0 / n as f64)).collect();
        let g = MarkovGraph::from_conductances(MarkovGraph::default_ids(n), pi, &k).unwrap();
        let mut rho0 = vec![0.0; n];
        rho0[0] = 1.0;
        let tr = evolve(&g, &rho0, 2.0, &uniform(2.0, 4)).unwrap();
        let m: f64 = tr.states.last().unwrap().iter().sum();
        assert!((m - 1.0).abs() < 1e-9);
        assert!(tr.states.last().unwrap().iter().all(|&v| v >= 0.0));
        // compare with the dense path on the same generator
        let dense = propagate_dense(&g, &rho0, &uniform(2.0, 4));
        for (a, b) in tr.states.last().unwrap().iter().zip(dense.last().unwrap()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn from_fluxes_satisfies_continuity() {
        let g = two();
        let times = uniform(1.0, 10);
        let fl: Vec<Vec<f64>> = times.iter().map(|t| vec![0.1 * (1.0 - t)]).collect();
        let tr = Trajectory::from_fluxes(&g, times, vec![0.6, 0.4], fl).unwrap();
        assert!(tr.continuity_residual(&g) < 1e-15);
    }
}

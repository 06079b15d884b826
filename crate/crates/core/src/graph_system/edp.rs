use super::{dissipation_r, rstar_grad_untilted, tilt_kernel, MarkovGraph, Tilt, Trajectory};
use crate::cosh_core::relative_entropy;
use crate::error::{Error, Result};

/// Time discretisation of the dissipation integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdpRule {
    /// State at the left endpoint, interval flux `(j_i + j_{i+1})/2`. The
    /// discrete chain rule makes `I_T >= 0` exact for trajectories that satisfy
    /// discrete continuity; first order on exact solutions.
    LeftPoint,
    /// Trapezoid rule on `R(rho_i, j_i) + R*(rho_i)`; second order on exact
    /// solutions, no discrete lower bound.
    Trapezoid,
}

#[derive(Debug, Clone, Copy)]
pub struct EdpOptions {
    pub rule: EdpRule,
    /// Allowed continuity residual per step.
    pub continuity_tol: f64,
}

impl Default for EdpOptions {
    fn default() -> Self {
        EdpOptions { rule: EdpRule::LeftPoint, continuity_tol: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdpReport {
    pub energy_start: f64,
    pub energy_end: f64,
    pub integral_r: f64,
    pub integral_rstar: f64,
    pub i_t: f64,
    pub continuity_residual: f64,
}

pub fn edp_functional(g: &MarkovGraph, tilt: &Tilt, traj: &Trajectory) -> Result<EdpReport> {
    edp_functional_with(g, tilt, traj, EdpOptions::default())
}

/// `I_T = E^F(rho_T) - E^F(rho_0) + int R + int R*` with `E^F = H(. | pi^F)`
/// and the dissipation pair of the tilted graph.
pub fn edp_functional_with(g: &MarkovGraph, tilt: &Tilt, traj: &Trajectory, opts: EdpOptions) -> Result<EdpReport> {
    traj.validate(g)?;
    let res = traj.continuity_residual(g);
    if !(res <= opts.continuity_tol) {
        return Err(Error::InvalidTrajectory(format!(
            "continuity residual {res:.3e} exceeds {:.1e}",
            opts.continuity_tol
        )));
    }
    let gf = tilt_kernel(g, tilt)?;
    let n = traj.times.len();
    let energy_start = relative_entropy(&traj.states[0], gf.pi())?;
    let energy_end = relative_entropy(&traj.states[n - 1], gf.pi())?;
    let mut int_r = 0.0;
    let mut int_rs = 0.0;
    match opts.rule {
        EdpRule::LeftPoint => {
            for i in 0..n - 1 {
                let dt = traj.times[i + 1] - traj.times[i];
                let jbar: Vec<f64> =
                    traj.fluxes[i].iter().zip(&traj.fluxes[i + 1]).map(|(a, b)| 0.5 * (a + b)).collect();
                int_r += dt * dissipation_r(&gf, &traj.states[i], &jbar);
                int_rs += dt * rstar_grad_untilted(&gf, &traj.states[i]);
            }
        }
        EdpRule::Trapezoid => {
            let r: Vec<f64> = traj.states.iter().zip(&traj.fluxes).map(|(s, j)| dissipation_r(&gf, s, j)).collect();
            let rs: Vec<f64> = traj.states.iter().map(|s| rstar_grad_untilted(&gf, s)).collect();
            for i in 0..n - 1 {
                let dt = traj.times[i + 1] - traj.times[i];
                int_r += 0.5 * dt * (r[i] + r[i + 1]);
                int_rs += 0.5 * dt * (rs[i] + rs[i + 1]);
            }
        }
    }
    Ok(EdpReport {
        energy_start,
        energy_end,
        integral_r: int_r,
        integral_rstar: int_rs,
        i_t: energy_end - energy_start + int_r + int_rs,
        continuity_residual: res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_system::{evolve, master_flux};

    fn two() -> MarkovGraph {
        MarkovGraph::new(MarkovGraph::default_ids(2), vec![0.5, 0.5], &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap()
    }

    fn grid(n: usize) -> Vec<f64> {
        (0..=n).map(|i| i as f64 / n as f64).collect()
    }

    #[test]
    fn stationary_path_is_zero() {
        let g = two();
        let t = Tilt::symmetric(vec![0.3, -0.2]);
        let gf = tilt_kernel(&g, &t).unwrap();
        let p = gf.pi().to_vec();
        let traj = Trajectory::new(&g, vec![0.0, 0.5, 1.0], vec![p.clone(); 3], vec![vec![0.0]; 3]).unwrap();
        let r = edp_functional(&g, &t, &traj).unwrap();
        assert_eq!(r.i_t, 0.0);
    }

    #[test]
    fn exact_solution_first_and_second_order() {
        let g = two();
        let t = Tilt::zero(2);
        let mut left = Vec::new();
        for &n in &[100usize, 1000] {
            let tr = evolve(&g, &[0.9, 0.1], 1.0, &grid(n)).unwrap();
            left.push(edp_functional(&g, &t, &tr).unwrap().i_t);
        }
        assert!(left[0] > 0.0 && left[1] > 0.0);
        let ratio = left[0] / left[1];
        assert!(ratio > 8.0 && ratio < 12.0, "{ratio}");
        let tr = evolve(&g, &[0.9, 0.1], 1.0, &grid(10_000)).unwrap();
        let trap =
            edp_functional_with(&g, &t, &tr, EdpOptions { rule: EdpRule::Trapezoid, ..Default::default() }).unwrap();
        assert!(trap.i_t.abs() <= 1e-6, "{}", trap.i_t);
    }

    #[test]
    fn perturbed_flux_is_positive() {
        let g = two();
        let tr = evolve(&g, &[0.9, 0.1], 1.0, &grid(200)).unwrap();
        let scaled: Vec<Vec<f64>> = tr.fluxes.iter().map(|j| j.iter().map(|v| 1.5 * v).collect()).collect();
        let pert = Trajectory::from_fluxes(&g, tr.times.clone(), tr.states[0].clone(), scaled).unwrap();
        let r = edp_functional(&g, &Tilt::zero(2), &pert).unwrap();
        assert!(r.i_t > 1e-3, "{}", r.i_t);
    }

    #[test]
    fn continuity_violation_rejected() {
        let g = two();
        let s = vec![vec![0.9, 0.1], vec![0.5, 0.5]];
        let traj = Trajectory::new(&g, vec![0.0, 1.0], s, vec![master_flux(&g, &[0.9, 0.1]); 2]).unwrap();
        let mut bad = traj.clone();
        bad.fluxes = vec![vec![0.0], vec![0.0]];
        assert!(matches!(edp_functional(&g, &Tilt::zero(2), &bad), Err(Error::InvalidTrajectory(_))));
    }
}

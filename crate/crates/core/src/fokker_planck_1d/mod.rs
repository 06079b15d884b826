//! One-dimensional finite-volume Fokker-Planck schemes and their gradient
//! structures, plus the double-well and thin-membrane limit experiments.
//!
//! States are cell masses `rho_i`. With `pi_base = vol / |domain|` the base
//! density is `u = rho / pi_base`, and the driving force on the face between
//! cells `x` and `y = x + 1` is `Xi = gamma (log u_x - log u_y) + V_x - V_y`.
//! Face values returned by the flux functions are net flows `2 j`.

mod kramers;
mod membrane;

pub use kramers::{
    kramers_constants, kramers_experiment, kramers_fv_problem, kramers_limit_ode, KramersConstants, KramersLimit,
    KramersOptions, KramersRow, KramersSetup, ScalarFn,
};
pub use membrane::{membrane_experiment, membrane_sigma, MembraneInitial, MembraneOptions, MembraneRow, MembraneSetup};

use crate::cosh_core::{cosh_dual_deriv, harm_log_mean, relative_entropy};
use crate::error::{Error, Result};
use crate::graph_system::MarkovGraph;
use crate::numerics::{PathGenerator, PathWork};

/// Cell partition of an interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub faces: Vec<f64>,
}

impl Grid {
    pub fn from_faces(faces: Vec<f64>) -> Result<Self> {
        if faces.len() < 2 || faces.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("faces must be strictly increasing".into()));
        }
        Ok(Grid { faces })
    }

    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n == 0 || !(hi > lo) {
            return Err(Error::InvalidArgument("uniform grid needs n >= 1 and lo < hi".into()));
        }
        Self::from_faces((0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect())
    }

    /// Equidistributes a positive density: every cell carries the same
    /// integral of `density`.
    pub fn graded(lo: f64, hi: f64, n: usize, density: impl Fn(f64) -> f64) -> Result<Self> {
        if n == 0 || !(hi > lo) {
            return Err(Error::InvalidArgument("graded grid needs n >= 1 and lo < hi".into()));
        }
        let m = 40 * n;
        let xs: Vec<f64> = (0..=m).map(|i| lo + (hi - lo) * i as f64 / m as f64).collect();
        let mut cum = vec![0.0; m + 1];
        for i in 0..m {
            let (a, b) = (density(xs[i]), density(xs[i + 1]));
            if !(a > 0.0 && b > 0.0) {
                return Err(Error::InvalidArgument("grid density must be positive".into()));
            }
            cum[i + 1] = cum[i] + 0.5 * (a + b) * (xs[i + 1] - xs[i]);
        }
        let total = cum[m];
        let mut faces = vec![lo];
        let mut j = 0;
        for k in 1..n {
            let target = total * k as f64 / n as f64;
            while cum[j + 1] < target {
                j += 1;
            }
            let t = (target - cum[j]) / (cum[j + 1] - cum[j]);
            faces.push(xs[j] + t * (xs[j + 1] - xs[j]));
        }
        faces.push(hi);
        Self::from_faces(faces)
    }

    /// Joins grids whose end and start faces coincide.
    pub fn concat(parts: &[Grid]) -> Result<Self> {
        let mut faces = parts[0].faces.clone();
        for p in &parts[1..] {
            let last = *faces.last().unwrap();
            if (p.faces[0] - last).abs() > 1e-14 * last.abs().max(1.0) {
                return Err(Error::InvalidArgument("grids do not join".into()));
            }
            faces.extend_from_slice(&p.faces[1..]);
        }
        Self::from_faces(faces)
    }

    pub fn n(&self) -> usize {
        self.faces.len() - 1
    }

    pub fn centers(&self) -> Vec<f64> {
        self.faces.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn volumes(&self) -> Vec<f64> {
        self.faces.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn length(&self) -> f64 {
        self.faces[self.faces.len() - 1] - self.faces[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    ScharfetterGummel,
    Upwind,
    CoshSqrt,
}

impl Scheme {
    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "sg" => Ok(Scheme::ScharfetterGummel),
            "upwind" => Ok(Scheme::Upwind),
            "cosh_sqrt" => Ok(Scheme::CoshSqrt),
            _ => Err(Error::InvalidConfig(format!("unknown scheme '{s}'"))),
        }
    }
}

/// `B(z) = z / (e^z - 1)`, `B(0) = 1`.
pub fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-10 {
        1.0 - 0.5 * z
    } else {
        z / z.exp_m1()
    }
}

/// Scharfetter-Gummel flux `(tau/2) gamma Lambda_{-1}(u_x e^{-Xi/2gamma}, u_y e^{Xi/2gamma}) C*'(Xi/gamma)`.
pub fn sg_flux(tau: f64, gamma: f64, u_x: f64, u_y: f64, xi: f64) -> f64 {
    if xi == 0.0 {
        return 0.0;
    }
    let z = xi / gamma;
    let p = u_x * (-0.5 * z).exp();
    let q = u_y * (0.5 * z).exp();
    0.5 * tau * gamma * harm_log_mean(p, q) * cosh_dual_deriv(z)
}

/// Upwind flux `(tau/2)(u_x Xi_+ - u_y Xi_-)`.
pub fn upwind_flux(tau: f64, u_x: f64, u_y: f64, xi: f64) -> f64 {
    0.5 * tau * (u_x * xi.max(0.0) - u_y * (-xi).max(0.0))
}

/// Cosh kinetic relation `tau gamma sqrt(u_x u_y) sinh(Xi / 2 gamma)`.
pub fn cosh_sqrt_flux(tau: f64, gamma: f64, u_x: f64, u_y: f64, xi: f64) -> f64 {
    tau * gamma * (u_x * u_y).sqrt() * (0.5 * xi / gamma).sinh()
}

/// Finite-volume problem on a grid: cell potential `v`, interior-face
/// mobilities, viscosity `gamma` and flux scheme. Boundary faces carry no flux.
#[derive(Debug, Clone)]
pub struct FVProblem {
    pub grid: Grid,
    pub v: Vec<f64>,
    pub face_mobility: Vec<f64>,
    pub gamma: f64,
    pub scheme: Scheme,
}

impl FVProblem {
    pub fn new(grid: Grid, v: Vec<f64>, face_mobility: Vec<f64>, gamma: f64, scheme: Scheme) -> Result<Self> {
        let n = grid.n();
        if n < 3 {
            return Err(Error::InvalidArgument("need at least three cells".into()));
        }
        if v.len() != n || face_mobility.len() != n - 1 {
            return Err(Error::InvalidArgument("potential per cell and mobility per interior face".into()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("potential must be finite".into()));
        }
        if face_mobility.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(Error::InvalidArgument("mobility must be positive".into()));
        }
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidArgument("gamma must be positive".into()));
        }
        Ok(FVProblem { grid, v, face_mobility, gamma, scheme })
    }

    /// Potential sampled at cell centres, mobility at interior faces.
    pub fn from_fns(
        grid: Grid,
        v: impl Fn(f64) -> f64,
        a: impl Fn(f64) -> f64,
        gamma: f64,
        scheme: Scheme,
    ) -> Result<Self> {
        let vv = grid.centers().into_iter().map(&v).collect();
        let n = grid.n();
        let af = grid.faces[1..n].iter().map(|&x| a(x)).collect();
        Self::new(grid, vv, af, gamma, scheme)
    }

    /// Face mobility from cell mobilities by series combination of the two half cells.
    pub fn with_cell_mobility(grid: Grid, v: Vec<f64>, cell_a: &[f64], gamma: f64, scheme: Scheme) -> Result<Self> {
        let c = grid.centers();
        let h = grid.volumes();
        if cell_a.len() != grid.n() {
            return Err(Error::InvalidArgument("one mobility per cell".into()));
        }
        let af = (0..grid.n() - 1)
            .map(|i| (c[i + 1] - c[i]) / (0.5 * h[i] / cell_a[i] + 0.5 * h[i + 1] / cell_a[i + 1]))
            .collect();
        Self::new(grid, v, af, gamma, scheme)
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn base_pi(&self) -> Vec<f64> {
        let l = self.grid.length();
        self.grid.volumes().into_iter().map(|v| v / l).collect()
    }

    /// Transmission `tau = a / (|domain| d)` per interior face.
    pub fn transmissions(&self) -> Vec<f64> {
        let c = self.grid.centers();
        let l = self.grid.length();
        (0..self.n() - 1).map(|i| self.face_mobility[i] / (l * (c[i + 1] - c[i]))).collect()
    }

    fn shifted_weights(&self) -> (Vec<f64>, f64, f64) {
        let vmin = self.v.iter().cloned().fold(f64::INFINITY, f64::min);
        let w: Vec<f64> =
            self.grid.volumes().iter().zip(&self.v).map(|(vol, v)| vol * (-(v - vmin) / self.gamma).exp()).collect();
        let z = w.iter().sum();
        (w, z, vmin)
    }

    /// Stationary masses `∝ vol e^{-V/gamma}`.
    pub fn stationary(&self) -> Vec<f64> {
        let (w, z, _) = self.shifted_weights();
        w.into_iter().map(|x| x / z).collect()
    }

    /// Edge conductances `pi_x kappa_xy` of the linear schemes.
    pub fn conductances(&self) -> Result<Vec<f64>> {
        let (_, z, vmin) = self.shifted_weights();
        let c = self.grid.centers();
        let g = self.gamma;
        (0..self.n() - 1)
            .map(|i| {
                let (vx, vy) = (self.v[i] - vmin, self.v[i + 1] - vmin);
                let base = self.face_mobility[i] * g / ((c[i + 1] - c[i]) * z);
                match self.scheme {
                    Scheme::ScharfetterGummel => Ok(base * (-vx.min(vy) / g).exp() * bernoulli(((vx - vy) / g).abs())),
                    Scheme::CoshSqrt => Ok(base * (-0.5 * (vx + vy) / g).exp()),
                    Scheme::Upwind => Err(Error::InvalidArgument("the upwind scheme is not linear".into())),
                }
            })
            .collect()
    }

    pub fn path_generator(&self) -> Result<PathGenerator> {
        Ok(PathGenerator { pi: self.stationary(), k: self.conductances()? })
    }

    /// Net flow over interior face `i` at densities `u = rho / pi_base`.
    fn face_flux(&self, i: usize, tau: f64, ux: f64, uy: f64) -> f64 {
        let g = self.gamma;
        let dv = self.v[i] - self.v[i + 1];
        match self.scheme {
            Scheme::ScharfetterGummel => {
                let d = dv / g;
                tau * g * (bernoulli(-d) * ux - bernoulli(d) * uy)
            }
            Scheme::CoshSqrt => {
                let h = 0.5 * dv / g;
                tau * g * (ux * h.exp() - uy * (-h).exp())
            }
            Scheme::Upwind => {
                let xi = g * (ux.ln() - uy.ln()) + dv;
                2.0 * upwind_flux(tau, ux, uy, xi)
            }
        }
    }

    /// Net face flows computed directly from the flux formulas.
    pub fn face_fluxes(&self, rho: &[f64]) -> Vec<f64> {
        let pb = self.base_pi();
        let tau = self.transmissions();
        (0..self.n() - 1).map(|i| self.face_flux(i, tau[i], rho[i] / pb[i], rho[i + 1] / pb[i + 1])).collect()
    }

    /// Gershgorin bound on the flux Jacobian `d(div J)/d rho` at `rho`:
    /// largest column sum, from one-sided differences per face.
    fn jacobian_bound(&self, rho: &[f64], flows: &[f64], pb: &[f64], tau: &[f64]) -> f64 {
        const DELTA: f64 = 1e-6;
        let mut col = vec![0.0; self.n()];
        for i in 0..self.n() - 1 {
            let (ux, uy) = (rho[i] / pb[i], rho[i + 1] / pb[i + 1]);
            let dx = (self.face_flux(i, tau[i], ux * (1.0 + DELTA), uy) - flows[i]) / (DELTA * rho[i]);
            let dy = (self.face_flux(i, tau[i], ux, uy * (1.0 + DELTA)) - flows[i]) / (DELTA * rho[i + 1]);
            // each face enters two rows, so a column gains twice its entry
            col[i] += 2.0 * dx.abs();
            col[i + 1] += 2.0 * dy.abs();
        }
        col.into_iter().fold(0.0, f64::max)
    }

    /// `gamma H(rho | pi_base) + <V, rho>`.
    pub fn free_energy(&self, rho: &[f64]) -> f64 {
        let h = relative_entropy(rho, &self.base_pi()).unwrap_or(f64::INFINITY);
        self.gamma * h + rho.iter().zip(&self.v).map(|(r, v)| r * v).sum::<f64>()
    }
}

/// Reversible graph of a linear scheme; the master equation on it is the FV scheme.
pub fn assemble_fp_graph(p: &FVProblem) -> Result<MarkovGraph> {
    let pi = p.stationary();
    let k = p.conductances()?;
    let trip: Vec<(usize, usize, f64)> = k.iter().enumerate().map(|(i, &c)| (i, i + 1, c)).collect();
    MarkovGraph::from_conductances(MarkovGraph::default_ids(p.n()), pi, &trip)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stepping {
    ImplicitEuler {
        dt: f64,
    },
    /// Two half implicit Euler steps extrapolated against one full step.
    Richardson {
        dt: f64,
    },
    /// Explicit Euler with `dt <= cfl` over the larger of a Jacobian bound and
    /// the relative exit rate, for any scheme.
    Explicit {
        cfl: f64,
    },
}

#[derive(Debug, Clone)]
pub struct FvTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub free_energy: Vec<f64>,
    /// Largest mass change over a single step.
    pub max_step_mass_drift: f64,
}

pub fn fv_evolve(p: &FVProblem, rho0: &[f64], times: &[f64], stepping: Stepping) -> Result<FvTrajectory> {
    if rho0.len() != p.n() || rho0.iter().any(|&r| !(r >= 0.0)) {
        return Err(Error::InvalidArgument("initial masses must be non-negative, one per cell".into()));
    }
    if times.len() < 2 || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("output times must be increasing".into()));
    }
    if p.scheme == Scheme::Upwind {
        if !matches!(stepping, Stepping::Explicit { .. }) {
            return Err(Error::InvalidArgument("the upwind scheme is stepped explicitly".into()));
        }
        if rho0.iter().any(|&r| r <= 0.0) {
            return Err(Error::InvalidArgument("the upwind scheme needs strictly positive data".into()));
        }
    }
    let mut states = vec![rho0.to_vec()];
    let mut drift: f64 = 0.0;
    let mut cur = rho0.to_vec();
    let mut next = vec![0.0; p.n()];
    let mut work = PathWork::default();
    let gen = match stepping {
        Stepping::Explicit { .. } => None,
        _ => Some(p.path_generator()?),
    };
    for w in times.windows(2) {
        let span = w[1] - w[0];
        match stepping {
            Stepping::ImplicitEuler { dt } | Stepping::Richardson { dt } => {
                if !(dt > 0.0) {
                    return Err(Error::InvalidArgument("dt must be positive".into()));
                }
                let steps = (span / dt).ceil().max(1.0) as usize;
                let h = span / steps as f64;
                let g = gen.as_ref().unwrap();
                for _ in 0..steps {
                    if matches!(stepping, Stepping::Richardson { .. }) {
                        g.richardson_step(&cur, h, &mut next, &mut work);
                    } else {
                        g.implicit_euler(&cur, h, &mut next, &mut work);
                    }
                    drift = drift.max((next.iter().sum::<f64>() - cur.iter().sum::<f64>()).abs());
                    std::mem::swap(&mut cur, &mut next);
                }
            }
            Stepping::Explicit { cfl } => {
                let mut t = 0.0;
                let (pb, tau) = (p.base_pi(), p.transmissions());
                while t < span {
                    let flows = p.face_fluxes(&cur);
                    // stability from the Jacobian, positivity from the flows themselves
                    let mut rate = 0.5 * p.jacobian_bound(&cur, &flows, &pb, &tau);
                    for (i, f) in flows.iter().enumerate() {
                        rate = rate.max(f.abs() / cur[i].min(cur[i + 1]).max(1e-300));
                    }
                    let h = if rate > 0.0 { (cfl / rate).min(span - t) } else { span - t };
                    next.copy_from_slice(&cur);
                    for (i, f) in flows.iter().enumerate() {
                        next[i] -= h * f;
                        next[i + 1] += h * f;
                    }
                    if next.iter().any(|&r| !(r > 0.0)) {
                        return Err(Error::NumericalFailure("explicit step lost positivity".into()));
                    }
                    drift = drift.max((next.iter().sum::<f64>() - cur.iter().sum::<f64>()).abs());
                    std::mem::swap(&mut cur, &mut next);
                    t += h;
                    if span - t < 1e-15 * span {
                        break;
                    }
                }
            }
        }
        states.push(cur.clone());
    }
    let free_energy = states.iter().map(|s| p.free_energy(s)).collect();
    Ok(FvTrajectory { times: times.to_vec(), states, free_energy, max_step_mass_drift: drift })
}

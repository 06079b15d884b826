use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use super::{FVProblem, Grid, ScalarFn, Scheme};
use crate::error::{Error, Result};
use crate::numerics::{integrate, PathGenerator, PathWork};

/// Thin membrane of width `eps` between two bulk intervals of length one.
/// Inside, mobility is `eps a*(x/eps)` and potential `V*(x/eps) + F*(x/eps)`;
/// the bulks carry mobilities `a_minus`, `a_plus` and the boundary values of
/// the potential.
#[derive(Clone)]
pub struct MembraneSetup {
    pub a_minus: f64,
    pub a_plus: f64,
    pub a_star: ScalarFn,
    pub v_star: ScalarFn,
    pub f_star: ScalarFn,
    pub eps: f64,
}

impl std::fmt::Debug for MembraneSetup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MembraneSetup")
            .field("a_minus", &self.a_minus)
            .field("a_plus", &self.a_plus)
            .field("eps", &self.eps)
            .finish_non_exhaustive()
    }
}

impl MembraneSetup {
    /// Unit mobilities, `V*(s) = s`, no tilt.
    pub fn linear(eps: f64) -> Result<Self> {
        let s = MembraneSetup {
            a_minus: 1.0,
            a_plus: 1.0,
            a_star: Arc::new(|_| 1.0),
            v_star: Arc::new(|s| s),
            f_star: Arc::new(|_| 0.0),
            eps,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_tilt(mut self, f: ScalarFn) -> Self {
        self.f_star = f;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a_minus > 0.0 && self.a_plus > 0.0 && self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::InvalidArgument("mobilities positive and 0 < eps < 1 required".into()));
        }
        for i in 0..=32 {
            let s = i as f64 / 32.0;
            if !((self.a_star)(s) > 0.0) || !(self.v_star)(s).is_finite() || !(self.f_star)(s).is_finite() {
                return Err(Error::InvalidArgument(format!("membrane data invalid at s = {s}")));
            }
        }
        Ok(())
    }

    fn potential(&self, s: f64) -> f64 {
        (self.v_star)(s) + (self.f_star)(s)
    }

    /// `int_0^1 e^{V* + F*} / a* ds`.
    pub fn resistance(&self) -> Result<f64> {
        Ok(integrate(|s| self.potential(s).exp() / (self.a_star)(s), 0.0, 1.0, 1e-15, 1e-13)?.value)
    }
}

/// Limit transmission `(int_0^1 e^{V*} e^{(2F(s) - F(0) - F(1))/2} / a* ds)^{-1} sqrt(u(0-) u(1+))`.
pub fn membrane_sigma(s: &MembraneSetup, u_minus: f64, u_plus: f64) -> Result<f64> {
    s.validate()?;
    if !(u_minus >= 0.0 && u_plus >= 0.0) {
        return Err(Error::InvalidArgument("densities must be non-negative".into()));
    }
    let f0 = (s.f_star)(0.0);
    let f1 = (s.f_star)(1.0);
    let integrand = |x: f64| (s.v_star)(x).exp() * (0.5 * (2.0 * (s.f_star)(x) - f0 - f1)).exp() / (s.a_star)(x);
    let r = integrate(integrand, 0.0, 1.0, 1e-15, 1e-13)?.value;
    Ok((u_minus * u_plus).sqrt() / r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MembraneInitial {
    /// Uniform mass on the left bulk.
    LeftBulk,
    /// Stationary state of the limit problem.
    LimitStationary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MembraneOptions {
    pub n_bulk: usize,
    pub n_membrane: usize,
    pub dt: f64,
    pub t_end: f64,
    pub n_out: usize,
    pub initial: MembraneInitial,
}

impl Default for MembraneOptions {
    fn default() -> Self {
        MembraneOptions {
            n_bulk: 100,
            n_membrane: 20,
            dt: 1e-3,
            t_end: 1.0,
            n_out: 100,
            initial: MembraneInitial::LeftBulk,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MembraneRow {
    pub eps: f64,
    /// `sup_t` of the bulk L1 distance to the limit problem.
    pub l1_error: f64,
    /// Transmission coefficient fitted from membrane flux against the density jump.
    pub sigma_fit: f64,
    pub sigma_limit: f64,
    pub runtime_s: f64,
}

struct Layout {
    eps_gen: PathGenerator,
    lim_gen: PathGenerator,
    eps_problem: FVProblem,
    n_bulk: usize,
    n_mem: usize,
    h: f64,
    v_minus: f64,
    v_plus: f64,
}

fn layout(s: &MembraneSetup, o: &MembraneOptions) -> Result<Layout> {
    s.validate()?;
    let (nb, nm) = (o.n_bulk, o.n_membrane);
    if nb < 2 || nm < 1 {
        return Err(Error::InvalidArgument("need at least two bulk and one membrane cell".into()));
    }
    let eps = s.eps;
    let grid = Grid::concat(&[
        Grid::uniform(-1.0, 0.0, nb)?,
        Grid::uniform(0.0, eps, nm)?,
        Grid::uniform(eps, 1.0 + eps, nb)?,
    ])?;
    let v_minus = s.potential(0.0);
    let v_plus = s.potential(1.0);
    let centers = grid.centers();
    let mut v = Vec::with_capacity(grid.n());
    let mut a = Vec::with_capacity(grid.n());
    for (i, &x) in centers.iter().enumerate() {
        if i < nb {
            v.push(v_minus);
            a.push(s.a_minus);
        } else if i < nb + nm {
            v.push(s.potential(x / eps));
            a.push(eps * (s.a_star)(x / eps));
        } else {
            v.push(v_plus);
            a.push(s.a_plus);
        }
    }
    let eps_problem = FVProblem::with_cell_mobility(grid, v, &a, 1.0, Scheme::ScharfetterGummel)?;
    let eps_gen = eps_problem.path_generator()?;

    let h = 1.0 / nb as f64;
    let w_minus = h * (-v_minus).exp();
    let w_plus = h * (-v_plus).exp();
    let z = nb as f64 * (w_minus + w_plus);
    let mut pi = vec![w_minus / z; nb];
    pi.extend(std::iter::repeat_n(w_plus / z, nb));
    let mut k = vec![s.a_minus * (-v_minus).exp() / (h * z); nb - 1];
    let r = 0.5 * h * v_minus.exp() / s.a_minus + s.resistance()? + 0.5 * h * v_plus.exp() / s.a_plus;
    k.push(1.0 / (z * r));
    k.extend(std::iter::repeat_n(s.a_plus * (-v_plus).exp() / (h * z), nb - 1));
    let lim_gen = PathGenerator { pi, k };
    Ok(Layout { eps_gen, lim_gen, eps_problem, n_bulk: nb, n_mem: nm, h, v_minus, v_plus })
}

fn run_one(s: &MembraneSetup, o: &MembraneOptions) -> Result<MembraneRow> {
    let start = Instant::now();
    let l = layout(s, o)?;
    let (nb, nm) = (l.n_bulk, l.n_mem);
    let n_eps = 2 * nb + nm;
    let lim0: Vec<f64> = match o.initial {
        MembraneInitial::LeftBulk => (0..2 * nb).map(|i| if i < nb { 1.0 / nb as f64 } else { 0.0 }).collect(),
        MembraneInitial::LimitStationary => l.lim_gen.pi.clone(),
    };
    let mut eps_state = vec![0.0; n_eps];
    eps_state[..nb].copy_from_slice(&lim0[..nb]);
    eps_state[nb + nm..].copy_from_slice(&lim0[nb..]);
    let mut lim_state = lim0;
    let (mut eps_next, mut lim_next) = (vec![0.0; n_eps], vec![0.0; 2 * nb]);
    let mut work = PathWork::default();

    let steps_per_out = ((o.t_end / o.n_out as f64) / o.dt).ceil().max(1.0) as usize;
    let h_t = o.t_end / (o.n_out * steps_per_out) as f64;
    let vol = l.eps_problem.grid.volumes();
    let mid = nb + nm / 2 - 1;
    let mut l1_error: f64 = 0.0;
    let (mut sjw, mut sjj) = (0.0, 0.0);
    let mut samples = Vec::new();
    for _ in 0..o.n_out {
        for _ in 0..steps_per_out {
            l.eps_gen.richardson_step(&eps_state, h_t, &mut eps_next, &mut work);
            std::mem::swap(&mut eps_state, &mut eps_next);
            l.lim_gen.richardson_step(&lim_state, h_t, &mut lim_next, &mut work);
            std::mem::swap(&mut lim_state, &mut lim_next);
        }
        let err: f64 = (0..nb)
            .map(|i| (eps_state[i] - lim_state[i]).abs() + (eps_state[nb + nm + i] - lim_state[nb + i]).abs())
            .sum();
        l1_error = l1_error.max(err);
        let j = l.eps_gen.face_fluxes(&eps_state)[mid];
        let wl = l.v_minus.exp() * eps_state[nb - 1] / vol[nb - 1];
        let wr = l.v_plus.exp() * eps_state[nb + nm] / vol[nb + nm];
        samples.push((j, wl - wr));
    }
    if !l1_error.is_finite() {
        return Err(Error::NumericalFailure("membrane evolution produced non-finite masses".into()));
    }
    let jmax = samples.iter().map(|p| p.0.abs()).fold(0.0, f64::max);
    for &(j, dw) in &samples {
        if j.abs() > 1e-6 * jmax {
            sjw += j * dw;
            sjj += j * j;
        }
    }
    let sigma_fit = if sjj > 0.0 {
        let r = sjw / sjj - 0.5 * l.h * l.v_minus.exp() / s.a_minus - 0.5 * l.h * l.v_plus.exp() / s.a_plus;
        1.0 / r
    } else {
        f64::NAN
    };
    Ok(MembraneRow {
        eps: s.eps,
        l1_error,
        sigma_fit,
        sigma_limit: 1.0 / s.resistance()?,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

/// Compares the thin-membrane FV dynamics against the limit with one
/// transmission face, for every `eps`.
pub fn membrane_experiment<S>(setup: S, eps_list: &[f64], opts: &MembraneOptions) -> Result<Vec<MembraneRow>>
where
    S: Fn(f64) -> Result<MembraneSetup> + Sync,
{
    eps_list.par_iter().map(|&e| run_one(&setup(e)?, opts)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sigma_of_linear_potential() {
        let s = MembraneSetup::linear(0.1).unwrap();
        let e = std::f64::consts::E;
        assert_relative_eq!(membrane_sigma(&s, 1.0, 1.0).unwrap(), 1.0 / (e - 1.0), max_relative = 1e-12);
        assert_relative_eq!(membrane_sigma(&s, 4.0, 0.25).unwrap(), 1.0 / (e - 1.0), max_relative = 1e-12);
        assert_eq!(membrane_sigma(&s, 0.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn interior_tilt_law() {
        let base = membrane_sigma(&MembraneSetup::linear(0.1).unwrap(), 0.7, 1.3).unwrap();
        for &alpha in &[-1.0, 0.5, 2.0] {
            let s =
                MembraneSetup::linear(0.1)
                    .unwrap()
                    .with_tilt(Arc::new(move |x| if x <= 0.0 || x >= 1.0 { 0.0 } else { alpha }));
            assert_relative_eq!(membrane_sigma(&s, 0.7, 1.3).unwrap(), base * (-alpha).exp(), max_relative = 1e-10);
        }
    }

    #[test]
    fn converges_to_limit() {
        let o = MembraneOptions { n_bulk: 40, n_membrane: 10, dt: 2e-3, t_end: 0.5, n_out: 25, ..Default::default() };
        let rows = membrane_experiment(MembraneSetup::linear, &[0.1, 0.02], &o).unwrap();
        assert!(rows[1].l1_error < rows[0].l1_error, "{rows:?}");
        for r in &rows {
            assert!((r.sigma_fit / r.sigma_limit - 1.0).abs() < 0.15, "{r:?}");
        }
    }

    #[test]
    fn rejects_bad_setup() {
        assert!(MembraneSetup::linear(0.0).is_err());
        let mut s = MembraneSetup::linear(0.1).unwrap();
        s.a_star = Arc::new(|_| -1.0);
        assert!(membrane_sigma(&s, 1.0, 1.0).is_err());
    }
}

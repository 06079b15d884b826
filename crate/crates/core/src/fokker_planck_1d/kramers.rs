use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use super::{fv_evolve, FVProblem, Grid, Scheme, Stepping};
use crate::error::{Error, Result};
use crate::graph_system::MarkovGraph;
use crate::numerics::{golden_section, integrate_with_breaks, linear_fit};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Double-well energy `H` on `[lo, hi]` with minima `a < b` (`H(a) = H(b) = 0`),
/// saddle `c`, temperature `eps` and tilt `F`.
#[derive(Clone)]
pub struct KramersSetup {
    pub h: ScalarFn,
    pub f: ScalarFn,
    pub lo: f64,
    pub hi: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub eps: f64,
    pub m_upsilon: f64,
    pub omega_volume: f64,
}

impl std::fmt::Debug for KramersSetup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KramersSetup")
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .field("a", &self.a)
            .field("b", &self.b)
            .field("c", &self.c)
            .field("eps", &self.eps)
            .finish_non_exhaustive()
    }
}

impl KramersSetup {
    /// `H = (1 - y^2)^2` on `[-2, 2]`.
    pub fn quartic(eps: f64) -> Result<Self> {
        Self::asymmetric_quartic(eps, 0.0)
    }

    /// `H = (1 - y^2)^2 (1 + s y)` on `[-2, 2]`, `|s| < 1/2`.
    pub fn asymmetric_quartic(eps: f64, s: f64) -> Result<Self> {
        if !(s.abs() < 0.5) {
            return Err(Error::InvalidArgument("asymmetry must satisfy |s| < 1/2".into()));
        }
        let h = move |y: f64| (1.0 - y * y).powi(2) * (1.0 + s * y);
        let (c, _) = golden_section(|y| -h(y), -0.9, 0.9, 1e-13);
        let setup = KramersSetup {
            h: Arc::new(h),
            f: Arc::new(|_| 0.0),
            lo: -2.0,
            hi: 2.0,
            a: -1.0,
            b: 1.0,
            c,
            eps,
            m_upsilon: 1.0,
            omega_volume: 1.0,
        };
        setup.validate()?;
        Ok(setup)
    }

    pub fn with_tilt(mut self, f: ScalarFn) -> Self {
        self.f = f;
        self
    }

    /// Tilt equal to `height` on `|y - c| <= 0.3`, zero for `|y - c| >= 0.7`.
    pub fn with_saddle_tilt(self, height: f64) -> Self {
        let c = self.c;
        self.with_tilt(Arc::new(move |y| height * plateau((y - c).abs(), 0.3, 0.7)))
    }

    pub fn validate(&self) -> Result<()> {
        let h = &self.h;
        if !(self.lo < self.a && self.a < self.c && self.c < self.b && self.b < self.hi) {
            return Err(Error::InvalidArgument("need lo < a < c < b < hi".into()));
        }
        if h(self.a).abs() > 1e-12 || h(self.b).abs() > 1e-12 {
            return Err(Error::InvalidArgument("minima must have zero energy".into()));
        }
        if !(h(self.c) > 0.0) || !(self.eps > 0.0) || !(self.m_upsilon > 0.0) || !(self.omega_volume > 0.0) {
            return Err(Error::InvalidArgument("saddle energy, eps, m and |Omega| must be positive".into()));
        }
        if !(second_derivative(h, self.a, self.width()) > 0.0 && second_derivative(h, self.b, self.width()) > 0.0) {
            return Err(Error::InvalidArgument("minima must be non-degenerate".into()));
        }
        if !(second_derivative(h, self.c, self.width()) < 0.0) {
            return Err(Error::InvalidArgument("saddle must be non-degenerate".into()));
        }
        Ok(())
    }

    fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

fn plateau(d: f64, inner: f64, outer: f64) -> f64 {
    if d <= inner {
        1.0
    } else if d >= outer {
        0.0
    } else {
        let s = (outer - d) / (outer - inner);
        s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

/// Five-point central difference with step `1e-4 * width`.
fn second_derivative(f: &ScalarFn, x: f64, width: f64) -> f64 {
    let h = 1e-4 * width;
    (-f(x + 2.0 * h) + 16.0 * f(x + h) - 30.0 * f(x) + 16.0 * f(x - h) - f(x - 2.0 * h)) / (12.0 * h * h)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KramersConstants {
    pub z_eps: f64,
    pub tau_eps: f64,
    pub log_tau_eps: f64,
    pub h2_a: f64,
    pub h2_b: f64,
    pub h2_c: f64,
    /// Laplace-asymptotic well weights.
    pub gamma_a: f64,
    pub gamma_b: f64,
    /// Well weights from quadrature at this `eps`.
    pub gamma_a_eps: f64,
    pub gamma_b_eps: f64,
    /// `m 2 pi (H''(a)^{-1/2} + H''(b)^{-1/2}) |H''(c)|^{-1/2}`.
    pub prefactor: f64,
    /// `tau_eps / (prefactor eps e^{H(c)/eps})`, tends to one.
    pub tau_ratio: f64,
}

pub fn kramers_constants(s: &KramersSetup) -> Result<KramersConstants> {
    s.validate()?;
    let h = s.h.clone();
    let eps = s.eps;
    let hc = h(s.c);
    let breaks = [s.lo, s.a, s.c, s.b, s.hi];
    let inner = integrate_with_breaks(|y| (-h(y) / eps).exp(), &breaks, 1e-300, 1e-12)?.value;
    let left = integrate_with_breaks(|y| (-h(y) / eps).exp(), &breaks[..3], 1e-300, 1e-12)?.value;
    let barrier = integrate_with_breaks(|y| ((h(y) - hc) / eps).exp(), &[s.a, s.c, s.b], 1e-300, 1e-12)?.value;
    let log_tau = (s.m_upsilon * inner * barrier).ln() + hc / eps;
    let (h2a, h2b, h2c) = (
        second_derivative(&h, s.a, s.width()),
        second_derivative(&h, s.b, s.width()),
        second_derivative(&h, s.c, s.width()),
    );
    let wa = h2a.powf(-0.5);
    let wb = h2b.powf(-0.5);
    let prefactor = s.m_upsilon * 2.0 * std::f64::consts::PI * (wa + wb) * h2c.abs().powf(-0.5);
    let vol = s.omega_volume;
    Ok(KramersConstants {
        z_eps: vol * inner,
        tau_eps: log_tau.exp(),
        log_tau_eps: log_tau,
        h2_a: h2a,
        h2_b: h2b,
        h2_c: h2c,
        gamma_a: wa / (wa + wb) / vol,
        gamma_b: wb / (wa + wb) / vol,
        gamma_a_eps: left / inner / vol,
        gamma_b_eps: (inner - left) / inner / vol,
        prefactor,
        tau_ratio: (log_tau - (prefactor * eps).ln() - hc / eps).exp(),
    })
}

/// Two-state limit of the rescaled double-well dynamics.
#[derive(Debug, Clone)]
pub struct KramersLimit {
    pub kappa_ab: f64,
    pub kappa_ba: f64,
    pub gamma_a: f64,
    pub gamma_b: f64,
    pub f_a: f64,
    pub f_b: f64,
    pub f_c: f64,
    pub m_upsilon: f64,
    pub omega_volume: f64,
    pub graph: MarkovGraph,
}

pub fn kramers_limit_ode(s: &KramersSetup) -> Result<KramersLimit> {
    let k = kramers_constants(s)?;
    let (fa, fb, fc) = ((s.f)(s.a), (s.f)(s.b), (s.f)(s.c));
    let scale = s.m_upsilon / s.omega_volume;
    let kappa_ab = scale / k.gamma_a * (fa - fc).exp();
    let kappa_ba = scale / k.gamma_b * (fb - fc).exp();
    let wa = k.gamma_a * (-fa).exp();
    let wb = k.gamma_b * (-fb).exp();
    let pi = vec![wa / (wa + wb), wb / (wa + wb)];
    let graph = MarkovGraph::new(vec!["a".into(), "b".into()], pi, &[(0, 1, kappa_ab), (1, 0, kappa_ba)])?;
    Ok(KramersLimit {
        kappa_ab,
        kappa_ba,
        gamma_a: k.gamma_a,
        gamma_b: k.gamma_b,
        f_a: fa,
        f_b: fb,
        f_c: fc,
        m_upsilon: s.m_upsilon,
        omega_volume: s.omega_volume,
        graph,
    })
}

impl KramersLimit {
    pub fn relaxation_rate(&self) -> f64 {
        self.kappa_ab + self.kappa_ba
    }

    pub fn stationary_mass_a(&self) -> f64 {
        self.kappa_ba / self.relaxation_rate()
    }

    /// Mass in well `a` at time `t` from mass `m0`.
    pub fn mass_a(&self, t: f64, m0: f64) -> f64 {
        let m_inf = self.stationary_mass_a();
        m_inf + (m0 - m_inf) * (-self.relaxation_rate() * t).exp()
    }

    /// `(m/|Omega|) sqrt(u_a u_b) e^{(F_a + F_b - 2 F_c)/2}` with `u = rho / (|Omega| gamma)`.
    pub fn sigma(&self, rho_a: f64, rho_b: f64) -> f64 {
        let vol = self.omega_volume;
        let u = (rho_a / (vol * self.gamma_a)) * (rho_b / (vol * self.gamma_b));
        self.m_upsilon / vol * u.sqrt() * (0.5 * (self.f_a + self.f_b) - self.f_c).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KramersOptions {
    pub n_cells: usize,
    pub dt: f64,
    pub t_end: f64,
    pub n_out: usize,
    /// Peak height of the grid density around the critical points.
    pub refinement: f64,
}

impl Default for KramersOptions {
    fn default() -> Self {
        KramersOptions { n_cells: 2000, dt: 1e-3, t_end: 2.0, n_out: 200, refinement: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KramersRow {
    pub eps: f64,
    /// `sup_t |M_a^eps(t) - M_a(t)|` against the two-state limit.
    pub sup_error: f64,
    pub fitted_rate: f64,
    pub predicted_rate: f64,
    pub tau_ratio: f64,
    pub gamma_a_eps: f64,
    pub gamma_a: f64,
    pub runtime_s: f64,
}

/// Rescaled FV problem `d_t rho = tau_eps d_y(d_y rho + rho d_y(H/eps + F))`,
/// with a cell face placed at the saddle.
pub fn kramers_fv_problem(s: &KramersSetup, opts: &KramersOptions) -> Result<(FVProblem, usize)> {
    let k = kramers_constants(s)?;
    let eps = s.eps;
    let widths: Vec<(f64, f64)> =
        [(s.a, k.h2_a), (s.b, k.h2_b), (s.c, k.h2_c)].iter().map(|&(p, h2)| (p, (eps / h2.abs()).sqrt())).collect();
    let r = opts.refinement;
    let density =
        move |y: f64| 1.0 + r * widths.iter().map(|&(p, w)| (-(y - p).powi(2) / (2.0 * w * w)).exp()).sum::<f64>();
    let half = opts.n_cells / 2;
    if half < 2 {
        return Err(Error::InvalidArgument("too few cells".into()));
    }
    let grid = Grid::concat(&[
        Grid::graded(s.lo, s.c, half, &density)?,
        Grid::graded(s.c, s.hi, opts.n_cells - half, &density)?,
    ])?;
    let hf = s.h.clone();
    let ff = s.f.clone();
    let tau = k.tau_eps;
    let p = FVProblem::from_fns(grid, move |y| hf(y) / eps + ff(y), move |_| tau, 1.0, Scheme::ScharfetterGummel)?;
    Ok((p, half))
}

fn run_one(s: &KramersSetup, opts: &KramersOptions) -> Result<KramersRow> {
    let start = Instant::now();
    let k = kramers_constants(s)?;
    let lim = kramers_limit_ode(s)?;
    let (p, split) = kramers_fv_problem(s, opts)?;
    let pi = p.stationary();
    let well: f64 = pi[..split].iter().sum();
    let rho0: Vec<f64> = pi.iter().enumerate().map(|(i, &w)| if i < split { w / well } else { 0.0 }).collect();
    let times: Vec<f64> = (0..=opts.n_out).map(|i| opts.t_end * i as f64 / opts.n_out as f64).collect();
    let tr = fv_evolve(&p, &rho0, &times, Stepping::Richardson { dt: opts.dt })?;
    let mass: Vec<f64> = tr.states.iter().map(|r| r[..split].iter().sum()).collect();
    let sup_error = times.iter().zip(&mass).map(|(&t, &m)| (m - lim.mass_a(t, 1.0)).abs()).fold(0.0, f64::max);
    if !sup_error.is_finite() {
        return Err(Error::NumericalFailure("double-well evolution produced non-finite masses".into()));
    }
    let (mut ts, mut ls) = (Vec::new(), Vec::new());
    for (&t, &m) in times.iter().zip(&mass) {
        let d = (m - well).abs();
        if t >= 0.1 * opts.t_end && d > 1e-8 {
            ts.push(t);
            ls.push(d.ln());
        }
    }
    if ts.len() < 3 {
        return Err(Error::NumericalFailure("too few points to fit the relaxation rate".into()));
    }
    let fitted_rate = -linear_fit(&ts, &ls).0;
    Ok(KramersRow {
        eps: s.eps,
        sup_error,
        fitted_rate,
        predicted_rate: lim.relaxation_rate(),
        tau_ratio: k.tau_ratio,
        gamma_a_eps: k.gamma_a_eps,
        gamma_a: k.gamma_a,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

/// Runs the rescaled double-well FV dynamics from local equilibrium in well
/// `a` for every `eps`, comparing well masses against the two-state limit.
pub fn kramers_experiment<S>(setup: S, eps_list: &[f64], opts: &KramersOptions) -> Result<Vec<KramersRow>>
where
    S: Fn(f64) -> Result<KramersSetup> + Sync,
{
    eps_list.par_iter().map(|&e| run_one(&setup(e)?, opts)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn symmetric_constants() {
        let k = kramers_constants(&KramersSetup::quartic(0.1).unwrap()).unwrap();
        assert_relative_eq!(k.h2_a, 8.0, max_relative = 1e-7);
        assert_relative_eq!(k.h2_c, -4.0, max_relative = 1e-7);
        assert_relative_eq!(k.gamma_a, 0.5, max_relative = 1e-7);
        assert_relative_eq!(k.gamma_a_eps, 0.5, max_relative = 1e-10);
        // C = 2 pi * 2 / sqrt(8) / 2
        assert_relative_eq!(k.prefactor, std::f64::consts::PI / 2f64.sqrt(), max_relative = 1e-7);
        assert!((k.tau_ratio - 1.0).abs() < 0.1);
    }

    #[test]
    fn tau_ratio_tends_to_one() {
        let r: Vec<f64> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&e| kramers_constants(&KramersSetup::asymmetric_quartic(e, 0.3).unwrap()).unwrap().tau_ratio)
            .collect();
        assert!((r[0] - 1.0).abs() > (r[1] - 1.0).abs() && (r[1] - 1.0).abs() > (r[2] - 1.0).abs(), "{r:?}");
        assert!((r[2] - 1.0).abs() < 0.02);
    }

    #[test]
    fn asymmetric_weights() {
        let s = KramersSetup::asymmetric_quartic(0.05, 0.3).unwrap();
        let k = kramers_constants(&s).unwrap();
        assert_relative_eq!(
            k.gamma_a,
            5.6f64.powf(-0.5) / (5.6f64.powf(-0.5) + 10.4f64.powf(-0.5)),
            max_relative = 1e-7
        );
        assert_relative_eq!(k.gamma_a + k.gamma_b, 1.0, max_relative = 1e-12);
        assert!((k.gamma_a_eps - k.gamma_a).abs() < 2e-3);
        assert!((s.h)(s.c) > 1.0);
    }

    #[test]
    fn limit_sigma_matches_rates() {
        let s = KramersSetup::asymmetric_quartic(0.1, 0.3).unwrap().with_saddle_tilt(0.7);
        let lim = kramers_limit_ode(&s).unwrap();
        let (ra, rb) = (0.3, 0.7);
        assert_relative_eq!(lim.sigma(ra, rb), (lim.kappa_ab * lim.kappa_ba * ra * rb).sqrt(), max_relative = 1e-12);
        assert_relative_eq!(lim.f_c, 0.7);
        let base = kramers_limit_ode(&KramersSetup::asymmetric_quartic(0.1, 0.3).unwrap()).unwrap();
        assert_relative_eq!(lim.relaxation_rate() / base.relaxation_rate(), (-0.7f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn invalid_setup() {
        let mut s = KramersSetup::quartic(0.1).unwrap();
        s.c = 1.5;
        assert!(kramers_constants(&s).is_err());
        assert!(KramersSetup::quartic(-1.0).is_err());
    }

    #[test]
    fn coarse_experiment_runs() {
        let opts = KramersOptions { n_cells: 400, dt: 2e-3, t_end: 1.5, n_out: 60, refinement: 4.0 };
        let rows = kramers_experiment(|e| KramersSetup::asymmetric_quartic(e, 0.3), &[0.1], &opts).unwrap();
        let r = &rows[0];
        assert!(r.sup_error < 0.05, "{r:?}");
        assert!((r.fitted_rate / r.predicted_rate - 1.0).abs() < 0.1, "{r:?}");
    }
}

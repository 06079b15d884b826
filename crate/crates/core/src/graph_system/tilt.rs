use super::{divergence, entropic_force, evolve, kinetic_relation, Edge, MarkovGraph};
use crate::error::{Error, Result};
use crate::numerics::{dopri5, OdeOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;
use std::sync::Arc;

/// `theta_xy(a, b)` for the directed edge `x -> y`.
pub type ThetaFn = Arc<dyn Fn(usize, usize, f64, f64) -> f64 + Send + Sync>;

/// User-supplied tilt response with declared properties, which are checked by
/// sampling at construction.
#[derive(Clone)]
pub struct CustomTheta {
    theta: ThetaFn,
    pub one_homogeneous: bool,
    pub monotone: bool,
}

impl fmt::Debug for CustomTheta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomTheta")
            .field("one_homogeneous", &self.one_homogeneous)
            .field("monotone", &self.monotone)
            .finish_non_exhaustive()
    }
}

impl CustomTheta {
    /// Checks joint symmetry `theta_xy(a, b) = theta_yx(b, a)`, positivity and the
    /// declared flags on random samples over node indices `0..n_nodes`.
    pub fn new(theta: ThetaFn, one_homogeneous: bool, monotone: bool, n_nodes: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x7e7a);
        let n = n_nodes.max(1);
        for _ in 0..256 {
            let x = rng.gen_range(0..n);
            let y = rng.gen_range(0..n);
            let a = (rng.gen_range(-4.0..4.0f64)).exp();
            let b = (rng.gen_range(-4.0..4.0f64)).exp();
            let t = theta(x, y, a, b);
            let s = theta(y, x, b, a);
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::InvalidTilt(format!("theta({x},{y},{a},{b}) = {t} is not positive")));
            }
            if (t - s).abs() > 1e-12 * t.abs().max(s.abs()) {
                return Err(Error::InvalidTilt(format!("theta is not jointly symmetric at ({x},{y},{a},{b})")));
            }
            if one_homogeneous {
                let lam = rng.gen_range(0.1..10.0);
                let tl = theta(x, y, lam * a, lam * b);
                if (tl - lam * t).abs() > 1e-10 * tl.abs() {
                    return Err(Error::InvalidTilt("theta declared one-homogeneous but is not".into()));
                }
            }
            if monotone {
                let up = 1.0 + rng.gen_range(0.01..1.0);
                if theta(x, y, up * a, b) < t * (1.0 - 1e-12) || theta(x, y, a, up * b) < t * (1.0 - 1e-12) {
                    return Err(Error::InvalidTilt("theta declared monotone but decreases".into()));
                }
            }
        }
        Ok(CustomTheta { theta, one_homogeneous, monotone })
    }

    pub fn eval(&self, x: usize, y: usize, a: f64, b: f64) -> f64 {
        (self.theta)(x, y, a, b)
    }
}

#[derive(Debug, Clone)]
pub enum TiltRule {
    /// `theta(a, b) = sqrt(ab)`, rates `kappa e^{(F_x - F_y)/2}`.
    Symmetric,
    /// `theta = 1`, rates `kappa e^{F_x}`.
    Chemical,
    /// `theta(a, b) = ab`, rates `kappa e^{-F_y}`.
    ProductAB,
    /// `theta(a, b) = min(a, b)`, rates `kappa e^{-(F_y - F_x)_+}`.
    Metropolis,
    Custom(CustomTheta),
}

impl TiltRule {
    pub fn name(&self) -> &'static str {
        match self {
            TiltRule::Symmetric => "symmetric",
            TiltRule::Chemical => "chemical",
            TiltRule::ProductAB => "product",
            TiltRule::Metropolis => "metropolis",
            TiltRule::Custom(_) => "custom",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "symmetric" => Ok(TiltRule::Symmetric),
            "chemical" => Ok(TiltRule::Chemical),
            "product" => Ok(TiltRule::ProductAB),
            "metropolis" => Ok(TiltRule::Metropolis),
            _ => Err(Error::InvalidTilt(format!("unknown tilt rule '{s}'"))),
        }
    }

    /// Factor `e^{f_x} theta_xy(e^{-f_x}, e^{-f_y})`.
    fn factor(&self, x: usize, y: usize, fx: f64, fy: f64) -> f64 {
        match self {
            TiltRule::Symmetric => (0.5 * (fx - fy)).exp(),
            TiltRule::Chemical => fx.exp(),
            TiltRule::ProductAB => (-fy).exp(),
            TiltRule::Metropolis => (fx - fy).min(0.0).exp(),
            TiltRule::Custom(c) => fx.exp() * c.eval(x, y, (-fx).exp(), (-fy).exp()),
        }
    }
}

/// Node potential plus a rate-response rule and optional symmetric edge weights
/// (one per stored pair of the graph it is applied to).
#[derive(Debug, Clone)]
pub struct Tilt {
    pub f: Vec<f64>,
    pub rule: TiltRule,
    pub omega: Option<Vec<f64>>,
}

impl Tilt {
    pub fn new(f: Vec<f64>, rule: TiltRule) -> Self {
        Tilt { f, rule, omega: None }
    }

    pub fn symmetric(f: Vec<f64>) -> Self {
        Tilt::new(f, TiltRule::Symmetric)
    }

    /// `F = 0` with the Symmetric rule.
    pub fn zero(n: usize) -> Self {
        Tilt::symmetric(vec![0.0; n])
    }

    pub fn with_omega(mut self, omega: Vec<f64>) -> Self {
        self.omega = Some(omega);
        self
    }

    pub fn is_zero(&self) -> bool {
        self.f.iter().all(|&v| v == 0.0) && self.omega.as_ref().is_none_or(|w| w.iter().all(|&v| v == 1.0))
    }
}

/// Tilted graph: `pi^F ∝ e^{-F} pi` and `kappa^F_xy = omega kappa_xy e^{F_x} theta(e^{-F_x}, e^{-F_y})`.
pub fn tilt_kernel(g: &MarkovGraph, t: &Tilt) -> Result<MarkovGraph> {
    if t.f.len() != g.len() {
        return Err(Error::InvalidTilt(format!("potential of length {} for {} nodes", t.f.len(), g.len())));
    }
    if t.f.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidTilt("potential must be finite".into()));
    }
    if let Some(w) = &t.omega {
        if w.len() != g.edges().len() || w.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidTilt("omega needs one positive weight per edge".into()));
        }
    }
    if t.is_zero() {
        return Ok(g.clone());
    }
    // shift for the stationary weights only; rates use F as given
    let fmin = t.f.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut pi: Vec<f64> = g.pi().iter().zip(&t.f).map(|(p, f)| p * (fmin - f).exp()).collect();
    let z: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= z);
    let edges = g
        .edges()
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let w = t.omega.as_ref().map_or(1.0, |w| w[i]);
            Edge {
                x: e.x,
                y: e.y,
                k_xy: w * e.k_xy * t.rule.factor(e.x, e.y, t.f[e.x], t.f[e.y]),
                k_yx: w * e.k_yx * t.rule.factor(e.y, e.x, t.f[e.y], t.f[e.x]),
            }
        })
        .collect();
    Ok(MarkovGraph::from_edges(g.nodes().to_vec(), pi, edges))
}

#[derive(Debug, Clone)]
pub struct TiltIndependenceReport {
    pub rule: &'static str,
    pub samples: usize,
    /// `kappa^{F+alpha} = kappa^F` for constant shifts.
    pub shift_invariant: bool,
    /// Largest relative rate change under a constant shift.
    pub shift_deviation: f64,
    pub shift_witness: Option<(Vec<f64>, f64)>,
    /// `(f_x, f_y) -> e^{-f_x} kappa^f_xy` jointly non-increasing.
    pub monotone: bool,
    pub monotone_violation: f64,
    /// Sup-norm gap between the tilted master equation and the fixed-dissipation flow (Symmetric rule).
    pub evolution_sup: Option<f64>,
}

impl TiltIndependenceReport {
    pub fn passes(&self) -> bool {
        self.shift_invariant && self.monotone && self.evolution_sup.is_none_or(|e| e <= 1e-8)
    }
}

pub fn tilt_independence_check(g: &MarkovGraph, rule: &TiltRule) -> Result<TiltIndependenceReport> {
    tilt_independence_check_with(g, rule, 100, 0x5eed)
}

pub fn tilt_independence_check_with(
    g: &MarkovGraph,
    rule: &TiltRule,
    samples: usize,
    seed: u64,
) -> Result<TiltIndependenceReport> {
    let n = g.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shift_dev: f64 = 0.0;
    let mut witness = None;
    for _ in 0..samples {
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let alpha = rng.gen_range(-3.0..3.0);
        let fs: Vec<f64> = f.iter().map(|v| v + alpha).collect();
        let a = tilt_kernel(g, &Tilt::new(f.clone(), rule.clone()))?;
        let b = tilt_kernel(g, &Tilt::new(fs, rule.clone()))?;
        for (ea, eb) in a.edges().iter().zip(b.edges()) {
            for (p, q) in [(ea.k_xy, eb.k_xy), (ea.k_yx, eb.k_yx)] {
                let d = if p == 0.0 && q == 0.0 { 0.0 } else { (p - q).abs() / p.abs().max(q.abs()) };
                if d > shift_dev {
                    shift_dev = d;
                    if d > 1e-12 {
                        witness = Some((f.clone(), alpha));
                    }
                }
            }
        }
    }
    let mut mono_violation: f64 = 0.0;
    if !g.edges().is_empty() {
        for _ in 0..samples {
            let e = g.edges()[rng.gen_range(0..g.edges().len())];
            let (x, y) = if rng.gen_bool(0.5) { (e.x, e.y) } else { (e.y, e.x) };
            let fx = rng.gen_range(-3.0..3.0);
            let fy = rng.gen_range(-3.0..3.0);
            let d = rng.gen_range(0.01..1.0);
            let h = |fx: f64, fy: f64| (-fx).exp() * rule.factor(x, y, fx, fy);
            let base = h(fx, fy);
            for up in [h(fx + d, fy), h(fx, fy + d)] {
                mono_violation = mono_violation.max((up - base) / base);
            }
        }
    }
    let evolution_sup = match rule {
        TiltRule::Symmetric => Some(evolution_gap(g, &mut rng)?),
        _ => None,
    };
    Ok(TiltIndependenceReport {
        rule: rule.name(),
        samples,
        shift_invariant: shift_dev <= 1e-12,
        shift_deviation: shift_dev,
        shift_witness: witness,
        monotone: mono_violation <= 1e-12,
        monotone_violation: mono_violation,
        evolution_sup,
    })
}

/// Solves the tilted master equation exactly and the cosh flow with untilted
/// activity and energy `H(. | pi) + <F, .>` by an adaptive integrator.
fn evolution_gap(g: &MarkovGraph, rng: &mut ChaCha8Rng) -> Result<f64> {
    let n = g.len();
    let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let mut rho0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
    let s: f64 = rho0.iter().sum();
    rho0.iter_mut().for_each(|r| *r /= s);
    let grid: Vec<f64> = (0..=20).map(|i| 0.1 * i as f64).collect();
    fixed_dissipation_gap(g, &f, &rho0, &grid)
}

pub(crate) fn fixed_dissipation_gap(g: &MarkovGraph, f: &[f64], rho0: &[f64], grid: &[f64]) -> Result<f64> {
    let gf = tilt_kernel(g, &Tilt::symmetric(f.to_vec()))?;
    let exact = evolve(&gf, rho0, *grid.last().unwrap(), grid)?;
    let rhs = |rho: &[f64], out: &mut [f64]| {
        let mut xi = entropic_force(g, rho);
        for (v, e) in xi.iter_mut().zip(g.edges()) {
            *v += f[e.x] - f[e.y];
        }
        let j = kinetic_relation(g, rho, &xi);
        let d = divergence(g, &j);
        for (o, v) in out.iter_mut().zip(d) {
            *o = -v;
        }
    };
    let opts = OdeOptions { rtol: 1e-12, atol: 1e-15, ..OdeOptions::default() };
    let flow = dopri5(rhs, rho0, grid, opts)?;
    let mut sup: f64 = 0.0;
    for (a, b) in exact.states.iter().zip(&flow) {
        for (p, q) in a.iter().zip(b) {
            sup = sup.max((p - q).abs());
        }
    }
    Ok(sup)
}

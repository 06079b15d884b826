//! Two-terminal networks with fast interior nodes: scaling, effective capacity
//! and the limiting two-state system.

use crate::error::{Error, Result};
use crate::graph_system::{evolve, tilt_kernel, Edge, MarkovGraph, Tilt};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct TwoTerminalNetwork {
    pub graph: MarkovGraph,
    pub a: usize,
    pub b: usize,
}

impl TwoTerminalNetwork {
    pub fn new(graph: MarkovGraph, a: usize, b: usize) -> Result<Self> {
        if a == b || a >= graph.len() || b >= graph.len() {
            return Err(Error::InvalidArgument(format!("terminals ({a}, {b}) must be distinct nodes")));
        }
        Ok(TwoTerminalNetwork { graph, a, b })
    }

    /// Terminals looked up by node id.
    pub fn by_ids(graph: MarkovGraph, a: &str, b: &str) -> Result<Self> {
        let find = |id: &str| {
            graph
                .nodes()
                .iter()
                .position(|n| n == id)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown terminal '{id}'")))
        };
        let (ia, ib) = (find(a)?, find(b)?);
        Self::new(graph, ia, ib)
    }

    pub fn is_terminal(&self, x: usize) -> bool {
        x == self.a || x == self.b
    }

    pub fn fast_nodes(&self) -> Vec<usize> {
        (0..self.graph.len()).filter(|&x| !self.is_terminal(x)).collect()
    }

    /// `k^0_xy = pi_x kappa_xy / (pi_a + pi_b)` per pair.
    pub fn k0(&self) -> Vec<f64> {
        let z = self.graph.pi()[self.a] + self.graph.pi()[self.b];
        self.graph.conductance().into_iter().map(|k| k / z).collect()
    }

    /// `k^F_xy = k^0_xy e^{-(F_x + F_y)/2}` per pair.
    pub fn k_f(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_f(f)?;
        Ok(self.k0().into_iter().zip(self.graph.edges()).map(|(k, e)| k * (-0.5 * (f[e.x] + f[e.y])).exp()).collect())
    }

    /// Dense symmetric matrix of `k^F`.
    pub fn conductance_matrix(&self, f: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.graph.len();
        let mut m = DMatrix::zeros(n, n);
        for (e, k) in self.graph.edges().iter().zip(self.k_f(f)?) {
            m[(e.x, e.y)] += k;
            m[(e.y, e.x)] += k;
        }
        Ok(m)
    }

    fn check_f(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.graph.len() || f.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTilt(format!("need {} finite potential values", self.graph.len())));
        }
        Ok(())
    }

    /// Whether `a` and `b` are joined by positive-rate edges.
    pub fn terminals_connected(&self) -> bool {
        let reach = reachable(&self.graph, self.a, |_| true);
        reach[self.b]
    }
}

fn reachable(g: &MarkovGraph, start: usize, pass: impl Fn(usize) -> bool) -> Vec<bool> {
    let n = g.len();
    let mut adj = vec![Vec::new(); n];
    for e in g.edges() {
        adj[e.x].push(e.y);
        adj[e.y].push(e.x);
    }
    let mut seen = vec![false; n];
    seen[start] = true;
    let mut stack = vec![start];
    while let Some(x) = stack.pop() {
        if x != start && !pass(x) {
            continue;
        }
        for &y in &adj[x] {
            if !seen[y] {
                seen[y] = true;
                stack.push(y);
            }
        }
    }
    seen
}

/// Rates `kappa_xy / eps` out of fast nodes; `pi^eps` weights fast nodes by `eps`.
pub fn scale_fast(n: &TwoTerminalNetwork, eps: f64) -> Result<MarkovGraph> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0, 1], got {eps}")));
    }
    let g = &n.graph;
    let mut pi: Vec<f64> =
        g.pi().iter().enumerate().map(|(x, &p)| if n.is_terminal(x) { p } else { eps * p }).collect();
    let z: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= z);
    let scale = |x: usize| if n.is_terminal(x) { 1.0 } else { 1.0 / eps };
    let edges = g
        .edges()
        .iter()
        .map(|e| Edge { x: e.x, y: e.y, k_xy: e.k_xy * scale(e.x), k_yx: e.k_yx * scale(e.y) })
        .collect();
    Ok(MarkovGraph::from_edges(g.nodes().to_vec(), pi, edges))
}

#[derive(Debug, Clone)]
pub struct CapacityResult {
    pub capacity: f64,
    /// Harmonic potential with `h_a = 1`, `h_b = 0`.
    pub h: Vec<f64>,
    /// Largest weighted-Laplacian residual on fast nodes.
    pub residual: f64,
    pub connected: bool,
}

/// Dirichlet problem `-div(k^F grad h) = 0` on fast nodes, `h_a = 1`, `h_b = 0`;
/// capacity `sum_pairs k^F_xy (h_x - h_y)^2`.
pub fn capacity(n: &TwoTerminalNetwork, f: &[f64]) -> Result<CapacityResult> {
    let k = n.conductance_matrix(f)?;
    let size = n.graph.len();
    let mut h = vec![0.0; size];
    h[n.a] = 1.0;
    // fast nodes connected to a terminal without crossing the other one
    let ra = reachable(&n.graph, n.a, |x| !n.is_terminal(x));
    let rb = reachable(&n.graph, n.b, |x| !n.is_terminal(x));
    let active: Vec<usize> = n.fast_nodes().into_iter().filter(|&x| ra[x] || rb[x]).collect();
    if !active.is_empty() {
        let m = active.len();
        let mut lap = DMatrix::zeros(m, m);
        let mut rhs = DVector::zeros(m);
        for (i, &x) in active.iter().enumerate() {
            let deg: f64 = k.row(x).iter().sum();
            lap[(i, i)] = deg;
            for (jdx, &y) in active.iter().enumerate() {
                if jdx != i {
                    lap[(i, jdx)] = -k[(x, y)];
                }
            }
            rhs[i] = k[(x, n.a)];
        }
        let sol = match lap.clone().cholesky() {
            Some(c) => c.solve(&rhs),
            None => {
                let lu = lap.clone().lu();
                lu.solve(&rhs).ok_or_else(|| {
                    let (lo, hi) = diag_range(&lap);
                    Error::NumericalFailure(format!("singular Dirichlet block (diagonal range {lo:.3e}..{hi:.3e})"))
                })?
            }
        };
        for (i, &x) in active.iter().enumerate() {
            h[x] = sol[i];
        }
    }
    let mut residual: f64 = 0.0;
    for x in n.fast_nodes() {
        let r: f64 = (0..size).map(|y| k[(x, y)] * (h[x] - h[y])).sum();
        residual = residual.max(r.abs());
    }
    let connected = n.terminals_connected();
    let cap: f64 =
        if connected { n.graph.edges().iter().map(|e| k[(e.x, e.y)] * (h[e.x] - h[e.y]).powi(2)).sum() } else { 0.0 };
    Ok(CapacityResult { capacity: cap, h, residual, connected })
}

fn diag_range(m: &DMatrix<f64>) -> (f64, f64) {
    let d = m.diagonal();
    (d.min(), d.max())
}

/// Star-mesh elimination of node `w`: `k_xy += k_xw k_yw / sum_z k_zw`, then `w` is dropped.
pub fn star_mesh_eliminate(k: &DMatrix<f64>, w: usize) -> DMatrix<f64> {
    let n = k.nrows();
    let s: f64 = (0..n).filter(|&z| z != w).map(|z| k[(z, w)]).sum();
    let keep: Vec<usize> = (0..n).filter(|&z| z != w).collect();
    let mut out = DMatrix::zeros(n - 1, n - 1);
    for (i, &x) in keep.iter().enumerate() {
        for (j, &y) in keep.iter().enumerate() {
            if i != j {
                let fill = if s > 0.0 { k[(x, w)] * k[(y, w)] / s } else { 0.0 };
                out[(i, j)] = k[(x, y)] + fill;
            }
        }
    }
    out
}

/// Eliminates the fast nodes in the given order and returns the remaining
/// terminal conductance.
pub fn reduce_to_capacity(n: &TwoTerminalNetwork, f: &[f64], order: &[usize]) -> Result<f64> {
    let mut fast = n.fast_nodes();
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    fast.sort_unstable();
    if sorted != fast {
        return Err(Error::InvalidArgument("order must be a permutation of the fast nodes".into()));
    }
    let mut k = n.conductance_matrix(f)?;
    let mut ids: Vec<usize> = (0..n.graph.len()).collect();
    for &w in order {
        let pos = ids.iter().position(|&v| v == w).unwrap();
        k = star_mesh_eliminate(&k, pos);
        ids.remove(pos);
    }
    Ok(k[(0, 1)])
}

/// Limiting two-state system on the terminals.
#[derive(Debug, Clone)]
pub struct TwoStateLimit {
    /// Two nodes `(a, b)` with rates `kappa^0` and stationary measure `e^{-F} pi^0` normalised.
    pub graph: MarkovGraph,
    /// `(pi_a, pi_b) / (pi_a + pi_b)`.
    pub pi0: [f64; 2],
    pub f: [f64; 2],
    pub capacity: f64,
}

impl TwoStateLimit {
    /// `cap^F sqrt(u^F_a u^F_b)` with `u^F = e^F rho / pi^0`.
    pub fn sigma(&self, rho: [f64; 2]) -> f64 {
        let ua = self.f[0].exp() * rho[0] / self.pi0[0];
        let ub = self.f[1].exp() * rho[1] / self.pi0[1];
        self.capacity * (ua * ub).sqrt()
    }

    /// Relaxation rate `kappa_ab + kappa_ba`.
    pub fn relaxation_rate(&self) -> f64 {
        self.graph.rate(0, 1) + self.graph.rate(1, 0)
    }
}

/// The limit kinetic relation gives `d rho_a/dt = -cap^F (u^F_a - u^F_b)`, which is
/// the master equation with `kappa_ab = cap^F e^{F_a}/pi^0_a`, `kappa_ba = cap^F e^{F_b}/pi^0_b`.
pub fn limit_two_state(n: &TwoTerminalNetwork, f: &[f64]) -> Result<TwoStateLimit> {
    let cap = capacity(n, f)?.capacity;
    let p = n.graph.pi();
    let z = p[n.a] + p[n.b];
    let pi0 = [p[n.a] / z, p[n.b] / z];
    let fa = [f[n.a], f[n.b]];
    let kab = cap * fa[0].exp() / pi0[0];
    let kba = cap * fa[1].exp() / pi0[1];
    let shift = fa[0].min(fa[1]);
    let mut pif = [pi0[0] * (shift - fa[0]).exp(), pi0[1] * (shift - fa[1]).exp()];
    let s = pif[0] + pif[1];
    pif[0] /= s;
    pif[1] /= s;
    let ids = vec![n.graph.nodes()[n.a].clone(), n.graph.nodes()[n.b].clone()];
    let mut trip = Vec::new();
    if cap > 0.0 {
        trip.push((0, 1, kab));
        trip.push((1, 0, kba));
    }
    let graph = MarkovGraph::new(ids, pif.to_vec(), &trip)?;
    Ok(TwoStateLimit { graph, pi0, f: fa, capacity: cap })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsRow {
    pub eps: f64,
    pub sup_error: f64,
    pub runtime_s: f64,
}

/// Sup-in-time terminal-marginal error of the Symmetric-tilted scaled network
/// against the two-state limit, on `n_grid` uniform intervals of `[0, T]`.
/// Initial mass on fast nodes is sent to the terminals by the harmonic split.
pub fn epsilon_convergence(
    n: &TwoTerminalNetwork,
    f: &[f64],
    rho0: &[f64],
    t_end: f64,
    eps_list: &[f64],
    n_grid: usize,
) -> Result<Vec<EpsRow>> {
    n.graph.check_state(rho0)?;
    let mass: f64 = rho0.iter().sum();
    if (mass - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument("rho0 must be a probability vector".into()));
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument("eps_list must be strictly decreasing".into()));
    }
    if n_grid == 0 {
        return Err(Error::InvalidArgument("n_grid must be positive".into()));
    }
    let lim = limit_two_state(n, f)?;
    let h = capacity(n, f)?.h;
    let mut r0 = [rho0[n.a], rho0[n.b]];
    for x in n.fast_nodes() {
        r0[0] += h[x] * rho0[x];
        r0[1] += (1.0 - h[x]) * rho0[x];
    }
    let grid: Vec<f64> = (0..=n_grid).map(|i| t_end * i as f64 / n_grid as f64).collect();
    let limit = evolve(&lim.graph, &r0, t_end, &grid)?;
    eps_list
        .par_iter()
        .map(|&eps| {
            let start = Instant::now();
            let ge = scale_fast(n, eps)?;
            let gt = tilt_kernel(&ge, &Tilt::symmetric(f.to_vec()))?;
            let tr = evolve(&gt, rho0, t_end, &grid)?;
            let mut sup: f64 = 0.0;
            for (s, l) in tr.states.iter().zip(&limit.states) {
                sup = sup.max((s[n.a] - l[0]).abs()).max((s[n.b] - l[1]).abs());
            }
            Ok(EpsRow { eps, sup_error: sup, runtime_s: start.elapsed().as_secs_f64() })
        })
        .collect()
}

/// Decay rate of the terminal mass `rho_a` of the Symmetric-tilted scaled
/// network started at `a`, from a log-linear fit over `[T/4, T]`.
pub fn fitted_relaxation_rate(n: &TwoTerminalNetwork, f: &[f64], eps: f64, t_end: f64, n_grid: usize) -> Result<f64> {
    if !(t_end > 0.0) || n_grid < 8 {
        return Err(Error::InvalidArgument("need T > 0 and at least eight grid intervals".into()));
    }
    let ge = scale_fast(n, eps)?;
    let gt = tilt_kernel(&ge, &Tilt::symmetric(f.to_vec()))?;
    let mut rho0 = vec![0.0; gt.len()];
    rho0[n.a] = 1.0;
    let grid: Vec<f64> = (0..=n_grid).map(|i| t_end * i as f64 / n_grid as f64).collect();
    let tr = evolve(&gt, &rho0, t_end, &grid)?;
    let target = gt.pi()[n.a];
    let (mut ts, mut ls) = (Vec::new(), Vec::new());
    for (t, s) in grid.iter().zip(&tr.states) {
        let d = (s[n.a] - target).abs();
        if *t >= 0.25 * t_end && d > 1e-12 {
            ts.push(*t);
            ls.push(d.ln());
        }
    }
    if ts.len() < 3 {
        return Err(Error::NumericalFailure("terminal mass relaxed below the fitting floor".into()));
    }
    Ok(-crate::numerics::linear_fit(&ts, &ls).0)
}

/// Conductance of a uniform-`pi` chain with nearest-neighbour rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainConductance {
    /// Capacity from elimination of the interior nodes.
    pub capacity: f64,
    /// The chain formula `2 (sum_i 1/(kappa_i e^{-(F_i+F_{i+1})/2}))^{-1}`, reported for comparison.
    pub literal: f64,
}

pub fn chain_network(kappas: &[f64]) -> Result<TwoTerminalNetwork> {
    let n = kappas.len() + 1;
    if n < 3 {
        return Err(Error::InvalidArgument("a chain needs at least three nodes".into()));
    }
    if kappas.iter().any(|&k| !(k > 0.0) || !k.is_finite()) {
        return Err(Error::InvalidArgument("chain rates must be positive".into()));
    }
    let pi = vec![1.0 / n as f64; n];
    let mut trip = Vec::new();
    for (i, &k) in kappas.iter().enumerate() {
        trip.push((i, i + 1, k));
        trip.push((i + 1, i, k));
    }
    let g = MarkovGraph::new(MarkovGraph::default_ids(n), pi, &trip)?;
    TwoTerminalNetwork::new(g, 0, n - 1)
}

pub fn n_chain_conductance(kappas: &[f64], f: &[f64]) -> Result<ChainConductance> {
    let net = chain_network(kappas)?;
    let order: Vec<usize> = net.fast_nodes();
    let cap = reduce_to_capacity(&net, f, &order)?;
    let s: f64 = kappas.iter().enumerate().map(|(i, &k)| 1.0 / (k * (-0.5 * (f[i] + f[i + 1])).exp())).sum();
    Ok(ChainConductance { capacity: cap, literal: 2.0 / s })
}

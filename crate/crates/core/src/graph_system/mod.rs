//! Detailed-balance jump processes as cosh gradient systems.
//!
//! Edges are stored once per unordered pair `x < y` with both one-way rates.
//! Fluxes are stored per pair as `j_xy` (so `j_yx = -j_xy`). Sums over the
//! double-directed edge set are therefore twice the sum over pairs for even
//! quantities.

mod detilt;
mod edp;
mod evolve;
mod gillespie;
mod tilt;

pub use detilt::{detilt_quadratic, DetiltEdge, DetiltedQuadratic};
pub use edp::{edp_functional, edp_functional_with, EdpOptions, EdpReport, EdpRule};
pub use evolve::{evolve, Trajectory};
pub use gillespie::{
    gillespie, ldp_contracted, ldp_rate, typical_path, GillespieOptions, GillespieResult, Initial, OneWayPath,
};
pub use tilt::{
    tilt_independence_check, tilt_independence_check_with, tilt_kernel, CustomTheta, ThetaFn, Tilt,
    TiltIndependenceReport, TiltRule,
};

use crate::cosh_core::{perspective, ExtReal};
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use std::collections::BTreeMap;

/// One unordered edge `x < y` with its two one-way rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub x: usize,
    pub y: usize,
    pub k_xy: f64,
    pub k_yx: f64,
}

#[derive(Debug, Clone)]
pub struct MarkovGraph {
    nodes: Vec<String>,
    pi: Vec<f64>,
    edges: Vec<Edge>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceReport {
    pub holds: bool,
    /// Worst pair `(x, y)` if any edge exists.
    pub worst_pair: Option<(usize, usize)>,
    pub residual: f64,
}

impl MarkovGraph {
    /// Builds a graph from directed rate triplets `(x, y, kappa_xy)` and checks
    /// normalisation, positivity, reversibility of the support and detailed
    /// balance at relative tolerance `1e-10`.
    pub fn new(nodes: Vec<String>, pi: Vec<f64>, kappa: &[(usize, usize, f64)]) -> Result<Self> {
        let g = Self::unchecked(nodes, pi, kappa)?;
        for e in &g.edges {
            if (e.k_xy > 0.0) != (e.k_yx > 0.0) {
                return Err(Error::InvalidKernel(format!(
                    "rate {}->{} is positive but the reverse rate is zero",
                    e.x, e.y
                )));
            }
        }
        let rep = g.check_detailed_balance(1e-10);
        if !rep.holds {
            return Err(Error::InvalidKernel(format!(
                "detailed balance violated on {:?}, residual {:.3e}",
                rep.worst_pair, rep.residual
            )));
        }
        Ok(g)
    }

    /// Like [`MarkovGraph::new`] but without reversibility checks.
    pub fn unchecked(nodes: Vec<String>, pi: Vec<f64>, kappa: &[(usize, usize, f64)]) -> Result<Self> {
        let n = pi.len();
        if n == 0 {
            return Err(Error::InvalidKernel("empty node set".into()));
        }
        if nodes.len() != n {
            return Err(Error::InvalidKernel(format!("{} node ids for {} weights", nodes.len(), n)));
        }
        if pi.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidKernel("pi must be strictly positive".into()));
        }
        let total: f64 = pi.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidKernel(format!("pi sums to {total}, expected 1")));
        }
        let mut map: BTreeMap<(usize, usize), (f64, f64)> = BTreeMap::new();
        let mut seen = std::collections::HashSet::new();
        for &(x, y, r) in kappa {
            if x >= n || y >= n {
                return Err(Error::InvalidKernel(format!("edge ({x},{y}) out of range")));
            }
            if x == y {
                return Err(Error::InvalidKernel(format!("self loop at {x}")));
            }
            if !(r >= 0.0) || !r.is_finite() {
                return Err(Error::InvalidKernel(format!("rate {x}->{y} must be finite and non-negative")));
            }
            if !seen.insert((x, y)) {
                return Err(Error::InvalidKernel(format!("duplicate rate {x}->{y}")));
            }
            let key = (x.min(y), x.max(y));
            let slot = map.entry(key).or_insert((0.0, 0.0));
            if x < y {
                slot.0 = r;
            } else {
                slot.1 = r;
            }
        }
        let edges = map
            .into_iter()
            .filter(|(_, (a, b))| *a > 0.0 || *b > 0.0)
            .map(|((x, y), (k_xy, k_yx))| Edge { x, y, k_xy, k_yx })
            .collect();
        Ok(MarkovGraph { nodes, pi, edges })
    }

    /// Reversible graph from symmetric edge conductances `k_xy = pi_x kappa_xy`.
    pub fn from_conductances(nodes: Vec<String>, pi: Vec<f64>, k: &[(usize, usize, f64)]) -> Result<Self> {
        let mut trip = Vec::with_capacity(2 * k.len());
        for &(x, y, c) in k {
            if x >= pi.len() || y >= pi.len() {
                return Err(Error::InvalidKernel(format!("edge ({x},{y}) out of range")));
            }
            trip.push((x, y, c / pi[x]));
            trip.push((y, x, c / pi[y]));
        }
        Self::new(nodes, pi, &trip)
    }

    pub(crate) fn from_edges(nodes: Vec<String>, pi: Vec<f64>, edges: Vec<Edge>) -> Self {
        MarkovGraph { nodes, pi, edges }
    }

    /// Numbered node ids `0, 1, ...`.
    pub fn default_ids(n: usize) -> Vec<String> {
        (0..n).map(|i| i.to_string()).collect()
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Directed rate `kappa_xy`.
    pub fn rate(&self, x: usize, y: usize) -> f64 {
        let (a, b) = (x.min(y), x.max(y));
        match self.edges.binary_search_by(|e| (e.x, e.y).cmp(&(a, b))) {
            Ok(i) => {
                let e = &self.edges[i];
                if x < y {
                    e.k_xy
                } else {
                    e.k_yx
                }
            }
            Err(_) => 0.0,
        }
    }

    /// Directed rate triplets, both directions of every stored pair.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(2 * self.edges.len());
        for e in &self.edges {
            out.push((e.x, e.y, e.k_xy));
            out.push((e.y, e.x, e.k_yx));
        }
        out
    }

    /// Activity `sqrt(kappa_xy kappa_yx)` per pair.
    pub fn activity(&self) -> Vec<f64> {
        self.edges.iter().map(|e| (e.k_xy * e.k_yx).sqrt()).collect()
    }

    /// Edge conductance `k_xy = pi_x kappa_xy` per pair.
    pub fn conductance(&self) -> Vec<f64> {
        self.edges.iter().map(|e| self.pi[e.x] * e.k_xy).collect()
    }

    pub fn exit_rates(&self) -> Vec<f64> {
        let mut q = vec![0.0; self.len()];
        for e in &self.edges {
            q[e.x] += e.k_xy;
            q[e.y] += e.k_yx;
        }
        q
    }

    /// Whether the positive-rate graph is connected.
    pub fn is_connected(&self) -> bool {
        let n = self.len();
        let mut adj = vec![Vec::new(); n];
        for e in &self.edges {
            if e.k_xy > 0.0 || e.k_yx > 0.0 {
                adj[e.x].push(e.y);
                adj[e.y].push(e.x);
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(x) = stack.pop() {
            for &y in &adj[x] {
                if !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Generator `A` of `d rho/dt = A rho`.
    pub fn generator(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut a = DMatrix::zeros(n, n);
        for e in &self.edges {
            a[(e.y, e.x)] += e.k_xy;
            a[(e.x, e.x)] -= e.k_xy;
            a[(e.x, e.y)] += e.k_yx;
            a[(e.y, e.y)] -= e.k_yx;
        }
        a
    }

    pub fn check_detailed_balance(&self, tol: f64) -> BalanceReport {
        check_detailed_balance(self, tol)
    }

    pub(crate) fn check_state(&self, rho: &[f64]) -> Result<()> {
        if rho.len() != self.len() {
            return Err(Error::InvalidArgument(format!("state of length {} for {} nodes", rho.len(), self.len())));
        }
        if rho.iter().any(|&r| !(r >= 0.0) || !r.is_finite()) {
            return Err(Error::InvalidArgument("state must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Maximal relative residual `|pi_x kappa_xy - pi_y kappa_yx| / (pi_x kappa_xy + pi_y kappa_yx)`.
pub fn check_detailed_balance(g: &MarkovGraph, tol: f64) -> BalanceReport {
    let mut worst = None;
    let mut res = 0.0;
    for e in &g.edges {
        let a = g.pi[e.x] * e.k_xy;
        let b = g.pi[e.y] * e.k_yx;
        let r = (a - b).abs() / (a + b);
        if worst.is_none() || r > res {
            res = r;
            worst = Some((e.x, e.y));
        }
    }
    BalanceReport { holds: res <= tol, worst_pair: worst, residual: res }
}

/// Activity `a_xy = sqrt(kappa_xy kappa_yx)` and affinity `s_xy = log(kappa_xy / kappa_yx)`.
pub fn activity_split(g: &MarkovGraph) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = g.len();
    let mut a = DMatrix::zeros(n, n);
    let mut s = DMatrix::zeros(n, n);
    for e in &g.edges {
        if (e.k_xy > 0.0) != (e.k_yx > 0.0) {
            return Err(Error::InvalidKernel(format!("one-way edge between {} and {}", e.x, e.y)));
        }
        let act = (e.k_xy * e.k_yx).sqrt();
        let aff = e.k_xy.ln() - e.k_yx.ln();
        a[(e.x, e.y)] = act;
        a[(e.y, e.x)] = act;
        s[(e.x, e.y)] = aff;
        s[(e.y, e.x)] = -aff;
    }
    Ok((a, s))
}

/// Net flux `j_xy = (rho_x kappa_xy - rho_y kappa_yx) / 2` per pair.
pub fn master_flux(g: &MarkovGraph, rho: &[f64]) -> Vec<f64> {
    g.edges.iter().map(|e| 0.5 * (rho[e.x] * e.k_xy - rho[e.y] * e.k_yx)).collect()
}

/// Graph divergence of a pair flux, `(div j)_x = sum_y (j_xy - j_yx)`.
pub fn divergence(g: &MarkovGraph, j: &[f64]) -> Vec<f64> {
    let mut d = vec![0.0; g.len()];
    for (e, &f) in g.edges.iter().zip(j) {
        d[e.x] += 2.0 * f;
        d[e.y] -= 2.0 * f;
    }
    d
}

/// Cosh kinetic relation `j_xy = sqrt(kappa_xy kappa_yx rho_x rho_y) sinh(Xi_xy / 2)`.
pub fn kinetic_relation(g: &MarkovGraph, rho: &[f64], xi: &[f64]) -> Vec<f64> {
    g.edges.iter().zip(xi).map(|(e, &f)| (e.k_xy * e.k_yx * rho[e.x] * rho[e.y]).sqrt() * (0.5 * f).sinh()).collect()
}

/// Driving force `-grad D E` for `E = H(. | pi)` as pair values `log u_x - log u_y`.
pub fn entropic_force(g: &MarkovGraph, rho: &[f64]) -> Vec<f64> {
    g.edges.iter().map(|e| (rho[e.x] / g.pi[e.x]).ln() - (rho[e.y] / g.pi[e.y]).ln()).collect()
}

/// Edge weights `sigma_xy = sqrt(kappa_xy kappa_yx rho_x rho_y) / 2` per pair.
pub fn sigma(g: &MarkovGraph, rho: &[f64]) -> Vec<f64> {
    g.edges.iter().map(|e| 0.5 * (e.k_xy * e.k_yx * rho[e.x] * rho[e.y]).sqrt()).collect()
}

/// Single-edge view `sigma_xy + sigma_yx` per pair.
pub fn single_edge_sigma(g: &MarkovGraph, rho: &[f64]) -> Vec<f64> {
    sigma(g, rho).into_iter().map(|s| 2.0 * s).collect()
}

/// Primal dissipation `R(rho, j) = sum_E C(j_xy | sigma_xy)`.
pub fn dissipation_r(g: &MarkovGraph, rho: &[f64], j: &[f64]) -> ExtReal {
    sigma(g, rho).iter().zip(j).map(|(&s, &f)| 2.0 * perspective(f, s)).sum()
}

/// Dual dissipation along the gradient of `H(. | pi^F)` for the tilted graph,
/// in the form `sum_E pi^F_x kappa^F_xy (sqrt(u^F_x) - sqrt(u^F_y))^2`.
pub fn dissipation_rstar_grad(g: &MarkovGraph, tilt: &Tilt, rho: &[f64]) -> Result<f64> {
    let gf = tilt_kernel(g, tilt)?;
    Ok(rstar_grad_untilted(&gf, rho))
}

pub(crate) fn rstar_grad_untilted(g: &MarkovGraph, rho: &[f64]) -> f64 {
    g.edges
        .iter()
        .map(|e| {
            let dx = (rho[e.x] / g.pi[e.x]).sqrt();
            let dy = (rho[e.y] / g.pi[e.y]).sqrt();
            let w = (g.pi[e.x] * e.k_xy * g.pi[e.y] * e.k_yx).sqrt();
            2.0 * w * (dx - dy).powi(2)
        })
        .sum()
}

/// Per-edge primal dissipation `C(j | sigma)` at a single state, double-directed.
pub fn dissipation_r_pairwise(g: &MarkovGraph, rho: &[f64], j: &[f64]) -> Vec<ExtReal> {
    sigma(g, rho).iter().zip(j).map(|(&s, &f)| 2.0 * perspective(f, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn two_node(p: f64, k12: f64) -> MarkovGraph {
        let pi = vec![p, 1.0 - p];
        let k21 = p * k12 / (1.0 - p);
        MarkovGraph::new(MarkovGraph::default_ids(2), pi, &[(0, 1, k12), (1, 0, k21)]).unwrap()
    }

    #[test]
    fn detailed_balance_examples() {
        let g = two_node(0.5, 1.0);
        assert!(g.check_detailed_balance(1e-12).holds);
        let g = MarkovGraph::new(MarkovGraph::default_ids(2), vec![1.0 / 3.0, 2.0 / 3.0], &[(0, 1, 2.0), (1, 0, 1.0)])
            .unwrap();
        assert!(g.check_detailed_balance(1e-12).holds);
        let g =
            MarkovGraph::unchecked(MarkovGraph::default_ids(2), vec![0.5, 0.5], &[(0, 1, 2.0), (1, 0, 1.0)]).unwrap();
        let r = g.check_detailed_balance(1e-10);
        assert!(!r.holds);
        assert_relative_eq!(r.residual, 1.0 / 3.0, max_relative = 1e-15);
        assert_eq!(r.worst_pair, Some((0, 1)));
        assert!(MarkovGraph::new(MarkovGraph::default_ids(2), vec![0.5, 0.5], &[(0, 1, 2.0), (1, 0, 1.0)]).is_err());
    }

    #[test]
    fn construction_errors() {
        let ids = MarkovGraph::default_ids(2);
        assert!(MarkovGraph::new(ids.clone(), vec![0.5, 0.6], &[]).is_err());
        assert!(MarkovGraph::new(ids.clone(), vec![1.0, 0.0], &[]).is_err());
        assert!(MarkovGraph::new(ids.clone(), vec![0.5, 0.5], &[(0, 0, 1.0)]).is_err());
        assert!(MarkovGraph::new(ids.clone(), vec![0.5, 0.5], &[(0, 1, 1.0)]).is_err());
        assert!(MarkovGraph::new(ids, vec![0.5, 0.5], &[(0, 1, 1.0), (0, 1, 1.0)]).is_err());
    }

    #[test]
    fn activity_split_examples() {
        let g = MarkovGraph::new(MarkovGraph::default_ids(2), vec![1.0 / 3.0, 2.0 / 3.0], &[(0, 1, 2.0), (1, 0, 1.0)])
            .unwrap();
        let (a, s) = activity_split(&g).unwrap();
        assert_relative_eq!(a[(0, 1)], 2f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(s[(0, 1)], 2f64.ln(), max_relative = 1e-15);
        assert_relative_eq!(s[(0, 1)], (2.0f64 / 3.0).ln() - (1.0f64 / 3.0).ln(), max_relative = 1e-10);
        assert_relative_eq!(a[(0, 1)] * (0.5 * s[(0, 1)]).exp(), 2.0, max_relative = 1e-15);
        let sym = two_node(0.5, 3.0);
        let (_, s) = activity_split(&sym).unwrap();
        assert_eq!(s[(0, 1)], 0.0);
        let oneway = MarkovGraph::unchecked(MarkovGraph::default_ids(2), vec![0.5, 0.5], &[(0, 1, 1.0)]).unwrap();
        assert!(matches!(activity_split(&oneway), Err(Error::InvalidKernel(_))));
    }

    #[test]
    fn flux_examples() {
        let g = two_node(0.5, 1.0);
        assert_eq!(master_flux(&g, &[0.5, 0.5]), vec![0.0]);
        assert_eq!(master_flux(&g, &[1.0, 0.0]), vec![0.5]);
        assert_eq!(master_flux(&g, &[3.0, 0.0]), vec![1.5]);
        let d = divergence(&g, &[0.5]);
        // d rho/dt = -div j, master equation gives (-1, 1) at rho = (1, 0)
        assert_eq!(d, vec![1.0, -1.0]);
    }

    #[test]
    fn kinetic_relation_matches_master_flux() {
        let g = two_node(0.3, 2.0);
        let rho = [0.8, 0.2];
        let xi = entropic_force(&g, &rho);
        let j1 = kinetic_relation(&g, &rho, &xi);
        let j2 = master_flux(&g, &rho);
        assert_relative_eq!(j1[0], j2[0], max_relative = 1e-12);
        let neg: Vec<f64> = xi.iter().map(|x| -x).collect();
        assert_relative_eq!(kinetic_relation(&g, &rho, &neg)[0], -j1[0], max_relative = 1e-15);
        assert_eq!(kinetic_relation(&g, &rho, &[0.0]), vec![0.0]);
    }

    #[test]
    fn dissipation_examples() {
        let g = two_node(0.5, 1.0);
        let flat = Tilt::zero(2);
        let pi = [0.5, 0.5];
        assert_eq!(dissipation_r(&g, &pi, &master_flux(&g, &pi)), 0.0);
        assert_eq!(dissipation_rstar_grad(&g, &flat, &pi).unwrap(), 0.0);
        assert!(dissipation_r(&g, &[1.0, 0.0], &[0.1]).is_infinite());
        assert_relative_eq!(dissipation_rstar_grad(&g, &flat, &[1.0, 0.0]).unwrap(), 2.0, max_relative = 1e-15);
    }

    #[test]
    fn rstar_equals_dual_at_gradient() {
        // sum_E sigma C*(Xi) at the entropic force, for a non-uniform pi
        let g = two_node(0.2, 1.7);
        let rho = [0.6, 0.4];
        let xi = entropic_force(&g, &rho);
        let s = sigma(&g, &rho);
        let dual = 2.0 * s[0] * crate::cosh_core::cosh_dual(xi[0]);
        assert_relative_eq!(rstar_grad_untilted(&g, &rho), dual, max_relative = 1e-12);
    }

    #[test]
    fn connectivity() {
        let g =
            MarkovGraph::new(MarkovGraph::default_ids(3), vec![0.2, 0.3, 0.5], &[(0, 1, 3.0), (1, 0, 2.0)]).unwrap();
        assert!(!g.is_connected());
        assert!(two_node(0.5, 1.0).is_connected());
    }
}

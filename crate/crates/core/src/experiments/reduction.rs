//! Capacity reduction and two-terminal epsilon convergence.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::Value;

use super::{decreasing, eps_list_ok, params, rel_err, require, Check, Ctx, Job};
use crate::error::Result;
use crate::fixtures::random_two_terminal;
use crate::io::Table;
use crate::network_reduction::{
    capacity, epsilon_convergence, fitted_relaxation_rate, limit_two_state, n_chain_conductance, reduce_to_capacity,
    TwoTerminalNetwork,
};
use crate::numerics::loglog_slope;

/// Nearest-neighbour rates if the network is a uniform-`pi` path `0 - 1 - ... - n-1`
/// with terminals at its ends.
fn chain_kappas(n: &TwoTerminalNetwork) -> Option<Vec<f64>> {
    let g = &n.graph;
    let len = g.len();
    let uniform = g.pi().iter().all(|&p| (p - g.pi()[0]).abs() <= 1e-15);
    let path = g.edges().len() == len - 1 && g.edges().iter().all(|e| e.y == e.x + 1 && e.k_xy == e.k_yx);
    (uniform && path && n.a == 0 && n.b == len - 1).then(|| g.edges().iter().map(|e| e.k_xy).collect())
}

/// Series combination of the pair conductances of a chain: an oracle
/// independent of the linear solve.
fn chain_series(n: &TwoTerminalNetwork, f: &[f64]) -> Result<f64> {
    let k = n.k_f(f)?;
    Ok(1.0 / k.iter().map(|c| 1.0 / c).sum::<f64>())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReduceParams {
    #[serde(default = "d_networks")]
    networks: Vec<String>,
    #[serde(default = "d_random")]
    random_networks: usize,
    #[serde(default = "d_min_nodes")]
    min_nodes: usize,
    #[serde(default = "d_max_nodes")]
    max_nodes: usize,
    #[serde(default = "d_orders")]
    orders: usize,
    seed: u64,
    #[serde(default = "d_tol")]
    tol: f64,
}

fn d_networks() -> Vec<String> {
    vec!["fixture:three_chain".into(), "fixture:six_chain".into()]
}
fn d_random() -> usize {
    50
}
fn d_min_nodes() -> usize {
    3
}
fn d_max_nodes() -> usize {
    20
}
fn d_orders() -> usize {
    3
}
fn d_tol() -> f64 {
    1e-9
}

/// Largest relative deviation of star-mesh elimination from the Dirichlet
/// capacity over `orders` elimination orders (natural order first).
fn order_deviation(n: &TwoTerminalNetwork, f: &[f64], orders: usize, rng: &mut ChaCha8Rng) -> Result<(f64, f64, f64)> {
    let cap = capacity(n, f)?.capacity;
    let mut order = n.fast_nodes();
    let mut worst: f64 = 0.0;
    let mut first = f64::NAN;
    for i in 0..orders {
        if i > 0 {
            order.shuffle(rng);
        }
        let sm = reduce_to_capacity(n, f, &order)?;
        if i == 0 {
            first = sm;
        }
        worst = worst.max(rel_err(sm, cap));
    }
    Ok((cap, first, worst))
}

pub(super) fn reduce(ctx: &Ctx, p: &Value) -> Result<Job> {
    let p: ReduceParams = params(p)?;
    require(p.orders >= 1, "orders must be at least 1")?;
    require(p.min_nodes >= 2 && p.min_nodes <= p.max_nodes, "need 2 <= min_nodes <= max_nodes")?;
    let named = p.networks.iter().map(|s| Ok((s.clone(), ctx.network(s)?))).collect::<Result<Vec<_>>>()?;
    Ok(Box::new(move |budget, out| {
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let mut t = Table::new(
            "capacities",
            &["network", "nodes", "capacity", "star_mesh", "order_deviation", "literal_chain"],
        );
        for (name, n) in &named {
            let f = vec![0.0; n.graph.len()];
            let (cap, sm, dev) = order_deviation(n, &f, p.orders, &mut rng)?;
            let chain = chain_kappas(n);
            let literal = match &chain {
                Some(k) => n_chain_conductance(k, &f)?.literal,
                None => f64::NAN,
            };
            t.push(vec![name.as_str().into(), n.graph.len().into(), cap.into(), sm.into(), dev.into(), literal.into()]);
            out.checks.push(Check::at_most(&format!("{name}: elimination orders"), dev, p.tol));
            if chain.is_some() {
                let oracle = chain_series(n, &f)?;
                out.checks.push(Check::at_most(&format!("{name}: series oracle"), rel_err(cap, oracle), 1e-12));
            }
            if name == "fixture:three_chain" {
                out.checks.push(Check::at_most("three_chain: Dirichlet capacity = 1/4", (cap - 0.25).abs(), 1e-12));
                out.checks.push(Check::at_most("three_chain: star-mesh capacity = 1/4", (sm - 0.25).abs(), 1e-12));
                out.note("three_chain_literal", literal);
            }
        }
        let mut worst: f64 = 0.0;
        for i in 0..p.random_networks {
            budget.check(&format!("random network {i}"))?;
            let size = rng.gen_range(p.min_nodes..=p.max_nodes);
            let n = random_two_terminal(size, p.seed.wrapping_add(1 + i as u64))?;
            let f: Vec<f64> =
                (0..size).map(|x| if n.is_terminal(x) { 0.0 } else { rng.gen_range(-1.0..1.0) }).collect();
            let (cap, sm, dev) = order_deviation(&n, &f, p.orders, &mut rng)?;
            worst = worst.max(dev);
            t.push(vec![format!("random:{i}").into(), size.into(), cap.into(), sm.into(), dev.into(), f64::NAN.into()]);
        }
        if p.random_networks > 0 {
            out.checks.push(Check::at_most("random networks: Dirichlet vs star-mesh", worst, p.tol));
        }
        out.tables.push(t);
        Ok(())
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainParams {
    #[serde(default = "d_networks")]
    networks: Vec<String>,
    #[serde(default = "d_alpha")]
    alpha: f64,
    #[serde(default = "d_eps_list")]
    eps_list: Vec<f64>,
    #[serde(default = "d_t_end")]
    t_end: f64,
    #[serde(default = "d_n_grid")]
    n_grid: usize,
    #[serde(default = "d_slope")]
    slope_range: (f64, f64),
    #[serde(default = "d_fit_eps")]
    fit_eps: f64,
    #[serde(default = "d_fit_t_end")]
    fit_t_end: f64,
    #[serde(default = "d_n_grid")]
    fit_grid: usize,
    #[serde(default = "d_rate_tol")]
    rate_tol: f64,
}

fn d_alpha() -> f64 {
    1.0
}
fn d_eps_list() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3]
}
fn d_t_end() -> f64 {
    2.0
}
fn d_n_grid() -> usize {
    200
}
fn d_slope() -> (f64, f64) {
    (0.7, 1.3)
}
fn d_fit_eps() -> f64 {
    1e-3
}
fn d_fit_t_end() -> f64 {
    5.0
}
fn d_rate_tol() -> f64 {
    0.05
}

pub(super) fn chain(ctx: &Ctx, p: &Value) -> Result<Job> {
    let p: ChainParams = params(p)?;
    eps_list_ok(&p.eps_list)?;
    require(p.eps_list.len() >= 2, "eps_list needs at least two values")?;
    require(p.t_end > 0.0 && p.fit_t_end > 0.0 && p.fit_eps > 0.0, "times and fit_eps must be positive")?;
    require(p.n_grid > 0 && p.fit_grid >= 8, "n_grid must be positive and fit_grid at least 8")?;
    let named = p.networks.iter().map(|s| Ok((s.clone(), ctx.network(s)?))).collect::<Result<Vec<_>>>()?;
    Ok(Box::new(move |budget, out| {
        let mut conv = Table::new("convergence", &["network", "alpha", "eps", "sup_error"]);
        let mut rates = Table::new(
            "rates",
            &[
                "network",
                "alpha",
                "capacity",
                "predicted_rate",
                "fitted_rate",
                "predicted_ratio",
                "fitted_ratio",
                "exp_minus_alpha",
            ],
        );
        for (name, n) in &named {
            let len = n.graph.len();
            let mut rho0 = vec![0.0; len];
            rho0[n.a] = 1.0;
            let mut base: Option<(f64, f64)> = None;
            for alpha in [0.0, p.alpha] {
                budget.check(&format!("{name} with alpha = {alpha}"))?;
                let f: Vec<f64> = (0..len).map(|x| if n.is_terminal(x) { 0.0 } else { alpha }).collect();
                let rows = epsilon_convergence(n, &f, &rho0, p.t_end, &p.eps_list, p.n_grid)?;
                let errs: Vec<f64> = rows.iter().map(|r| r.sup_error).collect();
                for r in &rows {
                    conv.push(vec![name.as_str().into(), alpha.into(), r.eps.into(), r.sup_error.into()]);
                }
                let slope = loglog_slope(&p.eps_list, &errs);
                out.checks.push(Check::holds(&format!("{name}, alpha = {alpha}: error decreasing"), decreasing(&errs)));
                out.checks.push(Check::between(
                    &format!("{name}, alpha = {alpha}: slope"),
                    slope,
                    p.slope_range.0,
                    p.slope_range.1,
                ));

                let lim = limit_two_state(n, &f)?;
                let predicted = lim.relaxation_rate();
                let fitted = fitted_relaxation_rate(n, &f, p.fit_eps, p.fit_t_end, p.fit_grid)?;
                let (pr, fr) = match base {
                    None => {
                        base = Some((predicted, fitted));
                        (1.0, 1.0)
                    }
                    Some((p0, f0)) => (predicted / p0, fitted / f0),
                };
                rates.push(vec![
                    name.as_str().into(),
                    alpha.into(),
                    lim.capacity.into(),
                    predicted.into(),
                    fitted.into(),
                    pr.into(),
                    fr.into(),
                    (-alpha).exp().into(),
                ]);
                if alpha != 0.0 {
                    out.checks.push(Check::at_most(
                        &format!("{name}: fitted vs predicted tilt ratio"),
                        rel_err(fr, pr),
                        p.rate_tol,
                    ));
                    out.checks.push(Check::above(
                        &format!("{name}: tilt changes the rate"),
                        (1.0 - fr).abs(),
                        2.0 * p.rate_tol,
                    ));
                    if name == "fixture:three_chain" {
                        // both edges touch the tilted node: factor e^{-alpha/2}
                        out.checks.push(Check::at_most(
                            "three_chain: ratio = e^{-alpha/2}",
                            rel_err(pr, (-0.5 * alpha).exp()),
                            1e-12,
                        ));
                    }
                    out.note(&format!("{name}: literal_exp_minus_alpha_deviation"), rel_err(fr, (-alpha).exp()));
                }
            }
        }
        out.tables.extend([conv, rates]);
        Ok(())
    }))
}

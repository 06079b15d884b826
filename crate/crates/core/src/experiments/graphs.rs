//! Experiments on detailed-balance graphs.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::Value;

use super::{as_config, decreasing, params, require, uniform_grid, Check, Ctx, Job};
use crate::error::Result;
use crate::graph_system::{
    self, detilt_quadratic, edp_functional_with, ldp_rate, tilt_independence_check_with, tilt_kernel, typical_path,
    CustomTheta, EdpOptions, EdpRule, GillespieOptions, Initial, MarkovGraph, OneWayPath, Tilt, TiltRule, Trajectory,
};
use crate::io::{trajectory_table, Table};
use crate::numerics::loglog_slope;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TiltSpec {
    f: Vec<f64>,
    #[serde(default = "d_symmetric")]
    rule: String,
}

fn d_symmetric() -> String {
    "symmetric".into()
}

impl TiltSpec {
    fn build(&self, g: &MarkovGraph) -> Result<Tilt> {
        require(self.f.len() == g.len(), "tilt f must have one entry per node")?;
        Ok(Tilt::new(self.f.clone(), TiltRule::from_name(&self.rule).map_err(as_config)?))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EvolveParams {
    graph: String,
    rho0: Vec<f64>,
    t_end: f64,
    #[serde(default = "d_n_out")]
    n_out: usize,
    #[serde(default)]
    tilt: Option<TiltSpec>,
}

fn d_n_out() -> usize {
    100
}

pub(super) fn evolve(ctx: &Ctx, p: &Value) -> Result<Job> {
    let p: EvolveParams = params(p)?;
    let g = ctx.graph(&p.graph)?;
    require(p.t_end > 0.0 && p.t_end.is_finite(), "t_end must be positive")?;
    require(p.n_out > 0, "n_out must be positive")?;
    require(
        p.rho0.len() == g.len() && p.rho0.iter().all(|&r| r >= 0.0),
        "rho0 must be non-negative, one entry per node",
    )?;
    let g = match &p.tilt {
        Some(t) => tilt_kernel(&g, &t.build(&g)?).map_err(as_config)?,
        None => g,
    };
    Ok(Box::new(move |budget, out| {
        let grid = uniform_grid(p.t_end, p.n_out);
        let tr = graph_system::evolve(&g, &p.rho0, p.t_end, &grid)?;
        budget.check("output")?;
        let m0: f64 = p.rho0.iter().sum();
        let drift = tr.states.iter().map(|s| (s.iter().sum::<f64>() - m0).abs()).fold(0.0, f64::max);
        out.checks.push(Check::at_most("mass_drift", drift, 1e-9 * m0.max(1.0)));
        out.note("continuity_residual", tr.continuity_residual(&g));
        out.note("final_state", tr.states.last().cloned().unwrap_or_default());
        out.tables.push(trajectory_table(&g, &tr));
        Ok(())
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EdpParams {
    graphs: Vec<String>,
    #[serde(default = "d_dt_list")]
    dt_list: Vec<f64>,
    #[serde(default = "d_t_one")]
    t_end: f64,
    #[serde(default = "d_perturbation")]
    perturbation: f64,
    #[serde(default = "d_random")]
    random_trajectories: usize,
    seed: u64,
    #[serde(default = "d_order")]
    order_range: (f64, f64),
    #[serde(default = "d_chain_tol")]
    chain_rule_tol: f64,
    /// Continuity residual allowed for sampled exact solutions, whose
    /// interval-averaged flux is only second-order consistent.
    #[serde(default = "d_sampled_tol")]
    sampled_continuity_tol: f64,
}

fn d_dt_list() -> Vec<f64> {
    vec![1e-2, 1e-3, 1e-4]
}
fn d_t_one() -> f64 {
    1.0
}
fn d_perturbation() -> f64 {
    1.5
}
fn d_random() -> usize {
    100
}
fn d_order() -> (f64, f64) {
    (0.8, 1.2)
}
fn d_chain_tol() -> f64 {
    1e-9
}
fn d_sampled_tol() -> f64 {
    1e-2
}

/// Density `u0 = rho0 / pi` raised on node 0, lowered elsewhere. Since
/// `u_t` stays within the range of `u0`, the flux-scaled trajectory
/// `u0 + s (u_t - u0)` stays positive when `max u0 / min u0 < s / (s - 1)`.
fn default_rho0(g: &MarkovGraph, s: f64) -> Vec<f64> {
    let ratio = if s > 1.0 { (1.0 + 0.8 / (s - 1.0)).min(3.0) } else { 3.0 };
    let a = (ratio - 1.0) / (ratio + 1.0);
    let r: Vec<f64> = g.pi().iter().enumerate().map(|(x, p)| p * if x == 0 { 1.0 + a } else { 1.0 - a }).collect();
    let total: f64 = r.iter().sum();
    r.into_iter().map(|v| v / total).collect()
}

/// Random admissible trajectory: positive start, bounded random fluxes
/// integrated by exact discrete continuity.
fn random_admissible(g: &MarkovGraph, rng: &mut ChaCha8Rng, steps: usize, t_end: f64) -> Result<Trajectory> {
    let n = g.len();
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let rho0: Vec<f64> = raw.iter().map(|r| r / total).collect();
    let min = rho0.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut deg = vec![0usize; n];
    for e in g.edges() {
        deg[e.x] += 1;
        deg[e.y] += 1;
    }
    let dmax = deg.into_iter().max().unwrap_or(1).max(1) as f64;
    // per-node outflow stays below 0.4 min(rho0)/T
    let jmax = 0.2 * min / (dmax * t_end);
    let times = uniform_grid(t_end, steps);
    let fluxes = (0..=steps).map(|_| g.edges().iter().map(|_| rng.gen_range(-jmax..jmax)).collect()).collect();
    Trajectory::from_fluxes(g, times, rho0, fluxes)
}

pub(super) fn edp(ctx: &Ctx, p: &Value) -> Result<Job> {
    let p: EdpParams = params(p)?;
    require(!p.graphs.is_empty(), "graphs must be non-empty")?;
    require(
        p.dt_list.len() >= 2 && decreasing(&p.dt_list) && p.dt_list.iter().all(|&d| d > 0.0),
        "dt_list must be positive and strictly decreasing",
    )?;
    require(p.t_end > 0.0 && p.sampled_continuity_tol > 0.0, "t_end and sampled_continuity_tol must be positive")?;
    let graphs = p.graphs.iter().map(|s| Ok((s.clone(), ctx.graph(s)?))).collect::<Result<Vec<_>>>()?;
    require(graphs.iter().all(|(_, g)| g.len() >= 2), "graphs need at least two nodes")?;
    Ok(Box::new(move |budget, out| {
        let opts = EdpOptions { rule: EdpRule::LeftPoint, continuity_tol: 1e-5 };
        let sampled = EdpOptions { continuity_tol: p.sampled_continuity_tol, ..opts };
        let mut conv = Table::new(
            "convergence",
            &["graph", "dt", "i_t", "energy_start", "energy_end", "integral_r", "integral_rstar"],
        );
        let mut pert = Table::new("perturbed", &["graph", "factor", "i_t"]);
        let mut rnd = Table::new("random_admissible", &["graph", "sample", "i_t"]);
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let mut min_random = f64::INFINITY;
        let mut min_perturbed = f64::INFINITY;
        for (name, g) in &graphs {
            let tilt = Tilt::zero(g.len());
            let rho0 = default_rho0(g, p.perturbation);
            let mut abs_i = Vec::new();
            for &dt in &p.dt_list {
                budget.check(&format!("EDP on {name} at dt = {dt}"))?;
                let steps = (p.t_end / dt).round() as usize;
                let tr = graph_system::evolve(g, &rho0, p.t_end, &uniform_grid(p.t_end, steps))?;
                let r = edp_functional_with(g, &tilt, &tr, sampled)?;
                abs_i.push(r.i_t.abs());
                conv.push(vec![
                    name.as_str().into(),
                    dt.into(),
                    r.i_t.into(),
                    r.energy_start.into(),
                    r.energy_end.into(),
                    r.integral_r.into(),
                    r.integral_rstar.into(),
                ]);
                if dt == p.dt_list[1] {
                    let scaled = tr.fluxes.iter().map(|j| j.iter().map(|v| v * p.perturbation).collect()).collect();
                    let tp = Trajectory::from_fluxes(g, tr.times.clone(), rho0.clone(), scaled)?;
                    let rp = edp_functional_with(g, &tilt, &tp, opts)?;
                    min_perturbed = min_perturbed.min(rp.i_t);
                    pert.push(vec![name.as_str().into(), p.perturbation.into(), rp.i_t.into()]);
                }
            }
            let order = loglog_slope(&p.dt_list, &abs_i);
            out.checks.push(Check::holds(&format!("{name}: |I_T| decreasing"), decreasing(&abs_i)));
            out.checks.push(Check::between(&format!("{name}: order"), order, p.order_range.0, p.order_range.1));
            budget.check(&format!("random trajectories on {name}"))?;
            for s in 0..p.random_trajectories {
                let tr = random_admissible(g, &mut rng, 50, p.t_end)?;
                let r = edp_functional_with(g, &tilt, &tr, opts)?;
                min_random = min_random.min(r.i_t);
                rnd.push(vec![name.as_str().into(), s.into(), r.i_t.into()]);
            }
        }
        out.checks.push(Check::above("perturbed I_T", min_perturbed, 0.0));
        out.checks.push(Check::at_least("chain-rule bound", min_random, -p.chain_rule_tol));
        out.tables.extend([conv, pert, rnd]);
        Ok(())
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TiltParams {
    graph: String,
    #[serde(default = "d_samples")]
    samples: usize,
    seed: u64,
}

fn d_samples() -> usize {
    100
}

fn harmonic_theta(n: usize) -> Result<TiltRule> {
    let theta = Arc::new(|_: usize, _: usize, a: f64, b: f64| 2.0 * a * b / (a + b));
    Ok(TiltRule::Custom(CustomTheta::new(theta, true, true, n)?))
}

fn ulps_apart(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / (f64::EPSILON * a.abs().max(b.abs()))
    }
}

pub(super) fn tilt(ctx: &Ctx, p: &Value) -> Result<Job> {
    let p: TiltParams = params(p)?;
    let g = ctx.graph(&p.graph)?;
    require(p.samples > 0, "samples must be positive")?;
    Ok(Box::new(move |budget, out| {
        let n = g.len();
        let rules = vec![
            TiltRule::Symmetric,
            TiltRule::Chemical,
            TiltRule::ProductAB,
            TiltRule::Metropolis,
            harmonic_theta(n)?,
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let mut table = Table::new(
            "rules",
            &["rule", "detailed_balance_residual", "shift_invariant", "shift_deviation", "monotone", "evolution_sup"],
        );
        let base_activity = g.activity();
        let mut activity_ulps: f64 = 0.0;
        for rule in &rules {
            budget.check(&format!("rule {}", rule.name()))?;
            let mut worst: f64 = 0.0;
            for _ in 0..p.samples {
                let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let gt = tilt_kernel(&g, &Tilt::new(f, rule.clone()))?;
                worst = worst.max(gt.check_detailed_balance(1e-10).residual);
                if matches!(rule, TiltRule::Symmetric) {
                    for (a, b) in gt.activity().iter().zip(&base_activity) {
                        activity_ulps = activity_ulps.max(ulps_apart(*a, *b));
                    }
                }
            }
            let rep = tilt_independence_check_with(&g, rule, p.samples, p.seed)?;
            out.checks.push(Check::at_most(&format!("{}: detailed balance", rule.name()), worst, 1e-10));
            match rule {
                TiltRule::Symmetric => {
                    let e = rep.evolution_sup.unwrap_or(f64::NAN);
                    out.checks.push(Check::at_most("symmetric: evolution equivalence", e, 1e-8));
                    out.checks.push(Check::holds("symmetric: shift invariant", rep.shift_invariant));
                }
                TiltRule::Chemical => {
                    out.checks.push(Check::holds(
                        "chemical: shift condition fails (witnessed)",
                        !rep.shift_invariant && rep.shift_witness.is_some(),
                    ));
                }
                _ => {}
            }
            table.push(vec![
                rule.name().into(),
                worst.into(),
                rep.shift_invariant.into(),
                rep.shift_deviation.into(),
                rep.monotone.into(),
                rep.evolution_sup.unwrap_or(f64::NAN).into(),
            ]);
        }
        out.checks.push(Check::at_most("symmetric: activity invariance (ulp)", activity_ulps, 4.0));

        budget.check("de-tilting")?;
        let mut det = Table::new("detilt", &["sample", "edge", "xi", "quadrature", "cosh_form", "relative_error"]);
        let mut worst: f64 = 0.0;
        for s in 0..p.samples.min(20) {
            let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
            let tot: f64 = raw.iter().sum();
            let rho: Vec<f64> = raw.iter().map(|r| r / tot).collect();
            let edges = detilt_quadratic(&g, &Tilt::symmetric(f))?.evaluate_at_gradient(&rho)?;
            for (e, d) in edges.iter().enumerate() {
                let r = (d.quadrature - d.cosh_form).abs() / d.cosh_form.abs().max(1e-12);
                worst = worst.max(r);
                det.push(vec![s.into(), e.into(), d.xi.into(), d.quadrature.into(), d.cosh_form.into(), r.into()]);
            }
        }
        out.checks.push(Check::at_most("de-tilting quadrature vs cosh form", worst, 1e-8));
        out.tables.extend([table, det]);
        Ok(())
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GillespieParams {
    graph: String,
    #[serde(default = "d_particles")]
    n_particles: u64,
    #[serde(default = "d_t_100")]
    t_end: f64,
    seed: u64,
    #[serde(default = "d_n_out")]
    n_out: usize,
    #[serde(default = "d_flux_factor")]
    perturbation: f64,
}

fn d_particles() -> u64 {
    10_000
}
fn d_t_100() -> f64 {
    100.0
}
fn d_flux_factor() -> f64 {
    1.2
}

pub(super) fn gillespie(ctx: &Ctx, p: &Value) -> Result<Job> {
    let p: GillespieParams = params(p)?;
    let g = ctx.graph(&p.graph)?;
    require(p.n_particles > 0 && p.t_end > 0.0 && p.n_out > 0, "n_particles, t_end and n_out must be positive")?;
    require(p.perturbation > 0.0 && p.perturbation != 1.0, "perturbation factor must be positive and differ from 1")?;
    Ok(Box::new(move |budget, out| {
        let opts = GillespieOptions {
            n_particles: p.n_particles,
            t_end: p.t_end,
            seed: p.seed,
            n_out: p.n_out,
            initial: Initial::Stationary,
        };
        let run = graph_system::gillespie(&g, &opts)?;
        budget.check("reproducibility run")?;
        let again = graph_system::gillespie(&g, &opts)?;
        let same = run.digest == again.digest && run.path == again.path && run.occupation == again.occupation;
        out.checks.push(Check::holds("fixed seed reproducible", same));

        let np = p.n_particles as f64;
        let last = run.path.states.last().cloned().unwrap_or_default();
        let mut emp = Table::new("empirical", &["node", "pi", "final", "time_average", "z_score"]);
        let mut zmax: f64 = 0.0;
        for (x, id) in g.nodes().iter().enumerate() {
            let pi = g.pi()[x];
            let z = (last[x] - pi).abs() / (pi * (1.0 - pi) / np).sqrt();
            zmax = zmax.max(z);
            emp.push(vec![id.as_str().into(), pi.into(), last[x].into(), run.occupation[x].into(), z.into()]);
        }
        out.checks.push(Check::at_most("stationary law z-score", zmax, 3.0));

        budget.check("rate functional")?;
        let mut rho0 = vec![0.0; g.len()];
        rho0[0] = 1.0;
        let times = uniform_grid(1.0, 100);
        let typical = typical_path(&g, &rho0, &times);
        let r_typ = ldp_rate(&g, &typical)?;
        let scaled = typical
            .oneway
            .iter()
            .map(|f| f.iter().map(|&(a, b)| (a * p.perturbation, b * p.perturbation)).collect())
            .collect();
        let perturbed = OneWayPath::from_oneway(&g, times.clone(), rho0.clone(), scaled);
        let r_pert = ldp_rate(&g, &perturbed)?;
        let r_emp = ldp_rate(&g, &run.path)?;
        out.checks.push(Check::at_most("typical path rate", r_typ.abs(), 1e-12));
        out.checks.push(Check::above("perturbed path rate", r_pert, 0.0));
        let mut rates = Table::new("rate_functional", &["path", "rate"]);
        rates.push(vec!["typical".into(), r_typ.into()]);
        rates.push(vec!["perturbed".into(), r_pert.into()]);
        rates.push(vec!["empirical".into(), r_emp.into()]);
        out.note("events", run.events);
        out.note("digest", run.digest.clone());
        out.tables.extend([emp, rates]);
        Ok(())
    }))
}

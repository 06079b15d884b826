//! One-dimensional Fokker-Planck experiments.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::Value;

use super::{as_config, decreasing, eps_list_ok, params, rel_err, require, uniform_grid, Check, Ctx, Job};
use crate::error::Result;
use crate::fokker_planck_1d::{
    fv_evolve, kramers_constants, kramers_experiment, membrane_experiment, membrane_sigma, sg_flux, upwind_flux,
    FVProblem, Grid, KramersOptions, KramersSetup, MembraneInitial, MembraneOptions, MembraneSetup, Scheme, Stepping,
};
use crate::io::Table;
use crate::numerics::loglog_slope;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KramersParams {
    #[serde(default = "d_kramers_eps")]
    eps_list: Vec<f64>,
    /// Cubic asymmetry `s` of `(1 - y^2)^2 (1 + s y)`; 0 is the symmetric quartic.
    #[serde(default)]
    asymmetry: f64,
    #[serde(default = "d_one")]
    saddle_tilt: f64,
    #[serde(default = "d_cells")]
    n_cells: usize,
    #[serde(default = "d_dt")]
    dt: f64,
    #[serde(default = "d_two")]
    t_end: f64,
    #[serde(default = "d_out_200")]
    n_out: usize,
    #[serde(default = "d_refinement")]
    refinement: f64,
    #[serde(default = "d_ratio_tol")]
    ratio_tol: f64,
    #[serde(default = "d_watson_tol")]
    watson_tol: f64,
}

fn d_kramers_eps() -> Vec<f64> {
    vec![0.1, 0.05]
}
fn d_one() -> f64 {
    1.0
}
fn d_two() -> f64 {
    2.0
}
fn d_cells() -> usize {
    2000
}
fn d_dt() -> f64 {
    1e-3
}
fn d_out_200() -> usize {
    200
}
fn d_refinement() -> f64 {
    4.0
}
fn d_ratio_tol() -> f64 {
    0.1
}
fn d_watson_tol() -> f64 {
    0.05
}

fn well(eps: f64, s: f64) -> Result<KramersSetup> {
    if s == 0.0 {
        KramersSetup::quartic(eps)
    } else {
        KramersSetup::asymmetric_quartic(eps, s)
    }
}

pub(super) fn kramers(_: &Ctx, p: &Value) -> Result<Job> {
    let p: KramersParams = params(p)?;
    eps_list_ok(&p.eps_list)?;
    require(
        p.n_cells >= 10 && p.dt > 0.0 && p.t_end > 0.0 && p.n_out > 0,
        "n_cells, dt, t_end and n_out must be positive",
    )?;
    require(p.asymmetry.abs() < 0.5, "asymmetry must lie in (-0.5, 0.5)")?;
    for &e in &p.eps_list {
        well(e, p.asymmetry).map_err(as_config)?.validate().map_err(as_config)?;
    }
    Ok(Box::new(move |budget, out| {
        let opts =
            KramersOptions { n_cells: p.n_cells, dt: p.dt, t_end: p.t_end, n_out: p.n_out, refinement: p.refinement };
        let s = p.asymmetry;
        let h = p.saddle_tilt;
        let base = kramers_experiment(|e| well(e, s), &p.eps_list, &opts)?;
        budget.check("tilted run")?;
        let tilted = kramers_experiment(|e| Ok(well(e, s)?.with_saddle_tilt(h)), &p.eps_list, &opts)?;
        budget.check("summary")?;
        let mut t = Table::new(
            "kramers",
            &[
                "eps",
                "saddle_tilt",
                "sup_error",
                "fitted_rate",
                "predicted_rate",
                "tau_ratio",
                "gamma_a_laplace",
                "gamma_a_quadrature",
            ],
        );
        for (tilt, rows) in [(0.0, &base), (h, &tilted)] {
            for r in rows.iter() {
                t.push(vec![
                    r.eps.into(),
                    tilt.into(),
                    r.sup_error.into(),
                    r.fitted_rate.into(),
                    r.predicted_rate.into(),
                    r.tau_ratio.into(),
                    r.gamma_a.into(),
                    r.gamma_a_eps.into(),
                ]);
            }
        }
        let errs: Vec<f64> = base.iter().map(|r| r.sup_error).collect();
        out.checks.push(Check::holds("well-mass error decreasing in eps", decreasing(&errs)));
        let target = (-h).exp();
        let mut ratios = Table::new("tilt_ratio", &["eps", "fitted_ratio", "predicted_ratio", "relative_error"]);
        for (b, tl) in base.iter().zip(&tilted) {
            let r = tl.fitted_rate / b.fitted_rate;
            let e = rel_err(r, target);
            ratios.push(vec![b.eps.into(), r.into(), target.into(), e.into()]);
            out.checks.push(Check::at_most(&format!("eps = {}: saddle tilt ratio vs e^-{h}", b.eps), e, p.ratio_tol));
        }
        let last = &base[base.len() - 1];
        let k = kramers_constants(&well(last.eps, s)?)?;
        out.checks.push(Check::at_most(
            &format!("eps = {}: Watson gamma_a vs quadrature", last.eps),
            rel_err(k.gamma_a, k.gamma_a_eps),
            p.watson_tol,
        ));
        out.checks.push(Check::at_most(
            &format!("eps = {}: Laplace barrier time ratio - 1", last.eps),
            (k.tau_ratio - 1.0).abs(),
            p.watson_tol,
        ));
        out.note("prefactor", k.prefactor);
        out.tables.extend([t, ratios]);
        Ok(())
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MembraneParams {
    #[serde(default = "d_membrane_eps")]
    eps_list: Vec<f64>,
    #[serde(default = "d_n_bulk")]
    n_bulk: usize,
    #[serde(default = "d_n_membrane")]
    n_membrane: usize,
    #[serde(default = "d_dt")]
    dt: f64,
    #[serde(default = "d_one")]
    t_end: f64,
    #[serde(default = "d_out_100")]
    n_out: usize,
    #[serde(default = "d_left_bulk")]
    initial: String,
    #[serde(default = "d_sigma_tol")]
    sigma_tol: f64,
    #[serde(default = "d_alphas")]
    tilt_alphas: Vec<f64>,
    #[serde(default = "d_tilt_tol")]
    tilt_tol: f64,
}

fn d_membrane_eps() -> Vec<f64> {
    vec![0.1, 0.02]
}
fn d_n_bulk() -> usize {
    100
}
fn d_n_membrane() -> usize {
    20
}
fn d_out_100() -> usize {
    100
}
fn d_left_bulk() -> String {
    "left_bulk".into()
}
fn d_sigma_tol() -> f64 {
    0.15
}
fn d_alphas() -> Vec<f64> {
    vec![-1.0, 0.5, 1.0, 2.0]
}
fn d_tilt_tol() -> f64 {
    1e-10
}

pub(super) fn membrane(_: &Ctx, p: &Value) -> Result<Job> {
    let p: MembraneParams = params(p)?;
    eps_list_ok(&p.eps_list)?;
    require(p.eps_list.iter().all(|&e| e < 1.0), "eps must be below 1")?;
    require(
        p.n_bulk >= 4 && p.n_membrane >= 2 && p.dt > 0.0 && p.t_end > 0.0 && p.n_out > 0,
        "grid and time parameters must be positive",
    )?;
    let initial = match p.initial.as_str() {
        "left_bulk" => MembraneInitial::LeftBulk,
        "limit_stationary" => MembraneInitial::LimitStationary,
        s => return Err(super::Error::InvalidConfig(format!("unknown membrane initial state '{s}'"))),
    };
    Ok(Box::new(move |budget, out| {
        let opts = MembraneOptions {
            n_bulk: p.n_bulk,
            n_membrane: p.n_membrane,
            dt: p.dt,
            t_end: p.t_end,
            n_out: p.n_out,
            initial,
        };
        let rows = membrane_experiment(MembraneSetup::linear, &p.eps_list, &opts)?;
        let mut t = Table::new("membrane", &["eps", "l1_error", "sigma_fit", "sigma_limit", "relative_error"]);
        for r in &rows {
            let e = rel_err(r.sigma_fit, r.sigma_limit);
            t.push(vec![r.eps.into(), r.l1_error.into(), r.sigma_fit.into(), r.sigma_limit.into(), e.into()]);
            out.checks.push(Check::at_most(&format!("eps = {}: fitted sigma", r.eps), e, p.sigma_tol));
        }
        let errs: Vec<f64> = rows.iter().map(|r| r.l1_error).collect();
        out.checks.push(Check::holds("bulk L1 error decreasing", decreasing(&errs)));

        budget.check("tilt law")?;
        let (um, up) = (0.7, 1.3);
        let base = membrane_sigma(&MembraneSetup::linear(p.eps_list[0])?, um, up)?;
        let mut law = Table::new("tilt_law", &["alpha", "sigma", "predicted", "relative_error"]);
        let mut worst: f64 = 0.0;
        for &alpha in &p.tilt_alphas {
            let s = MembraneSetup::linear(p.eps_list[0])?.with_tilt(Arc::new(move |x| {
                if x <= 0.0 || x >= 1.0 {
                    0.0
                } else {
                    alpha
                }
            }));
            let sig = membrane_sigma(&s, um, up)?;
            let pred = base * (-alpha).exp();
            let e = rel_err(sig, pred);
            worst = worst.max(e);
            law.push(vec![alpha.into(), sig.into(), pred.into(), e.into()]);
        }
        out.checks.push(Check::at_most("interior tilt law e^-alpha", worst, p.tilt_tol));
        out.tables.extend([t, law]);
        Ok(())
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FvParams {
    #[serde(default = "d_fv_gammas")]
    gammas: Vec<f64>,
    #[serde(default = "d_limit_samples")]
    limit_samples: usize,
    #[serde(default = "d_n_cells")]
    n_cells: usize,
    #[serde(default = "d_random_initial")]
    random_initial: usize,
    seed: u64,
    #[serde(default = "d_fv_gamma")]
    gamma: f64,
    #[serde(default = "d_fv_t_end")]
    t_end: f64,
    #[serde(default = "d_fv_out")]
    n_out: usize,
    #[serde(default = "d_dt")]
    dt: f64,
    #[serde(default = "d_cfl")]
    cfl: f64,
    #[serde(default = "d_slope")]
    slope_range: (f64, f64),
    #[serde(default = "d_mass_tol")]
    mass_tol: f64,
    #[serde(default = "d_energy_slack")]
    energy_slack: f64,
}

fn d_fv_gammas() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3]
}
fn d_limit_samples() -> usize {
    1000
}
fn d_n_cells() -> usize {
    50
}
fn d_random_initial() -> usize {
    20
}
fn d_fv_gamma() -> f64 {
    0.5
}
fn d_fv_t_end() -> f64 {
    0.2
}
fn d_fv_out() -> usize {
    50
}
fn d_cfl() -> f64 {
    0.2
}
fn d_slope() -> (f64, f64) {
    (0.8, 1.2)
}
fn d_mass_tol() -> f64 {
    1e-12
}
fn d_energy_slack() -> f64 {
    1e-13
}

pub(super) fn fv(_: &Ctx, p: &Value) -> Result<Job> {
    let p: FvParams = params(p)?;
    require(
        p.gammas.len() >= 2 && decreasing(&p.gammas) && p.gammas.iter().all(|&g| g > 0.0),
        "gammas must be positive and strictly decreasing",
    )?;
    require(
        p.n_cells >= 3 && p.n_out > 0 && p.t_end > 0.0 && p.dt > 0.0 && p.gamma > 0.0,
        "FV parameters must be positive",
    )?;
    require(p.cfl > 0.0 && p.cfl < 1.0, "cfl must lie in (0, 1)")?;
    Ok(Box::new(move |budget, out| {
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        // SG -> upwind at the level of face fluxes, fixed (u_x, u_y, Xi) samples
        let samples: Vec<(f64, f64, f64, f64)> = (0..p.limit_samples)
            .map(|_| {
                (rng.gen_range(0.5..2.0), rng.gen_range(0.1..2.0), rng.gen_range(0.1..2.0), rng.gen_range(-1.0..1.0))
            })
            .collect();
        let mut lim = Table::new("sg_upwind", &["gamma", "max_deviation", "deviation_over_gamma"]);
        let mut devs = Vec::new();
        for &g in &p.gammas {
            let d = samples
                .iter()
                .map(|&(tau, ux, uy, xi)| (sg_flux(tau, g, ux, uy, xi) - upwind_flux(tau, ux, uy, xi)).abs())
                .fold(0.0, f64::max);
            devs.push(d);
            lim.push(vec![g.into(), d.into(), (d / g).into()]);
        }
        let slope = loglog_slope(&p.gammas, &devs);
        out.checks.push(Check::holds("SG - upwind deviation decreasing", decreasing(&devs)));
        out.checks.push(Check::between(
            "SG - upwind deviation order in gamma",
            slope,
            p.slope_range.0,
            p.slope_range.1,
        ));

        let grid = Grid::uniform(0.0, 1.0, p.n_cells)?;
        let v = |x: f64| (2.0 * std::f64::consts::PI * x).cos() + 0.5 * x;
        let a = |x: f64| 1.0 + 0.5 * (3.0 * x).sin();
        let times = uniform_grid(p.t_end, p.n_out);
        let vol = grid.volumes();
        let mut energy = Table::new(
            "energy",
            &["scheme", "sample", "energy_start", "energy_end", "max_increase", "max_step_mass_drift"],
        );
        let mut worst_increase = f64::NEG_INFINITY;
        let mut worst_drift: f64 = 0.0;
        let initial: Vec<Vec<f64>> = (0..p.random_initial)
            .map(|_| {
                let raw: Vec<f64> = vol.iter().map(|h| h * rng.gen_range(0.1..1.0)).collect();
                let tot: f64 = raw.iter().sum();
                raw.iter().map(|r| r / tot).collect()
            })
            .collect();
        for (name, scheme) in
            [("sg", Scheme::ScharfetterGummel), ("cosh_sqrt", Scheme::CoshSqrt), ("upwind", Scheme::Upwind)]
        {
            budget.check(&format!("{name} evolutions"))?;
            let prob = FVProblem::from_fns(grid.clone(), v, a, p.gamma, scheme)?;
            let stepping = if scheme == Scheme::Upwind {
                Stepping::Explicit { cfl: p.cfl }
            } else {
                Stepping::ImplicitEuler { dt: p.dt }
            };
            for (i, rho0) in initial.iter().enumerate() {
                let tr = fv_evolve(&prob, rho0, &times, stepping)?;
                let inc = tr.free_energy.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
                let scale = tr.free_energy[0].abs().max(1.0);
                worst_increase = worst_increase.max(inc / scale);
                worst_drift = worst_drift.max(tr.max_step_mass_drift);
                energy.push(vec![
                    name.into(),
                    i.into(),
                    tr.free_energy[0].into(),
                    tr.free_energy[tr.free_energy.len() - 1].into(),
                    inc.into(),
                    tr.max_step_mass_drift.into(),
                ]);
            }
        }
        out.checks.push(Check::at_most(
            "free energy non-increasing (relative increment)",
            worst_increase,
            p.energy_slack,
        ));
        out.checks.push(Check::at_most("mass drift per step", worst_drift, p.mass_tol));
        out.tables.extend([lim, energy]);
        Ok(())
    }))
}

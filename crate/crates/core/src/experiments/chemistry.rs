//! Mass-action reaction networks.

use serde::Deserialize;
use serde_json::Value;

use super::{as_config, params, require, Check, Ctx, Job};
use crate::error::{Error, Result};
use crate::graph_system;
use crate::io::Table;
use crate::numerics::bisect;
use crate::reaction_networks::{evolve_rre, induced_graph, tilt_dependence, ReactionNetwork, RreOptions};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TiltCase {
    f: Vec<f64>,
    f_act: Vec<f64>,
    rho: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RreParams {
    #[serde(default = "d_mono")]
    monomolecular: String,
    #[serde(default = "d_mono_rho0")]
    rho0_monomolecular: Vec<f64>,
    #[serde(default = "d_five")]
    t_end_monomolecular: f64,
    /// A network with the single reaction `X + Y <-> Z`.
    #[serde(default = "d_bi")]
    bimolecular: String,
    #[serde(default = "d_bi_rho0")]
    rho0_bimolecular: Vec<f64>,
    #[serde(default = "d_fifty")]
    t_end_bimolecular: f64,
    #[serde(default = "d_n_out")]
    n_out: usize,
    #[serde(default = "d_tilts")]
    tilt_cases: Vec<TiltCase>,
    #[serde(default = "d_match_tol")]
    match_tol: f64,
    #[serde(default = "d_charge_tol")]
    charge_tol: f64,
    #[serde(default = "d_match_tol")]
    equilibrium_tol: f64,
    #[serde(default = "d_ratio_tol")]
    ratio_tol: f64,
}

fn d_mono() -> String {
    "fixture:a_b".into()
}
fn d_mono_rho0() -> Vec<f64> {
    vec![0.9, 0.1]
}
fn d_five() -> f64 {
    5.0
}
fn d_bi() -> String {
    "fixture:a_b_c".into()
}
fn d_bi_rho0() -> Vec<f64> {
    vec![1.0, 1.0, 0.0]
}
fn d_fifty() -> f64 {
    50.0
}
fn d_n_out() -> usize {
    200
}
fn d_tilts() -> Vec<TiltCase> {
    vec![
        TiltCase { f: vec![0.3, -0.2], f_act: vec![0.4], rho: vec![0.6, 0.4] },
        TiltCase { f: vec![0.3, -0.2, 0.1], f_act: vec![0.25], rho: vec![0.5, 0.3, 0.2] },
    ]
}
fn d_match_tol() -> f64 {
    1e-8
}
fn d_charge_tol() -> f64 {
    1e-9
}
fn d_ratio_tol() -> f64 {
    1e-12
}

/// Species indices `(x, y, z)` of a network consisting of one reaction `x + y <-> z`.
fn association(net: &ReactionNetwork) -> Option<(usize, usize, usize)> {
    if net.reactions.len() != 1 {
        return None;
    }
    let r = &net.reactions[0];
    let left: Vec<usize> = (0..net.n_species()).filter(|&i| r.alpha[i] == 1).collect();
    let right: Vec<usize> = (0..net.n_species()).filter(|&i| r.beta[i] == 1).collect();
    let orders_ok = r.alpha.iter().sum::<u32>() == 2 && r.beta.iter().sum::<u32>() == 1;
    (orders_ok && left.len() == 2 && right.len() == 1 && !left.contains(&right[0]))
        .then(|| (left[0], left[1], right[0]))
}

/// Equilibrium of `x + y <-> z` from `rho0`: the root `c` of
/// `(x0 - c)(y0 - c)/(pi_x pi_y) = (z0 + c)/pi_z`.
fn association_equilibrium(net: &ReactionNetwork, (x, y, z): (usize, usize, usize), rho0: &[f64]) -> Result<Vec<f64>> {
    let pi = net.pi();
    let g = |c: f64| (rho0[x] - c) * (rho0[y] - c) / (pi[x] * pi[y]) - (rho0[z] + c) / pi[z];
    let c = bisect(g, -rho0[z], rho0[x].min(rho0[y]), 1e-15)?;
    let mut eq = rho0.to_vec();
    eq[x] -= c;
    eq[y] -= c;
    eq[z] += c;
    Ok(eq)
}

pub(super) fn rre(ctx: &Ctx, p: &Value) -> Result<Job> {
    let p: RreParams = params(p)?;
    let mono = ctx.reactions(&p.monomolecular)?;
    let bi = ctx.reactions(&p.bimolecular)?;
    require(mono.is_monomolecular(), "monomolecular network has higher-order reactions")?;
    let assoc = association(&bi)
        .ok_or_else(|| Error::InvalidConfig("bimolecular network must be a single X + Y <-> Z".into()))?;
    require(p.rho0_monomolecular.len() == mono.n_species(), "rho0_monomolecular has the wrong length")?;
    require(p.rho0_bimolecular.len() == bi.n_species(), "rho0_bimolecular has the wrong length")?;
    require(
        p.t_end_monomolecular > 0.0 && p.t_end_bimolecular > 0.0 && p.n_out > 0,
        "times and n_out must be positive",
    )?;
    let mass: f64 = p.rho0_monomolecular.iter().sum();
    require((mass - 1.0).abs() < 1e-12, "rho0_monomolecular must be a probability vector")?;
    let graph = induced_graph(&mono).map_err(as_config)?;
    for c in &p.tilt_cases {
        let n = if c.f.len() == mono.n_species() { &mono } else { &bi };
        require(
            c.f.len() == n.n_species() && c.rho.len() == n.n_species(),
            "tilt case f and rho need one entry per species",
        )?;
        require(c.f_act.len() == n.reactions.len(), "tilt case needs one f_act per reaction")?;
    }
    Ok(Box::new(move |budget, out| {
        let opts = RreOptions { n_out: p.n_out, ..RreOptions::default() };
        let rm = evolve_rre(&mono, &p.rho0_monomolecular, p.t_end_monomolecular, &opts)?;
        let tr = graph_system::evolve(&graph, &p.rho0_monomolecular, p.t_end_monomolecular, &rm.times)?;
        let gap = rm
            .states
            .iter()
            .zip(&tr.states)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        out.checks.push(Check::at_most("monomolecular vs master equation", gap, p.match_tol));

        budget.check("bimolecular run")?;
        let rb = evolve_rre(&bi, &p.rho0_bimolecular, p.t_end_bimolecular, &opts)?;
        let drift = rm.charge_drift.max(rb.charge_drift);
        out.checks.push(Check::at_most("conserved charge drift", drift, p.charge_tol));
        let eq = association_equilibrium(&bi, assoc, &p.rho0_bimolecular)?;
        let last = &rb.states[rb.states.len() - 1];
        let eq_err = last.iter().zip(&eq).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        out.checks.push(Check::at_most("association equilibrium vs algebraic root", eq_err, p.equilibrium_tol));

        let mut runs = Table::new("runs", &["network", "species", "final", "equilibrium", "i_t", "charge_drift"]);
        for (name, net, res, target) in [("monomolecular", &mono, &rm, None), ("bimolecular", &bi, &rb, Some(&eq))] {
            let fin = &res.states[res.states.len() - 1];
            for (i, s) in net.species.iter().enumerate() {
                let t = target.map_or(f64::NAN, |e| e[i]);
                runs.push(vec![
                    name.into(),
                    s.as_str().into(),
                    fin[i].into(),
                    t.into(),
                    res.edp.i_t.into(),
                    res.charge_drift.into(),
                ]);
            }
        }

        budget.check("tilt dependence")?;
        let mut tilt =
            Table::new("tilt_dependence", &["case", "reaction", "sigma_ratio", "predicted_ratio", "relative_error"]);
        let mut worst: f64 = 0.0;
        for (ci, c) in p.tilt_cases.iter().enumerate() {
            let net = if c.f.len() == mono.n_species() { &mono } else { &bi };
            let rep = tilt_dependence(net, &c.f, &c.f_act, &c.rho)?;
            for (r, (s, q)) in rep.sigma_ratio.iter().zip(&rep.predicted_ratio).enumerate() {
                let e = (s / q - 1.0).abs();
                worst = worst.max(e);
                tilt.push(vec![ci.into(), r.into(), (*s).into(), (*q).into(), e.into()]);
            }
        }
        out.checks.push(Check::at_most("sigma tilt-dependence ratio", worst, p.ratio_tol));
        out.note("monomolecular_i_t", rm.edp.i_t);
        out.note("bimolecular_i_t", rb.edp.i_t);
        out.tables.extend([runs, tilt]);
        Ok(())
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn association_root() {
        let n = fixtures::a_b_c();
        let idx = association(&n).unwrap();
        let eq = association_equilibrium(&n, idx, &[1.0, 1.0, 0.0]).unwrap();
        assert!((eq[2] - (3.0 - 5f64.sqrt()) / 2.0).abs() < 1e-14);
        assert!(association(&fixtures::a_b()).is_none());
    }
}

//! Scalar checks of the cosh pair, the contraction formula and the cell function.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::Value;

use super::{decreasing, params, rel_err, require, Check, Ctx, Job};
use crate::cosh_core::{
    cell_n_explicit, cell_n_variational, cosh_dual, cosh_dual_deriv, cosh_primal, cosh_primal_deriv, eta,
    parallel_combine, rate_density_l, series_combine, CellProblem,
};
use crate::error::Result;
use crate::io::Table;
use crate::numerics::golden_section;

fn d_samples_1e4() -> usize {
    10_000
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LegendreParams {
    #[serde(default = "d_samples_1e4")]
    samples: usize,
    seed: u64,
    #[serde(default = "d_tol_1e10")]
    tol: f64,
}

fn d_tol_1e10() -> f64 {
    1e-10
}

struct Worst {
    name: &'static str,
    n: usize,
    max: f64,
    at: f64,
}

impl Worst {
    fn new(name: &'static str) -> Self {
        Worst { name, n: 0, max: 0.0, at: f64::NAN }
    }

    fn add(&mut self, r: f64, at: f64) {
        self.n += 1;
        if !(r <= self.max) {
            self.max = r;
            self.at = at;
        }
    }
}

pub(super) fn legendre(_: &Ctx, p: &Value) -> Result<Job> {
    let p: LegendreParams = params(p)?;
    require(p.samples > 0, "samples must be positive")?;
    Ok(Box::new(move |budget, out| {
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let mut fenchel = Worst::new("fenchel");
        let mut dual_inv = Worst::new("dual_derivative_inverse");
        let mut primal_inv = Worst::new("primal_derivative_inverse");
        let mut hellinger = Worst::new("hellinger_identity");
        let mut fd = Worst::new("derivative_finite_difference");
        for _ in 0..p.samples {
            let xi: f64 = rng.gen_range(-20.0..20.0);
            let s = cosh_dual_deriv(xi);
            fenchel.add((s * xi - cosh_primal(s) - cosh_dual(xi)).abs() / (s * xi).abs().max(1.0), xi);
            primal_inv.add((cosh_primal_deriv(s) - xi).abs() / xi.abs().max(1.0), xi);

            let s: f64 = rng.gen_range(-50.0..50.0);
            let xi = cosh_primal_deriv(s);
            fenchel.add((s * xi - cosh_primal(s) - cosh_dual(xi)).abs() / (s * xi).abs().max(1.0), s);
            dual_inv.add((cosh_dual_deriv(xi) - s).abs() / s.abs().max(1.0), s);

            let pp = 10f64.powf(rng.gen_range(-6.0..6.0));
            let qq = 10f64.powf(rng.gen_range(-6.0..6.0));
            let lhs = (pp * qq).sqrt() * cosh_dual(pp.ln() - qq.ln());
            // 2 (sqrt p - sqrt q)^2 without cancellation
            let rhs = 2.0 * (pp - qq).powi(2) / (pp.sqrt() + qq.sqrt()).powi(2);
            hellinger.add(rel_err(lhs, rhs), pp / qq);

            let x: f64 = rng.gen_range(-10.0..10.0);
            let h = 1e-5;
            let fd_dual = (cosh_dual(x + h) - cosh_dual(x - h)) / (2.0 * h);
            let fd_primal = (cosh_primal(x + h) - cosh_primal(x - h)) / (2.0 * h);
            fd.add((fd_dual - cosh_dual_deriv(x)).abs().max((fd_primal - cosh_primal_deriv(x)).abs()), x);
        }
        budget.check("summary")?;
        let mut t = Table::new("identities", &["identity", "samples", "max_residual", "worst_argument"]);
        for w in [&fenchel, &dual_inv, &primal_inv, &hellinger, &fd] {
            t.push(vec![w.name.into(), w.n.into(), w.max.into(), w.at.into()]);
        }
        out.tables.push(t);
        for w in [&fenchel, &dual_inv, &primal_inv, &hellinger] {
            out.checks.push(Check::at_most(w.name, w.max, p.tol));
        }
        out.checks.push(Check::at_most(fd.name, fd.max, 1e-6));
        out.note("samples", p.samples);
        Ok(())
    }))
}

fn d_instances() -> usize {
    1000
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ContractionParams {
    #[serde(default = "d_instances")]
    instances: usize,
    seed: u64,
    #[serde(default = "d_tol_1e8")]
    tol: f64,
}

fn d_tol_1e8() -> f64 {
    1e-8
}

/// `min_{a >= max(0, -2j)} eta(a | alpha k) + eta(a + 2j | beta k)` by golden section.
fn brute_contraction(j: f64, alpha: f64, beta: f64, k: f64) -> f64 {
    let lo = (-2.0 * j).max(0.0);
    let span = 10.0 * (alpha * k + beta * k + 2.0 * j.abs()) + 1.0;
    let f = |a: f64| eta(a, alpha * k) + eta(a + 2.0 * j, beta * k);
    let (_, v) = golden_section(f, lo, lo + span, 1e-14);
    v.min(f(lo))
}

pub(super) fn contraction(_: &Ctx, p: &Value) -> Result<Job> {
    let p: ContractionParams = params(p)?;
    require(p.instances > 0, "instances must be positive")?;
    Ok(Box::new(move |budget, out| {
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let mut t = Table::new("instances", &["j", "alpha", "beta", "k", "closed_form", "brute_force", "residual"]);
        let mut worst: f64 = 0.0;
        for _ in 0..p.instances {
            let j = rng.gen_range(-5.0..5.0);
            let alpha = rng.gen_range(0.01..5.0);
            let beta = rng.gen_range(0.01..5.0);
            let k = rng.gen_range(0.1..5.0);
            let l = rate_density_l(j, alpha, beta, k);
            let b = brute_contraction(j, alpha, beta, k);
            let r = (l - b).abs() / l.abs().max(1.0);
            worst = worst.max(r);
            t.push(vec![j.into(), alpha.into(), beta.into(), k.into(), l.into(), b.into(), r.into()]);
        }
        budget.check("summary")?;
        out.tables.push(t);
        out.checks.push(Check::at_most("contraction_residual", worst, p.tol));
        Ok(())
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CellParams {
    #[serde(default = "d_one")]
    j: f64,
    #[serde(default = "d_one")]
    alpha: f64,
    #[serde(default = "d_two")]
    beta: f64,
    #[serde(default = "d_breaks")]
    breaks: Vec<f64>,
    #[serde(default = "d_values")]
    values: Vec<f64>,
    #[serde(default = "d_n_list")]
    n_list: Vec<usize>,
    #[serde(default = "d_final_tol")]
    final_tol: f64,
    /// Random `(j, alpha, beta, k1, k2)` cases for the series and parallel laws.
    #[serde(default = "d_law_samples")]
    law_samples: usize,
    seed: u64,
    #[serde(default = "d_law_tol")]
    law_tol: f64,
}

fn d_one() -> f64 {
    1.0
}
fn d_two() -> f64 {
    2.0
}
fn d_breaks() -> Vec<f64> {
    vec![0.0, 0.5, 1.0]
}
fn d_values() -> Vec<f64> {
    vec![1.0, 2.0]
}
fn d_n_list() -> Vec<usize> {
    vec![100, 200, 400, 1000]
}
fn d_final_tol() -> f64 {
    1e-3
}
fn d_law_samples() -> usize {
    20
}
fn d_law_tol() -> f64 {
    1e-6
}

/// `inf_gamma N(j, alpha, gamma; k1) + N(j, gamma, beta; k2)`, searched in `log gamma`.
pub(crate) fn series_inf(j: f64, alpha: f64, beta: f64, k1: f64, k2: f64) -> f64 {
    let f = |lg: f64| {
        let g = lg.exp();
        cell_n_explicit(j, alpha, g, k1) + cell_n_explicit(j, g, beta, k2)
    };
    // coarse scan to bracket the minimum, then golden section
    let (lo, hi, steps) = (-20.0, 20.0, 400);
    let h = (hi - lo) / steps as f64;
    let best = (0..=steps).map(|i| lo + h * i as f64).min_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap_or(0.0);
    golden_section(f, best - h, best + h, 1e-15).1
}

/// `inf_{j1} N(j1, alpha, beta; k1) + N(j - j1, alpha, beta; k2)`.
pub(crate) fn parallel_inf(j: f64, alpha: f64, beta: f64, k1: f64, k2: f64) -> f64 {
    let f = |j1: f64| cell_n_explicit(j1, alpha, beta, k1) + cell_n_explicit(j - j1, alpha, beta, k2);
    let span = 2.0 * j.abs() + 1.0;
    golden_section(f, -span, span, 1e-15).1
}

pub(super) fn cell(_: &Ctx, p: &Value) -> Result<Job> {
    let p: CellParams = params(p)?;
    require(p.alpha > 0.0 && p.beta > 0.0, "alpha and beta must be positive")?;
    require(p.n_list.len() >= 2 && p.n_list.windows(2).all(|w| w[1] > w[0]), "n_list must increase")?;
    require(p.n_list[0] >= 2, "n must be at least 2")?;
    let problem =
        CellProblem { j: p.j, alpha: p.alpha, beta: p.beta, breaks: p.breaks.clone(), values: p.values.clone(), n: 2 };
    // validates the profile
    cell_n_variational(&problem).map_err(super::as_config)?;
    Ok(Box::new(move |budget, out| {
        let kstar = problem.harmonic_k();
        let exact = cell_n_explicit(p.j, p.alpha, p.beta, kstar);
        let mut t = Table::new("convergence", &["n", "variational", "explicit", "relative_error", "newton_iterations"]);
        let mut errs = Vec::new();
        for &n in &p.n_list {
            budget.check(&format!("cell solve n = {n}"))?;
            let sol = cell_n_variational(&CellProblem { n, ..problem.clone() })?;
            let e = rel_err(sol.value, exact);
            errs.push(e);
            t.push(vec![n.into(), sol.value.into(), exact.into(), e.into(), sol.newton_iterations.into()]);
        }
        out.tables.push(t);
        out.checks.push(Check::holds("cell_error_decreasing", decreasing(&errs)));
        out.checks.push(Check::at_most("cell_final_relative_error", *errs.last().unwrap_or(&f64::NAN), p.final_tol));

        budget.check("series and parallel laws")?;
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let mut cases = vec![(1.0, 1.0, 1.0, 1.0, 2.0)];
        for _ in 0..p.law_samples {
            cases.push((
                rng.gen_range(-3.0..3.0),
                rng.gen_range(0.1..4.0),
                rng.gen_range(0.1..4.0),
                rng.gen_range(0.2..3.0),
                rng.gen_range(0.2..3.0),
            ));
        }
        let mut laws =
            Table::new("laws", &["law", "j", "alpha", "beta", "k1", "k2", "infimum", "combined", "relative_error"]);
        let (mut ws, mut wp): (f64, f64) = (0.0, 0.0);
        for (j, a, b, k1, k2) in cases {
            let s_inf = series_inf(j, a, b, k1, k2);
            let s_n = cell_n_explicit(j, a, b, series_combine(k1, k2)?);
            let p_inf = parallel_inf(j, a, b, k1, k2);
            let p_n = cell_n_explicit(j, a, b, parallel_combine(&[k1, k2])?);
            let (es, ep) = ((s_inf - s_n).abs() / s_n.max(1e-300), (p_inf - p_n).abs() / p_n.max(1e-300));
            ws = ws.max(es);
            wp = wp.max(ep);
            laws.push(vec![
                "series".into(),
                j.into(),
                a.into(),
                b.into(),
                k1.into(),
                k2.into(),
                s_inf.into(),
                s_n.into(),
                es.into(),
            ]);
            laws.push(vec![
                "parallel".into(),
                j.into(),
                a.into(),
                b.into(),
                k1.into(),
                k2.into(),
                p_inf.into(),
                p_n.into(),
                ep.into(),
            ]);
        }
        out.tables.push(laws);
        out.checks.push(Check::at_most("series_law", ws, p.law_tol));
        out.checks.push(Check::at_most("parallel_law", wp, p.law_tol));
        out.note("harmonic_k", kstar);
        Ok(())
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_example() {
        // N(1, 1, 1; 2/3)
        let want = cell_n_explicit(1.0, 1.0, 1.0, 2.0 / 3.0);
        assert!((series_inf(1.0, 1.0, 1.0, 1.0, 2.0) - want).abs() < 1e-6 * want);
        let want = cell_n_explicit(0.7, 2.0, 0.5, 3.0);
        assert!((parallel_inf(0.7, 2.0, 0.5, 1.0, 2.0) - want).abs() < 1e-6 * want);
    }

    #[test]
    fn brute_contraction_matches_known_value() {
        // alpha = beta, j = 0: minimum 0 at a = b = alpha k
        assert!(brute_contraction(0.0, 1.3, 1.3, 0.7).abs() < 1e-12);
        let l = rate_density_l(0.4, 0.5, 2.0, 1.5);
        assert!((brute_contraction(0.4, 0.5, 2.0, 1.5) - l).abs() < 1e-9);
    }
}

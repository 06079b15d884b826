//! The twelve acceptance criteria, each run from its shipped config with the
//! runtime limit enforced, plus independent spot checks of the artifacts.
//!
//! Prints one `PASS`/`FAIL` line per criterion; the test fails if any does.

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use coshflows::cosh_core::{cosh_dual, cosh_dual_deriv, cosh_primal};
use coshflows::experiments::{run_file, ExperimentOutput};
use coshflows::io::{Cell, Table};

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn num(t: &Table, row: usize, col: &str) -> f64 {
    let i = t.columns.iter().position(|c| c == col).unwrap_or_else(|| panic!("{}: no column {col}", t.name));
    t.rows[row][i].as_f64().unwrap_or(f64::NAN)
}

fn row_where(t: &Table, col: &str, value: &str) -> usize {
    let i = t.columns.iter().position(|c| c == col).unwrap();
    t.rows.iter().position(|r| r[i] == Cell::Text(value.into())).unwrap_or_else(|| panic!("{}: no row {value}", t.name))
}

type Oracle = fn(&ExperimentOutput) -> Result<(), String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// Fenchel equality at `s = C*'(xi)` with `C` written out in closed form.
fn legendre_oracle(_: &ExperimentOutput) -> Result<(), String> {
    for k in -40..=40 {
        let xi = 0.25 * k as f64;
        let s = cosh_dual_deriv(xi);
        let closed = 2.0 * s * (0.5 * s).asinh() - 2.0 * (s * s + 4.0).sqrt() + 4.0;
        ensure((cosh_primal(s) - closed).abs() <= 1e-10 * closed.abs().max(1.0), format!("C({s}) closed form"))?;
        let dual = 4.0 * ((0.5 * xi).cosh() - 1.0);
        ensure((cosh_dual(xi) - dual).abs() <= 1e-10 * dual.max(1.0), format!("C*({xi}) closed form"))?;
        ensure((closed + dual - s * xi).abs() <= 1e-9 * (s * xi).abs().max(1.0), format!("Fenchel equality at {xi}"))?;
    }
    Ok(())
}

fn contraction_oracle(out: &ExperimentOutput) -> Result<(), String> {
    let t = out.table("instances").ok_or("no instances table")?;
    ensure(t.rows.len() == 1000, "expected 1000 instances")?;
    let worst = (0..t.rows.len()).map(|r| num(t, r, "residual")).fold(0.0, f64::max);
    ensure(worst <= 1e-8, format!("worst residual {worst}"))
}

fn cell_oracle(out: &ExperimentOutput) -> Result<(), String> {
    let t = out.table("convergence").ok_or("no convergence table")?;
    let n: Vec<f64> = (0..t.rows.len()).map(|r| num(t, r, "n")).collect();
    ensure(n == [100.0, 200.0, 400.0, 1000.0], "resolutions")?;
    let e: Vec<f64> = (0..t.rows.len()).map(|r| num(t, r, "relative_error")).collect();
    ensure(e.windows(2).all(|w| w[1] < w[0]) && e[3] <= 1e-3, format!("errors {e:?}"))
}

fn edp_oracle(out: &ExperimentOutput) -> Result<(), String> {
    let t = out.table("random_admissible").ok_or("no random table")?;
    ensure(t.rows.len() == 200, "100 random trajectories per graph")?;
    let p = out.table("perturbed").ok_or("no perturbed table")?;
    ensure((0..p.rows.len()).all(|r| num(p, r, "i_t") > 0.0 && num(p, r, "factor") == 1.5), "perturbed rows")
}

fn tilt_oracle(out: &ExperimentOutput) -> Result<(), String> {
    let t = out.table("rules").ok_or("no rules table")?;
    let chem = row_where(t, "rule", "chemical");
    let i = t.columns.iter().position(|c| c == "shift_invariant").unwrap();
    ensure(t.rows[chem][i] == Cell::Bool(false), "chemical rule must fail the shift condition")
}

fn reduce_oracle(out: &ExperimentOutput) -> Result<(), String> {
    let t = out.table("capacities").ok_or("no capacities table")?;
    let r = row_where(t, "network", "fixture:three_chain");
    ensure((num(t, r, "capacity") - 0.25).abs() <= 1e-12, "Dirichlet capacity")?;
    ensure((num(t, r, "star_mesh") - 0.25).abs() <= 1e-12, "star-mesh capacity")?;
    ensure((num(t, r, "literal_chain") - 1.0).abs() <= 1e-12, "literal chain value reported")?;
    ensure(
        t.rows.iter().filter(|row| matches!(&row[0], Cell::Text(s) if s.starts_with("random:"))).count() == 50,
        "50 random networks",
    )
}

fn chain_oracle(out: &ExperimentOutput) -> Result<(), String> {
    let t = out.table("rates").ok_or("no rates table")?;
    // 3-chain with kappa = 1: cap0 = 1/4, rate = cap (1/pi_a + 1/pi_b) = 1 at alpha = 0
    ensure((num(t, 0, "fitted_rate") - 1.0).abs() <= 1e-3, "three_chain untilted rate")?;
    let tilted = num(t, 1, "fitted_ratio");
    ensure((tilted / (-0.5f64).exp() - 1.0).abs() <= 0.05, format!("three_chain tilted ratio {tilted}"))
}

fn kramers_oracle(out: &ExperimentOutput) -> Result<(), String> {
    let t = out.table("tilt_ratio").ok_or("no tilt_ratio table")?;
    let worst = (0..t.rows.len()).map(|r| (num(t, r, "fitted_ratio") / (-1f64).exp() - 1.0).abs()).fold(0.0, f64::max);
    ensure(worst <= 0.1, format!("tilt ratio deviation {worst}"))
}

fn membrane_oracle(out: &ExperimentOutput) -> Result<(), String> {
    let t = out.table("membrane").ok_or("no membrane table")?;
    let worst =
        (0..t.rows.len()).map(|r| (num(t, r, "sigma_fit") / num(t, r, "sigma_limit") - 1.0).abs()).fold(0.0, f64::max);
    ensure(worst <= 0.15, format!("sigma deviation {worst}"))
}

fn fv_oracle(out: &ExperimentOutput) -> Result<(), String> {
    let t = out.table("energy").ok_or("no energy table")?;
    ensure(t.rows.len() == 60, "20 samples for each of three schemes")?;
    let drift = (0..t.rows.len()).map(|r| num(t, r, "max_step_mass_drift")).fold(0.0, f64::max);
    ensure(drift <= 1e-12, format!("mass drift {drift}"))
}

fn rre_oracle(out: &ExperimentOutput) -> Result<(), String> {
    let t = out.table("runs").ok_or("no runs table")?;
    let c = row_where(t, "species", "C");
    // A + B <-> C, unit pi, from (1, 1, 0): c^2 - 3c + 1 = 0
    let root = (3.0 - 5f64.sqrt()) / 2.0;
    ensure((num(t, c, "final") - root).abs() <= 1e-8, "association equilibrium")
}

fn gillespie_oracle(out: &ExperimentOutput) -> Result<(), String> {
    let t = out.table("empirical").ok_or("no empirical table")?;
    let n = 1e4_f64;
    let sd = (0.25 / n).sqrt();
    let worst = (0..t.rows.len()).map(|r| (num(t, r, "final") - 0.5).abs() / sd).fold(0.0, f64::max);
    ensure(worst <= 3.0, format!("z-score {worst}"))
}

const CRITERIA: [(&str, &str, f64, Oracle); 12] = [
    ("1 Legendre/identity suite", "01_legendre.json", 5.0, legendre_oracle),
    ("2 contraction oracle", "02_contraction.json", 10.0, contraction_oracle),
    ("3 cell formula", "03_cell.json", 30.0, cell_oracle),
    ("4 EDP zero-locus", "04_edp.json", 60.0, edp_oracle),
    ("5 tilting suite", "05_tilt.json", 30.0, tilt_oracle),
    ("6 network reduction", "06_reduce.json", 30.0, reduce_oracle),
    ("7 two-terminal convergence", "07_chain.json", 300.0, chain_oracle),
    ("8 Kramers", "08_kramers.json", 600.0, kramers_oracle),
    ("9 membrane", "09_membrane.json", 300.0, membrane_oracle),
    ("10 FV schemes", "10_fv.json", 60.0, fv_oracle),
    ("11 reaction networks", "11_rre.json", 30.0, rre_oracle),
    ("12 Gillespie", "12_gillespie.json", 60.0, gillespie_oracle),
];

/// Straight to the process stdout, so the lines show without `--nocapture`.
fn report(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
}

#[test]
fn acceptance_criteria() {
    let mut failed = Vec::new();
    for (name, file, limit, oracle) in CRITERIA {
        let start = Instant::now();
        let result = run_file(&config(file));
        let secs = start.elapsed().as_secs_f64();
        let verdict = match &result {
            Err(e) => Err(format!("run failed: {e}")),
            Ok(out) => {
                let bad: Vec<String> =
                    out.checks.iter().filter(|c| !c.pass).map(|c| format!("{} = {:e}", c.name, c.value)).collect();
                if !bad.is_empty() {
                    Err(bad.join("; "))
                } else if secs > limit {
                    Err(format!("runtime {secs:.1}s over {limit}s"))
                } else {
                    oracle(out).map_err(|e| format!("oracle: {e}"))
                }
            }
        };
        match verdict {
            Ok(()) => report(&format!("PASS criterion {name} ({secs:.2}s, limit {limit}s)")),
            Err(why) => {
                report(&format!("FAIL criterion {name} ({secs:.2}s, limit {limit}s): {why}"));
                failed.push(name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

//! Property tests over randomly generated inputs.

use coshflows::cosh_core::{bracket_b, cell_n_explicit, cosh_dual, relative_entropy};
use coshflows::fixtures;
use coshflows::fokker_planck_1d::{fv_evolve, FVProblem, Grid, Scheme, Stepping};
use coshflows::graph_system::{check_detailed_balance, evolve, tilt_kernel, MarkovGraph, Tilt, TiltRule};
use coshflows::network_reduction::{capacity, TwoTerminalNetwork};
use coshflows::reaction_networks::{evolve_rre, RreOptions};
use proptest::prelude::*;

/// Connected reversible graph: a path plus extra chords, normalised `pi`.
fn graph_strategy() -> impl Strategy<Value = MarkovGraph> {
    (3usize..8)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(0.1f64..1.0, n),
                prop::collection::vec(0.1f64..5.0, n - 1),
                prop::collection::vec((0..n, 0..n, 0.1f64..5.0), 0..n),
            )
        })
        .prop_map(|(raw, path, chords)| {
            let n = raw.len();
            let total: f64 = raw.iter().sum();
            let pi: Vec<f64> = raw.iter().map(|p| p / total).collect();
            let mut k: Vec<(usize, usize, f64)> = path.iter().enumerate().map(|(i, &c)| (i, i + 1, c)).collect();
            for (x, y, c) in chords {
                let (x, y) = (x.min(y), x.max(y));
                if y > x + 1 && !k.iter().any(|e| e.0 == x && e.1 == y) {
                    k.push((x, y, c));
                }
            }
            MarkovGraph::from_conductances(MarkovGraph::default_ids(n), pi, &k).unwrap()
        })
}

fn rules() -> [TiltRule; 4] {
    [TiltRule::Symmetric, TiltRule::Chemical, TiltRule::ProductAB, TiltRule::Metropolis]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hellinger_identity(lp in -13.8f64..13.8, lq in -13.8f64..13.8) {
        let (p, q) = (lp.exp(), lq.exp());
        let lhs = (p * q).sqrt() * cosh_dual(lp - lq);
        // 2 (sqrt p - sqrt q)^2 without cancellation
        let rhs = 2.0 * (p - q).powi(2) / (p.sqrt() + q.sqrt()).powi(2);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(f64::MIN_POSITIVE), "{lhs} vs {rhs}");
    }

    #[test]
    fn cell_formula_is_one_homogeneous(j in -3.0f64..3.0, a in 0.05f64..4.0, b in 0.05f64..4.0, k in 0.1f64..5.0, lam in 0.1f64..10.0) {
        let base = cell_n_explicit(j, a, b, k);
        let scaled = cell_n_explicit(lam * j, lam * a, lam * b, k);
        let other = cell_n_explicit(lam * j, a, b, lam * k);
        prop_assert!((scaled - lam * base).abs() <= 1e-12 * (lam * base).abs().max(1e-300));
        prop_assert!((other - lam * base).abs() <= 1e-12 * (lam * base).abs().max(1e-300));
    }

    #[test]
    fn bracket_below_cell_formula(j in -3.0f64..3.0, a in 0.0f64..4.0, b in 0.0f64..4.0, k in 0.1f64..5.0) {
        let bb = bracket_b(a, b, j);
        let n = cell_n_explicit(j, a, b, k);
        prop_assert!(bb.abs() <= n * (1.0 + 1e-12) || n == f64::INFINITY, "|B| = {} > N = {n}", bb.abs());
    }

    #[test]
    fn every_rule_tilts_to_detailed_balance(g in graph_strategy(), seed in prop::collection::vec(-2.0f64..2.0, 8)) {
        let f = seed[..g.len()].to_vec();
        for rule in rules() {
            let gf = tilt_kernel(&g, &Tilt::new(f.clone(), rule.clone())).unwrap();
            let r = check_detailed_balance(&gf, 1e-10);
            prop_assert!(r.holds, "{rule:?}: residual {}", r.residual);
        }
    }

    #[test]
    fn tilted_entropy_decreases(g in graph_strategy(), seed in prop::collection::vec(-2.0f64..2.0, 8), raw in prop::collection::vec(0.01f64..1.0, 8)) {
        let n = g.len();
        let gf = tilt_kernel(&g, &Tilt::new(seed[..n].to_vec(), TiltRule::Symmetric)).unwrap();
        let total: f64 = raw[..n].iter().sum();
        let rho0: Vec<f64> = raw[..n].iter().map(|r| r / total).collect();
        let times: Vec<f64> = (0..=40).map(|i| 0.05 * i as f64).collect();
        let tr = evolve(&gf, &rho0, 2.0, &times).unwrap();
        let e: Vec<f64> = tr.states.iter().map(|s| relative_entropy(s, gf.pi()).unwrap()).collect();
        prop_assert!(e.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{e:?}");
        let mass_drift = tr.states.iter().map(|s| (s.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
        prop_assert!(mass_drift <= 1e-12);
    }

    #[test]
    fn capacity_monotone_in_conductance(g in graph_strategy(), edge in 0usize..16, factor in 1.0f64..4.0) {
        let n = g.len();
        let net = TwoTerminalNetwork::new(g.clone(), 0, n - 1).unwrap();
        let f = vec![0.0; n];
        let before = capacity(&net, &f).unwrap().capacity;
        let edges = g.edges();
        let pick = edge % edges.len();
        let k: Vec<(usize, usize, f64)> = edges
            .iter()
            .enumerate()
            .map(|(i, e)| (e.x, e.y, g.pi()[e.x] * e.k_xy * if i == pick { factor } else { 1.0 }))
            .collect();
        let g2 = MarkovGraph::from_conductances(MarkovGraph::default_ids(n), g.pi().to_vec(), &k).unwrap();
        let after = capacity(&TwoTerminalNetwork::new(g2, 0, n - 1).unwrap(), &f).unwrap().capacity;
        prop_assert!(after >= before * (1.0 - 1e-12), "{after} < {before}");
    }

    #[test]
    fn fv_energy_and_mass(coef in prop::collection::vec(-1.0f64..1.0, 3), raw in prop::collection::vec(0.1f64..1.0, 30), gamma in 0.1f64..1.0) {
        let grid = Grid::uniform(0.0, 1.0, 30).unwrap();
        let v = move |x: f64| coef[0] * x + coef[1] * (6.0 * x).sin() + coef[2] * x * x;
        let total: f64 = raw.iter().sum();
        let rho0: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let times: Vec<f64> = (0..=10).map(|i| 0.01 * i as f64).collect();
        for (scheme, stepping) in [
            (Scheme::ScharfetterGummel, Stepping::ImplicitEuler { dt: 1e-3 }),
            (Scheme::CoshSqrt, Stepping::ImplicitEuler { dt: 1e-3 }),
            (Scheme::Upwind, Stepping::Explicit { cfl: 0.2 }),
        ] {
            let p = FVProblem::from_fns(grid.clone(), &v, |_| 1.0, gamma, scheme).unwrap();
            let tr = fv_evolve(&p, &rho0, &times, stepping).unwrap();
            prop_assert!(tr.max_step_mass_drift <= 1e-12, "{scheme:?} drift {}", tr.max_step_mass_drift);
            let e = &tr.free_energy;
            prop_assert!(e.windows(2).all(|w| w[1] <= w[0] + 1e-13 * w[0].abs().max(1.0)), "{scheme:?}: {e:?}");
        }
    }

    #[test]
    fn association_conserves_charges(rho0 in prop::collection::vec(0.05f64..2.0, 3)) {
        let net = fixtures::a_b_c();
        let r = evolve_rre(&net, &rho0, 5.0, &RreOptions { n_out: 50, ..RreOptions::default() }).unwrap();
        prop_assert!(r.charge_drift <= 1e-9);
        prop_assert!(r.energy.windows(2).all(|w| w[1] <= w[0] + 1e-10), "{:?}", r.energy);
    }
}

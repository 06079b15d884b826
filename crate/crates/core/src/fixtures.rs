//! Bundled example systems.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fokker_planck_1d::{KramersSetup, MembraneSetup};
use crate::graph_system::MarkovGraph;
use crate::network_reduction::{chain_network, TwoTerminalNetwork};
use crate::reaction_networks::{Reaction, ReactionNetwork};

/// Nearest-neighbour rates of the six-node chain.
pub const SIX_CHAIN_KAPPAS: [f64; 5] = [1.0, 2.0, 0.5, 1.5, 1.0];
pub const FIVE_NODE_SEED: u64 = 5;

/// Two nodes, `pi = (1/2, 1/2)`, unit rates.
pub fn two_node() -> MarkovGraph {
    MarkovGraph::new(vec!["a".into(), "b".into()], vec![0.5, 0.5], &[(0, 1, 1.0), (1, 0, 1.0)])
        .expect("two-node fixture")
}

/// Uniform three-node chain with unit rates; terminals at the ends.
pub fn three_chain() -> TwoTerminalNetwork {
    chain_network(&[1.0, 1.0]).expect("three-chain fixture")
}

/// Six-node chain with uniform `pi` and rates [`SIX_CHAIN_KAPPAS`].
pub fn six_chain() -> TwoTerminalNetwork {
    chain_network(&SIX_CHAIN_KAPPAS).expect("six-chain fixture")
}

/// Connected reversible graph: a random spanning tree plus each remaining
/// pair with probability 0.3, conductances in `[0.2, 2]`, `pi` from `[0.5, 1.5]`.
pub fn random_network(n: usize, seed: u64) -> Result<MarkovGraph> {
    if n < 2 {
        return Err(Error::InvalidArgument("random network needs at least two nodes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    let pi: Vec<f64> = raw.iter().map(|p| p / total).collect();
    let mut adj = vec![vec![false; n]; n];
    for y in 1..n {
        let x = rng.gen_range(0..y);
        adj[x][y] = true;
    }
    for x in 0..n {
        for y in x + 1..n {
            if !adj[x][y] && rng.gen_bool(0.3) {
                adj[x][y] = true;
            }
        }
    }
    let mut k = Vec::new();
    for x in 0..n {
        for y in x + 1..n {
            if adj[x][y] {
                k.push((x, y, rng.gen_range(0.2..2.0)));
            }
        }
    }
    MarkovGraph::from_conductances(MarkovGraph::default_ids(n), pi, &k)
}

/// Random network with terminals at the first and last node.
pub fn random_two_terminal(n: usize, seed: u64) -> Result<TwoTerminalNetwork> {
    TwoTerminalNetwork::new(random_network(n, seed)?, 0, n - 1)
}

pub fn five_node() -> MarkovGraph {
    random_network(5, FIVE_NODE_SEED).expect("five-node fixture")
}

pub fn quartic_well() -> KramersSetup {
    KramersSetup::quartic(0.1).expect("quartic well fixture")
}

pub fn membrane() -> MembraneSetup {
    MembraneSetup::linear(0.1).expect("membrane fixture")
}

/// `A <-> B` with `E = (0, 0.5)`, `E_act = 1`, `D = 1`, `beta = 1`.
pub fn a_b() -> ReactionNetwork {
    ReactionNetwork::new(
        vec!["A".into(), "B".into()],
        vec![0.0, 0.5],
        vec![Reaction { alpha: vec![1, 0], beta: vec![0, 1], d: 1.0, e_act: 1.0 }],
        1.0,
    )
    .expect("A<->B fixture")
}

/// `A + B <-> C` with `pi = (1, 1, 1)` and `k = 1`.
pub fn a_b_c() -> ReactionNetwork {
    ReactionNetwork::with_rates(
        vec!["A".into(), "B".into(), "C".into()],
        &[1.0, 1.0, 1.0],
        &[(vec![1, 1, 0], vec![0, 0, 1], 1.0)],
    )
    .expect("A+B<->C fixture")
}

#[derive(Debug, Clone)]
pub enum Fixture {
    Graph(MarkovGraph),
    TwoTerminal(TwoTerminalNetwork),
    DoubleWell(KramersSetup),
    Membrane(MembraneSetup),
    Reactions(ReactionNetwork),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixtureInfo {
    pub name: &'static str,
    pub kind: &'static str,
    pub description: &'static str,
}

const CATALOG: [FixtureInfo; 8] = [
    FixtureInfo { name: "two_node", kind: "graph", description: "two nodes, uniform pi, unit rates" },
    FixtureInfo {
        name: "three_chain",
        kind: "two_terminal",
        description: "uniform 3-chain, unit rates, terminals 0 and 2",
    },
    FixtureInfo { name: "six_chain", kind: "two_terminal", description: "uniform-pi 6-chain, rates 1, 2, 0.5, 1.5, 1" },
    FixtureInfo { name: "five_node_random", kind: "graph", description: "connected random reversible graph, seed 5" },
    FixtureInfo { name: "quartic_well", kind: "double_well", description: "H = (1 - y^2)^2 on [-2, 2], eps = 0.1" },
    FixtureInfo { name: "membrane", kind: "membrane", description: "unit mobilities, V*(s) = s, eps = 0.1" },
    FixtureInfo { name: "a_b", kind: "reactions", description: "A <-> B, E = (0, 0.5), E_act = 1" },
    FixtureInfo { name: "a_b_c", kind: "reactions", description: "A + B <-> C, pi = 1, k = 1" },
];

pub fn catalog() -> &'static [FixtureInfo] {
    &CATALOG
}

pub fn load(name: &str) -> Result<Fixture> {
    Ok(match name {
        "two_node" => Fixture::Graph(two_node()),
        "three_chain" => Fixture::TwoTerminal(three_chain()),
        "six_chain" => Fixture::TwoTerminal(six_chain()),
        "five_node_random" => Fixture::Graph(five_node()),
        "quartic_well" => Fixture::DoubleWell(quartic_well()),
        "membrane" => Fixture::Membrane(membrane()),
        "a_b" => Fixture::Reactions(a_b()),
        "a_b_c" => Fixture::Reactions(a_b_c()),
        _ => return Err(Error::InvalidConfig(format!("unknown fixture '{name}'"))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_fixture_loads() {
        assert!(!catalog().is_empty());
        for f in catalog() {
            match load(f.name).unwrap() {
                Fixture::Graph(g) => {
                    assert!(g.check_detailed_balance(1e-10).holds && g.is_connected());
                }
                Fixture::TwoTerminal(n) => assert!(n.terminals_connected()),
                Fixture::DoubleWell(s) => s.validate().unwrap(),
                Fixture::Membrane(m) => m.validate().unwrap(),
                Fixture::Reactions(r) => assert!(!r.reactions.is_empty()),
            }
        }
        assert!(load("nope").is_err());
    }

    #[test]
    fn chain_inputs() {
        let n = six_chain();
        assert_eq!(n.graph.len(), 6);
        assert!(n.graph.pi().iter().all(|&p| (p - 1.0 / 6.0).abs() < 1e-15));
        for (i, k) in SIX_CHAIN_KAPPAS.iter().enumerate() {
            assert_eq!(n.graph.rate(i, i + 1), *k);
            assert_eq!(n.graph.rate(i + 1, i), *k);
        }
        assert_eq!((n.a, n.b), (0, 5));
    }

    #[test]
    fn random_networks_are_reproducible() {
        let a = random_network(12, 3).unwrap();
        let b = random_network(12, 3).unwrap();
        assert_eq!(a.triplets(), b.triplets());
        assert!(a.is_connected());
        assert_ne!(random_network(12, 4).unwrap().triplets(), a.triplets());
    }
}

//! Cosh-type dissipation potentials, tilted Markov graphs, network reduction,
//! one-dimensional Fokker-Planck discretisations and reaction networks.

pub mod cosh_core;
pub mod error;
pub mod experiments;
pub mod fixtures;
pub mod fokker_planck_1d;
pub mod graph_system;
pub mod io;
pub mod network_reduction;
pub mod numerics;
pub mod reaction_networks;

pub use error::{Error, Result};

/// Library version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

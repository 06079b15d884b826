//! Config-driven experiments. Each config names one `kind`; its `params`
//! are parsed and every input is loaded before anything runs, so invalid
//! configs fail without side effects.
//!
//! ```json
//! { "kind": "reduce", "time_budget_s": 60, "params": { "networks": ["fixture:three_chain"] } }
//! ```
//!
//! Sources are `"fixture:<name>"` or a path relative to the config file.

mod analysis;
mod chemistry;
mod continuum;
mod graphs;
mod reduction;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fixtures::{self, Fixture};
use crate::graph_system::MarkovGraph;
use crate::io::{GraphFile, Table};
use crate::network_reduction::TwoTerminalNetwork;
use crate::reaction_networks::ReactionNetwork;

pub const KINDS: [&str; 13] = [
    "legendre",
    "contraction",
    "cell",
    "evolve",
    "edp",
    "tilt",
    "reduce",
    "chain",
    "kramers",
    "membrane",
    "fv",
    "rre",
    "gillespie",
];

const DEFAULT_BUDGET_S: f64 = 600.0;

fn default_budget() -> f64 {
    DEFAULT_BUDGET_S
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    /// Output directory, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default = "default_budget")]
    pub time_budget_s: f64,
    #[serde(default)]
    pub params: Value,
}

/// Cooperative wall-clock guard, polled between stages.
#[derive(Debug, Clone, Copy)]
pub struct Budget {
    start: Instant,
    limit_s: f64,
}

impl Budget {
    pub fn new(limit_s: f64) -> Self {
        Budget { start: Instant::now(), limit_s }
    }

    pub fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    pub fn check(&self, stage: &str) -> Result<()> {
        let t = self.elapsed();
        if t > self.limit_s {
            return Err(Error::NumericalFailure(format!(
                "time budget of {}s exceeded ({t:.1}s) before {stage}",
                self.limit_s
            )));
        }
        Ok(())
    }
}

/// One pass/fail criterion with the measured value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: String,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Check { name: name.into(), value, bound: format!("<= {bound:e}"), pass: value <= bound }
    }

    pub fn at_least(name: &str, value: f64, bound: f64) -> Self {
        Check { name: name.into(), value, bound: format!(">= {bound:e}"), pass: value >= bound }
    }

    pub fn above(name: &str, value: f64, bound: f64) -> Self {
        Check { name: name.into(), value, bound: format!("> {bound:e}"), pass: value > bound }
    }

    pub fn between(name: &str, value: f64, lo: f64, hi: f64) -> Self {
        Check { name: name.into(), value, bound: format!("in [{lo}, {hi}]"), pass: (lo..=hi).contains(&value) }
    }

    pub fn holds(name: &str, ok: bool) -> Self {
        Check { name: name.into(), value: if ok { 1.0 } else { 0.0 }, bound: "true".into(), pass: ok }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub kind: String,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    pub summary: Map<String, Value>,
}

impl ExperimentOutput {
    fn new(kind: &str) -> Self {
        ExperimentOutput { kind: kind.into(), ..Default::default() }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    fn note(&mut self, key: &str, v: impl Into<Value>) {
        self.summary.insert(key.into(), v.into());
    }

    /// Deterministic JSON report: checks and summary, no timings.
    pub fn report(&self) -> Value {
        serde_json::json!({
            "kind": self.kind,
            "passed": self.passed(),
            "checks": self.checks,
            "summary": self.summary,
        })
    }

    pub fn checks_table(&self) -> Table {
        let mut t = Table::new("checks", &["name", "value", "bound", "pass"]);
        for c in &self.checks {
            t.push(vec![c.name.clone().into(), c.value.into(), c.bound.clone().into(), c.pass.into()]);
        }
        t
    }
}

/// An error during execution together with whatever was computed before it.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub partial: ExperimentOutput,
}

type Job = Box<dyn FnOnce(&Budget, &mut ExperimentOutput) -> Result<()> + Send>;

/// A validated config with all inputs loaded.
pub struct Prepared {
    pub config: ExperimentConfig,
    /// SHA-256 of the config bytes.
    pub config_hash: String,
    pub base_dir: PathBuf,
    job: Job,
}

impl std::fmt::Debug for Prepared {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Prepared").field("config", &self.config).field("config_hash", &self.config_hash).finish()
    }
}

impl Prepared {
    pub fn execute(self) -> std::result::Result<ExperimentOutput, RunFailure> {
        let budget = Budget::new(self.config.time_budget_s);
        let mut out = ExperimentOutput::new(&self.config.kind);
        match (self.job)(&budget, &mut out) {
            Ok(()) => Ok(out),
            Err(error) => Err(RunFailure { error, partial: out }),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads, parses and validates a config file.
pub fn prepare(path: &Path) -> Result<Prepared> {
    let bytes =
        std::fs::read(path).map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|_| Error::InvalidConfig("config is not UTF-8".into()))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    prepare_str(text, &base)
}

pub fn prepare_str(text: &str, base_dir: &Path) -> Result<Prepared> {
    let config: ExperimentConfig =
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("config JSON: {e}")))?;
    if !(config.time_budget_s > 0.0) || !config.time_budget_s.is_finite() {
        return Err(Error::InvalidConfig("time_budget_s must be positive".into()));
    }
    let ctx = Ctx { base_dir: base_dir.to_path_buf() };
    let p = &config.params;
    let job = match config.kind.as_str() {
        "legendre" => analysis::legendre(&ctx, p)?,
        "contraction" => analysis::contraction(&ctx, p)?,
        "cell" => analysis::cell(&ctx, p)?,
        "evolve" => graphs::evolve(&ctx, p)?,
        "edp" => graphs::edp(&ctx, p)?,
        "tilt" => graphs::tilt(&ctx, p)?,
        "gillespie" => graphs::gillespie(&ctx, p)?,
        "reduce" => reduction::reduce(&ctx, p)?,
        "chain" => reduction::chain(&ctx, p)?,
        "kramers" => continuum::kramers(&ctx, p)?,
        "membrane" => continuum::membrane(&ctx, p)?,
        "fv" => continuum::fv(&ctx, p)?,
        "rre" => chemistry::rre(&ctx, p)?,
        k => return Err(Error::InvalidConfig(format!("unknown kind '{k}', expected one of {}", KINDS.join(", ")))),
    };
    Ok(Prepared { config_hash: sha256_hex(text.as_bytes()), config, base_dir: base_dir.to_path_buf(), job })
}

/// Prepares and executes a config file, flattening failures into an error.
pub fn run_file(path: &Path) -> Result<ExperimentOutput> {
    prepare(path)?.execute().map_err(|f| f.error)
}

pub(crate) struct Ctx {
    base_dir: PathBuf,
}

impl Ctx {
    fn file(&self, p: &str) -> Result<String> {
        let path = self.base_dir.join(p);
        std::fs::read_to_string(&path).map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))
    }

    fn fixture(&self, src: &str) -> Result<Option<Fixture>> {
        match src.strip_prefix("fixture:") {
            Some(name) => fixtures::load(name).map(Some),
            None => Ok(None),
        }
    }

    pub(crate) fn graph(&self, src: &str) -> Result<MarkovGraph> {
        match self.fixture(src)? {
            Some(Fixture::Graph(g)) => Ok(g),
            Some(Fixture::TwoTerminal(n)) => Ok(n.graph),
            Some(_) => Err(Error::InvalidConfig(format!("{src} is not a graph fixture"))),
            None => GraphFile::parse(&self.file(src)?)?.graph().map_err(as_config),
        }
    }

    pub(crate) fn network(&self, src: &str) -> Result<TwoTerminalNetwork> {
        match self.fixture(src)? {
            Some(Fixture::TwoTerminal(n)) => Ok(n),
            Some(_) => Err(Error::InvalidConfig(format!("{src} is not a two-terminal fixture"))),
            None => GraphFile::parse(&self.file(src)?)?.two_terminal().map_err(as_config),
        }
    }

    pub(crate) fn reactions(&self, src: &str) -> Result<ReactionNetwork> {
        match self.fixture(src)? {
            Some(Fixture::Reactions(r)) => Ok(r),
            Some(_) => Err(Error::InvalidConfig(format!("{src} is not a reaction fixture"))),
            None => ReactionNetwork::from_json(&self.file(src)?).map_err(as_config),
        }
    }
}

/// Input problems found while loading are config errors.
fn as_config(e: Error) -> Error {
    match e {
        Error::InvalidConfig(_) => e,
        other => Error::InvalidConfig(other.to_string()),
    }
}

fn params<T: DeserializeOwned>(v: &Value) -> Result<T> {
    let v = if v.is_null() { Value::Object(Map::new()) } else { v.clone() };
    serde_json::from_value(v).map_err(|e| Error::InvalidConfig(format!("params: {e}")))
}

fn require(ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidConfig(msg.into()))
    }
}

fn eps_list_ok(eps: &[f64]) -> Result<()> {
    require(!eps.is_empty(), "eps_list must be non-empty")?;
    require(eps.iter().all(|&e| e > 0.0 && e.is_finite()), "eps values must be positive")?;
    require(eps.windows(2).all(|w| w[1] < w[0]), "eps_list must be strictly decreasing")
}

fn uniform_grid(t_end: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| t_end * i as f64 / n as f64).collect()
}

/// True if every consecutive value is strictly smaller.
fn decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_configs() {
        let base = Path::new(".");
        for bad in [
            "{",
            r#"{"kind":"nope"}"#,
            r#"{"kind":"reduce","extra":1}"#,
            r#"{"kind":"reduce","time_budget_s":-1}"#,
            r#"{"kind":"reduce","params":{"networks":["fixture:missing"]}}"#,
            r#"{"kind":"reduce","params":{"networks":["nofile.json"]}}"#,
            r#"{"kind":"chain","params":{"eps_list":[0.01,0.1]}}"#,
            r#"{"kind":"gillespie","params":{"graph":"fixture:two_node"}}"#,
        ] {
            assert!(matches!(prepare_str(bad, base), Err(Error::InvalidConfig(_))), "{bad}");
        }
    }

    #[test]
    fn budget_expires() {
        let b = Budget::new(1e-9);
        std::thread::sleep(std::time::Duration::from_millis(2));
        assert!(matches!(b.check("x"), Err(Error::NumericalFailure(_))));
        assert!(Budget::new(10.0).check("x").is_ok());
    }

    #[test]
    fn checks_handle_nan() {
        assert!(!Check::at_most("x", f64::NAN, 1.0).pass);
        assert!(!Check::between("x", f64::NAN, 0.0, 1.0).pass);
        assert!(Check::between("x", 1.0, 0.8, 1.2).pass);
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}

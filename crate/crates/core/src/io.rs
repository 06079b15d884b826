//! Graph JSON, tables and CSV output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph_system::{MarkovGraph, Trajectory};
use crate::network_reduction::TwoTerminalNetwork;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub nodes: Vec<String>,
    pub pi: Vec<f64>,
    /// `(from, to, rate)` triplets.
    pub kappa: Vec<(String, String, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminals: Option<(String, String)>,
}

impl GraphFile {
    pub fn from_graph(g: &MarkovGraph, terminals: Option<(usize, usize)>) -> Self {
        let ids = g.nodes();
        GraphFile {
            nodes: ids.to_vec(),
            pi: g.pi().to_vec(),
            kappa: g.triplets().into_iter().map(|(x, y, k)| (ids[x].clone(), ids[y].clone(), k)).collect(),
            terminals: terminals.map(|(a, b)| (ids[a].clone(), ids[b].clone())),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("graph JSON: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serialises")
    }

    pub fn graph(&self) -> Result<MarkovGraph> {
        let idx = |id: &str| {
            self.nodes.iter().position(|n| n == id).ok_or_else(|| Error::InvalidConfig(format!("unknown node '{id}'")))
        };
        let trip = self.kappa.iter().map(|(x, y, k)| Ok((idx(x)?, idx(y)?, *k))).collect::<Result<Vec<_>>>()?;
        MarkovGraph::new(self.nodes.clone(), self.pi.clone(), &trip)
    }

    pub fn two_terminal(&self) -> Result<TwoTerminalNetwork> {
        let (a, b) = self.terminals.as_ref().ok_or_else(|| Error::InvalidConfig("graph has no terminals".into()))?;
        TwoTerminalNetwork::by_ids(self.graph()?, a, b)
    }
}

/// Shortest round-trip decimal form, switching to exponent notation outside
/// `[1e-5, 1e16)`.
pub fn fmt_num(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 {
        "0".into()
    } else if !x.is_finite() {
        if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else if (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => fmt_num(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => {
                if s.contains([',', '"', '\n']) {
                    format!("\"{}\"", s.replace('"', "\"\""))
                } else {
                    s.clone()
                }
            }
            Cell::Bool(b) => b.to_string(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(x) => Some(*x),
            Cell::Int(i) => Some(*i as f64),
            _ => None,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

/// Named table with a fixed column order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(Cell::render).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }
}

/// Trajectory table with columns `time, node:<id>..., edge:<x>-<y>...`.
pub fn trajectory_table(g: &MarkovGraph, t: &Trajectory) -> Table {
    let ids = g.nodes();
    let mut cols = vec!["time".to_string()];
    cols.extend(ids.iter().map(|n| format!("node:{n}")));
    cols.extend(g.edges().iter().map(|e| format!("edge:{}-{}", ids[e.x], ids[e.y])));
    let mut tab = Table { name: "trajectory".into(), columns: cols, rows: Vec::new() };
    for ((time, s), j) in t.times.iter().zip(&t.states).zip(&t.fluxes) {
        let mut row = vec![Cell::Num(*time)];
        row.extend(s.iter().map(|&v| Cell::Num(v)));
        row.extend(j.iter().map(|&v| Cell::Num(v)));
        tab.rows.push(row);
    }
    tab
}

//! File formats. Vertex, cluster and channel ids are 1-based on disk.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use netred::{Clustering, DirectedNetwork, Edge, QuotientModel};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Rounds to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// `round12` rendered as a JSON number.
pub fn fmt12(x: f64) -> String {
    serde_json::to_string(&round12(x)).unwrap_or_else(|_| x.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub tail: usize,
    pub head: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub vertex: usize,
    pub channel: usize,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub channel: usize,
    pub vertex: usize,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub n: usize,
    pub edges: Vec<EdgeRecord>,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<OutputRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
}

fn one_based(id: usize, bound: usize, what: &str) -> Result<usize, CliError> {
    if id == 0 || id > bound {
        return Err(CliError::Parse(format!("{what} {id} is outside 1..={bound}")));
    }
    Ok(id - 1)
}

impl GraphFile {
    pub fn to_network(&self) -> Result<DirectedNetwork, CliError> {
        let n = self.n;
        let p = self
            .p
            .unwrap_or_else(|| self.inputs.iter().map(|r| r.channel).max().unwrap_or(0));
        let q = self
            .q
            .unwrap_or_else(|| self.outputs.iter().map(|r| r.channel).max().unwrap_or(0));
        let mut edges = Vec::with_capacity(self.edges.len());
        for e in &self.edges {
            edges.push(Edge::new(
                one_based(e.tail, n, "edge tail")?,
                one_based(e.head, n, "edge head")?,
                e.weight,
            ));
        }
        let mut input = DMatrix::zeros(n, p);
        for r in &self.inputs {
            input[(one_based(r.vertex, n, "input vertex")?, one_based(r.channel, p, "input channel")?)] += r.gain;
        }
        let mut output = DMatrix::zeros(q, n);
        for r in &self.outputs {
            output[(one_based(r.channel, q, "output channel")?, one_based(r.vertex, n, "output vertex")?)] += r.gain;
        }
        DirectedNetwork::new(n, edges, input, output).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn from_network(net: &DirectedNetwork) -> Self {
        let edges = net
            .edges()
            .iter()
            .map(|e| EdgeRecord {
                tail: e.tail + 1,
                head: e.head + 1,
                weight: round12(e.weight),
            })
            .collect();
        let f = net.input();
        let mut inputs = Vec::new();
        for ch in 0..f.ncols() {
            for v in 0..f.nrows() {
                if f[(v, ch)] != 0.0 {
                    inputs.push(InputRecord {
                        vertex: v + 1,
                        channel: ch + 1,
                        gain: round12(f[(v, ch)]),
                    });
                }
            }
        }
        let h = net.output();
        let mut outputs = Vec::new();
        for ch in 0..h.nrows() {
            for v in 0..h.ncols() {
                if h[(ch, v)] != 0.0 {
                    outputs.push(OutputRecord {
                        channel: ch + 1,
                        vertex: v + 1,
                        gain: round12(h[(ch, v)]),
                    });
                }
            }
        }
        Self {
            n: net.n(),
            edges,
            inputs,
            outputs,
            p: Some(f.ncols()),
            q: Some(h.nrows()),
        }
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

pub fn read_graph(path: &Path) -> Result<DirectedNetwork, CliError> {
    parse_json::<GraphFile>(path)?.to_network()
}

pub fn read_clusters(path: &Path, n: usize) -> Result<Clustering, CliError> {
    let groups: Vec<Vec<usize>> = parse_json(path)?;
    let mut zero_based = Vec::with_capacity(groups.len());
    for g in &groups {
        let mut out = Vec::with_capacity(g.len());
        for &v in g {
            out.push(one_based(v, n, "clustered vertex")?);
        }
        zero_based.push(out);
    }
    Clustering::from_groups(&zero_based, n).map_err(|e| CliError::Parse(e.to_string()))
}

pub fn clusters_to_json(clustering: &Clustering) -> Vec<Vec<usize>> {
    clustering
        .groups()
        .into_iter()
        .map(|g| g.into_iter().map(|v| v + 1).collect())
        .collect()
}

/// Quotient edge weights keyed by 1-based cluster ids.
pub fn weight_records(quotient: &QuotientModel, weights: &DVector<f64>) -> Vec<EdgeRecord> {
    quotient
        .edges
        .iter()
        .zip(weights.iter())
        .map(|(&(t, h), &w)| EdgeRecord {
            tail: t + 1,
            head: h + 1,
            weight: round12(w),
        })
        .collect()
}

/// Reads a weights file and orders it like the quotient's edges. Every
/// quotient edge must be listed exactly once.
pub fn read_weights(path: &Path, quotient: &QuotientModel) -> Result<DVector<f64>, CliError> {
    let records: Vec<EdgeRecord> = parse_json(path)?;
    let mut w = DVector::from_element(quotient.num_edges(), f64::NAN);
    for rec in &records {
        let key = (rec.tail.wrapping_sub(1), rec.head.wrapping_sub(1));
        let Some(k) = quotient.edges.iter().position(|&e| e == key) else {
            return Err(CliError::Admissibility(format!(
                "{} -> {} is not an edge of the quotient graph",
                rec.tail, rec.head
            )));
        };
        if !w[k].is_nan() {
            return Err(CliError::Parse(format!("edge {} -> {} listed twice", rec.tail, rec.head)));
        }
        w[k] = rec.weight;
    }
    if let Some(k) = w.iter().position(|v| v.is_nan()) {
        let (t, h) = quotient.edges[k];
        return Err(CliError::Admissibility(format!("no weight for quotient edge {} -> {}", t + 1, h + 1)));
    }
    Ok(w)
}

/// Serializes with floats rounded to 12 significant digits and a trailing
/// newline.
pub fn to_json_text<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut v = serde_json::to_value(value).map_err(|e| CliError::Io(e.to_string()))?;
    round_value(&mut v);
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| CliError::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn round_value(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Number(num) if num.is_f64() => {
            if let Some(x) = num.as_f64().and_then(|x| serde_json::Number::from_f64(round12(x))) {
                *num = x;
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(round_value),
        serde_json::Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().map(|&x| round12(x)).collect()).collect()
}

/// Writes to `path`, or to stdout when `path` is `None`.
pub fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

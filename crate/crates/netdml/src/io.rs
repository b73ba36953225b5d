//! Edge lists and dataset CSV files.
//!
//! An edge list has one `u v` pair per line with 0-based node ids. Blank
//! lines and lines starting with `#` are skipped, except a leading
//! `# nodes N` line, which fixes the node count so trailing isolated nodes
//! survive a round trip.
//!
//! Datasets are CSV with header `y,w,x,c` plus `v` when every unit has an
//! instrument.

use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use netdml_core::dgp::{Dataset, Observation};
use netdml_core::metric_space::{Graph, MetricSpace};
use serde::{Deserialize, Serialize};

use crate::error::{io_at, HarnessError, Result};

pub fn write_edge_list<W: Write>(graph: &Graph, mut out: W) -> std::io::Result<()> {
    writeln!(out, "# nodes {}", graph.len())?;
    for (u, v) in graph.edges() {
        writeln!(out, "{u} {v}")?;
    }
    out.flush()
}

/// Reads an edge list. The node count comes from `n`, else from a
/// `# nodes N` header, else from the largest id.
pub fn read_edge_list<R: BufRead>(input: R, n: Option<usize>) -> Result<Graph> {
    let mut edges = Vec::new();
    let mut declared = None;
    for (k, line) in input.lines().enumerate() {
        let line = line.map_err(io_at("<edge list>"))?;
        let line = line.trim();
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(count) = rest.trim().strip_prefix("nodes") {
                declared = Some(count.trim().parse::<usize>().map_err(|_| {
                    HarnessError::Format(format!(
                        "line {}: bad node count {:?}",
                        k + 1,
                        count.trim()
                    ))
                })?);
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace().map(str::parse::<usize>);
        match (parts.next(), parts.next(), parts.next()) {
            (Some(Ok(u)), Some(Ok(v)), None) => edges.push((u, v)),
            _ => {
                return Err(HarnessError::Format(format!(
                    "line {}: expected \"u v\", got {line:?}",
                    k + 1
                )))
            }
        }
    }
    let n = n
        .or(declared)
        .unwrap_or_else(|| edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0));
    Ok(Graph::from_edges(n, &edges)?)
}

pub fn save_edge_list(graph: &Graph, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(io_at(path))?;
    write_edge_list(graph, std::io::BufWriter::new(f)).map_err(io_at(path))
}

pub fn load_edge_list(path: &Path) -> Result<Graph> {
    let f = std::fs::File::open(path).map_err(io_at(path))?;
    read_edge_list(std::io::BufReader::new(f), None)
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    y: f64,
    w: f64,
    x: f64,
    c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    v: Option<f64>,
}

pub fn write_dataset<W: Write>(data: &Dataset, out: W) -> Result<()> {
    let with_v = !data.observations.is_empty() && data.observations.iter().all(|o| o.v.is_some());
    let mut w = csv::Writer::from_writer(out);
    if with_v {
        w.write_record(["y", "w", "x", "c", "v"])?;
    } else {
        w.write_record(["y", "w", "x", "c"])?;
    }
    for o in &data.observations {
        let mut rec = vec![
            o.y.to_string(),
            o.w.to_string(),
            o.x.to_string(),
            o.c.to_string(),
        ];
        if with_v {
            rec.push(o.v.map_or(String::new(), |v| v.to_string()));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(io_at("<dataset>"))?;
    Ok(())
}

/// Reads observations and attaches them to `space`.
pub fn read_dataset<R: std::io::Read>(input: R, space: Arc<MetricSpace>) -> Result<Dataset> {
    let mut rd = csv::Reader::from_reader(input);
    let mut obs = Vec::new();
    for row in rd.deserialize::<Row>() {
        let r = row?;
        obs.push(Observation {
            y: r.y,
            w: r.w,
            x: r.x,
            c: r.c,
            v: r.v,
        });
    }
    Ok(Dataset::new(obs, space)?)
}

pub fn save_dataset(data: &Dataset, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(io_at(path))?;
    write_dataset(data, std::io::BufWriter::new(f))
}

pub fn load_dataset(path: &Path, space: Arc<MetricSpace>) -> Result<Dataset> {
    let f = std::fs::File::open(path).map_err(io_at(path))?;
    read_dataset(std::io::BufReader::new(f), space)
}

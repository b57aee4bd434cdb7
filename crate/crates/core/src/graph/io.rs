//! Edge-list text (`u v` per line, `#` comments) and feature CSV fixtures.

use std::fmt::Write as _;
use std::path::Path;

use super::Graph;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Parses an edge list; returns 0-based `(u, v)` pairs in file order.
pub fn parse_edge_list(text: &str) -> std::result::Result<Vec<(usize, usize)>, String> {
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let parse = |tok: Option<&str>| -> std::result::Result<usize, String> {
            tok.ok_or_else(|| format!("line {}: expected two node indices", lineno + 1))?
                .parse()
                .map_err(|e| format!("line {}: {e}", lineno + 1))
        };
        let u = parse(parts.next())?;
        let v = parse(parts.next())?;
        if parts.next().is_some() {
            return Err(format!("line {}: trailing tokens", lineno + 1));
        }
        edges.push((u, v));
    }
    Ok(edges)
}

/// Reads an edge-list file. Without `node_count` the graph spans
/// `0..=max index`.
pub fn read_edge_list(path: &Path, node_count: Option<usize>) -> Result<Graph> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let edges = parse_edge_list(&text).map_err(|m| Error::format(path, m))?;
    let n = node_count.unwrap_or_else(|| edges.iter().map(|&(u, v)| u.max(v) + 1).max().unwrap_or(0));
    Graph::new(n, edges).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_edge_list(g: &Graph) -> String {
    let mut s = String::new();
    writeln!(s, "# nodes {}", g.node_count()).unwrap();
    for (u, v) in g.edges() {
        writeln!(s, "{u} {v}").unwrap();
    }
    s
}

pub fn parse_features_csv(text: &str) -> std::result::Result<Matrix<f64>, String> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| format!("line {}: {e}", lineno + 1)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Matrix::from_rows(&rows).map_err(|e| e.to_string())
}

pub fn read_features_csv(path: &Path) -> Result<Matrix<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_features_csv(&text).map_err(|m| Error::format(path, m))
}

/// One node per row, shortest round-trip float formatting.
pub fn features_to_csv(m: &Matrix<f64>) -> String {
    let mut s = String::new();
    for r in 0..m.rows() {
        let cells: Vec<String> = m.row(r).iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

use std::fmt::Write;

use serde::{Deserialize, Serialize};

/// Gate values for one sentence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    /// Entity gates, `[D]`.
    pub g_m: Vec<f64>,
    /// Relational gates, `[D][D]`.
    pub g_r: Vec<Vec<f64>>,
}

/// Per-sentence gates plus the final question attention.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ForwardTrace {
    pub steps: Vec<TraceStep>,
    /// Attention over slot pairs, `[D][D]`.
    pub attention: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn slots(&self) -> usize {
        self.attention.len()
    }

    /// Slot pairs ordered by decreasing attention; ties keep row-major order.
    pub fn strongest_pairs(&self, k: usize) -> Vec<(usize, usize, f64)> {
        let mut pairs: Vec<(usize, usize, f64)> = self
            .attention
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, &p)| (i, j, p)))
            .collect();
        pairs.sort_by(|a, b| b.2.total_cmp(&a.2));
        pairs.truncate(k);
        pairs
    }

    /// Graphviz digraph: one node per slot, an edge for each of the `top_k`
    /// most attended pairs.
    pub fn to_dot(&self, top_k: usize) -> String {
        let mut out = String::from("digraph relnet {\n  node [shape=circle];\n");
        for i in 0..self.slots() {
            let _ = writeln!(out, "  m{i} [label=\"m{i}\"];");
        }
        for (i, j, p) in self.strongest_pairs(top_k) {
            let _ = writeln!(
                out,
                "  m{i} -> m{j} [label=\"{p:.4}\", penwidth={:.3}];",
                1.0 + 4.0 * p
            );
        }
        out.push_str("}\n");
        out
    }
}

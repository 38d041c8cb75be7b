use std::fmt;

use serde::Serialize;

use super::{MedGraph, NodeType};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Binary,
    Continuous,
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueKind::Binary => "binary: 0, 1",
            ValueKind::Continuous => "continuous: 0-1",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatrixStats {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub edges: usize,
    /// `1 - edges / (rows · cols)`; an empty matrix counts as fully sparse.
    pub sparsity: f64,
    pub kind: ValueKind,
}

impl MatrixStats {
    pub fn from_counts(name: &str, rows: usize, cols: usize, edges: usize, kind: ValueKind) -> Self {
        let cells = rows * cols;
        let sparsity = if cells == 0 {
            1.0
        } else {
            1.0 - edges as f64 / cells as f64
        };
        Self {
            name: name.to_string(),
            rows,
            cols,
            edges,
            sparsity,
            kind,
        }
    }

    /// Edge count taken as the number of nonzero entries.
    pub fn of_matrix(name: &str, m: &Matrix, kind: ValueKind) -> Self {
        Self::from_counts(name, m.rows(), m.cols(), m.count_nonzero(), kind)
    }

    /// Sparsity as a percentage string with two decimals, e.g. `99.88%`.
    pub fn sparsity_percent(&self) -> String {
        format!("{:.2}%", self.sparsity * 100.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphStats {
    pub n_encounters: usize,
    pub n_patients: usize,
    pub n_labs: usize,
    pub n_medications: usize,
    pub matrices: Vec<MatrixStats>,
}

impl MedGraph {
    pub fn graph_stats(&self) -> GraphStats {
        let n = |t| self.n(t);
        GraphStats {
            n_encounters: n(NodeType::Encounter),
            n_patients: n(NodeType::Patient),
            n_labs: n(NodeType::Lab),
            n_medications: n(NodeType::Medication),
            matrices: vec![
                MatrixStats::of_matrix("A_ExP", &self.a_ep, ValueKind::Binary),
                // observed zeros are edges too, so count the mask
                MatrixStats::from_counts(
                    "A_ExL",
                    self.a_el.rows(),
                    self.a_el.cols(),
                    self.m_el.count_nonzero(),
                    ValueKind::Continuous,
                ),
                MatrixStats::of_matrix("A_ExM", &self.a_em, ValueKind::Binary),
            ],
        }
    }
}

pub fn graph_stats(graph: &MedGraph) -> GraphStats {
    graph.graph_stats()
}

impl fmt::Display for GraphStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "#E: {}; #P: {}; #L: {}; #M: {}",
            self.n_encounters, self.n_patients, self.n_labs, self.n_medications
        )?;
        writeln!(f, "{:<8}{:<14}{:>8}{:>10}  values", "matrix", "size", "edges", "sparsity")?;
        for m in &self.matrices {
            writeln!(
                f,
                "{:<8}{:<14}{:>8}{:>10}  {}",
                m.name,
                format!("{}x{}", m.rows, m.cols),
                m.edges,
                m.sparsity_percent(),
                m.kind
            )?;
        }
        Ok(())
    }
}

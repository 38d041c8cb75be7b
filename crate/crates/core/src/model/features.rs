use crate::graph::{MedGraph, NodeType};
use crate::tensor::Matrix;

use super::ModelError;

/// Input representation of one node type.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMatrix {
    /// Identity features for `n` nodes; never materialized.
    OneHot(usize),
    Dense(Matrix),
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        match self {
            FeatureMatrix::OneHot(n) => *n,
            FeatureMatrix::Dense(m) => m.rows(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FeatureMatrix::OneHot(n) => *n,
            FeatureMatrix::Dense(m) => m.cols(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures {
    by_type: [FeatureMatrix; 4],
}

impl NodeFeatures {
    pub fn new(by_type: [FeatureMatrix; 4]) -> Self {
        Self { by_type }
    }

    /// One-hot features for every node of `graph`.
    pub fn one_hot(graph: &MedGraph) -> Self {
        Self::new(NodeType::ALL.map(|t| FeatureMatrix::OneHot(graph.n(t))))
    }

    /// Encounter features only; the other types are empty.
    pub fn single(encounters: FeatureMatrix) -> Self {
        Self::new([
            encounters,
            FeatureMatrix::OneHot(0),
            FeatureMatrix::OneHot(0),
            FeatureMatrix::OneHot(0),
        ])
    }

    pub fn get(&self, t: NodeType) -> &FeatureMatrix {
        &self.by_type[t.index()]
    }

    pub fn dense(&self, t: NodeType) -> Option<&Matrix> {
        match self.get(t) {
            FeatureMatrix::Dense(m) => Some(m),
            FeatureMatrix::OneHot(_) => None,
        }
    }

    pub fn dims(&self) -> [usize; 4] {
        NodeType::ALL.map(|t| self.get(t).dim())
    }

    pub(crate) fn check_counts(&self, counts: [usize; 4]) -> Result<(), ModelError> {
        for t in NodeType::ALL {
            let rows = self.get(t).rows();
            if rows != counts[t.index()] {
                return Err(ModelError::Shape(format!(
                    "{t} features have {rows} rows for {} nodes",
                    counts[t.index()]
                )));
            }
        }
        Ok(())
    }
}

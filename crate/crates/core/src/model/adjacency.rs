use std::borrow::Cow;

use crate::graph::{MedGraph, NodeType};
use crate::tensor::Matrix;

/// `dst` nodes aggregate from `src` nodes through `matrix` (N_dst × N_src).
#[derive(Debug, Clone, PartialEq)]
pub struct Relation<'g> {
    pub dst: NodeType,
    pub src: NodeType,
    pub matrix: Cow<'g, Matrix>,
}

/// Typed adjacency blocks. The within-type identity is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct HeteroAdjacency<'g> {
    pub counts: [usize; 4],
    pub relations: Vec<Relation<'g>>,
}

impl<'g> HeteroAdjacency<'g> {
    /// Encounters aggregate from patients, labs and medications; each of
    /// those aggregates from encounters over the transpose. Types without
    /// nodes contribute no block.
    pub fn from_graph(g: &'g MedGraph) -> Self {
        let counts = g.registry.counts();
        let mut relations = Vec::new();
        let blocks = [
            (NodeType::Patient, &g.a_ep),
            (NodeType::Lab, &g.a_el),
            (NodeType::Medication, &g.a_em),
        ];
        let has = |t: NodeType| counts[t.index()] > 0;
        if has(NodeType::Encounter) {
            for (t, m) in blocks {
                if has(t) {
                    relations.push(Relation {
                        dst: NodeType::Encounter,
                        src: t,
                        matrix: Cow::Borrowed(m),
                    });
                }
            }
            for (t, m) in blocks {
                if has(t) {
                    relations.push(Relation {
                        dst: t,
                        src: NodeType::Encounter,
                        matrix: Cow::Owned(m.transpose()),
                    });
                }
            }
        }
        Self { counts, relations }
    }

    /// A graph with encounters only, linked to each other by `a`.
    pub fn homogeneous(a: Matrix) -> Self {
        let n = a.rows();
        assert_eq!(a.cols(), n, "homogeneous adjacency must be square");
        let mut counts = [0; 4];
        counts[NodeType::Encounter.index()] = n;
        Self {
            counts,
            relations: vec![Relation {
                dst: NodeType::Encounter,
                src: NodeType::Encounter,
                matrix: Cow::Owned(a),
            }],
        }
    }

    /// `1 + Σ` of every adjacency weight leaving each `dst` node.
    pub fn degrees(&self, dst: NodeType) -> Vec<f64> {
        let mut deg = vec![1.0; self.counts[dst.index()]];
        for rel in self.relations.iter().filter(|r| r.dst == dst) {
            for (i, d) in deg.iter_mut().enumerate() {
                *d += rel.matrix.row(i).iter().sum::<f64>();
            }
        }
        deg
    }
}

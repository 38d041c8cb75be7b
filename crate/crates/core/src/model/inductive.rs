//! Embedding encounters that were added after training, without touching
//! the weights. Neighbors keep the representations they had on the training
//! graph; only the new encounter's own row is computed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::{MedGraph, NodeType};
use crate::tensor::{sigmoid, Matrix, Tape};

use super::{
    initial_inputs, layer_forward_tape, FeatureMatrix, HeteroAdjacency, LayerInput, MedGcnModel,
    ModelError, NodeFeatures,
};

#[derive(Debug, Clone, PartialEq)]
pub struct InductiveOutput {
    pub h_e: Vec<f64>,
    /// Medication probabilities.
    pub p: Vec<f64>,
    /// Normalized lab values.
    pub v: Vec<f64>,
}

/// Input rows of one node type at some layer.
enum Rep<'a> {
    OneHot,
    Dense(&'a Matrix),
}

impl Rep<'_> {
    fn project(&self, w: &Matrix) -> Result<Matrix, ModelError> {
        Ok(match self {
            Rep::OneHot => w.clone(),
            Rep::Dense(h) => h.matmul(w)?,
        })
    }
}

fn row_times(row: &[f64], w: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; w.cols()];
    for (k, &x) in row.iter().enumerate() {
        if x != 0.0 {
            for (o, &wv) in out.iter_mut().zip(w.row(k)) {
                *o += x * wv;
            }
        }
    }
    out
}

impl MedGcnModel {
    /// Representation and predictions for encounter `ordinal` of `graph`,
    /// which must extend the training graph with appended encounters.
    /// `features` are the training features. An appended encounter with
    /// one-hot features has no row of its own, so its self term is zero.
    pub fn inductive_embed(
        &self,
        graph: &MedGraph,
        features: &NodeFeatures,
        ordinal: usize,
    ) -> Result<InductiveOutput, ModelError> {
        let n_train = self.node_counts[NodeType::Encounter.index()];
        if ordinal >= graph.n_encounters() {
            return Err(ModelError::Lookup(format!(
                "encounter ordinal {ordinal} out of range for {} encounters",
                graph.n_encounters()
            )));
        }
        if graph.n_encounters() < n_train {
            return Err(ModelError::Shape(format!(
                "graph has {} encounters, fewer than the {n_train} trained on",
                graph.n_encounters()
            )));
        }
        let frozen = graph.truncate_encounters(n_train);
        self.check_graph(&frozen)?;
        features.check_counts(self.node_counts)?;
        let adj = HeteroAdjacency::from_graph(&frozen);

        // layer inputs of every type on the frozen graph
        let mut tape = Tape::new();
        let mut inputs = vec![initial_inputs(&mut tape, features)];
        let all: Vec<NodeType> = NodeType::ALL.to_vec();
        // eval mode never draws from the generator
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for layer in &self.layers[..self.layers.len() - 1] {
            let prev = inputs.last().expect("seeded with features");
            let out = layer_forward_tape(
                &mut tape, layer, &adj, prev, &self.hyper, false, &mut rng, &all,
            )?;
            inputs.push(out.map(|o| o.map(LayerInput::Var)));
        }

        let blocks = [
            (NodeType::Patient, &graph.a_ep),
            (NodeType::Lab, &graph.a_el),
            (NodeType::Medication, &graph.a_em),
        ];
        let degree = 1.0
            + blocks
                .iter()
                .map(|(_, a)| a.row(ordinal).iter().sum::<f64>())
                .sum::<f64>();

        let mut own: Option<Vec<f64>> = None;
        for (k, layer) in self.layers.iter().enumerate() {
            let w_e = &layer
                .get(NodeType::Encounter)
                .ok_or_else(|| ModelError::Shape("layer has no encounter weight".into()))?
                .value;
            let mut acc = match (&own, features.get(NodeType::Encounter)) {
                (Some(h), _) => row_times(h, w_e),
                (None, FeatureMatrix::OneHot(n)) if ordinal < *n => w_e.row(ordinal).to_vec(),
                (None, FeatureMatrix::Dense(m)) if ordinal < m.rows() => row_times(m.row(ordinal), w_e),
                (None, _) => vec![0.0; w_e.cols()],
            };
            for (t, a) in blocks {
                let Some(w) = layer.get(t) else { continue };
                let rep = match inputs[k][t.index()] {
                    Some(LayerInput::OneHot) => Rep::OneHot,
                    Some(LayerInput::Var(v)) => Rep::Dense(tape.value(v)),
                    None => continue,
                };
                let proj = rep.project(&w.value)?;
                for (j, &aw) in a.row(ordinal).iter().enumerate() {
                    if aw != 0.0 {
                        for (o, &pv) in acc.iter_mut().zip(proj.row(j)) {
                            *o += aw * pv;
                        }
                    }
                }
            }
            if self.hyper.normalize_adjacency {
                acc.iter_mut().for_each(|x| *x /= degree);
            }
            acc.iter_mut()
                .for_each(|x| *x = self.hyper.activation.apply(*x));
            own = Some(acc);
        }
        let h_e = own.expect("at least one layer");
        let p = self.head_med.logits_row(&h_e)?.into_iter().map(sigmoid).collect();
        let v = self.head_lab.logits_row(&h_e)?.into_iter().map(sigmoid).collect();
        Ok(InductiveOutput { h_e, p, v })
    }
}

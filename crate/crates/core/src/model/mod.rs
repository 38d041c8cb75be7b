//! Heterogeneous graph convolution and the two prediction heads.
//!
//! One layer updates every node type `i` as
//!
//! ```text
//! H_i' = φ( H_i·W_i + Σ_{j ≠ i} A_ij · H_j · W_j )
//! ```
//!
//! where `W_j` belongs to the source type `j` and is shared by every
//! destination that aggregates from `j`. The `H_i·W_i` term is the identity
//! within-type adjacency. Encounters aggregate from patients, labs and
//! medications; the other three types aggregate only from encounters, over
//! the transposed matrices.
//!
//! After the last layer the encounter representation feeds two heads,
//! `P = σ(f_med(H_E))` and `V = σ(f_lab(H_E))`.

mod adjacency;
mod checkpoint;
mod features;
mod inductive;

pub use adjacency::{HeteroAdjacency, Relation};
pub use checkpoint::CHECKPOINT_MAGIC;
pub use features::{FeatureMatrix, NodeFeatures};

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{GraphFingerprint, LabRange, MedGraph, NodeType};
use crate::tensor::{DenseTensor, Matrix, Tape, TensorError, Var};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid hyperparameter: {0}")]
    Param(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("lookup error: {0}")]
    Lookup(String),
    #[error("checkpoint was trained on graph {expected}, not {found}")]
    Fingerprint {
        expected: GraphFingerprint,
        found: GraphFingerprint,
    },
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    /// No nonlinearity; used to check the layer algebra.
    Identity,
}

impl Activation {
    fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Identity => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Identity),
            _ => None,
        }
    }

    fn apply_tape(self, tape: &mut Tape<'_>, v: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(v),
            Activation::Identity => v,
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelHyper {
    pub hidden_dim: usize,
    pub n_layers: usize,
    pub dropout: f64,
    pub activation: Activation,
    /// Divide each aggregated row by `1 + Σ adjacency weights` of its node.
    pub normalize_adjacency: bool,
    /// Hidden ReLU layers (width `hidden_dim`) in each head before the
    /// output affine map.
    pub head_hidden_layers: usize,
}

impl Default for ModelHyper {
    fn default() -> Self {
        Self {
            hidden_dim: 300,
            n_layers: 1,
            dropout: 0.1,
            activation: Activation::Relu,
            normalize_adjacency: false,
            head_hidden_layers: 0,
        }
    }
}

impl ModelHyper {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden_dim < 1 {
            return Err(ModelError::Param("hidden_dim must be at least 1".into()));
        }
        if self.n_layers < 1 {
            return Err(ModelError::Param("at least one graph layer is required".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Param(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// One graph layer: a weight matrix per source node type.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub weights: BTreeMap<NodeType, DenseTensor>,
}

impl LayerWeights {
    pub fn get(&self, t: NodeType) -> Option<&DenseTensor> {
        self.weights.get(&t)
    }

    pub fn out_dim(&self) -> usize {
        self.weights.values().next().map_or(0, |w| w.cols())
    }
}

/// Affine output map, optionally preceded by hidden ReLU layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub hidden: Vec<(DenseTensor, DenseTensor)>,
    pub weight: DenseTensor,
    pub bias: DenseTensor,
}

impl Head {
    fn forward_tape<'a>(&'a self, tape: &mut Tape<'a>, h: Var) -> Result<Var, TensorError> {
        let mut x = h;
        for (w, b) in &self.hidden {
            let wv = tape.param(w);
            let bv = tape.param(b);
            let z = tape.matmul(x, wv)?;
            let z = tape.add_row_bias(z, bv)?;
            x = tape.relu(z);
        }
        let wv = tape.param(&self.weight);
        let bv = tape.param(&self.bias);
        let z = tape.matmul(x, wv)?;
        tape.add_row_bias(z, bv)
    }

    /// Output logits for a single representation row.
    fn logits_row(&self, h: &[f64]) -> Result<Vec<f64>, TensorError> {
        let mut x = Matrix::from_vec(1, h.len(), h.to_vec())?;
        for (w, b) in &self.hidden {
            x = x.matmul(&w.value)?.try_add(&b.value)?.map(|v| v.max(0.0));
        }
        Ok(x.matmul(&self.weight.value)?
            .try_add(&self.bias.value)?
            .into_vec())
    }

    fn params(&self) -> impl Iterator<Item = &DenseTensor> {
        self.hidden
            .iter()
            .flat_map(|(w, b)| [w, b])
            .chain([&self.weight, &self.bias])
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut DenseTensor> {
        self.hidden
            .iter_mut()
            .flat_map(|(w, b)| [w, b])
            .chain([&mut self.weight, &mut self.bias])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedGcnModel {
    pub hyper: ModelHyper,
    /// Node counts per type of the graph the model was built for.
    pub node_counts: [usize; 4],
    /// Input feature width per type.
    pub feature_dims: [usize; 4],
    pub layers: Vec<LayerWeights>,
    pub head_med: Head,
    pub head_lab: Head,
    pub fingerprint: GraphFingerprint,
    /// Lab ranges in force when the model was built.
    pub lab_norm: Vec<LabRange>,
}

/// Values of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// N_E × N_M recommendation probabilities.
    pub p: Matrix,
    /// N_E × N_L imputed normalized lab values.
    pub v: Matrix,
    /// N_E × hidden encounter representation.
    pub h_e: Matrix,
}

/// Tape handles for one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub med_logits: Var,
    pub lab_logits: Var,
    pub p: Var,
    pub v: Var,
    pub h_e: Var,
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Matrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-limit..=limit))
}

fn init_head(rng: &mut ChaCha8Rng, hyper: &ModelHyper, n_out: usize) -> Head {
    let d = hyper.hidden_dim;
    let hidden = (0..hyper.head_hidden_layers)
        .map(|_| {
            (
                DenseTensor::parameter(glorot(rng, d, d)),
                DenseTensor::parameter(Matrix::zeros(1, d)),
            )
        })
        .collect();
    Head {
        hidden,
        weight: DenseTensor::parameter(glorot(rng, d, n_out)),
        bias: DenseTensor::parameter(Matrix::zeros(1, n_out)),
    }
}

/// Glorot-uniform weights and zero biases, deterministic under `seed`.
pub fn init_model(
    graph: &MedGraph,
    features: &NodeFeatures,
    hyper: ModelHyper,
    seed: u64,
) -> Result<MedGcnModel, ModelError> {
    hyper.validate()?;
    features.check_counts(graph.registry.counts())?;
    let node_counts = graph.registry.counts();
    let feature_dims = features.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(hyper.n_layers);
    for k in 0..hyper.n_layers {
        let mut weights = BTreeMap::new();
        for t in NodeType::ALL {
            if node_counts[t.index()] == 0 {
                continue;
            }
            let fan_in = if k == 0 {
                feature_dims[t.index()]
            } else {
                hyper.hidden_dim
            };
            weights.insert(
                t,
                DenseTensor::parameter(glorot(&mut rng, fan_in, hyper.hidden_dim)),
            );
        }
        layers.push(LayerWeights { weights });
    }
    let head_med = init_head(&mut rng, &hyper, node_counts[NodeType::Medication.index()]);
    let head_lab = init_head(&mut rng, &hyper, node_counts[NodeType::Lab.index()]);
    Ok(MedGcnModel {
        hyper,
        node_counts,
        feature_dims,
        layers,
        head_med,
        head_lab,
        fingerprint: graph.fingerprint(),
        lab_norm: graph.lab_norm.clone(),
    })
}

/// Per-type input to a layer on the tape.
#[derive(Debug, Clone, Copy)]
enum LayerInput {
    OneHot,
    Var(Var),
}

/// Records one heterogeneous layer. Only destinations in `wanted` are
/// computed; the returned array holds their outputs.
#[allow(clippy::too_many_arguments)]
fn layer_forward_tape<'a, R: Rng + ?Sized>(
    tape: &mut Tape<'a>,
    layer: &'a LayerWeights,
    adj: &'a HeteroAdjacency<'_>,
    inputs: &[Option<LayerInput>; 4],
    hyper: &ModelHyper,
    training: bool,
    rng: &mut R,
    wanted: &[NodeType],
) -> Result<[Option<Var>; 4], ModelError> {
    let mut needed = [false; 4];
    for &dst in wanted {
        needed[dst.index()] = adj.counts[dst.index()] > 0;
        for rel in adj.relations.iter().filter(|r| r.dst == dst) {
            needed[rel.src.index()] = true;
        }
    }

    let mut proj: [Option<Var>; 4] = [None; 4];
    for t in NodeType::ALL {
        if !needed[t.index()] {
            continue;
        }
        let w = layer
            .get(t)
            .ok_or_else(|| ModelError::Shape(format!("layer has no weight for source {t}")))?;
        let input = inputs[t.index()]
            .ok_or_else(|| ModelError::Shape(format!("no input features for {t}")))?;
        let wv = tape.param(w);
        proj[t.index()] = Some(match input {
            LayerInput::OneHot => tape.row_dropout(wv, hyper.dropout, training, rng)?,
            LayerInput::Var(h) => {
                let h = tape.dropout(h, hyper.dropout, training, rng)?;
                tape.matmul(h, wv)?
            }
        });
    }

    let mut out = [None; 4];
    for &dst in wanted {
        let Some(self_term) = proj[dst.index()] else {
            continue;
        };
        let mut terms = vec![self_term];
        for rel in adj.relations.iter().filter(|r| r.dst == dst) {
            let a = tape.constant_ref(rel.matrix.as_ref());
            let src = proj[rel.src.index()].expect("source projected above");
            terms.push(tape.matmul(a, src)?);
        }
        let mut sum = tape.add_all(&terms)?;
        if hyper.normalize_adjacency {
            let scale = adj.degrees(dst).into_iter().map(|d| 1.0 / d).collect();
            sum = tape.scale_rows(sum, scale)?;
        }
        out[dst.index()] = Some(hyper.activation.apply_tape(tape, sum));
    }
    Ok(out)
}

fn initial_inputs<'a>(tape: &mut Tape<'a>, features: &'a NodeFeatures) -> [Option<LayerInput>; 4] {
    NodeType::ALL.map(|t| match features.get(t) {
        FeatureMatrix::OneHot(_) => Some(LayerInput::OneHot),
        FeatureMatrix::Dense(m) => Some(LayerInput::Var(tape.constant_ref(m))),
    })
}

/// Evaluates one layer on concrete features and returns every node type's
/// new representation.
pub fn hetero_layer_forward<R: Rng + ?Sized>(
    layer: &LayerWeights,
    adj: &HeteroAdjacency<'_>,
    features: &NodeFeatures,
    hyper: &ModelHyper,
    training: bool,
    rng: &mut R,
) -> Result<NodeFeatures, ModelError> {
    features.check_counts(adj.counts)?;
    let mut tape = Tape::new();
    let inputs = initial_inputs(&mut tape, features);
    let wanted: Vec<NodeType> = NodeType::ALL
        .into_iter()
        .filter(|t| adj.counts[t.index()] > 0)
        .collect();
    let out = layer_forward_tape(&mut tape, layer, adj, &inputs, hyper, training, rng, &wanted)?;
    let d = layer.out_dim();
    let by_type = NodeType::ALL.map(|t| match out[t.index()] {
        Some(v) => FeatureMatrix::Dense(tape.value(v).clone()),
        None => FeatureMatrix::Dense(Matrix::zeros(0, d)),
    });
    Ok(NodeFeatures::new(by_type))
}

impl MedGcnModel {
    pub fn hidden_dim(&self) -> usize {
        self.hyper.hidden_dim
    }

    /// Checks that `graph` has the shape this model was built for.
    pub fn check_graph(&self, graph: &MedGraph) -> Result<(), ModelError> {
        let found = graph.fingerprint();
        if found != self.fingerprint {
            return Err(ModelError::Fingerprint {
                expected: self.fingerprint,
                found,
            });
        }
        if graph.registry.counts() != self.node_counts {
            return Err(ModelError::Shape(format!(
                "graph has node counts {:?}, model expects {:?}",
                graph.registry.counts(),
                self.node_counts
            )));
        }
        Ok(())
    }

    /// Records the graph layers on `tape` and returns the final encounter
    /// representation.
    pub fn encode_tape<'a, R: Rng + ?Sized>(
        &'a self,
        tape: &mut Tape<'a>,
        adj: &'a HeteroAdjacency<'_>,
        features: &'a NodeFeatures,
        training: bool,
        rng: &mut R,
    ) -> Result<Var, ModelError> {
        if adj.counts != self.node_counts {
            return Err(ModelError::Shape(format!(
                "adjacency counts {:?}, model expects {:?}",
                adj.counts, self.node_counts
            )));
        }
        features.check_counts(self.node_counts)?;
        if features.dims() != self.feature_dims {
            return Err(ModelError::Shape(format!(
                "feature widths {:?}, model expects {:?}",
                features.dims(),
                self.feature_dims
            )));
        }
        let mut inputs = initial_inputs(tape, features);
        let n_layers = self.layers.len();
        let all: Vec<NodeType> = NodeType::ALL.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            let wanted: &[NodeType] = if k + 1 == n_layers {
                &[NodeType::Encounter]
            } else {
                &all
            };
            let out =
                layer_forward_tape(tape, layer, adj, &inputs, &self.hyper, training, rng, wanted)?;
            inputs = out.map(|o| o.map(LayerInput::Var));
        }
        match inputs[NodeType::Encounter.index()] {
            Some(LayerInput::Var(v)) => Ok(v),
            _ => Err(ModelError::Shape("graph has no encounters".into())),
        }
    }

    /// Records the full forward pass on `tape`.
    pub fn forward_tape<'a, R: Rng + ?Sized>(
        &'a self,
        tape: &mut Tape<'a>,
        adj: &'a HeteroAdjacency<'_>,
        features: &'a NodeFeatures,
        training: bool,
        rng: &mut R,
    ) -> Result<ForwardVars, ModelError> {
        let h_e = self.encode_tape(tape, adj, features, training, rng)?;
        let med_logits = self.head_med.forward_tape(tape, h_e)?;
        let lab_logits = self.head_lab.forward_tape(tape, h_e)?;
        let p = tape.sigmoid(med_logits);
        let v = tape.sigmoid(lab_logits);
        Ok(ForwardVars {
            med_logits,
            lab_logits,
            p,
            v,
            h_e,
        })
    }

    /// Evaluation-mode output of one head only: `P` or `V`.
    pub fn predict_head(
        &self,
        adj: &HeteroAdjacency<'_>,
        features: &NodeFeatures,
        head: HeadKind,
    ) -> Result<Matrix, ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tape = Tape::new();
        let h_e = self.encode_tape(&mut tape, adj, features, false, &mut rng)?;
        let logits = match head {
            HeadKind::Medication => self.head_med.forward_tape(&mut tape, h_e)?,
            HeadKind::Lab => self.head_lab.forward_tape(&mut tape, h_e)?,
        };
        let out = tape.sigmoid(logits);
        Ok(tape.value(out).clone())
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        graph: &MedGraph,
        features: &NodeFeatures,
        training: bool,
        rng: &mut R,
    ) -> Result<ForwardOutput, ModelError> {
        let adj = HeteroAdjacency::from_graph(graph);
        let mut tape = Tape::new();
        let vars = self.forward_tape(&mut tape, &adj, features, training, rng)?;
        Ok(ForwardOutput {
            p: tape.value(vars.p).clone(),
            v: tape.value(vars.v).clone(),
            h_e: tape.value(vars.h_e).clone(),
        })
    }

    /// Evaluation-mode forward pass.
    pub fn predict(
        &self,
        graph: &MedGraph,
        features: &NodeFeatures,
    ) -> Result<ForwardOutput, ModelError> {
        // eval mode never draws from the generator
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        self.forward(graph, features, false, &mut rng)
    }

    /// All parameters in a fixed order: layers (by source type), then the
    /// medication head, then the lab head.
    pub fn params(&self) -> Vec<&DenseTensor> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.values())
            .chain(self.head_med.params())
            .chain(self.head_lab.params())
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut DenseTensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.values_mut())
            .chain(self.head_med.params_mut())
            .chain(self.head_lab.params_mut())
            .collect()
    }

    /// Labels matching [`MedGcnModel::params`], as written to checkpoints.
    pub fn param_labels(&self) -> Vec<String> {
        let mut labels = Vec::new();
        for (k, layer) in self.layers.iter().enumerate() {
            for t in layer.weights.keys() {
                labels.push(format!("layer{k}/{}", t.symbol()));
            }
        }
        for (name, head) in [("head_med", &self.head_med), ("head_lab", &self.head_lab)] {
            for h in 0..head.hidden.len() {
                labels.push(format!("{name}/hidden{h}/weight"));
                labels.push(format!("{name}/hidden{h}/bias"));
            }
            labels.push(format!("{name}/weight"));
            labels.push(format!("{name}/bias"));
        }
        labels
    }

    /// Number of leading parameters that belong to graph layers.
    pub fn n_layer_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len()).sum()
    }

    pub fn head_params_range(&self, head: HeadKind) -> std::ops::Range<usize> {
        let n_layer = self.n_layer_params();
        let n_med = 2 * (self.head_med.hidden.len() + 1);
        let n_lab = 2 * (self.head_lab.hidden.len() + 1);
        match head {
            HeadKind::Medication => n_layer..n_layer + n_med,
            HeadKind::Lab => n_layer + n_med..n_layer + n_med + n_lab,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Medication,
    Lab,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, tests::toy_records};

    fn toy() -> (MedGraph, NodeFeatures) {
        let g = build_graph(&toy_records()).unwrap();
        let f = NodeFeatures::one_hot(&g);
        (g, f)
    }

    fn small_hyper(d: usize) -> ModelHyper {
        ModelHyper {
            hidden_dim: d,
            ..Default::default()
        }
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let (g, f) = toy();
        let a = init_model(&g, &f, small_hyper(5), 3).unwrap();
        let b = init_model(&g, &f, small_hyper(5), 3).unwrap();
        assert_eq!(a, b);
        let c = init_model(&g, &f, small_hyper(5), 4).unwrap();
        assert_ne!(a, c);
        for w in a.params() {
            let (fan_in, fan_out) = w.value.shape();
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            assert!(w.value.as_slice().iter().all(|x| x.abs() <= limit));
        }
        assert!(a.head_med.bias.value.as_slice().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn toy_weight_shapes() {
        let (g, f) = toy();
        let d = 7;
        let m = init_model(&g, &f, small_hyper(d), 0).unwrap();
        let l = &m.layers[0];
        assert_eq!(l.get(NodeType::Encounter).unwrap().value.shape(), (4, d));
        assert_eq!(l.get(NodeType::Patient).unwrap().value.shape(), (2, d));
        assert_eq!(l.get(NodeType::Lab).unwrap().value.shape(), (3, d));
        assert_eq!(l.get(NodeType::Medication).unwrap().value.shape(), (3, d));
        assert_eq!(m.head_med.weight.value.shape(), (d, 3));
        assert_eq!(m.head_lab.weight.value.shape(), (d, 3));
        assert_eq!(m.params().len(), m.param_labels().len());
    }

    #[test]
    fn zero_hidden_dim_rejected() {
        let (g, f) = toy();
        assert!(matches!(
            init_model(&g, &f, small_hyper(0), 0),
            Err(ModelError::Param(_))
        ));
    }

    #[test]
    fn single_encounter_single_patient_sums_two_terms() {
        let r = crate::graph::GraphRecords {
            patients: vec!["P".into()],
            encounters: vec![crate::graph::EncounterRecord {
                encounter: "E".into(),
                patient: "P".into(),
            }],
            ..Default::default()
        };
        let g = build_graph(&r).unwrap();
        let f = NodeFeatures::one_hot(&g);
        let mut weights = BTreeMap::new();
        for t in [NodeType::Encounter, NodeType::Patient] {
            weights.insert(t, DenseTensor::parameter(Matrix::from_rows(&[[1.0]])));
        }
        let layer = LayerWeights { weights };
        let hyper = ModelHyper {
            hidden_dim: 1,
            dropout: 0.0,
            activation: Activation::Identity,
            ..Default::default()
        };
        let adj = HeteroAdjacency::from_graph(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = hetero_layer_forward(&layer, &adj, &f, &hyper, false, &mut rng).unwrap();
        assert_eq!(out.dense(NodeType::Encounter).unwrap(), &Matrix::from_rows(&[[2.0]]));
        assert_eq!(out.dense(NodeType::Patient).unwrap(), &Matrix::from_rows(&[[2.0]]));
    }

    #[test]
    fn pure_self_loop_with_identity_weights_is_unchanged() {
        let n = 3;
        let h = Matrix::from_fn(n, n, |i, j| (i as f64) * 0.5 - (j as f64) * 0.25);
        let adj = HeteroAdjacency::homogeneous(Matrix::zeros(n, n));
        let mut weights = BTreeMap::new();
        weights.insert(NodeType::Encounter, DenseTensor::parameter(Matrix::identity(n)));
        let layer = LayerWeights { weights };
        let features = NodeFeatures::single(FeatureMatrix::Dense(h.clone()));
        let hyper = ModelHyper {
            hidden_dim: n,
            dropout: 0.0,
            activation: Activation::Identity,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = hetero_layer_forward(&layer, &adj, &features, &hyper, false, &mut rng).unwrap();
        assert_eq!(out.dense(NodeType::Encounter).unwrap(), &h);
    }

    #[test]
    fn zero_heads_give_one_half() {
        let (g, f) = toy();
        let mut m = init_model(&g, &f, small_hyper(4), 1).unwrap();
        for head in [&mut m.head_med, &mut m.head_lab] {
            head.weight.value = Matrix::zeros(4, 3);
        }
        let out = m.predict(&g, &f).unwrap();
        assert!(out.p.as_slice().iter().all(|&p| p == 0.5));
        assert!(out.v.as_slice().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn eval_forward_is_repeatable_and_in_open_interval() {
        let (g, f) = toy();
        let m = init_model(&g, &f, small_hyper(6), 2).unwrap();
        let a = m.predict(&g, &f).unwrap();
        let b = m.predict(&g, &f).unwrap();
        assert_eq!(a, b);
        for x in a.p.as_slice().iter().chain(a.v.as_slice()) {
            assert!(*x > 0.0 && *x < 1.0);
        }
        assert_eq!(a.h_e.shape(), (4, 6));
    }

    #[test]
    fn training_forward_is_seeded() {
        let (g, f) = toy();
        let m = init_model(&g, &f, small_hyper(6), 2).unwrap();
        let run = |s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            m.forward(&g, &f, true, &mut rng).unwrap()
        };
        assert_eq!(run(5), run(5));
    }

    #[test]
    fn normalized_aggregation_divides_by_degree() {
        let (g, f) = toy();
        let mut m = init_model(&g, &f, small_hyper(3), 0).unwrap();
        m.hyper.activation = Activation::Identity;
        m.hyper.dropout = 0.0;
        let adj = HeteroAdjacency::from_graph(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let raw = hetero_layer_forward(&m.layers[0], &adj, &f, &m.hyper, false, &mut rng).unwrap();
        m.hyper.normalize_adjacency = true;
        let norm = hetero_layer_forward(&m.layers[0], &adj, &f, &m.hyper, false, &mut rng).unwrap();
        let deg = adj.degrees(NodeType::Encounter);
        let (r, n) = (
            raw.dense(NodeType::Encounter).unwrap(),
            norm.dense(NodeType::Encounter).unwrap(),
        );
        for i in 0..4 {
            for j in 0..3 {
                assert!((r.get(i, j) / deg[i] - n.get(i, j)).abs() < 1e-15);
            }
        }
    }
}

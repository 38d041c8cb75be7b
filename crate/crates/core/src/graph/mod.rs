//! The medical graph: four node types, the encounter-centred adjacency
//! matrices, the lab observation mask and lab-value normalization.
//!
//! Every edge in the graph touches an encounter. `a_ep` links encounters to
//! patients (one patient per encounter), `a_el` carries normalized lab values
//! and `a_em` marks prescriptions. `m_el` distinguishes an observed lab value
//! of exactly zero from a missing one. Within-type adjacency is the identity
//! and is never stored.

mod io;
mod split;
mod stats;

pub use split::{make_split, Partition, SplitParts, SplitPlan, SplitRatios, Subset, Task};
pub use io::GRAPH_MAGIC;
pub use stats::{graph_stats, GraphStats, MatrixStats, ValueKind};

use std::collections::HashSet;
use std::fmt;

use indexmap::IndexSet;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::tensor::Matrix;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("lookup error: {0}")]
    Lookup(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("graph file format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeType {
    Encounter,
    Patient,
    Lab,
    Medication,
}

impl NodeType {
    pub const ALL: [NodeType; 4] = [
        NodeType::Encounter,
        NodeType::Patient,
        NodeType::Lab,
        NodeType::Medication,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn symbol(self) -> &'static str {
        match self {
            NodeType::Encounter => "E",
            NodeType::Patient => "P",
            NodeType::Lab => "L",
            NodeType::Medication => "M",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.symbol() == s)
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            NodeType::Encounter => "encounter",
            NodeType::Patient => "patient",
            NodeType::Lab => "lab",
            NodeType::Medication => "medication",
        };
        f.write_str(name)
    }
}

/// External string IDs per node type, in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeRegistry {
    ids: [IndexSet<String>; 4],
}

impl NodeRegistry {
    pub fn len(&self, t: NodeType) -> usize {
        self.ids[t.index()].len()
    }

    pub fn ids(&self, t: NodeType) -> impl ExactSizeIterator<Item = &str> {
        self.ids[t.index()].iter().map(String::as_str)
    }

    pub fn ordinal(&self, t: NodeType, id: &str) -> Option<usize> {
        self.ids[t.index()].get_index_of(id)
    }

    pub fn id(&self, t: NodeType, ordinal: usize) -> Option<&str> {
        self.ids[t.index()].get_index(ordinal).map(String::as_str)
    }

    /// Registers `id` and returns `(ordinal, newly_inserted)`.
    pub fn insert(&mut self, t: NodeType, id: &str) -> (usize, bool) {
        if let Some(i) = self.ordinal(t, id) {
            return (i, false);
        }
        self.ids[t.index()].insert(id.to_string());
        (self.len(t) - 1, true)
    }

    /// Counts in `NodeType::ALL` order.
    pub fn counts(&self) -> [usize; 4] {
        NodeType::ALL.map(|t| self.len(t))
    }

    pub fn fingerprint(&self) -> GraphFingerprint {
        let mut h = Sha256::new();
        h.update(b"medgcn-registry");
        for t in NodeType::ALL {
            h.update(t.symbol().as_bytes());
            h.update((self.len(t) as u64).to_le_bytes());
            for id in self.ids(t) {
                h.update((id.len() as u64).to_le_bytes());
                h.update(id.as_bytes());
            }
        }
        GraphFingerprint(h.finalize().into())
    }
}

/// SHA-256 over the ordered registries; identifies which graph a split plan
/// or checkpoint was made for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GraphFingerprint(pub [u8; 32]);

impl fmt::Display for GraphFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

/// Min/max of a lab in original units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabRange {
    pub min: f64,
    pub max: f64,
}

impl LabRange {
    /// Maps into [0, 1], clamping out-of-range values. A constant lab
    /// (`min == max`) maps every value to 0.5.
    pub fn normalize(&self, value: f64) -> f64 {
        let span = self.max - self.min;
        if span <= 0.0 {
            return 0.5;
        }
        ((value - self.min) / span).clamp(0.0, 1.0)
    }

    pub fn denormalize(&self, normalized: f64) -> f64 {
        self.min + normalized * (self.max - self.min)
    }

    /// Range over the given values; `None` if there are none.
    pub fn fit(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        values.into_iter().fold(None, |acc, v| match acc {
            None => Some(LabRange { min: v, max: v }),
            Some(r) => Some(LabRange {
                min: r.min.min(v),
                max: r.max.max(v),
            }),
        })
    }
}

/// Normalizes `value` for lab ordinal `lab` using the supplied ranges.
pub fn normalize_lab(value: f64, lab: usize, lab_norm: &[LabRange]) -> Result<f64, GraphError> {
    lab_norm
        .get(lab)
        .map(|r| r.normalize(value))
        .ok_or_else(|| GraphError::Lookup(format!("no normalization range for lab ordinal {lab}")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncounterRecord {
    pub encounter: String,
    pub patient: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabRecord {
    pub encounter: String,
    pub lab: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrescriptionRecord {
    pub encounter: String,
    pub medication: String,
}

/// Parsed ingestion streams, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GraphRecords {
    pub patients: Vec<String>,
    pub encounters: Vec<EncounterRecord>,
    pub labs: Vec<LabRecord>,
    pub prescriptions: Vec<PrescriptionRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedGraph {
    pub registry: NodeRegistry,
    /// N_E × N_P, one 1 per row.
    pub a_ep: Matrix,
    /// N_E × N_L, normalized values in [0, 1] at observed positions.
    pub a_el: Matrix,
    /// N_E × N_L observation mask.
    pub m_el: Matrix,
    /// N_E × N_M prescriptions.
    pub a_em: Matrix,
    /// N_E × N_L raw values in original units at observed positions.
    pub raw_el: Matrix,
    pub lab_norm: Vec<LabRange>,
}

impl MedGraph {
    pub fn n(&self, t: NodeType) -> usize {
        self.registry.len(t)
    }

    pub fn n_encounters(&self) -> usize {
        self.n(NodeType::Encounter)
    }

    pub fn fingerprint(&self) -> GraphFingerprint {
        self.registry.fingerprint()
    }

    /// Ordinal of the patient an encounter belongs to.
    pub fn patient_of(&self, encounter: usize) -> Option<usize> {
        self.a_ep.row(encounter).iter().position(|&v| v == 1.0)
    }

    /// Observed (encounter, lab) positions in row-major order.
    pub fn observed_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.m_el.rows() {
            for (j, &m) in self.m_el.row(i).iter().enumerate() {
                if m != 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Recomputes each lab's range from the raw values at positions where
    /// `visible` is 1, then renormalizes every observed entry with the new
    /// ranges. Labs with no visible observation get a degenerate range.
    pub fn refit_lab_norm(&self, visible: &Matrix) -> Result<MedGraph, GraphError> {
        if visible.shape() != self.m_el.shape() {
            return Err(GraphError::Integrity(format!(
                "visibility mask {:?} does not match lab matrix {:?}",
                visible.shape(),
                self.m_el.shape()
            )));
        }
        let n_l = self.n(NodeType::Lab);
        let ranges = (0..n_l)
            .map(|j| {
                let vals = (0..self.n_encounters())
                    .filter(|&i| visible.get(i, j) != 0.0 && self.m_el.get(i, j) != 0.0)
                    .map(|i| self.raw_el.get(i, j));
                LabRange::fit(vals).unwrap_or(LabRange { min: 0.0, max: 0.0 })
            })
            .collect();
        self.with_lab_norm(ranges)
    }

    /// Renormalizes every observed entry with the given ranges.
    pub fn with_lab_norm(&self, ranges: Vec<LabRange>) -> Result<MedGraph, GraphError> {
        if ranges.len() != self.n(NodeType::Lab) {
            return Err(GraphError::Integrity(format!(
                "{} lab ranges for {} labs",
                ranges.len(),
                self.n(NodeType::Lab)
            )));
        }
        let mut g = self.clone();
        for i in 0..g.n_encounters() {
            for (j, range) in ranges.iter().enumerate() {
                if g.m_el.get(i, j) != 0.0 {
                    g.a_el.set(i, j, range.normalize(g.raw_el.get(i, j)));
                }
            }
        }
        g.lab_norm = ranges;
        Ok(g)
    }

    /// Appends an unseen encounter for an existing patient with the given
    /// raw lab observations, normalized with the current (frozen) ranges.
    /// Its medication row is left empty.
    pub fn add_encounter(
        &mut self,
        encounter_id: &str,
        patient: &str,
        labs: &[(String, f64)],
    ) -> Result<usize, GraphError> {
        if self.registry.ordinal(NodeType::Encounter, encounter_id).is_some() {
            return Err(GraphError::Integrity(format!(
                "encounter {encounter_id} already exists"
            )));
        }
        let p = self
            .registry
            .ordinal(NodeType::Patient, patient)
            .ok_or_else(|| GraphError::Lookup(format!("unknown patient {patient}")))?;
        let n_l = self.n(NodeType::Lab);
        let mut a_row = vec![0.0; n_l];
        let mut m_row = vec![0.0; n_l];
        let mut raw_row = vec![0.0; n_l];
        for (lab, value) in labs {
            let j = self
                .registry
                .ordinal(NodeType::Lab, lab)
                .ok_or_else(|| GraphError::Lookup(format!("unknown lab {lab}")))?;
            if m_row[j] != 0.0 {
                return Err(GraphError::Integrity(format!(
                    "duplicate observation ({encounter_id}, {lab})"
                )));
            }
            a_row[j] = normalize_lab(*value, j, &self.lab_norm)?;
            m_row[j] = 1.0;
            raw_row[j] = *value;
        }
        let mut p_row = vec![0.0; self.n(NodeType::Patient)];
        p_row[p] = 1.0;
        self.a_ep.push_row(&p_row);
        self.a_el.push_row(&a_row);
        self.m_el.push_row(&m_row);
        self.raw_el.push_row(&raw_row);
        self.a_em.push_row(&vec![0.0; self.n(NodeType::Medication)]);
        let (ordinal, _) = self.registry.insert(NodeType::Encounter, encounter_id);
        Ok(ordinal)
    }

    /// Keeps only the first `n` encounters.
    pub fn truncate_encounters(&self, n: usize) -> MedGraph {
        let keep: Vec<usize> = (0..n.min(self.n_encounters())).collect();
        let mut registry = NodeRegistry::default();
        for t in NodeType::ALL {
            let ids: Vec<&str> = if t == NodeType::Encounter {
                self.registry.ids(t).take(keep.len()).collect()
            } else {
                self.registry.ids(t).collect()
            };
            for id in ids {
                registry.insert(t, id);
            }
        }
        MedGraph {
            registry,
            a_ep: self.a_ep.select_rows(&keep),
            a_el: self.a_el.select_rows(&keep),
            m_el: self.m_el.select_rows(&keep),
            a_em: self.a_em.select_rows(&keep),
            raw_el: self.raw_el.select_rows(&keep),
            lab_norm: self.lab_norm.clone(),
        }
    }

    /// Checks the structural invariants. Used after deserialization and in
    /// tests.
    pub fn validate(&self) -> Result<(), GraphError> {
        let [n_e, n_p, n_l, n_m] = self.registry.counts();
        let shapes = [
            ("a_ep", self.a_ep.shape(), (n_e, n_p)),
            ("a_el", self.a_el.shape(), (n_e, n_l)),
            ("m_el", self.m_el.shape(), (n_e, n_l)),
            ("a_em", self.a_em.shape(), (n_e, n_m)),
            ("raw_el", self.raw_el.shape(), (n_e, n_l)),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(GraphError::Integrity(format!(
                    "{name} has shape {got:?}, registry implies {want:?}"
                )));
            }
        }
        if self.lab_norm.len() != n_l {
            return Err(GraphError::Integrity("lab_norm length".into()));
        }
        for i in 0..n_e {
            let row = self.a_ep.row(i);
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            if ones != 1 || row.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(GraphError::Integrity(format!(
                    "encounter row {i} must link exactly one patient"
                )));
            }
        }
        for (i, (&a, &m)) in self
            .a_el
            .as_slice()
            .iter()
            .zip(self.m_el.as_slice())
            .enumerate()
        {
            if m != 0.0 && m != 1.0 {
                return Err(GraphError::Integrity(format!("m_el entry {i} is not binary")));
            }
            if !(0.0..=1.0).contains(&a) || (m == 0.0 && a != 0.0) {
                return Err(GraphError::Integrity(format!(
                    "a_el entry {i} = {a} with mask {m}"
                )));
            }
        }
        if self.a_em.as_slice().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(GraphError::Integrity("a_em is not binary".into()));
        }
        Ok(())
    }
}

/// Builds the graph from ingestion records. Registries follow first
/// appearance; lab values are normalized with ranges over all observations.
pub fn build_graph(records: &GraphRecords) -> Result<MedGraph, GraphError> {
    let mut registry = NodeRegistry::default();
    for p in &records.patients {
        if p.is_empty() {
            return Err(GraphError::Integrity("empty patient id".into()));
        }
        if !registry.insert(NodeType::Patient, p).1 {
            return Err(GraphError::Integrity(format!("duplicate patient {p}")));
        }
    }

    let mut patient_of = Vec::with_capacity(records.encounters.len());
    for rec in &records.encounters {
        if rec.patient.is_empty() {
            return Err(GraphError::Integrity(format!(
                "encounter {} has no patient",
                rec.encounter
            )));
        }
        if let Some(existing) = registry.ordinal(NodeType::Encounter, &rec.encounter) {
            let prev: &usize = &patient_of[existing];
            let prev_id = registry.id(NodeType::Patient, *prev).unwrap_or("?");
            return Err(GraphError::Integrity(format!(
                "encounter {} listed more than once (patients {prev_id} and {})",
                rec.encounter, rec.patient
            )));
        }
        let p = registry
            .ordinal(NodeType::Patient, &rec.patient)
            .ok_or_else(|| {
                GraphError::Integrity(format!(
                    "encounter {} references unknown patient {}",
                    rec.encounter, rec.patient
                ))
            })?;
        registry.insert(NodeType::Encounter, &rec.encounter);
        patient_of.push(p);
    }

    let encounter = |registry: &NodeRegistry, id: &str, what: &str| {
        registry.ordinal(NodeType::Encounter, id).ok_or_else(|| {
            GraphError::Integrity(format!("{what} references unknown encounter {id}"))
        })
    };

    let mut lab_obs = Vec::with_capacity(records.labs.len());
    let mut seen = HashSet::new();
    for rec in &records.labs {
        let i = encounter(&registry, &rec.encounter, "lab result")?;
        if !rec.value.is_finite() {
            return Err(GraphError::Integrity(format!(
                "non-finite value for ({}, {})",
                rec.encounter, rec.lab
            )));
        }
        let (j, _) = registry.insert(NodeType::Lab, &rec.lab);
        if !seen.insert((i, j)) {
            return Err(GraphError::Integrity(format!(
                "duplicate lab observation ({}, {})",
                rec.encounter, rec.lab
            )));
        }
        lab_obs.push((i, j, rec.value));
    }

    let mut med_edges = Vec::with_capacity(records.prescriptions.len());
    for rec in &records.prescriptions {
        let i = encounter(&registry, &rec.encounter, "prescription")?;
        let (j, _) = registry.insert(NodeType::Medication, &rec.medication);
        med_edges.push((i, j));
    }

    let [n_e, n_p, n_l, n_m] = registry.counts();
    let mut a_ep = Matrix::zeros(n_e, n_p);
    for (i, &p) in patient_of.iter().enumerate() {
        a_ep.set(i, p, 1.0);
    }
    let mut m_el = Matrix::zeros(n_e, n_l);
    let mut raw_el = Matrix::zeros(n_e, n_l);
    for &(i, j, v) in &lab_obs {
        m_el.set(i, j, 1.0);
        raw_el.set(i, j, v);
    }
    let mut a_em = Matrix::zeros(n_e, n_m);
    for (i, j) in med_edges {
        a_em.set(i, j, 1.0);
    }
    let lab_norm: Vec<LabRange> = (0..n_l)
        .map(|j| {
            let vals = lab_obs.iter().filter(|o| o.1 == j).map(|o| o.2);
            LabRange::fit(vals).expect("every registered lab has an observation")
        })
        .collect();
    let mut a_el = Matrix::zeros(n_e, n_l);
    for &(i, j, v) in &lab_obs {
        a_el.set(i, j, lab_norm[j].normalize(v));
    }

    Ok(MedGraph {
        registry,
        a_ep,
        a_el,
        m_el,
        a_em,
        raw_el,
        lab_norm,
    })
}

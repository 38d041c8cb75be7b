//! `MEDGCN1` checkpoints: magic, graph fingerprint, hyperparameters, node
//! counts and feature widths, lab ranges, then labeled weight matrices.
//! All numbers little-endian.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::codec::*;
use crate::graph::{GraphFingerprint, LabRange, MedGraph, NodeType};
use crate::tensor::DenseTensor;

use super::{Activation, Head, LayerWeights, MedGcnModel, ModelError, ModelHyper};

pub const CHECKPOINT_MAGIC: &[u8] = b"MEDGCN1";

fn format_err(msg: impl Into<String>) -> ModelError {
    ModelError::Format(msg.into())
}

impl MedGcnModel {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), ModelError> {
        write_magic(w, CHECKPOINT_MAGIC)?;
        w.write_all(&self.fingerprint.0)?;
        let h = &self.hyper;
        write_u64(w, h.hidden_dim as u64)?;
        write_u64(w, h.n_layers as u64)?;
        write_u64(w, h.head_hidden_layers as u64)?;
        write_f64(w, h.dropout)?;
        write_u8(w, h.activation.code())?;
        write_u8(w, h.normalize_adjacency as u8)?;
        for c in self.node_counts.iter().chain(&self.feature_dims) {
            write_u64(w, *c as u64)?;
        }
        write_u64(w, self.lab_norm.len() as u64)?;
        for r in &self.lab_norm {
            write_f64(w, r.min)?;
            write_f64(w, r.max)?;
        }
        let labels = self.param_labels();
        let params = self.params();
        write_u64(w, params.len() as u64)?;
        for (label, p) in labels.iter().zip(params) {
            write_str(w, label)?;
            write_matrix(w, &p.value)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<MedGcnModel, ModelError> {
        if !read_magic(r, CHECKPOINT_MAGIC)? {
            return Err(format_err("missing MEDGCN1 magic"));
        }
        let mut fp = [0u8; 32];
        r.read_exact(&mut fp)?;
        let hidden_dim = read_len(r)?;
        let n_layers = read_len(r)?;
        let head_hidden_layers = read_len(r)?;
        let dropout = read_f64(r)?;
        let activation = Activation::from_code(read_u8(r)?)
            .ok_or_else(|| format_err("unknown activation code"))?;
        let normalize_adjacency = match read_u8(r)? {
            0 => false,
            1 => true,
            b => return Err(format_err(format!("bad normalization flag {b}"))),
        };
        let hyper = ModelHyper {
            hidden_dim,
            n_layers,
            dropout,
            activation,
            normalize_adjacency,
            head_hidden_layers,
        };
        hyper
            .validate()
            .map_err(|e| format_err(format!("stored hyperparameters: {e}")))?;
        let mut node_counts = [0; 4];
        for c in &mut node_counts {
            *c = read_len(r)?;
        }
        let mut feature_dims = [0; 4];
        for c in &mut feature_dims {
            *c = read_len(r)?;
        }
        let n_ranges = read_len(r)?;
        let mut lab_norm = Vec::with_capacity(n_ranges);
        for _ in 0..n_ranges {
            lab_norm.push(LabRange {
                min: read_f64(r)?,
                max: read_f64(r)?,
            });
        }
        let n_params = read_len(r)?;
        let mut stored = BTreeMap::new();
        for _ in 0..n_params {
            let label = read_str(r)?;
            let m = read_matrix(r)?;
            if stored.insert(label.clone(), m).is_some() {
                return Err(format_err(format!("duplicate weight {label}")));
            }
        }
        let mut take = |label: String, shape: (usize, usize)| {
            let m = stored
                .remove(&label)
                .ok_or_else(|| format_err(format!("missing weight {label}")))?;
            if m.shape() != shape {
                return Err(format_err(format!(
                    "weight {label} is {:?}, expected {shape:?}",
                    m.shape()
                )));
            }
            Ok(DenseTensor::parameter(m))
        };

        let d = hidden_dim;
        let mut layers = Vec::with_capacity(n_layers);
        for k in 0..n_layers {
            let mut weights = BTreeMap::new();
            for t in NodeType::ALL {
                if node_counts[t.index()] == 0 {
                    continue;
                }
                let fan_in = if k == 0 { feature_dims[t.index()] } else { d };
                weights.insert(t, take(format!("layer{k}/{}", t.symbol()), (fan_in, d))?);
            }
            layers.push(LayerWeights { weights });
        }
        let mut head = |name: &str, n_out: usize| -> Result<Head, ModelError> {
            let hidden = (0..head_hidden_layers)
                .map(|h| {
                    Ok((
                        take(format!("{name}/hidden{h}/weight"), (d, d))?,
                        take(format!("{name}/hidden{h}/bias"), (1, d))?,
                    ))
                })
                .collect::<Result<Vec<_>, ModelError>>()?;
            Ok(Head {
                hidden,
                weight: take(format!("{name}/weight"), (d, n_out))?,
                bias: take(format!("{name}/bias"), (1, n_out))?,
            })
        };
        let head_med = head("head_med", node_counts[NodeType::Medication.index()])?;
        let head_lab = head("head_lab", node_counts[NodeType::Lab.index()])?;
        if let Some(extra) = stored.keys().next() {
            return Err(format_err(format!("unexpected weight {extra}")));
        }
        Ok(MedGcnModel {
            hyper,
            node_counts,
            feature_dims,
            layers,
            head_med,
            head_lab,
            fingerprint: GraphFingerprint(fp),
            lab_norm,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<MedGcnModel, ModelError> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    /// Loads a checkpoint and checks it was trained on `graph`.
    pub fn load_for(path: &Path, graph: &MedGraph) -> Result<MedGcnModel, ModelError> {
        let m = Self::load(path)?;
        m.check_graph(graph)?;
        Ok(m)
    }
}

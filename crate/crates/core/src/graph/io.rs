//! `MEDGRAPH1` single-file format: magic, the four registries, lab ranges,
//! then the dense matrices row-major as little-endian `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{GraphError, LabRange, MedGraph, NodeRegistry, NodeType};
use crate::codec::*;

pub const GRAPH_MAGIC: &[u8] = b"MEDGRAPH1";

impl MedGraph {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), GraphError> {
        write_magic(w, GRAPH_MAGIC)?;
        for t in NodeType::ALL {
            write_str(w, t.symbol())?;
            write_u64(w, self.n(t) as u64)?;
            for id in self.registry.ids(t) {
                write_str(w, id)?;
            }
        }
        write_u64(w, self.lab_norm.len() as u64)?;
        for r in &self.lab_norm {
            write_f64(w, r.min)?;
            write_f64(w, r.max)?;
        }
        for m in [&self.a_ep, &self.a_el, &self.m_el, &self.a_em, &self.raw_el] {
            write_matrix(w, m)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<MedGraph, GraphError> {
        if !read_magic(r, GRAPH_MAGIC)? {
            return Err(GraphError::Format("missing MEDGRAPH1 magic".into()));
        }
        let mut registry = NodeRegistry::default();
        for t in NodeType::ALL {
            let sym = read_str(r)?;
            if sym != t.symbol() {
                return Err(GraphError::Format(format!(
                    "expected {} registry, found {sym:?}",
                    t.symbol()
                )));
            }
            let n = read_len(r)?;
            for _ in 0..n {
                let id = read_str(r)?;
                if !registry.insert(t, &id).1 {
                    return Err(GraphError::Format(format!("duplicate {t} id {id}")));
                }
            }
        }
        let n_ranges = read_len(r)?;
        let lab_norm = (0..n_ranges)
            .map(|_| {
                Ok(LabRange {
                    min: read_f64(r)?,
                    max: read_f64(r)?,
                })
            })
            .collect::<Result<Vec<_>, std::io::Error>>()?;
        let graph = MedGraph {
            registry,
            a_ep: read_matrix(r)?,
            a_el: read_matrix(r)?,
            m_el: read_matrix(r)?,
            a_em: read_matrix(r)?,
            raw_el: read_matrix(r)?,
            lab_norm,
        };
        graph.validate()?;
        Ok(graph)
    }

    pub fn save(&self, path: &Path) -> Result<(), GraphError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<MedGraph, GraphError> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }
}

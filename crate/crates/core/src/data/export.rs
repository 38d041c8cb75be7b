use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::DataError;
use crate::graph::{GraphError, LabRange, NodeRegistry, NodeType};
use crate::metrics::ranking;
use crate::tensor::Matrix;

fn check_rows(m: &Matrix, registry: &NodeRegistry, cols: NodeType) -> Result<(), DataError> {
    let want = (registry.len(NodeType::Encounter), registry.len(cols));
    if m.shape() != want {
        return Err(GraphError::Integrity(format!(
            "{cols} predictions are {:?}, registry needs {want:?}",
            m.shape()
        ))
        .into());
    }
    Ok(())
}

/// `encounter_id,med_code,probability,rank`, ranks 1.. by descending
/// probability within each encounter.
pub fn write_recommendations<W: Write>(w: &mut W, p: &Matrix, registry: &NodeRegistry) -> Result<(), DataError> {
    check_rows(p, registry, NodeType::Medication)?;
    writeln!(w, "encounter_id,med_code,probability,rank")?;
    for (e, enc) in registry.ids(NodeType::Encounter).enumerate() {
        for (r, m) in ranking(p.row(e)).into_iter().enumerate() {
            let med = registry.id(NodeType::Medication, m).expect("column in registry");
            writeln!(w, "{enc},{med},{},{}", p.get(e, m), r + 1)?;
        }
    }
    Ok(())
}

/// `encounter_id,lab_code,value_normalized,value_original_units`.
pub fn write_imputations<W: Write>(
    w: &mut W,
    v: &Matrix,
    registry: &NodeRegistry,
    lab_norm: &[LabRange],
) -> Result<(), DataError> {
    check_rows(v, registry, NodeType::Lab)?;
    if lab_norm.len() != v.cols() {
        return Err(GraphError::Integrity(format!(
            "{} lab ranges for {} labs",
            lab_norm.len(),
            v.cols()
        ))
        .into());
    }
    writeln!(w, "encounter_id,lab_code,value_normalized,value_original_units")?;
    for (e, enc) in registry.ids(NodeType::Encounter).enumerate() {
        for (l, lab) in registry.ids(NodeType::Lab).enumerate() {
            let x = v.get(e, l);
            writeln!(w, "{enc},{lab},{x},{}", lab_norm[l].denormalize(x))?;
        }
    }
    Ok(())
}

/// Writes `recommendations.csv` and `imputations.csv` into `dir`.
pub fn export_predictions(
    p: &Matrix,
    v: &Matrix,
    registry: &NodeRegistry,
    lab_norm: &[LabRange],
    dir: &Path,
) -> Result<(), DataError> {
    std::fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join("recommendations.csv"))?);
    write_recommendations(&mut w, p, registry)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join("imputations.csv"))?);
    write_imputations(&mut w, v, registry, lab_norm)?;
    w.flush()?;
    Ok(())
}

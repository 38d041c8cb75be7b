use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use csv::{ReaderBuilder, StringRecord};

use super::DataError;
use crate::graph::{
    build_graph, EncounterRecord, GraphRecords, LabRecord, MedGraph, NodeType, PrescriptionRecord,
};

pub const PATIENTS: &str = "patients.csv";
pub const ENCOUNTERS: &str = "encounters.csv";
pub const LAB_RESULTS: &str = "lab_results.csv";
pub const PRESCRIPTIONS: &str = "prescriptions.csv";

/// Data rows read from each file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BundleCounts {
    pub patients: usize,
    pub encounters: usize,
    pub lab_results: usize,
    pub prescriptions: usize,
}

fn read_table(
    dir: &Path,
    file: &'static str,
    header: &[&str],
    mut row: impl FnMut(u64, &StringRecord) -> Result<(), DataError>,
) -> Result<usize, DataError> {
    let path = dir.join(file);
    let reader = File::open(&path).map_err(|e| DataError::File {
        file: path.display().to_string(),
        msg: e.to_string(),
    })?;
    let mut rdr = ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let found = rdr
        .headers()
        .map_err(|e| DataError::Row { file, line: 1, msg: e.to_string() })?
        .clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(DataError::Row {
            file,
            line: 1,
            msg: format!("expected header {}, found {}", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| DataError::Row {
            file,
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(DataError::Row {
                file,
                line,
                msg: format!("expected {} columns, found {}", header.len(), rec.len()),
            });
        }
        if let Some(i) = rec.iter().position(str::is_empty) {
            return Err(DataError::Row { file, line, msg: format!("empty {}", header[i]) });
        }
        row(line, &rec)?;
        n += 1;
    }
    Ok(n)
}

/// Reads the four CSV files of `dir`, checking references as it goes so
/// errors can cite the offending line.
pub fn load_records(dir: &Path) -> Result<(GraphRecords, BundleCounts), DataError> {
    let mut records = GraphRecords::default();
    let patients = read_table(dir, PATIENTS, &["patient_id"], |_, r| {
        records.patients.push(r[0].to_string());
        Ok(())
    })?;
    let known_patients: HashSet<String> = records.patients.iter().cloned().collect();
    let encounters = read_table(dir, ENCOUNTERS, &["encounter_id", "patient_id"], |line, r| {
        if !known_patients.contains(&r[1]) {
            return Err(DataError::Row {
                file: ENCOUNTERS,
                line,
                msg: format!("unknown patient {}", &r[1]),
            });
        }
        records.encounters.push(EncounterRecord {
            encounter: r[0].to_string(),
            patient: r[1].to_string(),
        });
        Ok(())
    })?;
    let known: HashSet<String> = records.encounters.iter().map(|e| e.encounter.clone()).collect();
    let dangling = |file, line, id: &str| DataError::Row {
        file,
        line,
        msg: format!("unknown encounter {id}"),
    };
    let lab_results = read_table(dir, LAB_RESULTS, &["encounter_id", "lab_code", "value"], |line, r| {
        if !known.contains(&r[0]) {
            return Err(dangling(LAB_RESULTS, line, &r[0]));
        }
        let value: f64 = r[2]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| DataError::Row {
                file: LAB_RESULTS,
                line,
                msg: format!("lab value {:?} is not a finite number", &r[2]),
            })?;
        records.labs.push(LabRecord {
            encounter: r[0].to_string(),
            lab: r[1].to_string(),
            value,
        });
        Ok(())
    })?;
    let prescriptions = read_table(dir, PRESCRIPTIONS, &["encounter_id", "med_code"], |line, r| {
        if !known.contains(&r[0]) {
            return Err(dangling(PRESCRIPTIONS, line, &r[0]));
        }
        records.prescriptions.push(PrescriptionRecord {
            encounter: r[0].to_string(),
            medication: r[1].to_string(),
        });
        Ok(())
    })?;
    Ok((
        records,
        BundleCounts {
            patients,
            encounters,
            lab_results,
            prescriptions,
        },
    ))
}

pub fn load_csv_bundle(dir: &Path) -> Result<(MedGraph, BundleCounts), DataError> {
    let (records, counts) = load_records(dir)?;
    Ok((build_graph(&records)?, counts))
}

fn write_table(dir: &Path, file: &str, header: &str, rows: impl Iterator<Item = String>) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(dir.join(file))?);
    writeln!(w, "{header}")?;
    for r in rows {
        writeln!(w, "{r}")?;
    }
    w.flush()?;
    Ok(())
}

/// Writes records as the four ingestion files. Ids must not contain
/// commas or quotes.
pub fn write_csv_bundle(records: &GraphRecords, dir: &Path) -> Result<(), DataError> {
    std::fs::create_dir_all(dir)?;
    write_table(dir, PATIENTS, "patient_id", records.patients.iter().cloned())?;
    write_table(
        dir,
        ENCOUNTERS,
        "encounter_id,patient_id",
        records.encounters.iter().map(|e| format!("{},{}", e.encounter, e.patient)),
    )?;
    write_table(
        dir,
        LAB_RESULTS,
        "encounter_id,lab_code,value",
        records.labs.iter().map(|l| format!("{},{},{}", l.encounter, l.lab, l.value)),
    )?;
    write_table(
        dir,
        PRESCRIPTIONS,
        "encounter_id,med_code",
        records.prescriptions.iter().map(|p| format!("{},{}", p.encounter, p.medication)),
    )
}

/// Records that rebuild `graph`: observed labs in original units, one
/// prescription per medication edge, all in ordinal order.
pub fn records_from_graph(graph: &MedGraph) -> GraphRecords {
    let reg = &graph.registry;
    let id = |t, i| reg.id(t, i).expect("ordinal in range").to_string();
    let mut r = GraphRecords {
        patients: reg.ids(NodeType::Patient).map(str::to_string).collect(),
        ..Default::default()
    };
    for e in 0..graph.n_encounters() {
        r.encounters.push(EncounterRecord {
            encounter: id(NodeType::Encounter, e),
            patient: id(NodeType::Patient, graph.patient_of(e).expect("one patient per encounter")),
        });
    }
    for (e, l) in graph.observed_edges() {
        r.labs.push(LabRecord {
            encounter: id(NodeType::Encounter, e),
            lab: id(NodeType::Lab, l),
            value: graph.raw_el.get(e, l),
        });
    }
    for e in 0..graph.n_encounters() {
        for (m, &v) in graph.a_em.row(e).iter().enumerate() {
            if v != 0.0 {
                r.prescriptions.push(PrescriptionRecord {
                    encounter: id(NodeType::Encounter, e),
                    medication: id(NodeType::Medication, m),
                });
            }
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::toy_records;

    fn write(dir: &Path, file: &str, text: &str) {
        std::fs::write(dir.join(file), text).unwrap();
    }

    fn toy_dir() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        write_csv_bundle(&toy_records(), dir.path()).unwrap();
        dir
    }

    #[test]
    fn toy_round_trip() {
        let dir = toy_dir();
        let (g, counts) = load_csv_bundle(dir.path()).unwrap();
        assert_eq!(g, build_graph(&toy_records()).unwrap());
        assert_eq!(counts.lab_results, 8);
        let again = tempfile::tempdir().unwrap();
        write_csv_bundle(&records_from_graph(&g), again.path()).unwrap();
        let (g2, _) = load_csv_bundle(again.path()).unwrap();
        assert_eq!(g2.graph_stats(), g.graph_stats());
        assert_eq!(g2, g);
    }

    #[test]
    fn bad_lab_value_cites_line() {
        let dir = toy_dir();
        let mut text = String::from("encounter_id,lab_code,value\n");
        for i in 0..5 {
            text.push_str(&format!("E1,L{i},1.0\n"));
        }
        text.push_str("E1,L9,abc\n");
        write(dir.path(), LAB_RESULTS, &text);
        let err = load_csv_bundle(dir.path()).unwrap_err().to_string();
        assert!(err.starts_with("lab_results.csv:7:"), "{err}");
    }

    #[test]
    fn structural_errors() {
        let dir = toy_dir();
        write(dir.path(), PRESCRIPTIONS, "encounter_id,med_code\nE1,M1,extra\n");
        let err = load_csv_bundle(dir.path()).unwrap_err().to_string();
        assert!(err.contains("prescriptions.csv:2") && err.contains("columns"), "{err}");

        write(dir.path(), PRESCRIPTIONS, "encounter_id,med_code\nE7,M1\n");
        let err = load_csv_bundle(dir.path()).unwrap_err().to_string();
        assert!(err.contains("prescriptions.csv:2") && err.contains("E7"), "{err}");

        write(dir.path(), PRESCRIPTIONS, "encounter,med\n");
        assert!(load_csv_bundle(dir.path()).unwrap_err().to_string().contains(":1:"));

        std::fs::remove_file(dir.path().join(PATIENTS)).unwrap();
        let err = load_csv_bundle(dir.path()).unwrap_err();
        assert!(matches!(err, DataError::File { .. }));
    }

    #[test]
    fn header_only_prescriptions() {
        let dir = toy_dir();
        write(dir.path(), PRESCRIPTIONS, "encounter_id,med_code\n");
        let (g, counts) = load_csv_bundle(dir.path()).unwrap();
        assert_eq!(counts.prescriptions, 0);
        assert_eq!(g.a_em.count_nonzero(), 0);
    }
}

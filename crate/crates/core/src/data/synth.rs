//! A seeded cohort with planted structure. Every encounter inherits its
//! patient's latent vector plus jitter; lab values and medication
//! propensities are both read off that latent through per-lab and
//! per-medication loadings, so the graph carries real signal.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::DataError;
use crate::graph::{
    build_graph, EncounterRecord, GraphRecords, LabRecord, MedGraph, NodeType, PrescriptionRecord,
};
use crate::tensor::{sigmoid, Matrix};

/// Standard deviation of an encounter's offset from its patient.
const ENCOUNTER_JITTER: f64 = 0.5;
/// Target spread of the lab and medication logits.
const LOGIT_SD: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub n_patients: usize,
    pub n_encounters: usize,
    pub n_labs: usize,
    pub n_meds: usize,
    pub latent_dim: usize,
    pub lab_observe_prob: f64,
    /// Average number of medications per encounter.
    pub med_rate: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_patients: 865,
            n_encounters: 1260,
            n_labs: 197,
            n_meds: 57,
            latent_dim: 8,
            lab_observe_prob: 0.18,
            med_rate: 2.0,
            noise_sd: 0.02,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let err = |m: String| Err(DataError::Spec(m));
        for (name, n) in [
            ("n_patients", self.n_patients),
            ("n_encounters", self.n_encounters),
            ("n_labs", self.n_labs),
            ("n_meds", self.n_meds),
            ("latent_dim", self.latent_dim),
        ] {
            if n == 0 {
                return err(format!("{name} must be positive"));
            }
        }
        if self.n_encounters < self.n_patients {
            return err(format!(
                "{} encounters cannot cover {} patients",
                self.n_encounters, self.n_patients
            ));
        }
        if !(self.lab_observe_prob > 0.0 && self.lab_observe_prob < 1.0) {
            return err(format!("lab_observe_prob {} outside (0, 1)", self.lab_observe_prob));
        }
        let max_rate = self.n_meds as f64;
        if !(self.med_rate >= 1.0 && self.med_rate <= max_rate) {
            return err(format!("med_rate {} outside [1, {max_rate}]", self.med_rate));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return err(format!("noise_sd {} must be >= 0", self.noise_sd));
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut s = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| DataError::Spec(format!("line {}: expected key=value", i + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |_| DataError::Spec(format!("line {}: bad value {value:?} for {key}", i + 1));
            match key {
                "n_patients" => s.n_patients = value.parse().map_err(bad)?,
                "n_encounters" => s.n_encounters = value.parse().map_err(bad)?,
                "n_labs" => s.n_labs = value.parse().map_err(bad)?,
                "n_meds" => s.n_meds = value.parse().map_err(bad)?,
                "latent_dim" => s.latent_dim = value.parse().map_err(bad)?,
                "seed" => s.seed = value.parse().map_err(bad)?,
                "lab_observe_prob" | "med_rate" | "noise_sd" => {
                    let v: f64 = value
                        .parse()
                        .map_err(|_| DataError::Spec(format!("line {}: bad value {value:?} for {key}", i + 1)))?;
                    match key {
                        "lab_observe_prob" => s.lab_observe_prob = v,
                        "med_rate" => s.med_rate = v,
                        _ => s.noise_sd = v,
                    }
                }
                _ => return Err(DataError::Spec(format!("line {}: unknown key {key}", i + 1))),
            }
        }
        s.validate()?;
        Ok(s)
    }

    pub fn to_text(&self) -> String {
        format!(
            "n_patients = {}\nn_encounters = {}\nn_labs = {}\nn_meds = {}\nlatent_dim = {}\n\
             lab_observe_prob = {}\nmed_rate = {}\nnoise_sd = {}\nseed = {}\n",
            self.n_patients,
            self.n_encounters,
            self.n_labs,
            self.n_meds,
            self.latent_dim,
            self.lab_observe_prob,
            self.med_rate,
            self.noise_sd,
            self.seed
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    pub spec: SyntheticSpec,
    pub records: GraphRecords,
    pub graph: MedGraph,
    /// Noise-free lab values in [0, 1] for every encounter and lab.
    pub truth_labs: Matrix,
    /// `truth_labs` carried to original units and normalized with the
    /// graph's lab ranges, i.e. on the same scale as `graph.a_el`.
    pub truth_labs_normalized: Matrix,
    /// Medication probabilities the relevance was cut from.
    pub med_propensity: Matrix,
    pub patient_latents: Matrix,
    pub encounter_latents: Matrix,
    pub lab_loadings: Matrix,
    pub med_loadings: Matrix,
    /// Per lab `(offset, span)`: original units are `offset + value·span`.
    pub lab_units: Vec<(f64, f64)>,
}

fn ids(prefix: char, n: usize) -> Vec<String> {
    let width = n.to_string().len();
    (1..=n).map(|i| format!("{prefix}{i:0width$}")).collect()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| normal(rng))
}

fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCohort, DataError> {
    spec.validate()?;
    let (n_p, n_e, n_l, n_m, d) = (
        spec.n_patients,
        spec.n_encounters,
        spec.n_labs,
        spec.n_meds,
        spec.latent_dim,
    );
    let mut rng = stream(spec.seed, 0);

    // every patient gets one encounter, the rest go to random patients
    let mut owner: Vec<usize> = (0..n_p).chain((n_p..n_e).map(|_| rng.random_range(0..n_p))).collect();
    owner.shuffle(&mut rng);

    let patient_latents = gaussian(&mut rng, n_p, d);
    let encounter_latents = Matrix::from_fn(n_e, d, |e, k| {
        patient_latents.get(owner[e], k) + ENCOUNTER_JITTER * normal(&mut rng)
    });
    let lab_loadings = gaussian(&mut rng, n_l, d);
    let med_loadings = gaussian(&mut rng, n_m, d);
    let lab_bias: Vec<f64> = (0..n_l).map(|_| 0.5 * normal(&mut rng)).collect();
    let med_bias: Vec<f64> = (0..n_m).map(|_| 0.5 * normal(&mut rng)).collect();
    let lab_units: Vec<(f64, f64)> = (0..n_l)
        .map(|_| (rng.random_range(0.0..100.0), rng.random_range(1.0..50.0)))
        .collect();

    let latent_sd = ((1.0 + ENCOUNTER_JITTER * ENCOUNTER_JITTER) * d as f64).sqrt();
    let scale = LOGIT_SD / latent_sd;
    let lab_logits = encounter_latents.matmul_nt(&lab_loadings).expect("latent widths agree");
    let truth_labs = Matrix::from_fn(n_e, n_l, |e, l| sigmoid(scale * lab_logits.get(e, l) + lab_bias[l]));
    let med_logits = encounter_latents.matmul_nt(&med_loadings).expect("latent widths agree");
    let med_propensity = Matrix::from_fn(n_e, n_m, |e, m| sigmoid(scale * med_logits.get(e, m) + med_bias[m]));

    // observation draws are fixed per cell, so a higher probability only
    // adds observations
    let mut mask_rng = stream(spec.seed, 1);
    let draws = Matrix::from_fn(n_e, n_l, |_, _| mask_rng.random::<f64>());
    let mut observed = draws.map(|u| (u < spec.lab_observe_prob) as u8 as f64);
    for l in 0..n_l {
        if (0..n_e).all(|e| observed.get(e, l) == 0.0) {
            let e = (0..n_e)
                .min_by(|&a, &b| draws.get(a, l).total_cmp(&draws.get(b, l)))
                .expect("at least one encounter");
            observed.set(e, l, 1.0);
        }
    }
    let noise_dist = Normal::new(0.0, spec.noise_sd).map_err(|e| DataError::Spec(e.to_string()))?;
    let mut noise_rng = stream(spec.seed, 2);
    let noisy = Matrix::from_fn(n_e, n_l, |e, l| {
        (truth_labs.get(e, l) + noise_dist.sample(&mut noise_rng)).clamp(0.0, 1.0)
    });

    let relevance = medication_relevance(&med_propensity, spec.med_rate);

    let (pid, eid, lid, mid) = (ids('P', n_p), ids('E', n_e), ids('L', n_l), ids('M', n_m));
    let mut records = GraphRecords {
        patients: pid.clone(),
        ..Default::default()
    };
    for e in 0..n_e {
        records.encounters.push(EncounterRecord {
            encounter: eid[e].clone(),
            patient: pid[owner[e]].clone(),
        });
    }
    // labs and medications are listed column-first so registry order
    // follows the ids
    for l in 0..n_l {
        let (lo, span) = lab_units[l];
        for e in 0..n_e {
            if observed.get(e, l) == 1.0 {
                records.labs.push(LabRecord {
                    encounter: eid[e].clone(),
                    lab: lid[l].clone(),
                    value: lo + noisy.get(e, l) * span,
                });
            }
        }
    }
    for m in 0..n_m {
        for e in 0..n_e {
            if relevance.get(e, m) == 1.0 {
                records.prescriptions.push(PrescriptionRecord {
                    encounter: eid[e].clone(),
                    medication: mid[m].clone(),
                });
            }
        }
    }
    let graph = build_graph(&records)?;
    debug_assert!(lid.iter().enumerate().all(|(l, id)| graph.registry.ordinal(NodeType::Lab, id) == Some(l)));
    let truth_labs_normalized = Matrix::from_fn(n_e, n_l, |e, l| {
        let (lo, span) = lab_units[l];
        graph.lab_norm[l].normalize(lo + truth_labs.get(e, l) * span)
    });
    Ok(SyntheticCohort {
        spec: *spec,
        records,
        graph,
        truth_labs,
        truth_labs_normalized,
        med_propensity,
        patient_latents,
        encounter_latents,
        lab_loadings,
        med_loadings,
        lab_units,
    })
}

/// Each encounter's most likely medication, then the globally most likely
/// pairs up to `round(rate · N_E)` positives. A medication left without
/// any encounter gets its most likely one.
fn medication_relevance(prop: &Matrix, rate: f64) -> Matrix {
    let (n_e, n_m) = prop.shape();
    let mut rel = Matrix::zeros(n_e, n_m);
    for e in 0..n_e {
        let best = (0..n_m)
            .max_by(|&a, &b| prop.get(e, a).total_cmp(&prop.get(e, b)).then(b.cmp(&a)))
            .expect("at least one medication");
        rel.set(e, best, 1.0);
    }
    let target = ((rate * n_e as f64).round() as usize).min(n_e * n_m);
    let mut cells: Vec<(usize, usize)> = (0..n_e).flat_map(|e| (0..n_m).map(move |m| (e, m))).collect();
    cells.sort_by(|&(a, b), &(c, d)| prop.get(c, d).total_cmp(&prop.get(a, b)).then((a, b).cmp(&(c, d))));
    let mut n_pos = n_e;
    for (e, m) in cells {
        if n_pos >= target {
            break;
        }
        if rel.get(e, m) == 0.0 {
            rel.set(e, m, 1.0);
            n_pos += 1;
        }
    }
    for m in 0..n_m {
        if (0..n_e).all(|e| rel.get(e, m) == 0.0) {
            let e = (0..n_e)
                .max_by(|&a, &b| prop.get(a, m).total_cmp(&prop.get(b, m)).then(b.cmp(&a)))
                .expect("at least one encounter");
            rel.set(e, m, 1.0);
        }
    }
    rel
}

/// `truth_labs.csv` and `truth_medications.csv`: the full noise-free
/// matrices in long form.
pub fn write_truth_files(cohort: &SyntheticCohort, dir: &Path) -> Result<(), DataError> {
    let reg = &cohort.graph.registry;
    let mut w = BufWriter::new(File::create(dir.join("truth_labs.csv"))?);
    writeln!(w, "encounter_id,lab_code,value_normalized,value_original_units,observed")?;
    for (e, enc) in reg.ids(NodeType::Encounter).enumerate() {
        for (l, lab) in reg.ids(NodeType::Lab).enumerate() {
            let (lo, span) = cohort.lab_units[l];
            let v = cohort.truth_labs.get(e, l);
            let obs = cohort.graph.m_el.get(e, l) as u8;
            writeln!(w, "{enc},{lab},{},{},{obs}", cohort.truth_labs_normalized.get(e, l), lo + v * span)?;
        }
    }
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join("truth_medications.csv"))?);
    writeln!(w, "encounter_id,med_code,propensity,relevant")?;
    for (e, enc) in reg.ids(NodeType::Encounter).enumerate() {
        for (m, med) in reg.ids(NodeType::Medication).enumerate() {
            let rel = cohort.graph.a_em.get(e, m) as u8;
            writeln!(w, "{enc},{med},{},{rel}", cohort.med_propensity.get(e, m))?;
        }
    }
    w.flush()?;
    Ok(())
}

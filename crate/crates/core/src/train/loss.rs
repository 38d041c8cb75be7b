//! Value-level losses. Training records the same formulas on the tape
//! (from logits); these take probabilities and are used for checks and
//! reporting.

use crate::tensor::Matrix;

use super::TrainError;

/// Second guard inside the logs.
const LOG_EPS: f64 = 1e-12;

/// Positive and negative medication edge counts. The positive class is
/// weighted by `n_neg / n_pos`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassWeight {
    pub n_neg: usize,
    pub n_pos: usize,
}

impl ClassWeight {
    /// Counts entries of `a` over the rows selected by `rows` (all rows if
    /// `None`). Fails when there is no positive.
    pub fn from_targets(a: &Matrix, rows: Option<&[bool]>) -> Result<Self, TrainError> {
        let (mut n_pos, mut n_neg) = (0, 0);
        for i in 0..a.rows() {
            if rows.is_some_and(|r| !r[i]) {
                continue;
            }
            for &v in a.row(i) {
                if v != 0.0 {
                    n_pos += 1;
                } else {
                    n_neg += 1;
                }
            }
        }
        Self::from_counts(n_neg, n_pos)
    }

    pub fn from_counts(n_neg: usize, n_pos: usize) -> Result<Self, TrainError> {
        if n_pos == 0 {
            return Err(TrainError::Data(
                "no positive medication edges among training encounters".into(),
            ));
        }
        Ok(Self { n_neg, n_pos })
    }

    /// Unit weight, for tests and unweighted runs.
    pub fn unit() -> Self {
        Self { n_neg: 1, n_pos: 1 }
    }

    pub fn weight(&self) -> f64 {
        self.n_neg as f64 / self.n_pos as f64
    }
}

fn same_shape(a: &Matrix, b: &Matrix, what: &str) -> Result<(), TrainError> {
    if a.shape() != b.shape() {
        return Err(TrainError::Shape(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// `-(1/N_E) Σ_{i∈rows} Σ_j [w·a_ij·ln p_ij + (1-a_ij)·ln(1-p_ij)]`, with
/// `N_E` the total row count of `p`.
pub fn loss_medication(
    p: &Matrix,
    a: &Matrix,
    weight: ClassWeight,
    row_mask: Option<&[bool]>,
) -> Result<f64, TrainError> {
    same_shape(p, a, "medication loss")?;
    if let Some(r) = row_mask {
        if r.len() != p.rows() {
            return Err(TrainError::Shape(format!(
                "row mask of {} for {} rows",
                r.len(),
                p.rows()
            )));
        }
    }
    let w = weight.weight();
    let mut total = 0.0;
    for i in 0..p.rows() {
        if row_mask.is_some_and(|r| !r[i]) {
            continue;
        }
        for (&pp, &aa) in p.row(i).iter().zip(a.row(i)) {
            if !(pp > 0.0 && pp < 1.0) {
                return Err(TrainError::Numeric(format!(
                    "probability {pp} at row {i} is outside (0, 1)"
                )));
            }
            total += w * aa * pp.max(LOG_EPS).ln() + (1.0 - aa) * (1.0 - pp).max(LOG_EPS).ln();
        }
    }
    Ok(-total / p.rows() as f64)
}

/// `(1/N_E) Σ m_ij (v_ij - a_ij)²`.
pub fn loss_lab(v: &Matrix, a: &Matrix, m: &Matrix) -> Result<f64, TrainError> {
    same_shape(v, a, "lab loss")?;
    same_shape(v, m, "lab loss mask")?;
    let total: f64 = v
        .as_slice()
        .iter()
        .zip(a.as_slice())
        .zip(m.as_slice())
        .map(|((v, a), m)| m * (v - a) * (v - a))
        .sum();
    Ok(total / v.rows() as f64)
}

pub fn loss_combined(l_med: f64, l_lab: f64, lambda: f64) -> f64 {
    l_med + lambda * l_lab
}
